#include "tabi/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iostream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "tabi/rng.hpp"

namespace tabi {

using nlohmann::json;

std::string_view subset_name(SubsetTag t) {
  switch (t) {
    case SubsetTag::Head:
      return "head";
    case SubsetTag::Tail:
      return "tail";
    case SubsetTag::None:
      break;
  }
  return "none";
}

std::string_view measure_name(TypeEquivalence m) {
  switch (m) {
    case TypeEquivalence::Any:
      return "any";
    case TypeEquivalence::All:
      return "all";
    case TypeEquivalence::Gt50:
      break;
  }
  return "gt50";
}

TypeEquivalence parse_measure(std::string_view s) {
  if (s == "any") return TypeEquivalence::Any;
  if (s == "all") return TypeEquivalence::All;
  if (s == "gt50") return TypeEquivalence::Gt50;
  throw std::invalid_argument("unknown type-equivalence measure: " + std::string(s));
}

// ---------------------------------------------------------------------------
// JSON lines

namespace {

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    try {
      fn(j, lineno);
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

TypeSet types_from_json(const json& j) {
  TypeSet out;
  for (const auto& t : j) out.insert(t.get<std::string>());
  return out;
}

void write_lines(const std::filesystem::path& path, const std::vector<json>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

}  // namespace

std::vector<EntityRecord> load_entities(const std::filesystem::path& path) {
  std::vector<EntityRecord> out;
  std::unordered_map<std::string, std::size_t> seen;
  for_each_line(path, [&](const json& j, std::size_t lineno) {
    if (!j.is_object()) throw ParseError("expected a JSON object");
    EntityRecord e;
    e.id = j.at("id").get<std::string>();
    e.title = j.at("title").get<std::string>();
    e.description = j.value("description", std::string{});
    if (j.contains("types")) e.types = types_from_json(j.at("types"));
    e.popularity = j.value("popularity", std::int64_t{0});
    if (e.popularity < 0) throw ParseError("negative popularity for " + e.id);
    if (auto [it, fresh] = seen.emplace(e.id, lineno); !fresh) {
      throw DataError("duplicate entity id \"" + e.id + "\" on lines " +
                      std::to_string(it->second) + " and " + std::to_string(lineno));
    }
    out.push_back(std::move(e));
  });
  return out;
}

std::vector<QueryRecord> load_queries(const std::filesystem::path& path) {
  std::vector<QueryRecord> out;
  std::unordered_set<std::string> seen;
  for_each_line(path, [&](const json& j, std::size_t) {
    if (!j.is_object()) throw ParseError("expected a JSON object");
    QueryRecord q;
    q.id = j.at("id").get<std::string>();
    q.text = j.at("text").get<std::string>();
    if (j.contains("mention_span") && !j.at("mention_span").is_null()) {
      const auto& s = j.at("mention_span");
      if (!s.is_array() || s.size() != 2) throw ParseError("mention_span must be [start, end]");
      const auto start = s[0].get<std::int64_t>();
      const auto end = s[1].get<std::int64_t>();
      if (start < 0 || end < start || static_cast<std::size_t>(end) > q.text.size()) {
        throw ParseError("mention_span out of text bounds for " + q.id);
      }
      q.mention_span = MentionSpan{static_cast<std::size_t>(start), static_cast<std::size_t>(end)};
    }
    q.gold_ids = j.at("gold_ids").get<std::vector<std::string>>();
    if (q.gold_ids.empty()) throw ParseError("gold_ids must be non-empty for " + q.id);
    q.group_id = j.value("group_id", q.id);
    if (j.contains("types") && !j.at("types").is_null()) {
      q.types = types_from_json(j.at("types"));
      q.explicit_types = true;
    }
    const std::string subset = j.value("subset", std::string{"none"});
    if (subset == "head") {
      q.subset = SubsetTag::Head;
    } else if (subset == "tail") {
      q.subset = SubsetTag::Tail;
    } else if (subset != "none") {
      throw ParseError("subset must be \"head\" or \"tail\"");
    }
    if (!seen.insert(q.id).second) throw DataError("duplicate query id \"" + q.id + "\"");
    out.push_back(std::move(q));
  });
  return out;
}

void save_entities(const std::filesystem::path& path, const std::vector<EntityRecord>& entities) {
  std::vector<json> rows;
  rows.reserve(entities.size());
  for (const auto& e : entities) {
    json j;
    j["id"] = e.id;
    j["title"] = e.title;
    j["description"] = e.description;
    j["types"] = std::vector<std::string>(e.types.begin(), e.types.end());
    j["popularity"] = e.popularity;
    rows.push_back(std::move(j));
  }
  write_lines(path, rows);
}

void save_queries(const std::filesystem::path& path, const std::vector<QueryRecord>& queries) {
  std::vector<json> rows;
  rows.reserve(queries.size());
  for (const auto& q : queries) {
    json j;
    j["id"] = q.id;
    j["text"] = q.text;
    if (q.mention_span) j["mention_span"] = {q.mention_span->start, q.mention_span->end};
    j["gold_ids"] = q.gold_ids;
    j["group_id"] = q.group_id;
    if (q.explicit_types || !q.types.empty()) {
      j["types"] = std::vector<std::string>(q.types.begin(), q.types.end());
    }
    if (q.subset != SubsetTag::None) j["subset"] = std::string(subset_name(q.subset));
    rows.push_back(std::move(j));
  }
  write_lines(path, rows);
}

void check_unique_ids(const std::vector<EntityRecord>& entities) {
  std::unordered_set<std::string_view> seen;
  for (const auto& e : entities) {
    if (!seen.insert(e.id).second) throw DataError("duplicate entity id \"" + e.id + "\"");
  }
}

void check_gold_ids(const std::vector<QueryRecord>& queries,
                    const std::vector<EntityRecord>& entities) {
  std::unordered_set<std::string_view> ids;
  for (const auto& e : entities) ids.insert(e.id);
  for (const auto& q : queries) {
    for (const auto& g : q.gold_ids) {
      if (!ids.contains(g)) {
        throw DataError("query \"" + q.id + "\" references unknown entity \"" + g + "\"");
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Formatting

namespace {

bool is_word_byte(unsigned char c) {
  if (c >= 0x80) return true;  // UTF-8 continuation/lead bytes stay inside words
  return std::isalnum(c) != 0;
}

}  // namespace

std::vector<TextToken> tokenize_with_offsets(std::string_view text) {
  std::vector<TextToken> out;
  std::size_t i = 0;
  while (i < text.size()) {
    if (!is_word_byte(static_cast<unsigned char>(text[i]))) {
      ++i;
      continue;
    }
    const std::size_t begin = i;
    std::string word;
    while (i < text.size() && is_word_byte(static_cast<unsigned char>(text[i]))) {
      word.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(text[i]))));
      ++i;
    }
    out.push_back({std::move(word), begin, i});
  }
  return out;
}

TokenSequence tokenize(std::string_view text) {
  TokenSequence out;
  for (auto& t : tokenize_with_offsets(text)) out.push_back(std::move(t.text));
  return out;
}

TokenSequence format_query(const QueryRecord& q) {
  const auto toks = tokenize_with_offsets(q.text);
  TokenSequence words;
  words.reserve(toks.size());
  for (const auto& t : toks) words.push_back(t.text);

  std::size_t first = toks.size();
  std::size_t last = 0;
  if (q.mention_span) {
    const auto [s, e] = *q.mention_span;
    for (std::size_t i = 0; i < toks.size(); ++i) {
      if (toks[i].begin < e && toks[i].end > s) {
        first = std::min(first, i);
        last = i;
      }
    }
    if (first == toks.size()) {
      std::clog << "tabi: query " << q.id << ": mention span covers no tokens, markers omitted\n";
    }
  }

  if (first == toks.size()) {
    if (words.size() > kMaxQueryTokens) words.resize(kMaxQueryTokens);
    return words;
  }

  const std::size_t mention_len = last - first + 1;
  TokenSequence out;
  out.reserve(std::min(words.size() + 2, kMaxQueryTokens));
  if (mention_len + 2 >= kMaxQueryTokens) {
    out.emplace_back(kMentionStart);
    out.insert(out.end(), words.begin() + first, words.begin() + first + (kMaxQueryTokens - 2));
    out.emplace_back(kMentionEnd);
    return out;
  }

  // Split the remaining budget between left and right context, centred on the
  // mention; a short side donates its unused share to the other.
  const std::size_t budget = kMaxQueryTokens - (mention_len + 2);
  const std::size_t avail_left = first;
  const std::size_t avail_right = words.size() - last - 1;
  std::size_t left = budget / 2;
  std::size_t right = budget - left;
  if (avail_left < left) {
    right += left - avail_left;
    left = avail_left;
  }
  if (avail_right < right) {
    left = std::min(avail_left, left + (right - avail_right));
    right = avail_right;
  }

  out.insert(out.end(), words.begin() + (first - left), words.begin() + first);
  out.emplace_back(kMentionStart);
  out.insert(out.end(), words.begin() + first, words.begin() + last + 1);
  out.emplace_back(kMentionEnd);
  out.insert(out.end(), words.begin() + last + 1, words.begin() + last + 1 + right);
  return out;
}

TokenSequence format_entity(const EntityRecord& e) {
  TokenSequence out = tokenize(e.title);
  out.emplace_back(kEntitySep);
  for (auto& t : tokenize(e.description)) {
    if (out.size() >= kMaxEntityTokens) break;
    out.push_back(std::move(t));
  }
  if (out.size() > kMaxEntityTokens) out.resize(kMaxEntityTokens);
  return out;
}

// ---------------------------------------------------------------------------
// Types

std::vector<QueryRecord> assign_query_types(std::vector<QueryRecord> queries,
                                            const std::vector<EntityRecord>& entities) {
  std::unordered_map<std::string_view, const EntityRecord*> by_id;
  for (const auto& e : entities) by_id.emplace(e.id, &e);
  for (auto& q : queries) {
    TypeSet merged;
    for (const auto& g : q.gold_ids) {
      auto it = by_id.find(g);
      if (it == by_id.end()) {
        throw DataError("query \"" + q.id + "\" references unknown entity \"" + g + "\"");
      }
      merged.insert(it->second->types.begin(), it->second->types.end());
    }
    if (!q.explicit_types) q.types = std::move(merged);
  }
  return queries;
}

bool type_equivalent(const TypeSet& a, const TypeSet& b, TypeEquivalence m) {
  if (a.empty() || b.empty()) return false;
  std::size_t common = 0;
  for (const auto& t : a) common += b.count(t);
  const std::size_t larger = std::max(a.size(), b.size());
  switch (m) {
    case TypeEquivalence::Any:
      return common >= 1;
    case TypeEquivalence::All:
      return common == larger;
    case TypeEquivalence::Gt50:
      break;
  }
  return 2 * common >= larger;
}

namespace {

void check_fraction(double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("perturbation fraction must lie in [0, 1], got " +
                                std::to_string(fraction));
  }
}

std::vector<std::size_t> pick_fraction(std::size_t n, double fraction, std::uint64_t seed) {
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  rng.shuffle(idx);
  idx.resize(std::min(count, n));
  std::sort(idx.begin(), idx.end());
  return idx;
}

}  // namespace

std::vector<QueryRecord> perturb_drop_types(std::vector<QueryRecord> queries, double fraction,
                                            std::uint64_t seed) {
  check_fraction(fraction);
  for (auto i : pick_fraction(queries.size(), fraction, seed)) {
    queries[i].types.clear();
    queries[i].explicit_types = true;
  }
  return queries;
}

std::vector<QueryRecord> perturb_flip_types(std::vector<QueryRecord> queries, double fraction,
                                            std::uint64_t seed, const TypeSet& vocabulary) {
  check_fraction(fraction);
  Rng rng(derive_seed(seed, 1));
  for (auto i : pick_fraction(queries.size(), fraction, seed)) {
    auto& q = queries[i];
    std::vector<const std::string*> choices;
    for (const auto& t : vocabulary) {
      if (!q.types.contains(t)) choices.push_back(&t);
    }
    if (choices.empty()) {
      throw DataError("query \"" + q.id + "\": no type in the vocabulary is disjoint from its types");
    }
    q.types = TypeSet{*choices[rng.below(choices.size())]};
    q.explicit_types = true;
  }
  return queries;
}

TypeSet type_vocabulary(const std::vector<EntityRecord>& entities) {
  TypeSet out;
  for (const auto& e : entities) out.insert(e.types.begin(), e.types.end());
  return out;
}

}  // namespace tabi
