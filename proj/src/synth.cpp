#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <unordered_set>

#include "tabi/corpus.hpp"
#include "tabi/rng.hpp"

namespace tabi {

namespace {

constexpr std::array<std::string_view, 12> kTypeNames = {
    "athlete", "politician", "musician", "author", "scientist", "actor",
    "painter", "company",    "city",     "film",   "band",      "river"};

constexpr std::array<std::string_view, 24> kFiller = {
    "the",   "about", "which", "what",  "who",    "was",   "known", "story",
    "found", "later", "early", "often", "also",   "after", "where", "named",
    "first", "one",   "said",  "many",  "during", "most",  "other", "from"};

constexpr std::array<std::string_view, 16> kSyllables = {
    "ka", "lo", "mir", "ten", "za", "vor", "el", "dun",
    "rhi", "sa", "bek", "ol", "tra", "min", "gu", "fes"};

// Held-out entities get ids with this prefix and never receive queries.
constexpr std::string_view kHeldOutPrefix = "X";

std::string make_name(Rng& rng) {
  std::string out;
  const auto parts = 2 + rng.below(2);
  for (std::uint64_t i = 0; i < parts; ++i) out += kSyllables[rng.below(kSyllables.size())];
  return out;
}

std::string pad4(std::size_t v) {
  std::string s = std::to_string(v);
  return std::string(s.size() < 4 ? 4 - s.size() : 0, '0') + s;
}

std::string join(const std::vector<std::string>& words) {
  std::string out;
  for (std::size_t i = 0; i < words.size(); ++i) {
    if (i) out.push_back(' ');
    out += words[i];
  }
  return out;
}

struct NameGroup {
  std::string name;
  std::vector<std::size_t> members;  // entity indices sharing the name
};

std::vector<NameGroup> group_by_title(const std::vector<EntityRecord>& entities) {
  std::map<std::string, std::size_t> slot;
  std::vector<NameGroup> groups;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    auto [it, fresh] = slot.emplace(entities[i].title, groups.size());
    if (fresh) groups.push_back({entities[i].title, {}});
    groups[it->second].members.push_back(i);
  }
  return groups;
}

// Types that separate entity `self` from every sibling sharing its name.
std::vector<std::string> distinguishing_types(const std::vector<EntityRecord>& entities,
                                              const NameGroup& g, std::size_t self) {
  std::vector<std::string> out;
  for (const auto& t : entities[self].types) {
    bool unique = true;
    for (auto m : g.members) {
      if (m != self && entities[m].types.contains(t)) unique = false;
    }
    if (unique) out.push_back(t);
  }
  return out;
}

std::size_t type_index(std::string_view t) {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
    if (kTypeNames[i] == t) return i;
  }
  throw std::invalid_argument("not a synthetic type: " + std::string(t));
}

}  // namespace

std::size_t synth_type_limit() { return kTypeNames.size(); }

std::vector<std::string> synth_type_names(std::size_t count) {
  if (count > kTypeNames.size()) {
    throw std::invalid_argument("synthetic corpus supports at most " +
                                std::to_string(kTypeNames.size()) + " types");
  }
  return {kTypeNames.begin(), kTypeNames.begin() + static_cast<std::ptrdiff_t>(count)};
}

std::vector<std::string> synth_cue_words(std::size_t type_index, std::size_t count) {
  if (type_index >= kTypeNames.size()) throw std::invalid_argument("type index out of range");
  const std::string stem(kTypeNames[type_index].substr(0, 4));
  std::vector<std::string> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(stem + "q" + std::to_string(i));
  return out;
}

namespace {

std::vector<QueryRecord> emit_queries(const SynthSpec& spec,
                                      const std::vector<EntityRecord>& entities,
                                      std::size_t per_head, std::size_t per_tail,
                                      std::uint64_t seed, std::string_view id_prefix) {
  Rng rng(seed);
  std::vector<QueryRecord> out;
  for (const auto& g : group_by_title(entities)) {
    for (auto self : g.members) {
      const auto& e = entities[self];
      if (e.id.starts_with(kHeldOutPrefix)) continue;
      const auto cue_types = distinguishing_types(entities, g, self);
      if (cue_types.empty()) {
        throw DataError("entity \"" + e.id + "\" has no type distinguishing it from its siblings");
      }
      const bool head = e.id.ends_with("-head");
      const std::size_t per_entity = head ? per_head : per_tail;
      for (std::size_t k = 0; k < per_entity; ++k) {
        std::vector<std::string> words;
        for (std::size_t c = 0; c < spec.query_cues; ++c) {
          const auto& t = cue_types[rng.below(cue_types.size())];
          const auto cues = synth_cue_words(type_index(t), spec.cue_vocab);
          words.push_back(cues[rng.below(cues.size())]);
        }
        for (std::size_t f = 0; f < spec.filler_words; ++f) {
          words.emplace_back(kFiller[rng.below(kFiller.size())]);
        }
        rng.shuffle(words);
        const auto at = rng.below(words.size() + 1);
        words.insert(words.begin() + static_cast<std::ptrdiff_t>(at), g.name);

        QueryRecord q;
        q.id = std::string(id_prefix) + e.id + "-" + std::to_string(k);
        q.text = join(words);
        std::size_t start = 0;
        for (std::size_t w = 0; w < at; ++w) start += words[w].size() + 1;
        q.mention_span = MentionSpan{start, start + g.name.size()};
        q.gold_ids = {e.id};
        q.group_id = g.name;
        q.subset = head ? SubsetTag::Head : SubsetTag::Tail;
        out.push_back(std::move(q));
      }
    }
  }
  return out;
}

}  // namespace

std::vector<QueryRecord> generate_synthetic_queries(const SynthSpec& spec,
                                                    const std::vector<EntityRecord>& entities,
                                                    std::size_t per_entity, std::uint64_t seed,
                                                    std::string_view id_prefix) {
  return emit_queries(spec, entities, per_entity, per_entity, seed, id_prefix);
}

SyntheticCorpus generate_synthetic_corpus(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.names == 0 || spec.types == 0 || spec.cue_vocab == 0 || spec.query_cues == 0) {
    throw std::invalid_argument("synthetic spec fields must be positive");
  }
  if (spec.types > kTypeNames.size()) {
    throw std::invalid_argument("synthetic spec requests " + std::to_string(spec.types) +
                                " types but only " + std::to_string(kTypeNames.size()) +
                                " cue vocabularies exist");
  }
  if (spec.tails_per_name + 1 > spec.types) {
    throw std::invalid_argument("each name needs a distinct type per entity: tails_per_name + 1 "
                                "must not exceed types");
  }

  Rng rng(derive_seed(seed, 0));
  const auto type_names = synth_type_names(spec.types);
  std::vector<std::vector<std::string>> cues;
  for (std::size_t t = 0; t < spec.types; ++t) cues.push_back(synth_cue_words(t, spec.cue_vocab));

  SyntheticCorpus out;
  std::unordered_set<std::string> used_names;
  const std::size_t total_names = spec.names + spec.heldout_names;
  for (std::size_t n = 0; n < total_names; ++n) {
    std::string name;
    do {
      name = make_name(rng);
    } while (!used_names.insert(name).second);

    const bool heldout = n >= spec.names;
    const std::string id_stem =
        (heldout ? std::string(kHeldOutPrefix) : std::string("N")) + pad4(n);

    std::vector<std::size_t> order(spec.types);
    for (std::size_t t = 0; t < spec.types; ++t) order[t] = t;
    rng.shuffle(order);
    const std::size_t members = spec.tails_per_name + 1;

    for (std::size_t m = 0; m < members; ++m) {
      EntityRecord e;
      e.id = id_stem + (m == 0 ? "-head" : "-tail" + std::to_string(m));
      e.title = name;
      std::vector<std::size_t> own{order[m]};
      // A secondary type must not be another member's primary, so every member
      // keeps a type its siblings lack.
      if (spec.types > members && rng.unit() < spec.secondary_type_rate) {
        own.push_back(order[members + rng.below(spec.types - members)]);
      }
      for (auto t : own) e.types.insert(type_names[t]);

      std::vector<std::string> words;
      for (std::size_t c = 0; c < spec.description_cues; ++c) {
        const auto t = own[rng.below(own.size())];
        words.push_back(cues[t][rng.below(cues[t].size())]);
      }
      for (std::size_t f = 0; f < spec.filler_words; ++f) {
        words.emplace_back(kFiller[rng.below(kFiller.size())]);
      }
      rng.shuffle(words);
      e.description = join(words);
      e.popularity = m == 0 ? rng.between(10'000, 1'000'000) : rng.between(1, 100);
      out.entities.push_back(std::move(e));
    }
  }

  out.queries = emit_queries(spec, out.entities, spec.head_queries, spec.tail_queries,
                             derive_seed(seed, 1), "q");
  return out;
}

}  // namespace tabi
