#include "tabi/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"
#include "tabi/kernels.hpp"

namespace tabi {

namespace {

bool is_gold(const QueryResult& r, const std::string& id) {
  return std::find(r.gold_ids.begin(), r.gold_ids.end(), id) != r.gold_ids.end();
}

std::size_t hits_in_top(const QueryResult& r, std::size_t k) {
  std::size_t hits = 0;
  std::unordered_set<std::string_view> counted;
  for (std::size_t i = 0; i < std::min(k, r.ranked.size()); ++i) {
    if (is_gold(r, r.ranked[i].id) && counted.insert(r.ranked[i].id).second) ++hits;
  }
  return hits;
}

template <typename Fn>
double mean_over(const RetrievalResults& results, Fn&& per_query) {
  if (results.empty()) return 0.0;
  double total = 0.0;
  for (const auto& r : results) total += per_query(r);
  return total / static_cast<double>(results.size());
}

}  // namespace

double accuracy_at_k(const RetrievalResults& results, std::size_t k) {
  if (k == 0) throw std::invalid_argument("accuracy_at_k: k must be at least 1");
  return mean_over(results, [k](const QueryResult& r) { return hits_in_top(r, k) > 0 ? 1.0 : 0.0; });
}

double r_precision(const RetrievalResults& results) {
  return mean_over(results, [](const QueryResult& r) {
    const std::size_t big_r = std::unordered_set<std::string>(r.gold_ids.begin(), r.gold_ids.end()).size();
    if (big_r == 0) return 0.0;
    return static_cast<double>(hits_in_top(r, big_r)) / static_cast<double>(big_r);
  });
}

double recall_at_k(const RetrievalResults& results, std::size_t k) {
  if (k == 0) throw std::invalid_argument("recall_at_k: k must be at least 1");
  return mean_over(results, [k](const QueryResult& r) {
    const std::size_t golds = std::unordered_set<std::string>(r.gold_ids.begin(), r.gold_ids.end()).size();
    if (golds == 0) return 0.0;
    return static_cast<double>(hits_in_top(r, k)) / static_cast<double>(golds);
  });
}

double consistency(const RetrievalResults& results) {
  std::unordered_map<std::string_view, bool> group_ok;
  for (const auto& r : results) {
    const bool ok = hits_in_top(r, 1) > 0;
    auto [it, fresh] = group_ok.emplace(r.group_id, ok);
    if (!fresh) it->second = it->second && ok;
  }
  if (group_ok.empty()) return 0.0;
  std::size_t good = 0;
  for (const auto& [g, ok] : group_ok) good += ok ? 1 : 0;
  return static_cast<double>(good) / static_cast<double>(group_ok.size());
}

RetrievalResults subset_of(const RetrievalResults& results, SubsetTag tag) {
  RetrievalResults out;
  for (const auto& r : results) {
    if (r.subset == tag) out.push_back(r);
  }
  return out;
}

namespace {

nlohmann::ordered_json metric_block(const RetrievalResults& results,
                                    const std::vector<std::size_t>& ks) {
  nlohmann::ordered_json j;
  j["count"] = results.size();
  for (auto k : ks) j["accuracy@" + std::to_string(k)] = accuracy_at_k(results, k);
  for (auto k : ks) j["recall@" + std::to_string(k)] = recall_at_k(results, k);
  j["r_precision"] = r_precision(results);
  j["consistency"] = consistency(results);
  return j;
}

}  // namespace

std::string metrics_report(const RetrievalResults& results, const std::vector<std::size_t>& ks) {
  auto j = metric_block(results, ks);
  j["head"] = metric_block(subset_of(results, SubsetTag::Head), ks);
  j["tail"] = metric_block(subset_of(results, SubsetTag::Tail), ks);
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Type classification

std::vector<TypeSet> knn_type_classify(const std::vector<LabeledEmbedding>& train,
                                       const std::vector<Embedding>& test, std::size_t k) {
  if (train.empty()) throw std::invalid_argument("knn_type_classify: empty training set");
  if (k == 0) throw std::invalid_argument("knn_type_classify: k must be at least 1");
  std::vector<std::size_t> by_id(train.size());
  std::iota(by_id.begin(), by_id.end(), 0);
  std::sort(by_id.begin(), by_id.end(), [&](auto a, auto b) { return train[a].id < train[b].id; });
  std::vector<std::size_t> id_rank(train.size());
  for (std::size_t r = 0; r < by_id.size(); ++r) id_rank[by_id[r]] = r;

  const std::size_t kk = std::min(k, train.size());
  std::vector<TypeSet> out;
  out.reserve(test.size());
  std::vector<double> scores(train.size());
  std::vector<std::size_t> order(train.size());
  for (const auto& x : test) {
    for (std::size_t i = 0; i < train.size(); ++i) scores[i] = kernels::dot(train[i].embedding, x);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(kk), order.end(),
                      [&](auto a, auto b) {
                        if (scores[a] != scores[b]) return scores[a] > scores[b];
                        return id_rank[a] < id_rank[b];
                      });
    std::map<std::string, std::size_t> votes;
    for (std::size_t i = 0; i < kk; ++i) {
      for (const auto& t : train[order[i]].types) ++votes[t];
    }
    TypeSet predicted;
    for (const auto& [t, c] : votes) {
      if (2 * c > kk) predicted.insert(t);
    }
    if (predicted.empty() && !votes.empty()) {
      // std::map iterates names in ascending order, so the first maximum wins ties.
      auto best = votes.begin();
      for (auto it = votes.begin(); it != votes.end(); ++it) {
        if (it->second > best->second) best = it;
      }
      predicted.insert(best->first);
    }
    out.push_back(std::move(predicted));
  }
  return out;
}

TypeMetrics type_classification_metrics(const std::vector<TypePrediction>& predictions) {
  TypeMetrics m;
  if (predictions.empty()) return m;
  std::size_t exact = 0, tp = 0, fp = 0, fn = 0;
  double precision_sum = 0.0, recall_sum = 0.0;
  for (const auto& p : predictions) {
    std::size_t common = 0;
    for (const auto& t : p.predicted) common += p.gold.count(t);
    tp += common;
    fp += p.predicted.size() - common;
    fn += p.gold.size() - common;
    if (p.predicted == p.gold) ++exact;
    precision_sum += p.predicted.empty() ? 1.0 : static_cast<double>(common) / static_cast<double>(p.predicted.size());
    recall_sum += p.gold.empty() ? 1.0 : static_cast<double>(common) / static_cast<double>(p.gold.size());
  }
  auto f1 = [](double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; };
  const double n = static_cast<double>(predictions.size());
  m.strict_accuracy = static_cast<double>(exact) / n;
  if (tp + fp + fn == 0) {
    m.micro_f1 = 1.0;
  } else {
    const double p = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    const double r = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    m.micro_f1 = f1(p, r);
  }
  m.macro_f1 = f1(precision_sum / n, recall_sum / n);
  return m;
}

// ---------------------------------------------------------------------------
// Entity similarity

TypeFrequencies type_frequencies(const std::vector<EntityRecord>& entities) {
  TypeFrequencies f;
  f.total = entities.size();
  for (const auto& e : entities) {
    for (const auto& t : e.types) ++f.counts[t];
  }
  return f;
}

double entity_similarity_ground_truth(const TypeSet& a, const TypeSet& b,
                                      const TypeFrequencies& freq) {
  if (a.empty() && b.empty()) return 0.0;
  auto weight = [&](const std::string& t) {
    auto it = freq.counts.find(t);
    if (it == freq.counts.end() || it->second == 0) {
      throw std::invalid_argument("type frequencies do not cover \"" + t + "\"");
    }
    return -std::log(static_cast<double>(it->second) / static_cast<double>(freq.total));
  };
  double shared = 0.0, total = 0.0;
  for (const auto& t : a) {
    const double w = weight(t);
    total += w;
    if (b.contains(t)) shared += w;
  }
  for (const auto& t : b) {
    if (!a.contains(t)) total += weight(t);
  }
  if (total == 0.0) return a == b ? 1.0 : 0.0;
  return shared / total;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return v[a] < v[b]; });
  std::vector<double> rank(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) rank[order[t]] = avg;
    i = j + 1;
  }
  return rank;
}

}  // namespace

double spearman(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size()) throw std::invalid_argument("spearman: length mismatch");
  if (xs.size() < 2) throw std::invalid_argument("spearman: need at least two observations");
  const auto rx = average_ranks(xs);
  const auto ry = average_ranks(ys);
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) {
    throw std::domain_error("spearman: correlation undefined for constant input");
  }
  return sxy / std::sqrt(sxx * syy);
}

double entity_similarity_eval(const EncoderParams& params,
                              const std::vector<EntityRecord>& entities,
                              const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                              const TypeFrequencies& freq) {
  if (pairs.empty()) throw std::invalid_argument("entity_similarity_eval: no pairs");
  std::unordered_map<std::size_t, Embedding> cache;
  auto embedding = [&](std::size_t i) -> const Embedding& {
    auto it = cache.find(i);
    if (it == cache.end()) it = cache.emplace(i, encode(params, format_entity(entities.at(i)))).first;
    return it->second;
  };
  std::vector<double> model, truth;
  for (const auto& [a, b] : pairs) {
    model.push_back(kernels::dot(embedding(a), embedding(b)));
    truth.push_back(entity_similarity_ground_truth(entities.at(a).types, entities.at(b).types, freq));
  }
  return spearman(model, truth);
}

// ---------------------------------------------------------------------------
// Files

void save_retrievals(const std::filesystem::path& path, const RetrievalResults& results) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : results) {
    nlohmann::ordered_json j;
    j["query_id"] = r.query_id;
    auto ranked = nlohmann::json::array();
    for (const auto& s : r.ranked) ranked.push_back({s.id, s.score});
    j["ranked"] = std::move(ranked);
    out << j.dump() << '\n';
  }
}

std::vector<std::pair<std::string, RankedList>> load_retrievals(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::pair<std::string, RankedList>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RankedList ranked;
      for (const auto& pair : j.at("ranked")) {
        ranked.push_back({pair.at(0).get<std::string>(), pair.at(1).get<double>()});
      }
      out.emplace_back(j.at("query_id").get<std::string>(), std::move(ranked));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

RetrievalResults join_results(const std::vector<QueryRecord>& queries,
                              std::vector<std::pair<std::string, RankedList>> ranked) {
  std::unordered_map<std::string_view, const QueryRecord*> by_id;
  for (const auto& q : queries) by_id.emplace(q.id, &q);
  RetrievalResults out;
  std::unordered_set<std::string> seen;
  for (auto& [id, list] : ranked) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw DataError("retrieval file names unknown query \"" + id + "\"");
    if (!seen.insert(id).second) throw DataError("query \"" + id + "\" appears twice in retrievals");
    const auto& q = *it->second;
    out.push_back({q.id, std::move(list), q.gold_ids, q.group_id, q.subset});
  }
  if (seen.size() != queries.size()) {
    for (const auto& q : queries) {
      if (!seen.contains(q.id)) throw DataError("query \"" + q.id + "\" has no retrieval result");
    }
  }
  return out;
}

void save_embedding_dump(const std::filesystem::path& path, const std::vector<std::string>& ids,
                         const std::vector<Embedding>& embeddings) {
  if (ids.size() != embeddings.size()) throw std::invalid_argument("embedding dump: size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[64];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    out << ids[i] << '\t';
    for (std::size_t j = 0; j < embeddings[i].size(); ++j) {
      if (j) out << ',';
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), embeddings[i][j]);
      out.write(buf, end - buf);
    }
    out << '\n';
  }
}

}  // namespace tabi
