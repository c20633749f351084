#include "tabi/rerank.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_set>

namespace tabi {

// ---------------------------------------------------------------------------
// TF-IDF

namespace {

std::vector<std::pair<std::uint32_t, double>> normalise(
    std::map<std::uint32_t, double>&& weights) {
  double norm = 0.0;
  for (const auto& [t, w] : weights) norm += w * w;
  norm = std::sqrt(norm);
  std::vector<std::pair<std::uint32_t, double>> out;
  if (norm == 0.0) return out;
  out.reserve(weights.size());
  for (const auto& [t, w] : weights) {
    if (w > 0.0) out.emplace_back(t, w / norm);
  }
  return out;
}

double sparse_dot(const std::vector<std::pair<std::uint32_t, double>>& a,
                  const std::vector<std::pair<std::uint32_t, double>>& b) {
  double s = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i].first < b[j].first) {
      ++i;
    } else if (b[j].first < a[i].first) {
      ++j;
    } else {
      s += a[i++].second * b[j++].second;
    }
  }
  return s;
}

}  // namespace

SparseModel SparseModel::fit(const std::vector<EntityRecord>& entities) {
  SparseModel m;
  std::vector<std::map<std::uint32_t, double>> tf(entities.size());
  for (std::size_t i = 0; i < entities.size(); ++i) {
    m.ids_.push_back(entities[i].id);
    auto terms = tokenize(entities[i].title);
    for (auto& t : tokenize(entities[i].description)) terms.push_back(std::move(t));
    for (const auto& t : terms) {
      auto [it, fresh] = m.term_id_.emplace(t, static_cast<std::uint32_t>(m.df_.size()));
      if (fresh) m.df_.push_back(0);
      auto& count = tf[i][it->second];
      if (count == 0.0) ++m.df_[it->second];
      count += 1.0;
    }
  }
  const double n = static_cast<double>(entities.size());
  m.docs_.reserve(entities.size());
  for (auto& doc : tf) {
    for (auto& [t, w] : doc) w *= std::log(n / static_cast<double>(m.df_[t]));
    m.docs_.push_back(normalise(std::move(doc)));
  }
  std::vector<std::size_t> order(m.ids_.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return m.ids_[a] < m.ids_[b]; });
  m.id_rank_.resize(order.size());
  for (std::size_t r = 0; r < order.size(); ++r) m.id_rank_[order[r]] = r;
  return m;
}

double SparseModel::idf(const std::string& term) const {
  auto it = term_id_.find(term);
  if (it == term_id_.end()) return 0.0;
  return std::log(static_cast<double>(ids_.size()) / static_cast<double>(df_[it->second]));
}

std::vector<std::pair<std::uint32_t, double>> SparseModel::vectorize(std::string_view text) const {
  std::map<std::uint32_t, double> weights;
  for (const auto& t : tokenize(text)) {
    auto it = term_id_.find(t);
    if (it != term_id_.end()) weights[it->second] += 1.0;
  }
  const double n = static_cast<double>(ids_.size());
  for (auto& [t, w] : weights) w *= std::log(n / static_cast<double>(df_[t]));
  return normalise(std::move(weights));
}

std::vector<double> SparseModel::score_all(std::string_view query_text) const {
  const auto q = vectorize(query_text);
  std::vector<double> scores(docs_.size(), 0.0);
  if (q.empty()) return scores;
  for (std::size_t i = 0; i < docs_.size(); ++i) scores[i] = sparse_dot(q, docs_[i]);
  return scores;
}

RankedList SparseModel::topk(std::string_view query_text, std::size_t k) const {
  if (k == 0) throw std::invalid_argument("sparse_topk: k must be at least 1");
  const auto scores = score_all(query_text);
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  k = std::min(k, order.size());
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    [&](auto a, auto b) {
                      if (scores[a] != scores[b]) return scores[a] > scores[b];
                      return id_rank_[a] < id_rank_[b];
                    });
  RankedList out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) out.push_back({ids_[order[i]], scores[order[i]]});
  return out;
}

// ---------------------------------------------------------------------------
// Hybrid re-ranking

namespace {

// Min-max to [0, 1]; a constant channel maps to all zeros.
void min_max(std::vector<double>& v) {
  if (v.empty()) return;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double a = *lo, b = *hi;
  for (auto& x : v) x = b > a ? (x - a) / (b - a) : 0.0;
}

std::vector<double> channel(const std::vector<std::string>& candidates, const RankedList& list) {
  std::unordered_map<std::string_view, double> score;
  double floor = 0.0;
  for (std::size_t i = 0; i < list.size(); ++i) {
    score.emplace(list[i].id, list[i].score);
    floor = i == 0 ? list[i].score : std::min(floor, list[i].score);
  }
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const auto& id : candidates) {
    auto it = score.find(id);
    out.push_back(it == score.end() ? floor : it->second);
  }
  min_max(out);
  return out;
}

}  // namespace

RankedList rerank(const RankedList& dense, const RankedList& sparse,
                  const PopularityMap& popularity, double lambda, double kappa) {
  if (!(lambda >= 0.0) || !(kappa >= 0.0)) {
    throw std::invalid_argument("rerank weights must be non-negative");
  }
  std::vector<std::string> candidates;
  std::unordered_set<std::string_view> seen;
  for (const auto* list : {&dense, &sparse}) {
    for (const auto& s : *list) {
      if (seen.insert(s.id).second) candidates.push_back(s.id);
    }
  }

  const auto d = channel(candidates, dense);
  const auto s = channel(candidates, sparse);
  std::vector<double> h(candidates.size());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = lambda * s[i] + d[i];
  min_max(h);

  std::vector<double> p(candidates.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    auto it = popularity.find(candidates[i]);
    const double count = it == popularity.end() ? 0.0 : static_cast<double>(it->second);
    p[i] = std::log1p(std::max(0.0, count));
  }
  min_max(p);

  RankedList out(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out[i] = {candidates[i], kappa * p[i] + h[i]};
  }
  std::sort(out.begin(), out.end(), [](const ScoredId& a, const ScoredId& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return out;
}

std::vector<double> default_rerank_grid() {
  return {0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0};
}

TuneResult tune(const std::vector<RerankExample>& dev, const PopularityMap& popularity,
                std::span<const double> grid) {
  if (dev.empty()) throw std::invalid_argument("tune: dev set is empty");
  if (grid.empty()) throw std::invalid_argument("tune: grid is empty");
  std::vector<double> sorted(grid.begin(), grid.end());
  std::sort(sorted.begin(), sorted.end());

  TuneResult result;
  auto accuracy = [&](double lambda, double kappa) {
    ++result.evaluations;
    std::size_t hits = 0;
    for (const auto& ex : dev) {
      const auto ranked = rerank(ex.dense, ex.sparse, popularity, lambda, kappa);
      if (!ranked.empty() && std::find(ex.gold_ids.begin(), ex.gold_ids.end(),
                                        ranked.front().id) != ex.gold_ids.end()) {
        ++hits;
      }
    }
    return static_cast<double>(hits) / static_cast<double>(dev.size());
  };

  double best = -1.0;
  for (double lambda : sorted) {
    const double acc = accuracy(lambda, 0.0);
    if (acc > best) {
      best = acc;
      result.weights.lambda = lambda;
    }
  }
  best = -1.0;
  for (double kappa : sorted) {
    const double acc = accuracy(result.weights.lambda, kappa);
    if (acc > best) {
      best = acc;
      result.weights.kappa = kappa;
    }
  }
  result.accuracy = best;
  return result;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace

void save_weights(const std::filesystem::path& path, const RerankWeights& w) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "lambda=" << format_double(w.lambda) << "\nkappa=" << format_double(w.kappa) << "\n";
}

RerankWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  RerankWeights w;
  bool have_lambda = false, have_kappa = false;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq);
    const double value = std::stod(line.substr(eq + 1));
    if (key == "lambda") {
      w.lambda = value;
      have_lambda = true;
    } else if (key == "kappa") {
      w.kappa = value;
      have_kappa = true;
    }
  }
  if (!have_lambda || !have_kappa) {
    throw std::runtime_error(path.string() + ": expected lambda= and kappa= lines");
  }
  return w;
}

}  // namespace tabi
