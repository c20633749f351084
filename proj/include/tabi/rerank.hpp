#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "tabi/corpus.hpp"
#include "tabi/index.hpp"

namespace tabi {

/// TF-IDF over entity title + description: weight = tf * log(N / df), rows L2-normalised.
class SparseModel {
 public:
  static SparseModel fit(const std::vector<EntityRecord>& entities);

  std::size_t document_count() const { return ids_.size(); }
  std::size_t vocabulary_size() const { return df_.size(); }
  double idf(const std::string& term) const;

  /// L2-normalised TF-IDF vector of arbitrary text, sorted by term id.
  std::vector<std::pair<std::uint32_t, double>> vectorize(std::string_view text) const;

  /// Exact cosine top-k; ties (including all-zero scores) broken by ascending id.
  RankedList topk(std::string_view query_text, std::size_t k) const;

  /// Cosine against every entity, in collection order.
  std::vector<double> score_all(std::string_view query_text) const;

 private:
  std::vector<std::string> ids_;
  std::unordered_map<std::string, std::uint32_t> term_id_;
  std::vector<std::uint32_t> df_;
  std::vector<std::vector<std::pair<std::uint32_t, double>>> docs_;
  std::vector<std::size_t> id_rank_;
};

inline RankedList sparse_topk(const SparseModel& model, std::string_view query_text,
                              std::size_t k) {
  return model.topk(query_text, k);
}

struct RerankWeights {
  double lambda = 0.0;
  double kappa = 0.0;
  bool operator==(const RerankWeights&) const = default;
};

using PopularityMap = std::unordered_map<std::string, std::int64_t>;

/// f_e = kappa * p_e + norm(h_e) with h_e = lambda * s_e + d_e, every channel
/// min-max normalised over the union of both candidate lists.
RankedList rerank(const RankedList& dense, const RankedList& sparse,
                  const PopularityMap& popularity, double lambda, double kappa);

/// Default sweep for both weights.
std::vector<double> default_rerank_grid();

/// Cached first-stage results for one dev query.
struct RerankExample {
  RankedList dense;
  RankedList sparse;
  std::vector<std::string> gold_ids;
};

struct TuneResult {
  RerankWeights weights;
  double accuracy = 0.0;
  std::size_t evaluations = 0;
};

/// Picks lambda on the grid with kappa = 0, then kappa with lambda fixed,
/// maximising accuracy@1; equal accuracy keeps the smaller weight.
TuneResult tune(const std::vector<RerankExample>& dev, const PopularityMap& popularity,
                std::span<const double> grid);

void save_weights(const std::filesystem::path& path, const RerankWeights& w);
RerankWeights load_weights(const std::filesystem::path& path);

}  // namespace tabi
