#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "tabi/corpus.hpp"
#include "tabi/encoder.hpp"
#include "tabi/index.hpp"

namespace tabi {

struct QueryResult {
  std::string query_id;
  RankedList ranked;
  std::vector<std::string> gold_ids;
  std::string group_id;
  SubsetTag subset = SubsetTag::None;
};

using RetrievalResults = std::vector<QueryResult>;

double accuracy_at_k(const RetrievalResults& results, std::size_t k);
double r_precision(const RetrievalResults& results);
double recall_at_k(const RetrievalResults& results, std::size_t k);
double consistency(const RetrievalResults& results);

/// Results restricted to one subset tag.
RetrievalResults subset_of(const RetrievalResults& results, SubsetTag tag);

/// {"accuracy@k": ..., "recall@k": ..., "r_precision": ..., "consistency": ...,
///  "count": n, "head": {...}, "tail": {...}} as pretty-printed JSON.
std::string metrics_report(const RetrievalResults& results, const std::vector<std::size_t>& ks);

// --- type classification ---

struct LabeledEmbedding {
  std::string id;
  Embedding embedding;
  TypeSet types;
};

struct TypePrediction {
  TypeSet predicted;
  TypeSet gold;
};

/// Majority vote over the k nearest training items (inner product, ties by id).
/// A type is predicted when it appears in more than half the neighbours; with
/// no such type, the single most frequent one (ties by name) is used.
std::vector<TypeSet> knn_type_classify(const std::vector<LabeledEmbedding>& train,
                                       const std::vector<Embedding>& test, std::size_t k = 10);

struct TypeMetrics {
  double strict_accuracy = 0.0;
  double micro_f1 = 0.0;
  double macro_f1 = 0.0;
};

TypeMetrics type_classification_metrics(const std::vector<TypePrediction>& predictions);

// --- entity similarity ---

struct TypeFrequencies {
  std::map<std::string, std::size_t> counts;
  std::size_t total = 0;  // catalogue size N
};

TypeFrequencies type_frequencies(const std::vector<EntityRecord>& entities);

/// Frequency-weighted Jaccard with w(t) = -log(freq(t) / N).
double entity_similarity_ground_truth(const TypeSet& a, const TypeSet& b,
                                      const TypeFrequencies& freq);

/// Spearman rank correlation with average ranks for ties.
double spearman(const std::vector<double>& xs, const std::vector<double>& ys);

double entity_similarity_eval(const EncoderParams& params,
                              const std::vector<EntityRecord>& entities,
                              const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                              const TypeFrequencies& freq);

// --- files ---

/// JSONL rows {"query_id": ..., "ranked": [[id, score], ...]}.
void save_retrievals(const std::filesystem::path& path, const RetrievalResults& results);
std::vector<std::pair<std::string, RankedList>> load_retrievals(const std::filesystem::path& path);

/// Attaches gold ids, groups and subsets from `queries`; throws DataError for
/// unknown or missing query ids.
RetrievalResults join_results(const std::vector<QueryRecord>& queries,
                              std::vector<std::pair<std::string, RankedList>> ranked);

/// Plain-text rows "id\tv1,v2,...".
void save_embedding_dump(const std::filesystem::path& path, const std::vector<std::string>& ids,
                         const std::vector<Embedding>& embeddings);

}  // namespace tabi
