#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "tabi/corpus.hpp"
#include "tabi/encoder.hpp"

namespace tabi {

struct ScoredId {
  std::string id;
  double score = 0.0;
  bool operator==(const ScoredId&) const = default;
};

/// Sorted by score descending, then id ascending.
using RankedList = std::vector<ScoredId>;

/// Exact inner-product index over unit-norm entity embeddings, stored as float32.
class EntityIndex {
 public:
  EntityIndex() = default;
  EntityIndex(std::vector<std::string> ids, std::vector<float> rows, std::size_t dim);

  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<float>& rows() const { return rows_; }
  std::span<const float> row(std::size_t i) const { return {rows_.data() + i * dim_, dim_}; }

  /// Position of row i when all ids are sorted ascending; used for tie-breaking.
  std::size_t id_rank(std::size_t i) const { return id_rank_[i]; }

  /// Scores of every row against `query`.
  std::vector<double> score_all(std::span<const double> query) const;

  /// Row numbers of the exact top-k of precomputed `scores`, best first.
  std::vector<std::size_t> select_top(std::span<const double> scores, std::size_t k) const;

 private:
  std::vector<std::string> ids_;
  std::vector<float> rows_;
  std::size_t dim_ = 0;
  std::vector<std::size_t> id_rank_;
};

EntityIndex build_index(const EncoderParams& params, const std::vector<EntityRecord>& entities);
EntityIndex index_from_embeddings(std::vector<std::string> ids,
                                  const std::vector<Embedding>& embeddings);

RankedList search(const EntityIndex& index, std::span<const double> query, std::size_t k);

// Index file: "TABIIDX1", u32 count, u32 dim, count x (u32 length + UTF-8 id),
// then count x dim float32 rows. Little-endian throughout.
void save_index(const EntityIndex& index, const std::filesystem::path& path);
EntityIndex load_index(const std::filesystem::path& path);

}  // namespace tabi
