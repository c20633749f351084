#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "tabi/corpus.hpp"
#include "tabi/encoder.hpp"
#include "tabi/loss.hpp"

namespace tabi {

struct TrainConfig {
  std::size_t batch_size = 128;  // queries per batch in epoch 1
  std::size_t epochs = 4;
  std::size_t n_hard_negatives = 3;
  std::size_t neg_per_pos_cap = 10;
  double alpha = 0.1;
  double tau = 0.05;
  double learning_rate = 3e-4;
  double lr_decay = 0.5;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;
  TypeEquivalence measure = TypeEquivalence::Gt50;
  Objective objective = Objective::Tabi;
  std::size_t dim = kDefaultDim;
  std::size_t vocab = kDefaultVocab;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
};

/// Learning rate used throughout epoch `epoch` (1-based).
double learning_rate_for_epoch(const TrainConfig& config, std::size_t epoch);

/// Query id -> mined negative entity ids, best first.
using HardNegativeMap = std::map<std::string, std::vector<std::string>>;

HardNegativeMap mine_hard_negatives(const EncoderParams& params,
                                    const std::vector<QueryRecord>& queries,
                                    const std::vector<EntityRecord>& entities, std::size_t n,
                                    std::size_t cap, std::uint64_t seed);

/// Indices into the query/entity collections making up one batch.
struct BatchPlan {
  std::vector<std::size_t> queries;
  std::vector<std::size_t> entities;  // deduplicated; golds first, then mined negatives
  std::vector<bool> hard_negative;    // parallel to entities
};

std::vector<BatchPlan> build_batches(const std::vector<QueryRecord>& queries,
                                     const std::vector<EntityRecord>& entities,
                                     const HardNegativeMap& hard_map, std::size_t batch_size,
                                     std::size_t epoch, std::size_t n, std::uint64_t seed);

/// Materialises a plan with embeddings from `params`.
Batch make_batch(const EncoderParams& params, const BatchPlan& plan,
                 const std::vector<QueryRecord>& queries,
                 const std::vector<EntityRecord>& entities, double tau);

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  std::size_t batches = 0;
};

struct TrainResult {
  EncoderParams params;
  std::vector<EpochStats> epochs;
};

/// Runs the full schedule. With `out_dir`, writes epoch_<k>.tabienc after every
/// epoch and metrics.csv (epoch,mean_loss,lr). Queries should already carry
/// their type labels.
TrainResult train(const TrainConfig& config, const std::vector<QueryRecord>& queries,
                  const std::vector<EntityRecord>& entities,
                  const std::optional<std::filesystem::path>& out_dir = std::nullopt);

}  // namespace tabi
