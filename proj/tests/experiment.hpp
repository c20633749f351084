#pragma once

// Scaled-down ablation runs on the synthetic benchmark, shared by the
// acceptance suite.

#include <cstdint>
#include <string>

#include "tabi/corpus.hpp"
#include "tabi/trainer.hpp"

namespace tabi::experiment {

enum class TypeNoise { None, Drop, Flip };

struct Setup {
  SynthSpec synth;
  TrainConfig train;
  std::size_t test_queries_per_entity = 4;
  std::size_t pair_count = 500;
  std::size_t knn_k = 10;
};

/// The benchmark used by the ablation criteria: 200 shared names, 5 types, d = 64, 4 epochs.
Setup default_setup();

struct Outcome {
  double head_acc1 = 0.0;
  double tail_acc1 = 0.0;
  double knn_macro_f1 = 0.0;
  double similarity_rho = 0.0;
  double final_loss = 0.0;
};

Outcome run(const Setup& setup, std::uint64_t seed, double alpha, TypeNoise noise = TypeNoise::None,
            double noise_fraction = 0.0);

}  // namespace tabi::experiment
