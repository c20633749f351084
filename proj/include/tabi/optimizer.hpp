#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tabi/encoder.hpp"

namespace tabi {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamWState {
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
};

/// One AdamW step (decoupled weight decay) on a flat parameter block. `step`
/// is the 1-based step index used for bias correction.
void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                  std::span<double> v, std::uint64_t step, double lr, double weight_decay,
                  const AdamWHyper& hyper = {});

/// Applies AdamW to every encoder parameter. Throws std::runtime_error naming
/// the block when a gradient entry is not finite.
void optimizer_step(EncoderParams& params, const EncoderGrad& grads, AdamWState& state, double lr,
                    double weight_decay, const AdamWHyper& hyper = {});

}  // namespace tabi
