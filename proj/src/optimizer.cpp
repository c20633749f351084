#include "tabi/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tabi {

void adamw_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                  std::span<double> v, std::uint64_t step, double lr, double weight_decay,
                  const AdamWHyper& hyper) {
  if (grads.size() != params.size() || m.size() != params.size() || v.size() != params.size()) {
    throw std::invalid_argument("adamw: shape mismatch");
  }
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  const double decay = 1.0 - lr * weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = hyper.beta1 * m[i] + (1.0 - hyper.beta1) * g;
    v[i] = hyper.beta2 * v[i] + (1.0 - hyper.beta2) * g * g;
    const double mhat = m[i] / c1;
    const double vhat = v[i] / c2;
    params[i] = params[i] * decay - lr * mhat / (std::sqrt(vhat) + hyper.eps);
  }
}

namespace {

void check_finite(std::span<const double> g, const char* block) {
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!std::isfinite(g[i])) {
      throw std::runtime_error(std::string("non-finite gradient in ") + block + " at element " +
                               std::to_string(i));
    }
  }
}

}  // namespace

void optimizer_step(EncoderParams& params, const EncoderGrad& grads, AdamWState& state, double lr,
                    double weight_decay, const AdamWHyper& hyper) {
  if (grads.vocab != params.vocab || grads.dim != params.dim) {
    throw std::invalid_argument("optimizer_step: gradient shape does not match parameters");
  }
  check_finite(grads.token_table, "token_table");
  check_finite(grads.projection, "projection");
  check_finite(grads.bias, "bias");

  const std::size_t total = params.parameter_count();
  if (state.m.size() != total) {
    state.m.assign(total, 0.0);
    state.v.assign(total, 0.0);
    state.step = 0;
  }
  ++state.step;

  std::size_t offset = 0;
  auto apply = [&](std::vector<double>& p, const std::vector<double>& g) {
    adamw_update(p, g, std::span(state.m).subspan(offset, p.size()),
                 std::span(state.v).subspan(offset, p.size()), state.step, lr, weight_decay,
                 hyper);
    offset += p.size();
  };
  apply(params.token_table, grads.token_table);
  apply(params.projection, grads.projection);
  apply(params.bias, grads.bias);
}

}  // namespace tabi
