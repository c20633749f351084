#include "tabi/loss.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "tabi/kernels.hpp"

namespace tabi {

namespace {

void check_temperature(double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("temperature must be positive");
}

void check_alpha(double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw std::invalid_argument("alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
}

// Items of Q followed by E, with a similarity matrix and an optional matrix of
// d(loss)/d(similarity).
class Workspace {
 public:
  Workspace(const Batch& batch, bool want_grad) : batch_(batch) {
    check_temperature(batch.temperature);
    nq_ = batch.queries.size();
    n_ = nq_ + batch.entities.size();
    sim_.assign(n_ * n_, 0.0);
    for (std::size_t a = 0; a < n_; ++a) {
      for (std::size_t b = a; b < n_; ++b) {
        const double s = kernels::dot(embedding(a), embedding(b)) / batch.temperature;
        sim_[a * n_ + b] = s;
        sim_[b * n_ + a] = s;
      }
    }
    if (want_grad) dsim_.assign(n_ * n_, 0.0);
  }

  std::size_t size() const { return n_; }
  std::size_t query_count() const { return nq_; }

  std::span<const double> embedding(std::size_t i) const {
    return i < nq_ ? std::span<const double>(batch_.queries[i].embedding)
                   : std::span<const double>(batch_.entities[i - nq_].embedding);
  }

  // Adds weight * sum_{p in pos} [LSE(s_ap, s_an...) - s_ap] for one anchor and
  // returns the unweighted sum over positives. Each term is evaluated against
  // max(s_ap, max_n s_an) so it stays finite and non-negative.
  double anchor_term(std::size_t a, const std::vector<std::size_t>& pos,
                     const std::vector<std::size_t>& neg, double weight) {
    if (pos.empty() || neg.empty()) return 0.0;
    const double* row = sim_.data() + a * n_;
    double neg_max = -INFINITY;
    for (auto k : neg) neg_max = std::max(neg_max, row[k]);
    double neg_sum = 0.0;  // >= 1
    for (auto k : neg) neg_sum += std::exp(row[k] - neg_max);

    double total = 0.0;
    double neg_scale = 0.0;  // sum over positives of exp(neg_max) / denominator
    for (auto p : pos) {
      const double gap = row[p] - neg_max;
      double prob, scale;  // softmax weight of p, and of the negatives relative to neg_max
      if (gap >= 0.0) {
        const double r = neg_sum * std::exp(-gap);
        total += std::log1p(r);
        prob = 1.0 / (1.0 + r);
        scale = std::exp(-gap) * prob;
      } else {
        const double denom = std::exp(gap) + neg_sum;
        total += std::log(denom) - gap;
        prob = std::exp(gap) / denom;
        scale = 1.0 / denom;
      }
      if (!dsim_.empty()) {
        dsim_[a * n_ + p] += weight * (prob - 1.0);
        neg_scale += scale;
      }
    }
    if (!dsim_.empty()) {
      for (auto k : neg) dsim_[a * n_ + k] += weight * neg_scale * std::exp(row[k] - neg_max);
    }
    return total;
  }

  LossGrad finish(double loss) const {
    LossGrad out;
    out.loss = loss;
    const std::size_t d = batch_.queries.empty()
                              ? (batch_.entities.empty() ? 0 : batch_.entities[0].embedding.size())
                              : batch_.queries[0].embedding.size();
    std::vector<Embedding> grads(n_, Embedding(d, 0.0));
    const double inv_tau = 1.0 / batch_.temperature;
    for (std::size_t a = 0; a < n_; ++a) {
      for (std::size_t b = 0; b < n_; ++b) {
        const double g = dsim_[a * n_ + b];
        if (g == 0.0) continue;
        kernels::axpy(g * inv_tau, embedding(b), grads[a]);
        kernels::axpy(g * inv_tau, embedding(a), grads[b]);
      }
    }
    out.query_grads.assign(std::make_move_iterator(grads.begin()),
                           std::make_move_iterator(grads.begin() + static_cast<std::ptrdiff_t>(nq_)));
    out.entity_grads.assign(std::make_move_iterator(grads.begin() + static_cast<std::ptrdiff_t>(nq_)),
                            std::make_move_iterator(grads.end()));
    return out;
  }

 private:
  const Batch& batch_;
  std::size_t nq_ = 0;
  std::size_t n_ = 0;
  std::vector<double> sim_;
  std::vector<double> dsim_;
};

std::unordered_map<std::string_view, std::size_t> entity_slots(const Batch& batch) {
  std::unordered_map<std::string_view, std::size_t> slot;
  for (std::size_t i = 0; i < batch.entities.size(); ++i) slot.emplace(batch.entities[i].id, i);
  return slot;
}

void check_golds(const Batch& batch) {
  const auto slot = entity_slots(batch);
  for (const auto& q : batch.queries) {
    if (!slot.contains(q.gold_id)) {
      throw std::invalid_argument("gold entity \"" + q.gold_id + "\" of query \"" + q.id +
                                  "\" is missing from the batch");
    }
  }
}

// The three terms, each scaled by `scale` on its way into the gradient.

double type_term(Workspace& ws, const Batch& batch, TypeEquivalence measure, double scale) {
  const std::size_t nq = batch.queries.size();
  if (nq == 0) return 0.0;
  double total = 0.0;
  std::vector<std::size_t> pos, neg;
  for (std::size_t a = 0; a < nq; ++a) {
    pos.clear();
    neg.clear();
    if (batch.queries[a].types.empty()) continue;
    for (std::size_t b = 0; b < nq; ++b) {
      // Untyped queries carry no type signal: never positives, never negatives.
      if (b == a || batch.queries[b].types.empty()) continue;
      (type_equivalent(batch.queries[a].types, batch.queries[b].types, measure) ? pos : neg)
          .push_back(b);
    }
    if (pos.empty()) continue;
    const double w = 1.0 / (static_cast<double>(pos.size()) * static_cast<double>(nq));
    total += ws.anchor_term(a, pos, neg, scale * w) / static_cast<double>(pos.size());
  }
  return total / static_cast<double>(nq);
}

double ent_term(Workspace& ws, const Batch& batch, double scale) {
  const std::size_t n = ws.size();
  if (n == 0) return 0.0;
  const std::size_t nq = batch.queries.size();
  auto label = [&](std::size_t i) -> const std::string& {
    return i < nq ? batch.queries[i].gold_id : batch.entities[i - nq].id;
  };
  double total = 0.0;
  std::vector<std::size_t> pos, neg;
  for (std::size_t a = 0; a < n; ++a) {
    pos.clear();
    neg.clear();
    for (std::size_t b = 0; b < n; ++b) {
      if (b == a) continue;
      (label(a) == label(b) ? pos : neg).push_back(b);
    }
    if (pos.empty()) continue;
    const double w = 1.0 / (static_cast<double>(pos.size()) * static_cast<double>(n));
    total += ws.anchor_term(a, pos, neg, scale * w) / static_cast<double>(pos.size());
  }
  return total / static_cast<double>(n);
}

double nce_term(Workspace& ws, const Batch& batch, double scale) {
  const std::size_t nq = batch.queries.size();
  if (nq == 0) return 0.0;
  const auto slot = entity_slots(batch);
  double total = 0.0;
  std::vector<std::size_t> pos(1), neg;
  for (std::size_t a = 0; a < nq; ++a) {
    const auto it = slot.find(batch.queries[a].gold_id);
    if (it == slot.end()) {
      throw std::invalid_argument("gold entity \"" + batch.queries[a].gold_id + "\" of query \"" +
                                  batch.queries[a].id + "\" is missing from the batch");
    }
    pos[0] = nq + it->second;
    neg.clear();
    for (std::size_t e = 0; e < batch.entities.size(); ++e) {
      if (e != it->second) neg.push_back(nq + e);
    }
    total += ws.anchor_term(a, pos, neg, scale / static_cast<double>(nq));
  }
  return total / static_cast<double>(nq);
}

}  // namespace

double psi(std::span<const double> u, std::span<const double> v, double tau) {
  check_temperature(tau);
  if (u.size() != v.size()) throw std::invalid_argument("psi: dimension mismatch");
  return std::exp(kernels::dot(u, v) / tau);
}

double loss_nce(const Batch& batch) {
  Workspace ws(batch, false);
  return nce_term(ws, batch, 1.0);
}

double loss_type(const Batch& batch, TypeEquivalence measure) {
  Workspace ws(batch, false);
  return type_term(ws, batch, measure, 1.0);
}

double loss_ent(const Batch& batch) {
  check_golds(batch);
  Workspace ws(batch, false);
  return ent_term(ws, batch, 1.0);
}

double loss_tabi(const Batch& batch, double alpha, TypeEquivalence measure) {
  check_alpha(alpha);
  check_golds(batch);
  Workspace ws(batch, false);
  return alpha * type_term(ws, batch, measure, 1.0) + (1.0 - alpha) * ent_term(ws, batch, 1.0);
}

double loss_variant_type_plus_nce(const Batch& batch, double alpha, TypeEquivalence measure) {
  check_alpha(alpha);
  Workspace ws(batch, false);
  return alpha * type_term(ws, batch, measure, 1.0) + (1.0 - alpha) * nce_term(ws, batch, 1.0);
}

LossGrad loss_grad(const Batch& batch, double alpha, TypeEquivalence measure,
                   Objective objective) {
  check_alpha(alpha);
  check_golds(batch);
  Workspace ws(batch, true);
  double loss = 0.0;
  if (alpha > 0.0) loss += alpha * type_term(ws, batch, measure, alpha);
  if (alpha < 1.0) {
    const double other = objective == Objective::Tabi ? ent_term(ws, batch, 1.0 - alpha)
                                                      : nce_term(ws, batch, 1.0 - alpha);
    loss += (1.0 - alpha) * other;
  }
  return ws.finish(loss);
}

}  // namespace tabi
