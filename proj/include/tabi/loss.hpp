#pragma once

// Contrastive objectives over one training batch. All similarities go through
// psi(u, v) = exp(u . v / tau); denominators are evaluated with a per-anchor
// max shift so small temperatures cannot overflow.

#include <span>
#include <string>
#include <vector>

#include "tabi/corpus.hpp"
#include "tabi/encoder.hpp"

namespace tabi {

struct Batch {
  struct Query {
    std::string id;
    Embedding embedding;
    std::string gold_id;
    TypeSet types;
  };
  struct Entity {
    std::string id;
    Embedding embedding;
    TypeSet types;
    bool hard_negative = false;
  };

  std::vector<Query> queries;
  std::vector<Entity> entities;
  double temperature = 0.05;
};

enum class Objective {
  Tabi,         // alpha * L_type + (1 - alpha) * L_ent
  TypePlusNce,  // alpha * L_type + (1 - alpha) * L_NCE
};

double psi(std::span<const double> u, std::span<const double> v, double tau);

double loss_nce(const Batch& batch);
double loss_type(const Batch& batch, TypeEquivalence measure = TypeEquivalence::Gt50);
double loss_ent(const Batch& batch);
double loss_tabi(const Batch& batch, double alpha,
                 TypeEquivalence measure = TypeEquivalence::Gt50);
double loss_variant_type_plus_nce(const Batch& batch, double alpha,
                                  TypeEquivalence measure = TypeEquivalence::Gt50);

struct LossGrad {
  double loss = 0.0;
  std::vector<Embedding> query_grads;   // parallel to batch.queries
  std::vector<Embedding> entity_grads;  // parallel to batch.entities
};

/// Objective value and its exact gradient with respect to every embedding.
LossGrad loss_grad(const Batch& batch, double alpha,
                   TypeEquivalence measure = TypeEquivalence::Gt50,
                   Objective objective = Objective::Tabi);

}  // namespace tabi
