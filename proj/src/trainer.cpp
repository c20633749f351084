#include "tabi/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <unordered_map>
#include <unordered_set>

#include "tabi/index.hpp"
#include "tabi/optimizer.hpp"
#include "tabi/rng.hpp"

namespace tabi {

void TrainConfig::validate() const {
  if (batch_size < 2) throw std::invalid_argument("batch_size must be at least 2");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::invalid_argument("alpha must lie in [0, 1]");
  if (!(tau > 0.0)) throw std::invalid_argument("tau must be positive");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be positive");
  if (!(lr_decay > 0.0)) throw std::invalid_argument("lr_decay must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be non-negative");
  if (epochs > 1 && batch_size < n_hard_negatives + 1) {
    throw std::invalid_argument("batch_size must be at least n_hard_negatives + 1");
  }
}

double learning_rate_for_epoch(const TrainConfig& config, std::size_t epoch) {
  return config.learning_rate * std::pow(config.lr_decay, static_cast<double>(epoch - 1));
}

namespace {

std::unordered_map<std::string_view, std::size_t> entity_positions(
    const std::vector<EntityRecord>& entities) {
  std::unordered_map<std::string_view, std::size_t> pos;
  for (std::size_t i = 0; i < entities.size(); ++i) pos.emplace(entities[i].id, i);
  return pos;
}

std::size_t resolve(const std::unordered_map<std::string_view, std::size_t>& pos,
                    const std::string& id, const std::string& query_id) {
  auto it = pos.find(id);
  if (it == pos.end()) {
    throw DataError("query \"" + query_id + "\" references unknown entity \"" + id + "\"");
  }
  return it->second;
}

}  // namespace

HardNegativeMap mine_hard_negatives(const EncoderParams& params,
                                    const std::vector<QueryRecord>& queries,
                                    const std::vector<EntityRecord>& entities, std::size_t n,
                                    std::size_t cap, std::uint64_t seed) {
  HardNegativeMap out;
  for (const auto& q : queries) out[q.id];
  if (n == 0 || queries.empty()) return out;

  const auto pos = entity_positions(entities);
  std::vector<std::vector<std::size_t>> golds(queries.size());
  std::vector<std::size_t> budget(entities.size(), 0);
  for (std::size_t i = 0; i < queries.size(); ++i) {
    for (const auto& g : queries[i].gold_ids) {
      const auto e = resolve(pos, g, queries[i].id);
      if (std::find(golds[i].begin(), golds[i].end(), e) == golds[i].end()) golds[i].push_back(e);
    }
    if (entities.size() - golds[i].size() < n) {
      throw std::invalid_argument("cannot mine " + std::to_string(n) +
                                  " hard negatives for query \"" + queries[i].id + "\": only " +
                                  std::to_string(entities.size() - golds[i].size()) +
                                  " non-gold entities exist");
    }
    for (auto e : golds[i]) budget[e] += cap;
  }

  const auto index = build_index(params, entities);
  std::vector<std::size_t> order(queries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);

  std::size_t short_lists = 0;
  for (auto qi : order) {
    const auto& q = queries[qi];
    const auto emb = encode(params, format_query(q));
    const auto scores = index.score_all(emb);
    auto& list = out[q.id];
    std::size_t depth = std::min(index.size(), 2 * (n + golds[qi].size()) + 8);
    std::size_t scanned = 0;
    while (list.size() < n) {
      const auto ranked = index.select_top(scores, depth);
      for (; scanned < ranked.size() && list.size() < n; ++scanned) {
        const auto e = ranked[scanned];
        if (std::find(golds[qi].begin(), golds[qi].end(), e) != golds[qi].end()) continue;
        if (budget[e] == 0) continue;
        --budget[e];
        list.push_back(entities[e].id);
      }
      if (depth == index.size()) break;
      depth = std::min(index.size(), depth * 2);
    }
    if (list.size() < n) ++short_lists;
  }
  if (short_lists > 0) {
    std::clog << "tabi: " << short_lists << " queries received fewer than " << n
              << " hard negatives (negative cap exhausted)\n";
  }
  return out;
}

std::vector<BatchPlan> build_batches(const std::vector<QueryRecord>& queries,
                                     const std::vector<EntityRecord>& entities,
                                     const HardNegativeMap& hard_map, std::size_t batch_size,
                                     std::size_t epoch, std::size_t n, std::uint64_t seed) {
  if (queries.empty()) throw std::invalid_argument("cannot build batches from an empty dataset");
  if (epoch == 0) throw std::invalid_argument("epochs are numbered from 1");
  const bool with_negatives = epoch >= 2;
  if (with_negatives && batch_size < n + 1) {
    throw std::invalid_argument("batch_size " + std::to_string(batch_size) +
                                " is smaller than n_hard_negatives + 1 = " + std::to_string(n + 1));
  }
  const std::size_t per_batch = with_negatives ? batch_size / (n + 1) : batch_size;
  if (per_batch == 0) throw std::invalid_argument("batch_size must be positive");

  const auto pos = entity_positions(entities);
  std::vector<std::size_t> order(queries.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, epoch));
  rng.shuffle(order);

  std::vector<BatchPlan> plans;
  for (std::size_t start = 0; start < order.size(); start += per_batch) {
    BatchPlan plan;
    std::unordered_set<std::size_t> present;
    const std::size_t stop = std::min(order.size(), start + per_batch);
    plan.queries.assign(order.begin() + static_cast<std::ptrdiff_t>(start),
                        order.begin() + static_cast<std::ptrdiff_t>(stop));
    for (auto qi : plan.queries) {
      const auto e = resolve(pos, queries[qi].gold_ids.front(), queries[qi].id);
      if (present.insert(e).second) {
        plan.entities.push_back(e);
        plan.hard_negative.push_back(false);
      }
    }
    if (with_negatives) {
      for (auto qi : plan.queries) {
        auto it = hard_map.find(queries[qi].id);
        if (it == hard_map.end()) continue;
        for (const auto& id : it->second) {
          const auto e = resolve(pos, id, queries[qi].id);
          if (present.insert(e).second) {
            plan.entities.push_back(e);
            plan.hard_negative.push_back(true);
          }
        }
      }
    }
    plans.push_back(std::move(plan));
  }
  return plans;
}

Batch make_batch(const EncoderParams& params, const BatchPlan& plan,
                 const std::vector<QueryRecord>& queries,
                 const std::vector<EntityRecord>& entities, double tau) {
  Batch b;
  b.temperature = tau;
  for (auto qi : plan.queries) {
    const auto& q = queries[qi];
    b.queries.push_back({q.id, encode(params, format_query(q)), q.gold_ids.front(), q.types});
  }
  for (std::size_t i = 0; i < plan.entities.size(); ++i) {
    const auto& e = entities[plan.entities[i]];
    b.entities.push_back({e.id, encode(params, format_entity(e)), e.types, plan.hard_negative[i]});
  }
  return b;
}

TrainResult train(const TrainConfig& config, const std::vector<QueryRecord>& queries,
                  const std::vector<EntityRecord>& entities,
                  const std::optional<std::filesystem::path>& out_dir) {
  config.validate();
  TrainResult result{init_params(derive_seed(config.seed, 100), config.dim, config.vocab), {}};
  if (config.epochs == 0) return result;
  if (queries.empty()) throw std::invalid_argument("training set is empty");
  check_gold_ids(queries, entities);

  std::vector<TokenSequence> query_tokens, entity_tokens;
  query_tokens.reserve(queries.size());
  for (const auto& q : queries) query_tokens.push_back(format_query(q));
  entity_tokens.reserve(entities.size());
  for (const auto& e : entities) entity_tokens.push_back(format_entity(e));

  std::ofstream metrics;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    metrics.open(*out_dir / "metrics.csv", std::ios::binary);
    metrics << "epoch,mean_loss,lr\n";
  }

  auto& params = result.params;
  EncoderGrad grad(params.vocab, params.dim);
  AdamWState state;
  HardNegativeMap hard_map;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lr = learning_rate_for_epoch(config, epoch);
    const auto plans = build_batches(queries, entities, hard_map, config.batch_size, epoch,
                                     config.n_hard_negatives, config.seed);
    double loss_sum = 0.0;
    for (const auto& plan : plans) {
      std::vector<EncodeTrace> traces;
      traces.reserve(plan.queries.size() + plan.entities.size());
      Batch batch;
      batch.temperature = config.tau;
      for (auto qi : plan.queries) {
        traces.push_back(encode_traced(params, query_tokens[qi]));
        const auto& q = queries[qi];
        batch.queries.push_back({q.id, traces.back().output, q.gold_ids.front(), q.types});
      }
      for (std::size_t i = 0; i < plan.entities.size(); ++i) {
        const auto ei = plan.entities[i];
        traces.push_back(encode_traced(params, entity_tokens[ei]));
        batch.entities.push_back(
            {entities[ei].id, traces.back().output, entities[ei].types, plan.hard_negative[i]});
      }

      const auto lg = loss_grad(batch, config.alpha, config.measure, config.objective);
      loss_sum += lg.loss;

      grad.clear();
      for (std::size_t i = 0; i < plan.queries.size(); ++i) {
        accumulate_encode_grad(params, traces[i], lg.query_grads[i], grad);
      }
      for (std::size_t i = 0; i < plan.entities.size(); ++i) {
        accumulate_encode_grad(params, traces[plan.queries.size() + i], lg.entity_grads[i], grad);
      }
      optimizer_step(params, grad, state, lr, config.weight_decay);
    }

    const EpochStats stats{epoch, loss_sum / static_cast<double>(plans.size()), lr, plans.size()};
    result.epochs.push_back(stats);
    if (out_dir) {
      save_checkpoint(*out_dir / ("epoch_" + std::to_string(epoch) + ".tabienc"), params);
      metrics << epoch << ',' << std::setprecision(17) << stats.mean_loss << ',' << lr << '\n';
      metrics.flush();
    }
    if (epoch < config.epochs && config.n_hard_negatives > 0) {
      hard_map = mine_hard_negatives(params, queries, entities, config.n_hard_negatives,
                                     config.neg_per_pos_cap, derive_seed(config.seed, 1000 + epoch));
    }
  }
  return result;
}

}  // namespace tabi
