// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances are fixed below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "experiment.hpp"
#include "oracle.hpp"
#include "tabi/cli.hpp"
#include "tabi/eval.hpp"
#include "tabi/index.hpp"
#include "tabi/io.hpp"
#include "tabi/loss.hpp"
#include "tabi/rerank.hpp"
#include "tabi/trainer.hpp"
#include "test_util.hpp"

namespace {

using namespace tabi;
using testing::random_unit;
using testing::rel_error;

constexpr double kIdentityTol = 1e-12;
constexpr double kFdStep = 1e-5;
constexpr double kFdTol = 1e-5;
constexpr double kOracleTol = 1e-6;
constexpr double kTailLift = 0.05;
constexpr double kHeadSlack = 0.02;
constexpr double kRetained = 0.5;
constexpr double kFlipSlack = 0.02;
constexpr double kAlpha = 0.1;
constexpr std::uint64_t kSeeds[] = {1, 2, 3};

struct Verdict {
  bool pass;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Verdict()>& check) {
  const auto start = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = check();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (!v.pass) ++failures;
  std::printf("%s %2d %s: %s (%.1fs)\n", v.pass ? "PASS" : "FAIL", id, name.c_str(),
              v.detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

Batch random_batch(Rng& rng, std::size_t nq, std::size_t ne, std::size_t dim, double tau) {
  Batch b;
  b.temperature = tau;
  const std::vector<std::string> pool = {"a", "b", "c", "d"};
  for (std::size_t i = 0; i < ne; ++i) {
    TypeSet t;
    for (const auto& x : pool) {
      if (rng.unit() < 0.4) t.insert(x);
    }
    b.entities.push_back({"e" + std::to_string(i), random_unit(rng, dim), t, i % 3 == 2});
  }
  for (std::size_t i = 0; i < nq; ++i) {
    const auto& gold = b.entities[rng.below(ne)];
    TypeSet t = rng.unit() < 0.8 ? gold.types : TypeSet{};
    b.queries.push_back({"q" + std::to_string(i), random_unit(rng, dim), gold.id, t});
  }
  return b;
}

Verdict reduction_identities() {
  Rng rng(101);
  double worst = 0.0;
  for (int t = 0; t < 100; ++t) {
    const auto b = random_batch(rng, 2 + rng.below(30), 1 + rng.below(20), 2 + rng.below(30),
                                0.02 + rng.unit());
    worst = std::max(worst, std::abs(loss_tabi(b, 0.0) - loss_ent(b)));
    worst = std::max(worst, std::abs(loss_tabi(b, 1.0) - loss_type(b)));
  }
  return {worst <= kIdentityTol, fmt("max |diff| %.3g over 100 batches", worst)};
}

double loss_fd_error(Batch b, double alpha) {
  const auto g = loss_grad(b, alpha);
  std::vector<double> analytic, numeric;
  auto probe = [&](double& x, double grad) {
    const double keep = x;
    x = keep + kFdStep;
    const double fp = loss_tabi(b, alpha);
    x = keep - kFdStep;
    const double fm = loss_tabi(b, alpha);
    x = keep;
    numeric.push_back((fp - fm) / (2 * kFdStep));
    analytic.push_back(grad);
  };
  for (std::size_t i = 0; i < b.queries.size(); ++i) {
    for (std::size_t j = 0; j < b.queries[i].embedding.size(); ++j) {
      probe(b.queries[i].embedding[j], g.query_grads[i][j]);
    }
  }
  for (std::size_t i = 0; i < b.entities.size(); ++i) {
    for (std::size_t j = 0; j < b.entities[i].embedding.size(); ++j) {
      probe(b.entities[i].embedding[j], g.entity_grads[i][j]);
    }
  }
  return rel_error(analytic, numeric);
}

double encode_fd_error(EncoderParams p, const TokenSequence& toks, const std::vector<double>& up) {
  auto objective = [&] {
    const auto e = encode(p, toks);
    double s = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) s += e[i] * up[i];
    return s;
  };
  const auto g = encode_grad(p, toks, up);
  std::vector<double> analytic, numeric;
  auto probe = [&](double& x, double grad) {
    const double keep = x;
    x = keep + kFdStep;
    const double fp = objective();
    x = keep - kFdStep;
    const double fm = objective();
    x = keep;
    numeric.push_back((fp - fm) / (2 * kFdStep));
    analytic.push_back(grad);
  };
  std::set<std::size_t> rows;
  for (const auto& t : toks) rows.insert(hash_token(t, p.vocab));
  for (auto r : rows) {
    for (std::size_t j = 0; j < p.dim; ++j) {
      probe(p.token_table[r * p.dim + j], g.token_table[r * p.dim + j]);
    }
  }
  for (std::size_t i = 0; i < p.projection.size(); ++i) probe(p.projection[i], g.projection[i]);
  for (std::size_t i = 0; i < p.bias.size(); ++i) probe(p.bias[i], g.bias[i]);
  return rel_error(analytic, numeric);
}

Verdict gradients() {
  Rng rng(202);
  double loss_worst = 0.0, enc_worst = 0.0;
  for (int t = 0; t < 12; ++t) {
    const auto b = random_batch(rng, 3 + rng.below(4), 2 + rng.below(4), 5, t % 2 ? 0.5 : 0.1);
    loss_worst = std::max(loss_worst, loss_fd_error(b, t % 4 == 0 ? 0.0 : 0.1 + 0.2 * (t % 4)));
  }
  for (int t = 0; t < 12; ++t) {
    auto p = init_params(500 + t, 6, 64);
    for (auto& x : p.bias) x = rng.uniform(-0.1, 0.1);
    TokenSequence toks;
    const auto n = 1 + rng.below(8);
    for (std::uint64_t k = 0; k < n; ++k) toks.push_back("w" + std::to_string(rng.below(10)));
    std::vector<double> up(6);
    for (auto& u : up) u = rng.uniform(-1, 1);
    enc_worst = std::max(enc_worst, encode_fd_error(p, toks, up));
  }
  return {loss_worst <= kFdTol && enc_worst <= kFdTol,
          fmt("loss rel %.2g, encoder rel %.2g (12 instances each)", loss_worst, enc_worst)};
}

Verdict oracle_values() {
  // Single query, gold at score 1, one negative at 0, tau 1.
  Batch nce;
  nce.temperature = 1.0;
  nce.queries = {{"q1", {1, 0}, "e1", {}}};
  nce.entities = {{"e1", {1, 0}, {}, false}, {"e2", {0, 1}, {}, false}};

  // Two aligned queries of type A, one orthogonal query of type B.
  Batch type = nce;
  type.queries = {{"q1", {1, 0}, "e1", {"A"}}, {"q2", {1, 0}, "e1", {"A"}},
                  {"q3", {0, 1}, "e2", {"B"}}};

  // Two queries, each aligned with its own gold description.
  Batch ent = nce;
  ent.queries = {{"q1", {1, 0}, "e1", {}}, {"q2", {0, 1}, "e2", {}}};

  const double direct_nce = oracle::nce(nce);
  const double direct_type = oracle::type(type, TypeEquivalence::Gt50);
  const double direct_ent = oracle::ent(ent);
  const bool ok = std::abs(direct_nce - 0.313262) <= kOracleTol &&
                  std::abs(direct_type - 0.208841) <= kOracleTol &&
                  std::abs(direct_ent - 0.551445) <= kOracleTol &&
                  std::abs(loss_nce(nce) - direct_nce) <= kOracleTol &&
                  std::abs(loss_type(type) - direct_type) <= kOracleTol &&
                  std::abs(loss_ent(ent) - direct_ent) <= kOracleTol;
  return {ok, fmt("nce %.6f, type %.6f, ent %.6f", loss_nce(nce), loss_type(type), loss_ent(ent))};
}

Verdict index_exactness() {
  Rng rng(404);
  const std::size_t dim = 24;
  std::vector<std::string> ids;
  std::vector<Embedding> rows;
  for (std::size_t i = 0; i < 1000; ++i) {
    ids.push_back("ent" + std::to_string(rng.below(1u << 30)) + "_" + std::to_string(i));
    // Every tenth row duplicates an earlier one so exact score ties occur.
    rows.push_back(i % 10 == 9 ? rows[rng.below(i)] : random_unit(rng, dim));
  }
  const auto index = index_from_embeddings(ids, rows);
  std::size_t mismatches = 0;
  for (int q = 0; q < 100; ++q) {
    const auto query = q % 5 == 0 ? rows[rng.below(rows.size())] : random_unit(rng, dim);
    const std::size_t k = q % 3 == 0 ? 1000 : 1 + rng.below(50);
    if (search(index, query, k) != oracle::brute_force_search(index, query, k)) ++mismatches;
  }
  return {mismatches == 0, fmt("%.0f of 100 queries differ from brute force", double(mismatches))};
}

struct Ablation {
  std::vector<experiment::Outcome> base, typed, drop, flip;

  static double mean(const std::vector<experiment::Outcome>& v,
                     double experiment::Outcome::*field) {
    double s = 0.0;
    for (const auto& o : v) s += o.*field;
    return s / static_cast<double>(v.size());
  }
};

const Ablation& ablation() {
  static const Ablation runs = [] {
    Ablation a;
    const auto setup = experiment::default_setup();
    for (auto seed : kSeeds) {
      a.base.push_back(experiment::run(setup, seed, 0.0));
      a.typed.push_back(experiment::run(setup, seed, kAlpha));
      a.drop.push_back(experiment::run(setup, seed, kAlpha, experiment::TypeNoise::Drop, 0.95));
      a.flip.push_back(experiment::run(setup, seed, kAlpha, experiment::TypeNoise::Flip, 1.0));
    }
    return a;
  }();
  return runs;
}

using O = experiment::Outcome;

Verdict ablation_direction() {
  const auto& a = ablation();
  const double tail_lift = Ablation::mean(a.typed, &O::tail_acc1) - Ablation::mean(a.base, &O::tail_acc1);
  const double head_change = Ablation::mean(a.typed, &O::head_acc1) - Ablation::mean(a.base, &O::head_acc1);
  return {tail_lift >= kTailLift && head_change >= -kHeadSlack,
          fmt("tail %+.3f (alpha 0 %.3f), head %+.3f", tail_lift, Ablation::mean(a.base, &O::tail_acc1),
              head_change)};
}

Verdict drop_robustness() {
  const auto& a = ablation();
  const double base = Ablation::mean(a.base, &O::tail_acc1);
  const double lift = Ablation::mean(a.typed, &O::tail_acc1) - base;
  const double kept = Ablation::mean(a.drop, &O::tail_acc1) - base;
  const double ratio = lift > 0 ? kept / lift : 0.0;
  return {lift > 0 && ratio >= kRetained,
          fmt("retained %.2f of lift (%+.3f of %+.3f)", ratio, kept, lift)};
}

Verdict flip_noise() {
  const auto& a = ablation();
  const double diff = Ablation::mean(a.flip, &O::tail_acc1) - Ablation::mean(a.base, &O::tail_acc1);
  return {diff >= -kFlipSlack, fmt("flipped tail minus alpha 0 tail %+.3f", diff)};
}

Verdict embedding_quality() {
  const auto& a = ablation();
  const double f0 = Ablation::mean(a.base, &O::knn_macro_f1), f1 = Ablation::mean(a.typed, &O::knn_macro_f1);
  const double r0 = Ablation::mean(a.base, &O::similarity_rho), r1 = Ablation::mean(a.typed, &O::similarity_rho);
  return {f1 > f0 && r1 > r0, fmt("macro F1 %.3f vs %.3f, rho %.3f vs %.3f", f1, f0, r1, r0)};
}

Verdict rerank_identities() {
  Rng rng(909);
  std::size_t order_breaks = 0;
  std::vector<RerankExample> dev;
  PopularityMap pop;
  for (int i = 0; i < 40; ++i) pop["c" + std::to_string(i)] = static_cast<std::int64_t>(rng.below(5000));
  for (int t = 0; t < 300; ++t) {
    RankedList dense, sparse;
    std::set<std::string> used;
    while (dense.size() < 10) {
      const auto id = "c" + std::to_string(rng.below(40));
      if (used.insert(id).second) dense.push_back({id, rng.uniform(-1, 1)});
    }
    std::sort(dense.begin(), dense.end(), [](const ScoredId& x, const ScoredId& y) {
      return x.score != y.score ? x.score > y.score : x.id < y.id;
    });
    std::set<std::string> sparse_used;
    while (sparse.size() < 10) {
      const auto id = "c" + std::to_string(rng.below(40));
      if (sparse_used.insert(id).second) sparse.push_back({id, rng.unit()});
    }
    std::sort(sparse.begin(), sparse.end(), [](const ScoredId& x, const ScoredId& y) {
      return x.score != y.score ? x.score > y.score : x.id < y.id;
    });
    std::vector<std::string> restricted;
    for (const auto& s : rerank(dense, sparse, pop, 0.0, 0.0)) {
      if (used.count(s.id)) restricted.push_back(s.id);
    }
    for (std::size_t i = 0; i < dense.size(); ++i) {
      if (i >= restricted.size() || restricted[i] != dense[i].id) {
        ++order_breaks;
        break;
      }
    }
    if (t < 60) dev.push_back({dense, sparse, {"c" + std::to_string(rng.below(40))}});
  }
  const auto grid = default_rerank_grid();
  const auto first = tune(dev, pop, grid);
  const auto second = tune(dev, pop, grid);
  const bool deterministic = first.weights == second.weights && first.accuracy == second.accuracy;
  const bool ok = order_breaks == 0 && grid.size() == 9 && first.evaluations == 18 &&
                  second.evaluations == 18 && deterministic;
  return {ok, fmt("order breaks %.0f, grid %.0f points, %.0f evaluations, deterministic %.0f",
                  double(order_breaks), double(grid.size()), double(first.evaluations),
                  double(deterministic))};
}

Verdict metric_properties() {
  Rng rng(1010);
  std::size_t bound = 0, rprec = 0, monotone = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto groups = 1 + rng.below(8), size = 1 + rng.below(4);
    const bool singletons = t % 2 == 0;
    RetrievalResults rs;
    for (std::uint64_t g = 0; g < groups; ++g) {
      for (std::uint64_t i = 0; i < size; ++i) {
        QueryResult r;
        r.query_id = "q" + std::to_string(g) + "_" + std::to_string(i);
        r.group_id = "g" + std::to_string(g);
        std::vector<std::string> pool;
        for (int c = 0; c < 12; ++c) pool.push_back("c" + std::to_string(c));
        rng.shuffle(pool);
        for (std::size_t c = 0; c < 8; ++c) r.ranked.push_back({pool[c], 1.0 - 0.1 * double(c)});
        const std::size_t ngold = singletons ? 1 : 1 + rng.below(3);
        for (std::size_t c = 0; c < ngold; ++c) r.gold_ids.push_back(pool[rng.below(12)]);
        std::sort(r.gold_ids.begin(), r.gold_ids.end());
        r.gold_ids.erase(std::unique(r.gold_ids.begin(), r.gold_ids.end()), r.gold_ids.end());
        rs.push_back(std::move(r));
      }
    }
    if (consistency(rs) > accuracy_at_k(rs, 1)) ++bound;
    if (singletons && r_precision(rs) != accuracy_at_k(rs, 1)) ++rprec;
    for (std::size_t k = 1; k < 10; ++k) {
      if (accuracy_at_k(rs, k + 1) < accuracy_at_k(rs, k) ||
          recall_at_k(rs, k + 1) < recall_at_k(rs, k)) {
        ++monotone;
        break;
      }
    }
  }
  return {bound + rprec + monotone == 0,
          fmt("1000 sets: bound violations %.0f, r-precision mismatches %.0f, non-monotone %.0f",
              double(bound), double(rprec), double(monotone))};
}

Verdict batch_semantics() {
  std::vector<EntityRecord> entities;
  for (int i = 0; i < 64; ++i) entities.push_back({"e" + std::to_string(i), "t", "d", {}, 1});
  std::vector<QueryRecord> queries(5000);
  HardNegativeMap map;
  for (std::size_t i = 0; i < queries.size(); ++i) {
    queries[i].id = "q" + std::to_string(i);
    queries[i].gold_ids = {"e" + std::to_string(i % 64)};
    map[queries[i].id] = {"e" + std::to_string((i + 1) % 64), "e" + std::to_string((i + 2) % 64),
                          "e" + std::to_string((i + 3) % 64)};
  }
  const auto plans = build_batches(queries, entities, map, 4096, 2, 3, 7);
  bool ok = plans.size() == 5;
  for (std::size_t i = 0; i + 1 < plans.size(); ++i) ok = ok && plans[i].queries.size() == 1024;
  ok = ok && plans.back().queries.size() == 5000 - 4 * 1024;
  return {ok, fmt("%.0f batches, first holds %.0f queries", double(plans.size()),
                  double(plans.front().queries.size()))};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

int cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != 0) throw std::runtime_error(err.str());
  return code;
}

Verdict end_to_end_determinism() {
  testing::TempDir dir("accept");
  const auto data = dir / "data";
  cli({"synth", "--out", data.string(), "--seed", "11", "--names", "40", "--types", "5"});
  std::string metrics[2], checkpoints[2];
  for (int rep = 0; rep < 2; ++rep) {
    const auto out = dir / ("run" + std::to_string(rep));
    cli({"train", "--entities", (data / "entities.jsonl").string(), "--queries",
         (data / "queries.jsonl").string(), "--out", out.string(), "--seed", "4", "--epochs", "3",
         "--batch-size", "64", "--dim", "32", "--vocab", "4096", "--alpha", "0.1"});
    cli({"eval", "--entities", (data / "entities.jsonl").string(), "--queries",
         (data / "test_queries.jsonl").string(), "--checkpoint", (out / "final.tabienc").string(),
         "--out", out.string(), "--k", "1,10"});
    metrics[rep] = slurp(out / "metrics.json");
    for (int e = 1; e <= 3; ++e) {
      checkpoints[rep] += io::file_digest(out / ("epoch_" + std::to_string(e) + ".tabienc"));
    }
    checkpoints[rep] += io::file_digest(out / "final.tabienc");
  }
  const bool ok = !metrics[0].empty() && metrics[0] == metrics[1] && checkpoints[0] == checkpoints[1];
  return {ok, std::string("checkpoints ") + (checkpoints[0] == checkpoints[1] ? "identical" : "differ") +
                  ", metrics " + (metrics[0] == metrics[1] ? "identical" : "differ")};
}

}  // namespace

int main() {
  report(1, "loss reduction identities", reduction_identities);
  report(2, "gradient finite differences", gradients);
  report(3, "loss oracle values", oracle_values);
  report(4, "index exactness", index_exactness);
  report(5, "typed loss lifts tail accuracy", ablation_direction);
  report(6, "lift survives sparse types", drop_robustness);
  report(7, "wrong types do not hurt", flip_noise);
  report(8, "embedding type quality", embedding_quality);
  report(9, "re-ranker identities", rerank_identities);
  report(10, "metric properties", metric_properties);
  report(11, "batch size semantics", batch_semantics);
  report(12, "end-to-end determinism", end_to_end_determinism);
  std::printf("%d of 12 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
