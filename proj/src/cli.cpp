#include "tabi/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "tabi/corpus.hpp"
#include "tabi/encoder.hpp"
#include "tabi/eval.hpp"
#include "tabi/index.hpp"
#include "tabi/io.hpp"
#include "tabi/kernels.hpp"
#include "tabi/rerank.hpp"
#include "tabi/rng.hpp"
#include "tabi/trainer.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace tabi {

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  TrainConfig train;
  std::string measure = "gt50";
  std::string objective = "tabi";

  std::string entities;
  std::string queries;
  std::string checkpoint;
  std::string index;
  std::string retrievals;
  std::string weights;
  std::string out = "out";

  std::vector<std::size_t> ks{1, 5, 10};
  std::size_t candidates = 100;  // depth of cached dense/sparse lists
  double lambda = 0.0;
  double kappa = 0.0;
  double drop_fraction = 0.0;
  double flip_fraction = 0.0;
  std::string query_text;

  SynthSpec synth;
  std::size_t dev_queries = 2;   // per entity
  std::size_t test_queries = 4;  // per entity
};

// ---------------------------------------------------------------------------
// Config file <-> RunConfig

using Setter = std::function<void(RunConfig&, const nlohmann::json&)>;

template <typename T>
Setter set(T RunConfig::*field) {
  return [field](RunConfig& c, const nlohmann::json& v) { c.*field = v.get<T>(); };
}

template <typename T>
Setter set_train(T TrainConfig::*field) {
  return [field](RunConfig& c, const nlohmann::json& v) { c.train.*field = v.get<T>(); };
}

template <typename T>
Setter set_synth(T SynthSpec::*field) {
  return [field](RunConfig& c, const nlohmann::json& v) { c.synth.*field = v.get<T>(); };
}

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"seed", set_train(&TrainConfig::seed)},
      {"alpha", set_train(&TrainConfig::alpha)},
      {"tau", set_train(&TrainConfig::tau)},
      {"epochs", set_train(&TrainConfig::epochs)},
      {"batch_size", set_train(&TrainConfig::batch_size)},
      {"hard_negatives", set_train(&TrainConfig::n_hard_negatives)},
      {"neg_cap", set_train(&TrainConfig::neg_per_pos_cap)},
      {"learning_rate", set_train(&TrainConfig::learning_rate)},
      {"lr_decay", set_train(&TrainConfig::lr_decay)},
      {"weight_decay", set_train(&TrainConfig::weight_decay)},
      {"dim", set_train(&TrainConfig::dim)},
      {"vocab", set_train(&TrainConfig::vocab)},
      {"measure", set(&RunConfig::measure)},
      {"objective", set(&RunConfig::objective)},
      {"entities", set(&RunConfig::entities)},
      {"queries", set(&RunConfig::queries)},
      {"checkpoint", set(&RunConfig::checkpoint)},
      {"index", set(&RunConfig::index)},
      {"retrievals", set(&RunConfig::retrievals)},
      {"weights", set(&RunConfig::weights)},
      {"out", set(&RunConfig::out)},
      {"k", set(&RunConfig::ks)},
      {"candidates", set(&RunConfig::candidates)},
      {"lambda", set(&RunConfig::lambda)},
      {"kappa", set(&RunConfig::kappa)},
      {"drop_fraction", set(&RunConfig::drop_fraction)},
      {"flip_fraction", set(&RunConfig::flip_fraction)},
      {"names", set_synth(&SynthSpec::names)},
      {"types", set_synth(&SynthSpec::types)},
      {"tails_per_name", set_synth(&SynthSpec::tails_per_name)},
      {"head_queries", set_synth(&SynthSpec::head_queries)},
      {"tail_queries", set_synth(&SynthSpec::tail_queries)},
      {"heldout_names", set_synth(&SynthSpec::heldout_names)},
      {"cue_vocab", set_synth(&SynthSpec::cue_vocab)},
      {"secondary_type_rate", set_synth(&SynthSpec::secondary_type_rate)},
      {"dev_queries", set(&RunConfig::dev_queries)},
      {"test_queries", set(&RunConfig::test_queries)},
      {"query", set(&RunConfig::query_text)},
  };
  return table;
}

void load_config_file(const fs::path& path, RunConfig& cfg) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError("config file " + path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  for (const auto& [key, value] : j.items()) {
    std::string k = key;
    std::replace(k.begin(), k.end(), '-', '_');
    auto it = setters().find(k);
    if (it == setters().end()) throw UsageError("unknown config key \"" + key + "\"");
    try {
      it->second(cfg, value);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("config key \"" + key + "\": " + e.what());
    }
  }
}

ojson echo_config(const RunConfig& c) {
  ojson j;
  j["seed"] = c.train.seed;
  j["alpha"] = c.train.alpha;
  j["tau"] = c.train.tau;
  j["epochs"] = c.train.epochs;
  j["batch_size"] = c.train.batch_size;
  j["hard_negatives"] = c.train.n_hard_negatives;
  j["neg_cap"] = c.train.neg_per_pos_cap;
  j["learning_rate"] = c.train.learning_rate;
  j["lr_decay"] = c.train.lr_decay;
  j["weight_decay"] = c.train.weight_decay;
  j["dim"] = c.train.dim;
  j["vocab"] = c.train.vocab;
  j["measure"] = c.measure;
  j["objective"] = c.objective;
  j["entities"] = c.entities;
  j["queries"] = c.queries;
  j["checkpoint"] = c.checkpoint;
  j["index"] = c.index;
  j["retrievals"] = c.retrievals;
  j["weights"] = c.weights;
  j["out"] = c.out;
  j["k"] = c.ks;
  j["candidates"] = c.candidates;
  j["lambda"] = c.lambda;
  j["kappa"] = c.kappa;
  j["drop_fraction"] = c.drop_fraction;
  j["flip_fraction"] = c.flip_fraction;
  j["names"] = c.synth.names;
  j["types"] = c.synth.types;
  j["tails_per_name"] = c.synth.tails_per_name;
  j["head_queries"] = c.synth.head_queries;
  j["tail_queries"] = c.synth.tail_queries;
  j["heldout_names"] = c.synth.heldout_names;
  j["cue_vocab"] = c.synth.cue_vocab;
  j["secondary_type_rate"] = c.synth.secondary_type_rate;
  j["dev_queries"] = c.dev_queries;
  j["test_queries"] = c.test_queries;
  j["query"] = c.query_text;
  return j;
}

// ---------------------------------------------------------------------------
// Command helpers

struct Context {
  RunConfig cfg;
  std::string command;
  std::ostream& out;
  std::map<std::string, std::string> inputs;  // path -> digest

  fs::path out_dir() const { return cfg.out; }

  fs::path input(const std::string& path, const char* flag) {
    if (path.empty()) throw UsageError(std::string("missing required --") + flag);
    if (!fs::exists(path)) throw std::runtime_error("input not found: " + path);
    inputs[path] = io::file_digest(path);
    return path;
  }

  void write_manifest() const {
    fs::create_directories(out_dir());
    ojson m;
    m["tool"] = "tabi";
    m["version"] = kVersion;
    m["subcommand"] = command;
    m["seed"] = cfg.train.seed;
    m["kernel_backend"] = std::string(kernels::backend_name(kernels::active_backend()));
    ojson in = ojson::object();
    for (const auto& [p, d] : inputs) in[p] = d;
    m["inputs"] = in;
    m["config"] = echo_config(cfg);
    std::ofstream(out_dir() / "manifest.json", std::ios::binary) << m.dump(2) << '\n';
    std::ofstream(out_dir() / "config.json", std::ios::binary) << echo_config(cfg).dump(2) << '\n';
  }
};

std::size_t max_k(const RunConfig& c) {
  std::size_t k = 1;
  for (auto v : c.ks) k = std::max(k, v);
  return k;
}

std::vector<QueryRecord> load_typed_queries(Context& ctx, const std::vector<EntityRecord>& entities) {
  auto queries = load_queries(ctx.input(ctx.cfg.queries, "queries"));
  check_gold_ids(queries, entities);
  return assign_query_types(std::move(queries), entities);
}

EntityIndex obtain_index(Context& ctx, const EncoderParams& params,
                         const std::vector<EntityRecord>* entities) {
  if (!ctx.cfg.index.empty()) return load_index(ctx.input(ctx.cfg.index, "index"));
  if (!entities) throw UsageError("need --index or --entities");
  return build_index(params, *entities);
}

RetrievalResults dense_retrieve(const EncoderParams& params, const EntityIndex& index,
                                const std::vector<QueryRecord>& queries, std::size_t depth) {
  RetrievalResults results;
  results.reserve(queries.size());
  for (const auto& q : queries) {
    results.push_back({q.id, search(index, encode(params, format_query(q)), depth), q.gold_ids,
                       q.group_id, q.subset});
  }
  return results;
}

PopularityMap popularity_of(const std::vector<EntityRecord>& entities) {
  PopularityMap p;
  for (const auto& e : entities) p[e.id] = e.popularity;
  return p;
}

// ---------------------------------------------------------------------------
// Subcommands

int cmd_synth(Context& ctx) {
  const auto corpus = generate_synthetic_corpus(ctx.cfg.synth, ctx.cfg.train.seed);
  fs::create_directories(ctx.out_dir());
  save_entities(ctx.out_dir() / "entities.jsonl", corpus.entities);
  save_queries(ctx.out_dir() / "queries.jsonl", corpus.queries);
  const auto dev = generate_synthetic_queries(ctx.cfg.synth, corpus.entities, ctx.cfg.dev_queries,
                                              derive_seed(ctx.cfg.train.seed, 7), "dev");
  const auto test = generate_synthetic_queries(ctx.cfg.synth, corpus.entities,
                                               ctx.cfg.test_queries,
                                               derive_seed(ctx.cfg.train.seed, 8), "test");
  save_queries(ctx.out_dir() / "dev_queries.jsonl", dev);
  save_queries(ctx.out_dir() / "test_queries.jsonl", test);
  ctx.write_manifest();
  ctx.out << "entities " << corpus.entities.size() << "\nqueries " << corpus.queries.size()
          << "\ndev_queries " << dev.size() << "\ntest_queries " << test.size() << "\n";
  return 0;
}

int cmd_validate(Context& ctx) {
  const auto entities = load_entities(ctx.input(ctx.cfg.entities, "entities"));
  ctx.out << "entities " << entities.size() << "\n";
  if (!ctx.cfg.queries.empty()) {
    const auto queries = load_typed_queries(ctx, entities);
    std::size_t typed = 0;
    for (const auto& q : queries) typed += q.types.empty() ? 0 : 1;
    ctx.out << "queries " << queries.size() << "\ntyped_queries " << typed << "\n";
  }
  ctx.out << "types " << type_vocabulary(entities).size() << "\n";
  ctx.write_manifest();
  return 0;
}

int cmd_train(Context& ctx) {
  const auto entities = load_entities(ctx.input(ctx.cfg.entities, "entities"));
  const auto queries = load_typed_queries(ctx, entities);
  ctx.write_manifest();
  const auto result = train(ctx.cfg.train, queries, entities, ctx.out_dir());
  for (const auto& e : result.epochs) {
    ctx.out << "epoch " << e.epoch << " mean_loss " << std::setprecision(6) << e.mean_loss
            << " lr " << e.lr << "\n";
  }
  save_checkpoint(ctx.out_dir() / "final.tabienc", result.params);
  return 0;
}

int cmd_index(Context& ctx) {
  const auto params = load_checkpoint(ctx.input(ctx.cfg.checkpoint, "checkpoint"));
  const auto entities = load_entities(ctx.input(ctx.cfg.entities, "entities"));
  ctx.write_manifest();
  const auto index = build_index(params, entities);
  save_index(index, ctx.out_dir() / "index.tabiidx");
  ctx.out << "indexed " << index.size() << " entities, dim " << index.dim() << "\n";
  return 0;
}

int cmd_retrieve(Context& ctx) {
  const auto params = load_checkpoint(ctx.input(ctx.cfg.checkpoint, "checkpoint"));
  std::vector<EntityRecord> entities;
  if (!ctx.cfg.entities.empty()) entities = load_entities(ctx.input(ctx.cfg.entities, "entities"));
  const auto index = obtain_index(ctx, params, entities.empty() ? nullptr : &entities);

  if (!ctx.cfg.query_text.empty()) {
    QueryRecord q;
    q.id = "query";
    q.text = ctx.cfg.query_text;
    const auto ranked = search(index, encode(params, format_query(q)), max_k(ctx.cfg));
    ctx.write_manifest();
    std::map<std::string_view, std::string_view> titles;
    for (const auto& e : entities) titles.emplace(e.id, e.title);
    ctx.out << "rank\tid\tscore\ttitle\n";
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      auto t = titles.find(ranked[i].id);
      ctx.out << (i + 1) << '\t' << ranked[i].id << '\t' << std::fixed << std::setprecision(6)
              << ranked[i].score << '\t' << (t == titles.end() ? "" : t->second) << "\n";
    }
    return 0;
  }

  const auto queries = load_queries(ctx.input(ctx.cfg.queries, "queries"));
  ctx.write_manifest();
  const auto depth = std::max(max_k(ctx.cfg), ctx.cfg.candidates);
  const auto results = dense_retrieve(params, index, queries, depth);
  save_retrievals(ctx.out_dir() / "retrievals.jsonl", results);
  ctx.out << "retrieved " << results.size() << " queries (depth " << depth << ")\n";
  return 0;
}

struct RerankInputs {
  RetrievalResults dense;             // joined with query metadata
  std::vector<RerankExample> examples;  // parallel to dense
};

RerankInputs rerank_inputs(Context& ctx, const std::vector<EntityRecord>& entities,
                           const std::vector<QueryRecord>& queries) {
  std::vector<std::pair<std::string, RankedList>> dense;
  if (!ctx.cfg.retrievals.empty()) {
    dense = load_retrievals(ctx.input(ctx.cfg.retrievals, "retrievals"));
  } else {
    const auto params = load_checkpoint(ctx.input(ctx.cfg.checkpoint, "checkpoint"));
    const auto index = obtain_index(ctx, params, &entities);
    for (auto& r : dense_retrieve(params, index, queries, ctx.cfg.candidates)) {
      dense.emplace_back(r.query_id, std::move(r.ranked));
    }
  }
  RerankInputs out;
  out.dense = join_results(queries, std::move(dense));
  const auto sparse = SparseModel::fit(entities);
  std::map<std::string_view, const QueryRecord*> by_id;
  for (const auto& q : queries) by_id.emplace(q.id, &q);
  for (const auto& r : out.dense) {
    const auto& q = *by_id.at(r.query_id);
    out.examples.push_back({r.ranked, sparse.topk(q.text, ctx.cfg.candidates), r.gold_ids});
  }
  return out;
}

int cmd_tune(Context& ctx) {
  const auto entities = load_entities(ctx.input(ctx.cfg.entities, "entities"));
  const auto queries = load_queries(ctx.input(ctx.cfg.queries, "queries"));
  ctx.write_manifest();
  const auto inputs = rerank_inputs(ctx, entities, queries);
  const auto grid = default_rerank_grid();
  const auto result = tune(inputs.examples, popularity_of(entities), grid);
  save_weights(ctx.out_dir() / "weights.txt", result.weights);
  ctx.out << "lambda=" << result.weights.lambda << "\nkappa=" << result.weights.kappa
          << "\naccuracy@1=" << result.accuracy << "\nevaluations=" << result.evaluations << "\n";
  return 0;
}

int cmd_eval(Context& ctx) {
  const auto queries = load_queries(ctx.input(ctx.cfg.queries, "queries"));
  if (!ctx.cfg.weights.empty()) {
    const auto w = load_weights(ctx.input(ctx.cfg.weights, "weights"));
    ctx.cfg.lambda = w.lambda;
    ctx.cfg.kappa = w.kappa;
  }
  const bool rerank_on = ctx.cfg.lambda > 0.0 || ctx.cfg.kappa > 0.0;
  RetrievalResults results;
  if (rerank_on) {
    const auto entities = load_entities(ctx.input(ctx.cfg.entities, "entities"));
    auto inputs = rerank_inputs(ctx, entities, queries);
    const auto pop = popularity_of(entities);
    results = std::move(inputs.dense);
    for (std::size_t i = 0; i < results.size(); ++i) {
      const auto& ex = inputs.examples[i];
      results[i].ranked = rerank(ex.dense, ex.sparse, pop, ctx.cfg.lambda, ctx.cfg.kappa);
    }
  } else if (ctx.cfg.retrievals.empty() && !ctx.cfg.checkpoint.empty()) {
    const auto params = load_checkpoint(ctx.input(ctx.cfg.checkpoint, "checkpoint"));
    std::vector<EntityRecord> entities;
    if (ctx.cfg.index.empty()) entities = load_entities(ctx.input(ctx.cfg.entities, "entities"));
    const auto index = obtain_index(ctx, params, &entities);
    results = dense_retrieve(params, index, queries, std::max(max_k(ctx.cfg), ctx.cfg.candidates));
  } else {
    results = join_results(queries, load_retrievals(ctx.input(ctx.cfg.retrievals, "retrievals")));
  }
  ctx.write_manifest();
  const auto report = metrics_report(results, ctx.cfg.ks);
  std::ofstream(ctx.out_dir() / "metrics.json", std::ios::binary) << report;
  ctx.out << report;
  return 0;
}

int cmd_perturb(Context& ctx) {
  if (ctx.cfg.drop_fraction > 0.0 && ctx.cfg.flip_fraction > 0.0) {
    throw UsageError("use either --drop-fraction or --flip-fraction, not both");
  }
  const auto entities = load_entities(ctx.input(ctx.cfg.entities, "entities"));
  auto queries = load_typed_queries(ctx, entities);
  if (ctx.cfg.drop_fraction > 0.0) {
    queries = perturb_drop_types(std::move(queries), ctx.cfg.drop_fraction, ctx.cfg.train.seed);
  } else if (ctx.cfg.flip_fraction > 0.0) {
    queries = perturb_flip_types(std::move(queries), ctx.cfg.flip_fraction, ctx.cfg.train.seed,
                                 type_vocabulary(entities));
  }
  for (auto& q : queries) q.explicit_types = true;
  ctx.write_manifest();
  save_queries(ctx.out_dir() / "queries.jsonl", queries);
  std::size_t typed = 0;
  for (const auto& q : queries) typed += q.types.empty() ? 0 : 1;
  ctx.out << "queries " << queries.size() << "\ntyped_queries " << typed << "\n";
  return 0;
}

int cmd_embed_dump(Context& ctx) {
  const auto params = load_checkpoint(ctx.input(ctx.cfg.checkpoint, "checkpoint"));
  const auto entities = load_entities(ctx.input(ctx.cfg.entities, "entities"));
  std::vector<std::string> ids;
  std::vector<Embedding> embeddings;
  for (const auto& e : entities) {
    ids.push_back(e.id);
    embeddings.push_back(encode(params, format_entity(e)));
  }
  if (!ctx.cfg.queries.empty()) {
    for (const auto& q : load_queries(ctx.input(ctx.cfg.queries, "queries"))) {
      ids.push_back(q.id);
      embeddings.push_back(encode(params, format_query(q)));
    }
  }
  ctx.write_manifest();
  save_embedding_dump(ctx.out_dir() / "embeddings.tsv", ids, embeddings);
  ctx.out << "dumped " << ids.size() << " embeddings\n";
  return 0;
}

void report_error(std::ostream& err, const char* kind, const std::string& message) {
  ojson j;
  j["error"] = kind;
  j["message"] = message;
  err << j.dump() << "\n";
}

std::string find_config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].starts_with("--config=")) return args[i].substr(9);
  }
  return {};
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  try {
    if (auto path = find_config_path(args); !path.empty()) load_config_file(path, cfg);
  } catch (const UsageError& e) {
    report_error(err, "config", e.what());
    return 2;
  }

  CLI::App app{"Type-aware bi-encoder entity retrieval"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON config file; flags override its values");
  app.add_option("--out", cfg.out, "Output directory");
  app.add_option("--seed", cfg.train.seed);
  app.add_option("--alpha", cfg.train.alpha, "Type-loss weight");
  app.add_option("--tau", cfg.train.tau, "Temperature");
  app.add_option("--epochs", cfg.train.epochs);
  app.add_option("--batch-size", cfg.train.batch_size, "Queries per batch in epoch 1");
  app.add_option("--hard-negatives", cfg.train.n_hard_negatives, "Mined negatives per query");
  app.add_option("--neg-cap", cfg.train.neg_per_pos_cap, "Negatives allowed per positive");
  app.add_option("--learning-rate", cfg.train.learning_rate);
  app.add_option("--weight-decay", cfg.train.weight_decay);
  app.add_option("--dim", cfg.train.dim);
  app.add_option("--vocab", cfg.train.vocab);
  app.add_option("--measure", cfg.measure, "any, all or gt50");
  app.add_option("--objective", cfg.objective, "tabi or type+nce");
  app.add_option("--k", cfg.ks, "Cutoffs, comma separated")->delimiter(',');
  app.add_option("--candidates", cfg.candidates, "Depth of cached candidate lists");
  app.add_option("--lambda", cfg.lambda, "Sparse weight for re-ranking");
  app.add_option("--kappa", cfg.kappa, "Popularity weight for re-ranking");
  app.add_option("--drop-fraction", cfg.drop_fraction);
  app.add_option("--flip-fraction", cfg.flip_fraction);
  app.add_option("--entities", cfg.entities, "entities.jsonl");
  app.add_option("--queries", cfg.queries, "queries.jsonl");
  app.add_option("--checkpoint", cfg.checkpoint, "Encoder checkpoint (.tabienc)");
  app.add_option("--index", cfg.index, "Entity index (.tabiidx)");
  app.add_option("--retrievals", cfg.retrievals, "Cached retrievals.jsonl");
  app.add_option("--weights", cfg.weights, "Tuned re-rank weights file");
  app.add_option("--query", cfg.query_text, "Ad-hoc query text for retrieve");
  app.add_option("--names", cfg.synth.names);
  app.add_option("--types", cfg.synth.types);
  app.add_option("--head-queries", cfg.synth.head_queries);
  app.add_option("--tail-queries", cfg.synth.tail_queries);
  app.add_option("--heldout-names", cfg.synth.heldout_names);

  const std::map<std::string, std::function<int(Context&)>> commands = {
      {"synth", cmd_synth},       {"validate", cmd_validate}, {"train", cmd_train},
      {"index", cmd_index},       {"retrieve", cmd_retrieve}, {"tune", cmd_tune},
      {"eval", cmd_eval},         {"perturb", cmd_perturb},   {"embed-dump", cmd_embed_dump},
  };
  const std::map<std::string, std::string> blurbs = {
      {"synth", "Generate a synthetic corpus with head/tail splits"},
      {"validate", "Check entities and queries, print counts"},
      {"train", "Train the encoder, one checkpoint per epoch"},
      {"index", "Embed all entities into an index file"},
      {"retrieve", "Dense top-k for a query file or one --query"},
      {"tune", "Grid-search re-rank weights on dev queries"},
      {"eval", "Retrieval metrics as JSON"},
      {"perturb", "Drop or flip query types"},
      {"embed-dump", "Write entity embeddings as TSV"},
  };
  for (const auto& [name, fn] : commands) app.add_subcommand(name, blurbs.at(name))->fallthrough();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    report_error(err, "usage", e.what());
    return 2;
  }

  Context ctx{cfg, app.get_subcommands().front()->get_name(), out, {}};
  try {
    ctx.cfg.train.measure = parse_measure(ctx.cfg.measure);
    if (ctx.cfg.objective == "tabi") {
      ctx.cfg.train.objective = Objective::Tabi;
    } else if (ctx.cfg.objective == "type+nce") {
      ctx.cfg.train.objective = Objective::TypePlusNce;
    } else {
      throw UsageError("unknown objective \"" + ctx.cfg.objective + "\"");
    }
    if (ctx.command == "train") ctx.cfg.train.validate();
    if (ctx.cfg.ks.empty() || std::find(ctx.cfg.ks.begin(), ctx.cfg.ks.end(), 0u) != ctx.cfg.ks.end()) {
      throw UsageError("--k values must be positive");
    }
  } catch (const std::invalid_argument& e) {
    report_error(err, "config", e.what());
    return 2;
  } catch (const UsageError& e) {
    report_error(err, "config", e.what());
    return 2;
  }

  try {
    return commands.at(ctx.command)(ctx);
  } catch (const UsageError& e) {
    report_error(err, "config", e.what());
    return 2;
  } catch (const std::exception& e) {
    report_error(err, "runtime", e.what());
    return 1;
  }
}

}  // namespace tabi
