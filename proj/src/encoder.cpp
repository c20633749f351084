#include "tabi/encoder.hpp"

#include <cmath>
#include <fstream>

#include "tabi/io.hpp"
#include "tabi/kernels.hpp"
#include "tabi/rng.hpp"

namespace tabi {

namespace {

constexpr std::string_view kCheckpointMagic = "TABIENC1";

void check_finite(const EncoderParams& p) {
  for (const auto* v : {&p.token_table, &p.projection, &p.bias}) {
    for (double x : *v) {
      if (!std::isfinite(x)) throw io::FormatError("checkpoint holds a non-finite parameter");
    }
  }
}

}  // namespace

EncoderParams init_params(std::uint64_t seed, std::size_t dim, std::size_t vocab) {
  if (dim < 2) throw std::invalid_argument("encoder dimension must be at least 2");
  if (vocab <= kReservedTokens) {
    throw std::invalid_argument("encoder vocabulary must exceed the 3 reserved marker slots");
  }
  EncoderParams p;
  p.vocab = vocab;
  p.dim = dim;
  Rng rng(seed);
  p.token_table.resize(vocab * dim);
  for (auto& x : p.token_table) x = rng.uniform(-0.05, 0.05);
  p.projection.assign(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      p.projection[i * dim + j] = (i == j ? 1.0 : 0.0) + rng.uniform(-0.01, 0.01);
    }
  }
  p.bias.assign(dim, 0.0);
  return p;
}

std::size_t hash_token(std::string_view token, std::size_t vocab) {
  if (token == kMentionStart) return 0;
  if (token == kMentionEnd) return 1;
  if (token == kEntitySep) return 2;
  return kReservedTokens + io::fnv1a64(token) % (vocab - kReservedTokens);
}

EncodeTrace encode_traced(const EncoderParams& params, const TokenSequence& tokens) {
  if (tokens.empty()) throw std::invalid_argument("cannot encode an empty token sequence");
  const std::size_t d = params.dim;
  EncodeTrace t;
  t.rows.reserve(tokens.size());
  t.pooled.assign(d, 0.0);
  for (const auto& tok : tokens) {
    const auto r = hash_token(tok, params.vocab);
    t.rows.push_back(r);
    kernels::axpy(1.0, params.row(r), t.pooled);
  }
  const double inv_n = 1.0 / static_cast<double>(tokens.size());
  for (auto& x : t.pooled) x *= inv_n;

  t.output.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    t.output[i] =
        kernels::dot({params.projection.data() + i * d, d}, t.pooled) + params.bias[i];
  }
  t.norm = std::sqrt(kernels::dot(t.output, t.output));
  if (!(t.norm >= 1e-12)) throw DegenerateEmbedding("encoder output has (near-)zero norm");
  for (auto& x : t.output) x /= t.norm;
  return t;
}

Embedding encode(const EncoderParams& params, const TokenSequence& tokens) {
  return std::move(encode_traced(params, tokens).output);
}

EncoderGrad::EncoderGrad(std::size_t v, std::size_t d)
    : vocab(v),
      dim(d),
      token_table(v * d, 0.0),
      projection(d * d, 0.0),
      bias(d, 0.0),
      touched(v, 0) {}

void EncoderGrad::clear() {
  for (auto r : touched_rows) {
    std::fill_n(token_table.begin() + static_cast<std::ptrdiff_t>(r * dim), dim, 0.0);
    touched[r] = 0;
  }
  touched_rows.clear();
  std::fill(projection.begin(), projection.end(), 0.0);
  std::fill(bias.begin(), bias.end(), 0.0);
}

void accumulate_encode_grad(const EncoderParams& params, const EncodeTrace& trace,
                            std::span<const double> upstream, EncoderGrad& grad) {
  const std::size_t d = params.dim;
  // Through the normalisation: dz = (I - e e^T) u / ||z||.
  const double along = kernels::dot(upstream, trace.output);
  std::vector<double> gz(d);
  for (std::size_t i = 0; i < d; ++i) gz[i] = (upstream[i] - along * trace.output[i]) / trace.norm;

  kernels::axpy(1.0, gz, grad.bias);
  std::vector<double> gpooled(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    kernels::axpy(gz[i], trace.pooled, {grad.projection.data() + i * d, d});
    kernels::axpy(gz[i], {params.projection.data() + i * d, d}, gpooled);
  }
  const double inv_n = 1.0 / static_cast<double>(trace.rows.size());
  for (auto r : trace.rows) {
    if (!grad.touched[r]) {
      grad.touched[r] = 1;
      grad.touched_rows.push_back(r);
    }
    kernels::axpy(inv_n, gpooled, {grad.token_table.data() + r * d, d});
  }
}

EncoderGrad encode_grad(const EncoderParams& params, const TokenSequence& tokens,
                        std::span<const double> upstream) {
  if (upstream.size() != params.dim) throw std::invalid_argument("upstream dimension mismatch");
  EncoderGrad g(params.vocab, params.dim);
  accumulate_encode_grad(params, encode_traced(params, tokens), upstream, g);
  return g;
}

void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  io::write_magic(out, kCheckpointMagic);
  io::write_u32(out, static_cast<std::uint32_t>(params.vocab));
  io::write_u32(out, static_cast<std::uint32_t>(params.dim));
  io::write_f64s(out, params.token_table);
  io::write_f64s(out, params.projection);
  io::write_f64s(out, params.bias);
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

EncoderParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  io::expect_magic(in, kCheckpointMagic);
  EncoderParams p;
  p.vocab = io::read_u32(in, "vocab size");
  p.dim = io::read_u32(in, "dimension");
  if (p.dim < 2 || p.vocab <= kReservedTokens) {
    throw io::FormatError("checkpoint has invalid shape");
  }
  p.token_table.resize(p.vocab * p.dim);
  p.projection.resize(p.dim * p.dim);
  p.bias.resize(p.dim);
  io::read_f64s(in, p.token_table, "token table");
  io::read_f64s(in, p.projection, "projection");
  io::read_f64s(in, p.bias, "bias");
  check_finite(p);
  return p;
}

}  // namespace tabi
