#pragma once

// Tied query/entity encoder: hashed token table, mean pooling, one affine map,
// and L2 normalisation. Queries and entities share the single EncoderParams.

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "tabi/corpus.hpp"

namespace tabi {

using Embedding = std::vector<double>;

inline constexpr std::size_t kDefaultVocab = std::size_t{1} << 16;
inline constexpr std::size_t kDefaultDim = 64;
inline constexpr std::size_t kReservedTokens = 3;

class DegenerateEmbedding : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EncoderParams {
  std::size_t vocab = 0;
  std::size_t dim = 0;
  std::vector<double> token_table;  // vocab x dim, row-major
  std::vector<double> projection;   // dim x dim, row-major; z = projection * pooled + bias
  std::vector<double> bias;         // dim

  std::span<const double> row(std::size_t r) const { return {token_table.data() + r * dim, dim}; }
  std::span<double> row(std::size_t r) { return {token_table.data() + r * dim, dim}; }
  std::size_t parameter_count() const {
    return token_table.size() + projection.size() + bias.size();
  }
  bool operator==(const EncoderParams&) const = default;
};

EncoderParams init_params(std::uint64_t seed, std::size_t dim = kDefaultDim,
                          std::size_t vocab = kDefaultVocab);

/// Reserved markers map to 0..2; other tokens to 3 + FNV-1a(token) mod (vocab - 3).
std::size_t hash_token(std::string_view token, std::size_t vocab);

Embedding encode(const EncoderParams& params, const TokenSequence& tokens);

/// Forward quantities kept for backpropagation.
struct EncodeTrace {
  std::vector<std::size_t> rows;  // hashed token ids, one per token
  std::vector<double> pooled;     // mean of token rows
  std::vector<double> output;     // normalised embedding
  double norm = 0.0;              // ||projection * pooled + bias||
};

EncodeTrace encode_traced(const EncoderParams& params, const TokenSequence& tokens);

/// Gradient with the same layout as EncoderParams. Token-table rows that were
/// written since the last clear() are tracked so clearing stays cheap.
struct EncoderGrad {
  std::size_t vocab = 0;
  std::size_t dim = 0;
  std::vector<double> token_table;
  std::vector<double> projection;
  std::vector<double> bias;
  std::vector<std::size_t> touched_rows;
  std::vector<std::uint8_t> touched;

  EncoderGrad() = default;
  EncoderGrad(std::size_t vocab, std::size_t dim);
  void clear();
};

/// grad += d(upstream . encode(tokens)) / d(params).
void accumulate_encode_grad(const EncoderParams& params, const EncodeTrace& trace,
                            std::span<const double> upstream, EncoderGrad& grad);

EncoderGrad encode_grad(const EncoderParams& params, const TokenSequence& tokens,
                        std::span<const double> upstream);

// Checkpoint: "TABIENC1", u32 vocab, u32 dim, then f64 token_table, projection, bias.
void save_checkpoint(const std::filesystem::path& path, const EncoderParams& params);
EncoderParams load_checkpoint(const std::filesystem::path& path);

}  // namespace tabi
