#include "tabi/index.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <unordered_set>

#include "tabi/io.hpp"
#include "tabi/kernels.hpp"

namespace tabi {

namespace {

constexpr std::string_view kIndexMagic = "TABIIDX1";
constexpr std::uint32_t kMaxIdBytes = 1u << 16;

}  // namespace

EntityIndex::EntityIndex(std::vector<std::string> ids, std::vector<float> rows, std::size_t dim)
    : ids_(std::move(ids)), rows_(std::move(rows)), dim_(dim) {
  if (rows_.size() != ids_.size() * dim_) throw std::invalid_argument("index: row buffer size mismatch");
  std::unordered_set<std::string_view> seen;
  for (const auto& id : ids_) {
    if (!seen.insert(id).second) throw DataError("index: duplicate entity id \"" + id + "\"");
  }
  std::vector<std::size_t> order(ids_.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return ids_[a] < ids_[b]; });
  id_rank_.resize(ids_.size());
  for (std::size_t r = 0; r < order.size(); ++r) id_rank_[order[r]] = r;
}

std::vector<double> EntityIndex::score_all(std::span<const double> query) const {
  if (query.size() != dim_) {
    throw std::invalid_argument("query dimension " + std::to_string(query.size()) +
                                " does not match index dimension " + std::to_string(dim_));
  }
  std::vector<double> scores(size());
  kernels::row_scores(rows_, dim_, query, scores);
  return scores;
}

std::vector<std::size_t> EntityIndex::select_top(std::span<const double> scores,
                                                 std::size_t k) const {
  std::vector<std::size_t> order(size());
  std::iota(order.begin(), order.end(), 0);
  k = std::min(k, order.size());
  auto better = [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] > scores[b];
    return id_rank_[a] < id_rank_[b];
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                    better);
  order.resize(k);
  return order;
}

EntityIndex index_from_embeddings(std::vector<std::string> ids,
                                  const std::vector<Embedding>& embeddings) {
  if (ids.size() != embeddings.size()) throw std::invalid_argument("index: ids/embeddings mismatch");
  const std::size_t dim = embeddings.empty() ? 0 : embeddings[0].size();
  std::vector<float> rows;
  rows.reserve(ids.size() * dim);
  for (const auto& e : embeddings) {
    if (e.size() != dim) throw std::invalid_argument("index: ragged embeddings");
    for (double x : e) rows.push_back(static_cast<float>(x));
  }
  return EntityIndex(std::move(ids), std::move(rows), dim);
}

EntityIndex build_index(const EncoderParams& params, const std::vector<EntityRecord>& entities) {
  if (entities.empty()) throw std::invalid_argument("cannot index an empty entity collection");
  std::vector<std::string> ids;
  std::vector<Embedding> embeddings;
  ids.reserve(entities.size());
  embeddings.reserve(entities.size());
  for (const auto& e : entities) {
    ids.push_back(e.id);
    embeddings.push_back(encode(params, format_entity(e)));
  }
  return index_from_embeddings(std::move(ids), embeddings);
}

RankedList search(const EntityIndex& index, std::span<const double> query, std::size_t k) {
  if (k == 0) throw std::invalid_argument("search: k must be at least 1");
  const auto scores = index.score_all(query);
  RankedList out;
  for (auto r : index.select_top(scores, k)) out.push_back({index.ids()[r], scores[r]});
  return out;
}

void save_index(const EntityIndex& index, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  io::write_magic(out, kIndexMagic);
  io::write_u32(out, static_cast<std::uint32_t>(index.size()));
  io::write_u32(out, static_cast<std::uint32_t>(index.dim()));
  for (const auto& id : index.ids()) {
    io::write_u32(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
  }
  io::write_f32s(out, index.rows());
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

EntityIndex load_index(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  io::expect_magic(in, kIndexMagic);
  const std::uint32_t count = io::read_u32(in, "entity count");
  const std::uint32_t dim = io::read_u32(in, "dimension");
  std::vector<std::string> ids;
  ids.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = io::read_u32(in, "id length");
    if (len > kMaxIdBytes) throw io::FormatError("entity id length " + std::to_string(len) + " is implausible");
    std::string id(len, '\0');
    in.read(id.data(), len);
    if (static_cast<std::uint32_t>(in.gcount()) != len) {
      throw io::FormatError("truncated file while reading entity id");
    }
    ids.push_back(std::move(id));
  }
  std::vector<float> rows(static_cast<std::size_t>(count) * dim);
  io::read_f32s(in, rows, "embedding rows");
  return EntityIndex(std::move(ids), std::move(rows), dim);
}

}  // namespace tabi
