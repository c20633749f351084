#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tabi {

using TypeSet = std::set<std::string>;
using TokenSequence = std::vector<std::string>;

inline constexpr std::string_view kMentionStart = "[M_s]";
inline constexpr std::string_view kMentionEnd = "[M_e]";
inline constexpr std::string_view kEntitySep = "[E_s]";

inline constexpr std::size_t kMaxQueryTokens = 32;
inline constexpr std::size_t kMaxEntityTokens = 128;

/// Thrown for malformed input files; message carries the line number.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown when records violate a collection invariant (duplicate or dangling ids).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EntityRecord {
  std::string id;
  std::string title;
  std::string description;
  TypeSet types;
  std::int64_t popularity = 0;
};

enum class SubsetTag { None, Head, Tail };

std::string_view subset_name(SubsetTag t);

struct MentionSpan {
  std::size_t start = 0;  // byte offset, inclusive
  std::size_t end = 0;    // byte offset, exclusive
};

struct QueryRecord {
  std::string id;
  std::string text;
  std::optional<MentionSpan> mention_span;
  std::vector<std::string> gold_ids;
  std::string group_id;
  TypeSet types;
  // Set when the source file carried a "types" key; assign_query_types leaves
  // such queries alone.
  bool explicit_types = false;
  SubsetTag subset = SubsetTag::None;
};

enum class TypeEquivalence { Any, All, Gt50 };

std::string_view measure_name(TypeEquivalence m);
TypeEquivalence parse_measure(std::string_view s);

// --- I/O (JSON lines) ---
std::vector<EntityRecord> load_entities(const std::filesystem::path& path);
std::vector<QueryRecord> load_queries(const std::filesystem::path& path);
void save_entities(const std::filesystem::path& path, const std::vector<EntityRecord>& entities);
void save_queries(const std::filesystem::path& path, const std::vector<QueryRecord>& queries);

/// Throws DataError if ids repeat.
void check_unique_ids(const std::vector<EntityRecord>& entities);
/// Throws DataError naming the first query whose gold id is not in `entities`.
void check_gold_ids(const std::vector<QueryRecord>& queries,
                    const std::vector<EntityRecord>& entities);

// --- formatting ---

/// Lowercased word pieces with their byte ranges in the source text.
struct TextToken {
  std::string text;
  std::size_t begin = 0;
  std::size_t end = 0;
};

std::vector<TextToken> tokenize_with_offsets(std::string_view text);
TokenSequence tokenize(std::string_view text);

TokenSequence format_query(const QueryRecord& q);
TokenSequence format_entity(const EntityRecord& e);

// --- types ---

std::vector<QueryRecord> assign_query_types(std::vector<QueryRecord> queries,
                                            const std::vector<EntityRecord>& entities);

bool type_equivalent(const TypeSet& a, const TypeSet& b,
                     TypeEquivalence m = TypeEquivalence::Gt50);

std::vector<QueryRecord> perturb_drop_types(std::vector<QueryRecord> queries, double fraction,
                                            std::uint64_t seed);

std::vector<QueryRecord> perturb_flip_types(std::vector<QueryRecord> queries, double fraction,
                                            std::uint64_t seed, const TypeSet& vocabulary);

/// Union of every type appearing on the given entities.
TypeSet type_vocabulary(const std::vector<EntityRecord>& entities);

// --- synthetic benchmark ---

struct SynthSpec {
  std::size_t names = 200;           // shared mention strings
  std::size_t types = 5;             // drawn from the built-in type list
  std::size_t tails_per_name = 1;    // rare entities sharing each name
  std::size_t head_queries = 4;      // queries per head entity
  std::size_t tail_queries = 4;      // queries per tail entity
  std::size_t heldout_names = 0;     // extra names whose entities get no queries
  std::size_t cue_vocab = 40;        // cue words per type
  std::size_t description_cues = 4;  // cue words per description
  std::size_t query_cues = 2;        // gold-type cue words per query
  std::size_t filler_words = 3;      // type-neutral words per query and description
  double secondary_type_rate = 0.0;  // chance an entity also carries a second type
};

struct SyntheticCorpus {
  std::vector<EntityRecord> entities;
  std::vector<QueryRecord> queries;
};

/// Number of types the built-in cue vocabularies cover.
std::size_t synth_type_limit();
/// Type names and cue words used by the generator (type index order).
std::vector<std::string> synth_type_names(std::size_t count);
std::vector<std::string> synth_cue_words(std::size_t type_index, std::size_t count);

SyntheticCorpus generate_synthetic_corpus(const SynthSpec& spec, std::uint64_t seed);

/// Fresh queries for the given synthetic entities (e.g. a test split drawn with
/// a different seed). Entities must come from generate_synthetic_corpus with
/// the same spec; `per_entity` queries are emitted for every non-held-out entity.
std::vector<QueryRecord> generate_synthetic_queries(const SynthSpec& spec,
                                                    const std::vector<EntityRecord>& entities,
                                                    std::size_t per_entity, std::uint64_t seed,
                                                    std::string_view id_prefix);

}  // namespace tabi
