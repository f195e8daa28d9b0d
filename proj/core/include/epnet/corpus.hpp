#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace epnet {

// Name reserved for the implicit non-entity type. It never appears in gold data.
inline constexpr std::string_view kNoneType = "None";

struct Sentence {
  std::string id;
  std::vector<std::string> tokens;

  std::size_t size() const { return tokens.size(); }
  bool operator==(const Sentence&) const = default;
};

// Half-open token interval [start, end) labelled with an entity type.
struct Entity {
  std::size_t start = 0;
  std::size_t end = 0;
  std::string type;

  std::size_t length() const { return end - start; }
  bool operator==(const Entity&) const = default;
};

// Candidate entity: `length` tokens starting at `start`.
struct Span {
  std::string sentence_id;
  std::size_t start = 0;
  std::size_t length = 1;

  std::size_t end() const { return start + length; }
  bool operator==(const Span&) const = default;
};

// Ordered entity-type set. Index 0 is the None type, index i (1-based) is
// names()[i - 1]; this order drives prototype assignment.
class TypeSystem {
 public:
  TypeSystem() = default;
  explicit TypeSystem(std::vector<std::string> names);

  // Sorted, de-duplicated type set.
  static TypeSystem from_unordered(std::vector<std::string> names);

  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  bool empty() const { return names_.empty(); }
  bool contains(std::string_view name) const;
  // 1-based index of `name`, or nullopt.
  std::optional<std::size_t> index_of(std::string_view name) const;

  bool operator==(const TypeSystem& other) const { return names_ == other.names_; }

 private:
  std::vector<std::string> names_;
};

// Immutable labelled corpus. annotations()[i] belongs to sentences()[i].
class Dataset {
 public:
  Dataset() = default;
  // Validates ids, tokens, entity bounds and type membership.
  Dataset(std::vector<Sentence> sentences, std::vector<std::vector<Entity>> annotations,
          TypeSystem types);

  const std::vector<Sentence>& sentences() const { return sentences_; }
  const std::vector<std::vector<Entity>>& annotations() const { return annotations_; }
  const TypeSystem& types() const { return types_; }
  std::size_t size() const { return sentences_.size(); }
  bool empty() const { return sentences_.empty(); }

  // Position of the sentence with `id`, or nullopt.
  std::optional<std::size_t> find(std::string_view id) const;
  const std::vector<Entity>& entities_of(std::string_view id) const;
  std::size_t entity_count() const;

  // Keeps the given sentences (by position) and only entities whose type is
  // in `types`; the result carries `types` as its type system.
  Dataset subset(std::span<const std::size_t> positions, const TypeSystem& types) const;
  Dataset restrict_types(const TypeSystem& types) const;

  bool operator==(const Dataset& other) const;

 private:
  std::vector<Sentence> sentences_;
  std::vector<std::vector<Entity>> annotations_;
  TypeSystem types_;
  std::unordered_map<std::string, std::size_t> index_;
};

// JSONL: one {"id","tokens","entities":[{"start","end","type"}]} record per
// line. Without `types`, the type system is the sorted set of types found.
Dataset load_jsonl(const std::filesystem::path& path,
                   const std::optional<TypeSystem>& types = std::nullopt);
Dataset parse_jsonl(std::istream& in, const std::optional<TypeSystem>& types = std::nullopt);
void write_jsonl(const Dataset& data, const std::filesystem::path& path);
void write_jsonl(const Dataset& data, std::ostream& out);

// Two-column token/BIO-tag format, blank line between sentences. Sentence ids
// are assigned as "<prefix><ordinal>".
Dataset load_conll_bio(const std::filesystem::path& path,
                       const std::optional<TypeSystem>& types = std::nullopt);
Dataset parse_conll_bio(std::istream& in, const std::optional<TypeSystem>& types = std::nullopt,
                        std::string_view id_prefix = "s");
void write_conll_bio(const Dataset& data, std::ostream& out);

// Converts a BIO tag sequence into entities. An I- tag that does not continue
// a run of the same type opens a new entity.
std::vector<Entity> decode_bio(std::span<const std::string> tags);
// Inverse of decode_bio for non-overlapping entities.
std::vector<std::string> encode_bio(std::span<const Entity> entities, std::size_t n_tokens);

// One type name per line, order significant, blank lines ignored.
TypeSystem load_type_file(const std::filesystem::path& path);
void write_type_file(const TypeSystem& types, const std::filesystem::path& path);

// All spans of length 1..min(epsilon, n), grouped by length, then by start.
std::vector<Span> enumerate_spans(const Sentence& sentence, std::size_t epsilon);
std::size_t span_count(std::size_t n, std::size_t epsilon);

// True iff the half-open intervals intersect. Throws on differing sentences.
bool spans_overlap(const Span& a, const Span& b);

}  // namespace epnet
