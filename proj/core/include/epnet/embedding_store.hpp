#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "epnet/corpus.hpp"

namespace epnet {

// Per-sentence token embeddings (rows = tokens), float32 at rest.
class EmbeddingStore {
 public:
  using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  EmbeddingStore() = default;
  explicit EmbeddingStore(std::size_t dim) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return order_.size(); }
  const std::vector<std::string>& ids() const { return order_; }
  bool contains(std::string_view id) const;

  // Throws DataError for an unknown id.
  const Matrix& matrix(std::string_view id) const;
  void insert(std::string id, Matrix rows);

  // Throws DataError naming the first sentence that is missing or whose row
  // count differs from its token count.
  void check_covers(const Dataset& data) const;

  bool operator==(const EmbeddingStore& other) const;

 private:
  std::size_t dim_ = 0;
  std::vector<std::string> order_;
  std::unordered_map<std::string, Matrix> table_;
};

struct PooledSpan {
  Span span;
  Eigen::VectorXd pooled;
};

// Coordinate-wise maximum over the span's token rows, promoted to double.
PooledSpan max_pool(const EmbeddingStore& store, const Span& span);
// Same, written into `out` (size dim) without allocation.
void max_pool_into(const EmbeddingStore::Matrix& rows, std::size_t start, std::size_t length,
                   Eigen::Ref<Eigen::VectorXd> out);

// EPNE binary format, little-endian:
//   "EPNE" | u32 version=1 | u32 dim | u64 count |
//   count x (u32 id_len | id bytes | u32 n_tokens | n_tokens*dim f32, row-major)
inline constexpr std::uint32_t kEpneVersion = 1;

EmbeddingStore read_embedding_file(const std::filesystem::path& path);
EmbeddingStore read_embedding_file(const std::filesystem::path& path, const Dataset& expected);
EmbeddingStore read_embeddings(std::istream& in);
void write_embedding_file(const EmbeddingStore& store, const std::filesystem::path& path);
void write_embeddings(const EmbeddingStore& store, std::ostream& out);

// Deterministic stand-in encoder. A token's vector depends only on its
// lowercased text, the lowercased texts of its left and right neighbours
// (sentence boundaries use fixed markers), `dim` and `seed`. Vectors have unit
// norm. All randomness comes from 64-bit integer hashing.
EmbeddingStore hash_embed(const Dataset& data, std::size_t dim, std::uint64_t seed);

}  // namespace epnet
