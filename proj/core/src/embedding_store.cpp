#include "epnet/embedding_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "epnet/error.hpp"
#include "hash.hpp"

namespace epnet {

namespace {

using detail::fnv1a;
using detail::mix64;

constexpr std::array<char, 4> kMagic = {'E', 'P', 'N', 'E'};

template <typename T>
T byteswap_if_big(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    std::array<unsigned char, sizeof(T)> b;
    std::memcpy(b.data(), &v, sizeof(T));
    std::reverse(b.begin(), b.end());
    std::memcpy(&v, b.data(), sizeof(T));
  }
  return v;
}

template <typename T>
void put(std::ostream& out, T v) {
  v = byteswap_if_big(v);
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  template <typename T>
  T get(const char* what) {
    T v;
    bytes(reinterpret_cast<char*>(&v), sizeof(T), what);
    return byteswap_if_big(v);
  }

  void bytes(char* dst, std::size_t n, const char* what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw CorruptionError(std::string("truncated embedding file while reading ") + what);
  }

 private:
  std::istream& in_;
};

constexpr std::size_t kActivePerFeature = 4;

// Uniform value in [-1, 1) from the top 53 bits; exact in double.
double unit_from_hash(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-52 - 1.0;
}

std::string lowercase(std::string_view s) {
  std::string out(s);
  for (auto& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

// Each feature lights a few hashed coordinates with a positive value, so a
// max-pool over tokens keeps every feature of the span visible.
void add_feature(std::vector<double>& acc, std::uint64_t key, double weight, std::uint64_t seed) {
  const std::uint64_t base = mix64(key ^ mix64(seed));
  for (std::size_t a = 0; a < kActivePerFeature; ++a) {
    const std::uint64_t h = mix64(base + 0x632be59bd9b4e019ULL * (a + 1));
    acc[h % acc.size()] += weight * (0.75 + 0.25 * unit_from_hash(mix64(h)));
  }
}

constexpr double kContextWeight = 0.5;
constexpr std::uint64_t kTokenSalt = 0x544f4b454e000000ULL;
constexpr std::uint64_t kLeftSalt = 0x4c45465400000000ULL;
constexpr std::uint64_t kRightSalt = 0x5249474854000000ULL;

}  // namespace

bool EmbeddingStore::contains(std::string_view id) const {
  return table_.find(std::string(id)) != table_.end();
}

const EmbeddingStore::Matrix& EmbeddingStore::matrix(std::string_view id) const {
  auto it = table_.find(std::string(id));
  if (it == table_.end()) throw DataError("no embeddings for sentence '" + std::string(id) + "'");
  return it->second;
}

void EmbeddingStore::insert(std::string id, Matrix rows) {
  if (static_cast<std::size_t>(rows.cols()) != dim_)
    throw InvalidArgument("embedding dimension mismatch for sentence '" + id + "'");
  if (rows.rows() == 0) throw InvalidArgument("sentence '" + id + "' has no embedding rows");
  auto [it, fresh] = table_.emplace(id, std::move(rows));
  if (!fresh) throw DataError("duplicate embedding entry for sentence '" + id + "'");
  order_.push_back(std::move(id));
}

void EmbeddingStore::check_covers(const Dataset& data) const {
  for (const auto& s : data.sentences()) {
    auto it = table_.find(s.id);
    if (it == table_.end()) throw DataError("no embeddings for sentence '" + s.id + "'");
    if (static_cast<std::size_t>(it->second.rows()) != s.size())
      throw DataError("embedding token count " + std::to_string(it->second.rows()) +
                      " differs from " + std::to_string(s.size()) + " tokens in sentence '" +
                      s.id + "'");
  }
}

bool EmbeddingStore::operator==(const EmbeddingStore& other) const {
  if (dim_ != other.dim_ || order_ != other.order_) return false;
  for (const auto& id : order_) {
    const auto& a = table_.at(id);
    const auto& b = other.table_.at(id);
    if (a.rows() != b.rows()) return false;
    if (std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<std::size_t>(a.size())) != 0)
      return false;
  }
  return true;
}

void max_pool_into(const EmbeddingStore::Matrix& rows, std::size_t start, std::size_t length,
                   Eigen::Ref<Eigen::VectorXd> out) {
  out = rows.row(static_cast<Eigen::Index>(start)).transpose().cast<double>();
  for (std::size_t r = start + 1; r < start + length; ++r)
    out = out.cwiseMax(rows.row(static_cast<Eigen::Index>(r)).transpose().cast<double>());
}

PooledSpan max_pool(const EmbeddingStore& store, const Span& span) {
  const auto& rows = store.matrix(span.sentence_id);
  if (span.length == 0 || span.end() > static_cast<std::size_t>(rows.rows()))
    throw DataError("span [" + std::to_string(span.start) + "," + std::to_string(span.end()) +
                    ") out of bounds in sentence '" + span.sentence_id + "'");
  PooledSpan out{span, Eigen::VectorXd(static_cast<Eigen::Index>(store.dim()))};
  max_pool_into(rows, span.start, span.length, out.pooled);
  return out;
}

// ---------------------------------------------------------------------------

EmbeddingStore read_embeddings(std::istream& in) {
  Reader r(in);
  std::array<char, 4> magic{};
  r.bytes(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw FormatError("bad magic: not an EPNE embedding file");
  const auto version = r.get<std::uint32_t>("version");
  if (version != kEpneVersion)
    throw VersionError("unsupported EPNE version " + std::to_string(version));
  const auto dim = r.get<std::uint32_t>("dimension");
  if (dim == 0) throw FormatError("EPNE dimension is zero");
  const auto count = r.get<std::uint64_t>("sentence count");

  EmbeddingStore store(dim);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto id_len = r.get<std::uint32_t>("id length");
    std::string id(id_len, '\0');
    r.bytes(id.data(), id_len, "sentence id");
    const auto n = r.get<std::uint32_t>("token count");
    if (n == 0) throw FormatError("sentence '" + id + "' declares zero tokens");
    EmbeddingStore::Matrix rows(n, dim);
    r.bytes(reinterpret_cast<char*>(rows.data()), sizeof(float) * std::size_t{n} * dim,
            ("rows of sentence '" + id + "'").c_str());
    if constexpr (std::endian::native == std::endian::big)
      for (Eigen::Index k = 0; k < rows.size(); ++k) rows.data()[k] = byteswap_if_big(rows.data()[k]);
    try {
      store.insert(std::move(id), std::move(rows));
    } catch (const InvalidArgument& ex) {
      throw FormatError(ex.what());
    }
  }
  if (in.peek() != std::char_traits<char>::eof())
    throw CorruptionError("trailing bytes after the last EPNE record");
  return store;
}

EmbeddingStore read_embedding_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  try {
    return read_embeddings(in);
  } catch (const FormatError& ex) {
    // Keep the concrete type so callers can distinguish version and corruption.
    if (dynamic_cast<const VersionError*>(&ex)) throw VersionError(path.string() + ": " + ex.what());
    if (dynamic_cast<const CorruptionError*>(&ex))
      throw CorruptionError(path.string() + ": " + ex.what());
    throw FormatError(path.string() + ": " + ex.what());
  }
}

EmbeddingStore read_embedding_file(const std::filesystem::path& path, const Dataset& expected) {
  auto store = read_embedding_file(path);
  store.check_covers(expected);
  return store;
}

void write_embeddings(const EmbeddingStore& store, std::ostream& out) {
  out.write(kMagic.data(), kMagic.size());
  put<std::uint32_t>(out, kEpneVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(store.dim()));
  put<std::uint64_t>(out, store.size());
  for (const auto& id : store.ids()) {
    const auto& rows = store.matrix(id);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(id.size()));
    out.write(id.data(), static_cast<std::streamsize>(id.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(rows.rows()));
    for (Eigen::Index k = 0; k < rows.size(); ++k) put<float>(out, rows.data()[k]);
  }
}

void write_embedding_file(const EmbeddingStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  write_embeddings(store, out);
  if (!out) throw DataError("write failed for " + path.string());
}

// ---------------------------------------------------------------------------

EmbeddingStore hash_embed(const Dataset& data, std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw InvalidArgument("embedding dimension must be positive");
  static const std::string kBos = "\x02<s>";
  static const std::string kEos = "\x03</s>";
  EmbeddingStore store(dim);
  std::vector<double> acc(dim);
  for (const auto& s : data.sentences()) {
    std::vector<std::uint64_t> keys(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) keys[i] = fnv1a(lowercase(s.tokens[i]));
    const std::uint64_t bos = fnv1a(kBos), eos = fnv1a(kEos);

    EmbeddingStore::Matrix rows(static_cast<Eigen::Index>(s.size()), static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < s.size(); ++i) {
      std::fill(acc.begin(), acc.end(), 0.0);
      const std::uint64_t left = i == 0 ? bos : keys[i - 1];
      const std::uint64_t right = i + 1 == s.size() ? eos : keys[i + 1];
      add_feature(acc, keys[i] ^ kTokenSalt, 1.0, seed);
      add_feature(acc, mix64(left) ^ kLeftSalt, kContextWeight, seed);
      add_feature(acc, mix64(right) ^ kRightSalt, kContextWeight, seed);
      double norm2 = 0.0;
      for (double v : acc) norm2 += v * v;
      const double inv = norm2 > 0.0 ? 1.0 / std::sqrt(norm2) : 0.0;
      for (std::size_t k = 0; k < dim; ++k)
        rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = static_cast<float>(acc[k] * inv);
    }
    store.insert(s.id, std::move(rows));
  }
  return store;
}

}  // namespace epnet
