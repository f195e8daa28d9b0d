#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "epnet/embedding_store.hpp"

namespace epnet {

enum class Activation { kRelu, kIdentity };

// y = act(W x + b); W is out x in.
struct DenseLayer {
  Eigen::MatrixXd weight;
  Eigen::VectorXd bias;
  Activation activation = Activation::kRelu;

  std::size_t in_dim() const { return static_cast<std::size_t>(weight.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weight.rows()); }
  bool operator==(const DenseLayer&) const = default;
};

// Activations kept by a forward pass for the matching backward pass. Columns
// are instances.
struct FfnCache {
  std::vector<Eigen::MatrixXd> inputs;       // input of each layer
  std::vector<Eigen::MatrixXd> preactivations;
};

struct FfnGradients {
  std::vector<Eigen::MatrixXd> weight;
  std::vector<Eigen::VectorXd> bias;
  Eigen::MatrixXd input;  // d loss / d network input, one column per instance
};

class ProjectionFFN {
 public:
  ProjectionFFN() = default;
  explicit ProjectionFFN(std::vector<DenseLayer> layers);

  std::size_t in_dim() const { return layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.back().out_dim(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  // `input` is in_dim x batch; returns out_dim x batch.
  Eigen::MatrixXd forward(const Eigen::MatrixXd& input, FfnCache* cache = nullptr) const;
  // Exact reverse-mode gradients for the batch seen by `cache`.
  FfnGradients backward(const FfnCache& cache, const Eigen::MatrixXd& upstream) const;

  bool operator==(const ProjectionFFN&) const = default;

 private:
  std::vector<DenseLayer> layers_;
};

// Row l-1 is the embedding of span length l.
class LengthEmbeddingTable {
 public:
  LengthEmbeddingTable() = default;
  explicit LengthEmbeddingTable(Eigen::MatrixXd rows) : rows_(std::move(rows)) {}

  std::size_t max_length() const { return static_cast<std::size_t>(rows_.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(rows_.cols()); }
  Eigen::MatrixXd& rows() { return rows_; }
  const Eigen::MatrixXd& rows() const { return rows_; }
  // Throws InvalidArgument when length is 0 or exceeds max_length().
  auto row(std::size_t length) const {
    check(length);
    return rows_.row(static_cast<Eigen::Index>(length - 1));
  }
  void check(std::size_t length) const;

  bool operator==(const LengthEmbeddingTable&) const = default;

 private:
  Eigen::MatrixXd rows_;
};

struct ProjectionModel {
  LengthEmbeddingTable lengths;
  ProjectionFFN ffn;

  std::size_t pooled_dim() const { return ffn.in_dim() - lengths.dim(); }
  bool operator==(const ProjectionModel&) const = default;
};

struct SpanRepresentation {
  Eigen::VectorXd raw;        // [pooled; length embedding]
  Eigen::VectorXd projected;  // FFN output
};

SpanRepresentation represent_span(const PooledSpan& pooled, const LengthEmbeddingTable& table,
                                  const ProjectionFFN& ffn);

// Batched form: column j of `pooled` has span length lengths[j]. Returns the
// raw (d2+d3) x B matrix.
Eigen::MatrixXd concat_length_embeddings(const Eigen::MatrixXd& pooled,
                                         std::span<const std::size_t> lengths,
                                         const LengthEmbeddingTable& table);

// Three layers (d2+d3) -> hidden -> hidden -> d1 with ReLU after the first
// two. Weights ~ N(0, 2/fan_in), zero biases, length rows ~ N(0, 0.02^2).
ProjectionModel init_projection(std::size_t d2, std::size_t d3, std::size_t d1, std::size_t hidden,
                                std::size_t max_length, std::uint64_t seed,
                                Activation hidden_activation = Activation::kRelu);

}  // namespace epnet
