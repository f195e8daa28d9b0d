#include "epnet/projection.hpp"

#include <cmath>
#include <random>

#include "epnet/error.hpp"

namespace epnet {

ProjectionFFN::ProjectionFFN(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw InvalidArgument("projection network needs at least one layer");
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& layer = layers_[l];
    if (layer.weight.rows() != layer.bias.size())
      throw InvalidArgument("layer " + std::to_string(l) + ": bias size differs from output size");
    if (l > 0 && layer.in_dim() != layers_[l - 1].out_dim())
      throw InvalidArgument("layer " + std::to_string(l) + ": input size differs from previous output");
  }
}

Eigen::MatrixXd ProjectionFFN::forward(const Eigen::MatrixXd& input, FfnCache* cache) const {
  if (static_cast<std::size_t>(input.rows()) != in_dim())
    throw InvalidArgument("projection input has " + std::to_string(input.rows()) +
                          " rows, expected " + std::to_string(in_dim()));
  if (cache) {
    cache->inputs.clear();
    cache->preactivations.clear();
  }
  Eigen::MatrixXd x = input;
  for (const auto& layer : layers_) {
    Eigen::MatrixXd z = layer.weight * x;
    z.colwise() += layer.bias;
    if (cache) {
      cache->inputs.push_back(std::move(x));
      cache->preactivations.push_back(z);
    }
    x = layer.activation == Activation::kRelu ? Eigen::MatrixXd(z.cwiseMax(0.0)) : std::move(z);
  }
  return x;
}

FfnGradients ProjectionFFN::backward(const FfnCache& cache, const Eigen::MatrixXd& upstream) const {
  if (cache.inputs.size() != layers_.size())
    throw InvalidArgument("backward called without a matching forward cache");
  if (static_cast<std::size_t>(upstream.rows()) != out_dim() ||
      upstream.cols() != cache.inputs.front().cols())
    throw InvalidArgument("upstream gradient shape mismatch");
  FfnGradients g;
  g.weight.resize(layers_.size());
  g.bias.resize(layers_.size());
  Eigen::MatrixXd delta = upstream;
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& layer = layers_[l];
    if (layer.activation == Activation::kRelu)
      delta = delta.cwiseProduct((cache.preactivations[l].array() > 0.0).cast<double>().matrix());
    g.weight[l] = delta * cache.inputs[l].transpose();
    g.bias[l] = delta.rowwise().sum();
    delta = layer.weight.transpose() * delta;
  }
  g.input = std::move(delta);
  return g;
}

void LengthEmbeddingTable::check(std::size_t length) const {
  if (length == 0 || length > max_length())
    throw InvalidArgument("span length " + std::to_string(length) + " outside the length table (1.." +
                          std::to_string(max_length()) + ")");
}

Eigen::MatrixXd concat_length_embeddings(const Eigen::MatrixXd& pooled,
                                         std::span<const std::size_t> lengths,
                                         const LengthEmbeddingTable& table) {
  if (static_cast<std::size_t>(pooled.cols()) != lengths.size())
    throw InvalidArgument("one span length per pooled column required");
  const Eigen::Index d2 = pooled.rows();
  const auto d3 = static_cast<Eigen::Index>(table.dim());
  Eigen::MatrixXd raw(d2 + d3, pooled.cols());
  raw.topRows(d2) = pooled;
  for (Eigen::Index j = 0; j < pooled.cols(); ++j)
    raw.col(j).tail(d3) = table.row(lengths[static_cast<std::size_t>(j)]).transpose();
  return raw;
}

SpanRepresentation represent_span(const PooledSpan& pooled, const LengthEmbeddingTable& table,
                                  const ProjectionFFN& ffn) {
  const std::size_t len = pooled.span.length;
  SpanRepresentation rep;
  rep.raw = concat_length_embeddings(pooled.pooled, std::span(&len, 1), table).col(0);
  rep.projected = ffn.forward(rep.raw).col(0);
  return rep;
}

ProjectionModel init_projection(std::size_t d2, std::size_t d3, std::size_t d1, std::size_t hidden,
                                std::size_t max_length, std::uint64_t seed,
                                Activation hidden_activation) {
  if (d2 == 0 || d3 == 0 || d1 == 0 || hidden == 0 || max_length == 0)
    throw InvalidArgument("projection dimensions must be positive");
  std::mt19937_64 rng(seed);
  auto gaussian = [&rng](Eigen::Index rows, Eigen::Index cols, double sigma) {
    std::normal_distribution<double> normal(0.0, sigma);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c)
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = normal(rng);
    return m;
  };
  const std::size_t dims[] = {d2 + d3, hidden, hidden, d1};
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < 3; ++l) {
    const auto in = static_cast<Eigen::Index>(dims[l]);
    const auto out = static_cast<Eigen::Index>(dims[l + 1]);
    layers.push_back({gaussian(out, in, std::sqrt(2.0 / static_cast<double>(in))),
                      Eigen::VectorXd::Zero(out),
                      l < 2 ? hidden_activation : Activation::kIdentity});
  }
  ProjectionModel model;
  model.lengths = LengthEmbeddingTable(
      gaussian(static_cast<Eigen::Index>(max_length), static_cast<Eigen::Index>(d3), 0.02));
  model.ffn = ProjectionFFN(std::move(layers));
  return model;
}

}  // namespace epnet
