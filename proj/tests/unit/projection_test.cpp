#include <gtest/gtest.h>

#include <cmath>

#include "epnet/error.hpp"
#include "epnet/projection.hpp"
#include "fixtures.hpp"

using namespace epnet;
using epnet::testing::random_matrix;

namespace {

DenseLayer identity_layer(std::size_t n, Activation act = Activation::kIdentity) {
  return DenseLayer{Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)),
                    Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n)), act};
}

ProjectionFFN random_ffn(std::mt19937_64& rng, std::vector<std::size_t> dims) {
  std::vector<DenseLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    DenseLayer l;
    l.weight = random_matrix(static_cast<Eigen::Index>(dims[i + 1]), static_cast<Eigen::Index>(dims[i]), rng);
    l.bias = random_matrix(static_cast<Eigen::Index>(dims[i + 1]), 1, rng, 0.5);
    l.activation = i + 2 < dims.size() ? Activation::kRelu : Activation::kIdentity;
    layers.push_back(std::move(l));
  }
  return ProjectionFFN(std::move(layers));
}

// Scalar loops, no Eigen products.
Eigen::VectorXd forward_oracle(const ProjectionFFN& ffn, const Eigen::VectorXd& x) {
  std::vector<double> cur(x.data(), x.data() + x.size());
  for (const auto& l : ffn.layers()) {
    std::vector<double> next(l.out_dim());
    for (std::size_t o = 0; o < l.out_dim(); ++o) {
      double s = l.bias(static_cast<Eigen::Index>(o));
      for (std::size_t i = 0; i < l.in_dim(); ++i)
        s += l.weight(static_cast<Eigen::Index>(o), static_cast<Eigen::Index>(i)) * cur[i];
      next[o] = l.activation == Activation::kRelu ? std::max(0.0, s) : s;
    }
    cur = std::move(next);
  }
  return Eigen::Map<Eigen::VectorXd>(cur.data(), static_cast<Eigen::Index>(cur.size()));
}

}  // namespace

TEST(Representation, IdentityNetworkConcatenates) {
  ProjectionFFN ffn({identity_layer(3, Activation::kRelu), identity_layer(3, Activation::kRelu),
                     identity_layer(3)});
  Eigen::MatrixXd rows(2, 1);
  rows << 0.5, -0.25;
  LengthEmbeddingTable table(rows);
  PooledSpan p{Span{"s", 0, 2}, Eigen::Vector2d(1.0, 2.0)};
  auto r = represent_span(p, table, ffn);
  EXPECT_TRUE(r.raw.isApprox(Eigen::Vector3d(1.0, 2.0, -0.25)));
  // The ReLU layers clip the negative length coordinate.
  EXPECT_TRUE(r.projected.isApprox(Eigen::Vector3d(1.0, 2.0, 0.0)));
  PooledSpan p1{Span{"s", 0, 1}, Eigen::Vector2d(1.0, 2.0)};
  EXPECT_TRUE(represent_span(p1, table, ffn).projected.isApprox(Eigen::Vector3d(1.0, 2.0, 0.5)));
  PooledSpan p3{Span{"s", 0, 3}, Eigen::Vector2d(1.0, 2.0)};
  EXPECT_THROW(represent_span(p3, table, ffn), InvalidArgument);
}

TEST(Representation, ZeroNetworkGivesZero) {
  auto model = init_projection(4, 2, 3, 5, 4, 1);
  for (auto& l : model.ffn.layers()) {
    l.weight.setZero();
    l.bias.setZero();
  }
  std::mt19937_64 rng(1);
  auto out = model.ffn.forward(random_matrix(6, 7, rng));
  EXPECT_TRUE(out.isZero(0.0));
  EXPECT_EQ(out.rows(), 3);
  EXPECT_EQ(out.cols(), 7);
}

TEST(Ffn, ForwardMatchesScalarOracle) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    auto ffn = random_ffn(rng, {7, 9, 6, 4});
    auto x = random_matrix(7, 5, rng);
    auto y = ffn.forward(x);
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
      auto oracle = forward_oracle(ffn, x.col(j));
      EXPECT_LT((y.col(j) - oracle).cwiseAbs().maxCoeff(), 1e-12);
    }
  }
}

TEST(Ffn, BatchedConcatMatchesPerSpan) {
  auto model = init_projection(3, 2, 4, 6, 5, 9);
  std::mt19937_64 rng(2);
  auto pooled = random_matrix(3, 4, rng);
  std::vector<std::size_t> lengths{1, 5, 3, 1};
  auto raw = concat_length_embeddings(pooled, lengths, model.lengths);
  auto out = model.ffn.forward(raw);
  for (int j = 0; j < 4; ++j) {
    PooledSpan p{Span{"s", 0, lengths[j]}, pooled.col(j)};
    auto r = represent_span(p, model.lengths, model.ffn);
    EXPECT_TRUE(r.raw.isApprox(raw.col(j)));
    EXPECT_LT((r.projected - out.col(j)).cwiseAbs().maxCoeff(), 1e-12);
  }
  std::vector<std::size_t> bad{1, 6, 1, 1};
  EXPECT_THROW(concat_length_embeddings(pooled, bad, model.lengths), InvalidArgument);
}

TEST(Ffn, BackwardZeroUpstream) {
  std::mt19937_64 rng(3);
  auto ffn = random_ffn(rng, {4, 5, 5, 3});
  FfnCache cache;
  ffn.forward(random_matrix(4, 6, rng), &cache);
  auto g = ffn.backward(cache, Eigen::MatrixXd::Zero(3, 6));
  for (const auto& w : g.weight) EXPECT_TRUE(w.isZero(0.0));
  for (const auto& b : g.bias) EXPECT_TRUE(b.isZero(0.0));
  EXPECT_TRUE(g.input.isZero(0.0));
}

TEST(Ffn, SingleLayerGradientIsOuterProduct) {
  std::mt19937_64 rng(4);
  auto ffn = random_ffn(rng, {5, 3});
  auto x = random_matrix(5, 1, rng);
  auto u = random_matrix(3, 1, rng);
  FfnCache cache;
  ffn.forward(x, &cache);
  auto g = ffn.backward(cache, u);
  EXPECT_LT((g.weight[0] - u * x.transpose()).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((g.bias[0] - u.col(0)).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_LT((g.input - ffn.layers()[0].weight.transpose() * u).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Ffn, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    auto ffn = random_ffn(rng, {4, 6, 5, 3});
    auto x = random_matrix(4, 3, rng);
    auto u = random_matrix(3, 3, rng);
    auto loss = [&] { return (ffn.forward(x).array() * u.array()).sum(); };
    FfnCache cache;
    ffn.forward(x, &cache);
    auto g = ffn.backward(cache, u);
    for (std::size_t l = 0; l < ffn.layers().size(); ++l) {
      auto& layer = ffn.layers()[l];
      for (Eigen::Index i = 0; i < layer.weight.size(); ++i) {
        const double n = epnet::testing::central_difference(layer.weight.data()[i], loss, 1e-6);
        EXPECT_LT(epnet::testing::relative_error(g.weight[l].data()[i], n), 1e-6);
      }
      for (Eigen::Index i = 0; i < layer.bias.size(); ++i) {
        const double n = epnet::testing::central_difference(layer.bias.data()[i], loss, 1e-6);
        EXPECT_LT(epnet::testing::relative_error(g.bias[l](i), n), 1e-6);
      }
    }
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double n = epnet::testing::central_difference(x.data()[i], loss, 1e-6);
      EXPECT_LT(epnet::testing::relative_error(g.input.data()[i], n), 1e-6);
    }
  }
}

TEST(Init, ShapesDeterminismAndScale) {
  auto m = init_projection(768, 25, 512, 512, 10, 11);
  EXPECT_EQ(m.lengths.dim(), 25u);
  EXPECT_EQ(m.lengths.max_length(), 10u);
  EXPECT_EQ(m.pooled_dim(), 768u);
  ASSERT_EQ(m.ffn.layers().size(), 3u);
  EXPECT_EQ(m.ffn.in_dim(), 793u);
  EXPECT_EQ(m.ffn.out_dim(), 512u);
  EXPECT_EQ(m.ffn.layers()[0].activation, Activation::kRelu);
  EXPECT_EQ(m.ffn.layers()[1].activation, Activation::kRelu);
  EXPECT_EQ(m.ffn.layers()[2].activation, Activation::kIdentity);
  for (const auto& l : m.ffn.layers()) {
    EXPECT_TRUE(l.bias.isZero(0.0));
    const double var = l.weight.squaredNorm() / static_cast<double>(l.weight.size());
    EXPECT_NEAR(var, 2.0 / static_cast<double>(l.in_dim()), 0.1 * 2.0 / static_cast<double>(l.in_dim()));
  }
  const double lsd = std::sqrt(m.lengths.rows().squaredNorm() / 250.0);
  EXPECT_NEAR(lsd, 0.02, 0.005);
  EXPECT_TRUE(m == init_projection(768, 25, 512, 512, 10, 11));
  EXPECT_FALSE(m == init_projection(768, 25, 512, 512, 10, 12));
}
