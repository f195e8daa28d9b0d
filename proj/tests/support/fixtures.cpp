#include "fixtures.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unistd.h>

namespace epnet::testing {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                              double scale) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = g(rng);
  return m;
}

double brute_force_euc(const Eigen::MatrixXd& v) {
  const Eigen::Index n = v.rows();
  double sum = 0.0;
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j)
      for (Eigen::Index k = 0; k < v.cols(); ++k) {
        const double d = v(i, k) - v(j, k);
        sum += d * d;
      }
  return sum / static_cast<double>(n * n);
}

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(numeric));
}

GradientCheck check_gradients(const PrototypeBank& bank, const ProjectionModel& model,
                              const Eigen::MatrixXd& pooled, const std::vector<std::size_t>& lengths,
                              const std::vector<std::size_t>& gold, double tau, Metric metric,
                              LossTerm term, double step) {
  PrototypeBank b = bank;
  ProjectionModel m = model;
  auto loss = [&]() -> double {
    switch (term) {
      case LossTerm::kDistance:
        return distance_loss(b, tau).loss;
      case LossTerm::kClassification:
        return evaluate_joint_loss(b, m, pooled, lengths, gold, tau, false, metric).classification;
      case LossTerm::kJoint:
        break;
    }
    return evaluate_joint_loss(b, m, pooled, lengths, gold, tau, true, metric).total;
  };

  ModelGradients analytic;
  if (term == LossTerm::kDistance) {
    // L_d touches only the prototypes; the other tensors get zero gradients.
    analytic = evaluate_joint_loss(b, m, pooled, lengths, gold, tau, false, metric).gradients;
    analytic.prototypes = distance_loss_gradient(b, tau);
    analytic.lengths.setZero();
    for (auto& w : analytic.ffn.weight) w.setZero();
    for (auto& v : analytic.ffn.bias) v.setZero();
  } else {
    analytic = evaluate_joint_loss(b, m, pooled, lengths, gold, tau, term == LossTerm::kJoint, metric)
                   .gradients;
  }

  const auto params = parameter_views(b, m, true);
  const auto grads = gradient_views(analytic, true);
  GradientCheck out;
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size()) throw std::logic_error("gradient shape mismatch");
    for (std::size_t i = 0; i < params[t].size(); ++i) {
      const double numeric = central_difference(params[t][i], loss, step);
      out.max_error = std::max(out.max_error, relative_error(grads[t][i], numeric));
      ++out.coordinates;
    }
  }
  return out;
}

GradientProblem random_gradient_problem(std::size_t slots, std::size_t d1, std::size_t d2,
                                        std::size_t d3, std::size_t hidden, std::size_t batch,
                                        std::size_t max_length, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  GradientProblem p;
  p.bank = init_random(d1, seed, slots, 0.5);
  std::uniform_int_distribution<std::size_t> n_types_dist(1, slots - 1);
  const std::size_t n_types = n_types_dist(rng);
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n_types; ++i) names.push_back("t" + std::to_string(100 + i));
  assign_for_train(p.bank, TypeSystem(names));

  p.model = init_projection(d2, d3, d1, hidden, max_length, seed ^ 0x5eedULL);
  for (auto& layer : p.model.ffn.layers())
    layer.bias = random_matrix(static_cast<Eigen::Index>(layer.out_dim()), 1, rng, 0.3);
  p.model.lengths.rows() = random_matrix(static_cast<Eigen::Index>(max_length),
                                         static_cast<Eigen::Index>(d3), rng, 0.5);

  p.pooled = random_matrix(static_cast<Eigen::Index>(d2), static_cast<Eigen::Index>(batch), rng);
  std::uniform_int_distribution<std::size_t> len(1, max_length), slot(0, n_types);
  for (std::size_t j = 0; j < batch; ++j) {
    p.lengths.push_back(len(rng));
    p.gold.push_back(slot(rng));
  }
  std::uniform_real_distribution<double> tau(0.5, 4.0);
  p.tau = tau(rng);
  return p;
}

Checkpoint random_checkpoint(std::uint64_t seed, Phase phase) {
  std::mt19937_64 rng(seed);
  TrainConfig cfg;
  cfg.prototype_dim = 4;
  cfg.length_dim = 2;
  cfg.hidden_dim = 3;
  cfg.epsilon = 3;
  cfg.slots = 6;
  cfg.seed = seed;
  cfg.tau = 2.5;
  cfg.epochs = 7;
  Checkpoint c = initial_checkpoint(TypeSystem({"A", "B"}), 5, cfg);
  c.bank.vectors() = random_matrix(6, 4, rng);
  for (auto& layer : c.projection.ffn.layers()) {
    layer.weight = random_matrix(layer.weight.rows(), layer.weight.cols(), rng);
    layer.bias = random_matrix(layer.bias.rows(), 1, rng);
  }
  c.projection.lengths.rows() = random_matrix(3, 2, rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (auto& m : c.optimizer.first_moment)
    for (auto& x : m) x = u(rng) - 0.5;
  for (auto& m : c.optimizer.second_moment)
    for (auto& x : m) x = u(rng);
  c.optimizer.step = 17;
  c.phase = phase;
  if (phase == Phase::kAdapted) {
    assign_for_adapt(c.bank, TypeSystem({"B", "C", "D"}));
    AdaptConfig a;
    a.max_steps = 9;
    a.tau = 1.25;
    a.seed = seed + 1;
    c.adapt_config = a;
  }
  return c;
}

Dataset weather_dataset() {
  std::vector<Sentence> s{{"s1", {"It", "might", "rain", "tonight"}}};
  std::vector<std::vector<Entity>> e{{{2, 3, "Weather"}, {3, 4, "Time"}}};
  return Dataset(std::move(s), std::move(e), TypeSystem::from_unordered({"Weather", "Time"}));
}

TempDir::TempDir() {
  static std::uint64_t counter = 0;
  std::random_device rd;
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto candidate = std::filesystem::temp_directory_path() /
                     ("epnet-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) +
                      "-" + std::to_string(rd()));
    if (std::filesystem::create_directory(candidate)) {
      path_ = candidate;
      return;
    }
  }
  throw std::runtime_error("cannot create a temporary directory");
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << bytes;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

}  // namespace epnet::testing
