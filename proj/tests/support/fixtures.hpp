#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "epnet/checkpoint.hpp"
#include "epnet/trainer.hpp"

namespace epnet::testing {

Eigen::MatrixXd random_matrix(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng,
                              double scale = 1.0);

// Mean squared distance by an explicit double loop over ordered pairs.
double brute_force_euc(const Eigen::MatrixXd& vectors);

// |analytic - numeric| / max(1, |numeric|)
double relative_error(double analytic, double numeric);

// Central difference of f() with respect to x, restoring x afterwards.
template <class F>
double central_difference(double& x, F&& f, double step = 1e-5) {
  const double saved = x;
  x = saved + step;
  const double up = f();
  x = saved - step;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * step);
}

enum class LossTerm { kDistance, kClassification, kJoint };

struct GradientCheck {
  double max_error = 0.0;  // worst relative_error over every checked coordinate
  std::size_t coordinates = 0;
};

// Compares the analytic gradients of the chosen loss against central
// differences for every prototype, length-embedding and FFN coordinate.
GradientCheck check_gradients(const PrototypeBank& bank, const ProjectionModel& model,
                              const Eigen::MatrixXd& pooled, const std::vector<std::size_t>& lengths,
                              const std::vector<std::size_t>& gold, double tau, Metric metric,
                              LossTerm term, double step = 1e-5);

// Random gradient-check configuration.
struct GradientProblem {
  PrototypeBank bank;
  ProjectionModel model;
  Eigen::MatrixXd pooled;
  std::vector<std::size_t> lengths;
  std::vector<std::size_t> gold;
  double tau = 2.0;
};

GradientProblem random_gradient_problem(std::size_t slots, std::size_t d1, std::size_t d2,
                                        std::size_t d3, std::size_t hidden, std::size_t batch,
                                        std::size_t max_length, std::uint64_t seed);

// Small checkpoint with every field populated from `seed`.
Checkpoint random_checkpoint(std::uint64_t seed, Phase phase = Phase::kAdapted);

// The two-entity example sentence "It might rain tonight".
Dataset weather_dataset();

class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

}  // namespace epnet::testing
