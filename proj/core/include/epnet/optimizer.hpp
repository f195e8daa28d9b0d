#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace epnet {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  bool operator==(const AdamWHyper&) const = default;
};

// First/second moment accumulators, one buffer per parameter tensor.
struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;
  AdamWHyper hyper;

  bool operator==(const OptimizerState&) const = default;
};

// Zeroed moments shaped like `params`.
OptimizerState make_optimizer_state(std::span<const std::span<double>> params);

// One AdamW step over every tensor:
//   p <- p * (1 - lr * wd)
//   m <- b1 m + (1 - b1) g;  v <- b2 v + (1 - b2) g^2
//   p <- p - lr * m_hat / (sqrt(v_hat) + eps)
// Throws InvalidArgument on shape mismatch and NumericError on a non-finite
// gradient (before touching any parameter).
void optimizer_step(std::span<const std::span<double>> params,
                    std::span<const std::span<const double>> grads, OptimizerState& state,
                    double lr, double weight_decay);

}  // namespace epnet
