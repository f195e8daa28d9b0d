#include "epnet/optimizer.hpp"

#include <cmath>
#include <string>

#include "epnet/error.hpp"

namespace epnet {

OptimizerState make_optimizer_state(std::span<const std::span<double>> params) {
  OptimizerState s;
  for (const auto& p : params) {
    s.first_moment.emplace_back(p.size(), 0.0);
    s.second_moment.emplace_back(p.size(), 0.0);
  }
  return s;
}

void optimizer_step(std::span<const std::span<double>> params,
                    std::span<const std::span<const double>> grads, OptimizerState& state,
                    double lr, double weight_decay) {
  if (params.size() != grads.size() || params.size() != state.first_moment.size() ||
      params.size() != state.second_moment.size())
    throw InvalidArgument("optimizer: parameter, gradient and moment lists differ in length");
  for (std::size_t t = 0; t < params.size(); ++t) {
    if (params[t].size() != grads[t].size() || params[t].size() != state.first_moment[t].size() ||
        params[t].size() != state.second_moment[t].size())
      throw InvalidArgument("optimizer: shape mismatch in tensor " + std::to_string(t));
    for (double g : grads[t])
      if (!std::isfinite(g))
        throw NumericError("optimizer: non-finite gradient in tensor " + std::to_string(t));
  }

  const auto& h = state.hyper;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(h.beta1, t);
  const double correction2 = 1.0 - std::pow(h.beta2, t);
  const double decay = 1.0 - lr * weight_decay;

  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k];
    auto g = grads[k];
    auto& m = state.first_moment[k];
    auto& v = state.second_moment[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] *= decay;
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= lr * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
  }
}

}  // namespace epnet
