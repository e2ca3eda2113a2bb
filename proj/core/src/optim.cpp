#include "dgrlab/optim.hpp"

#include <cmath>

namespace dgrlab::ad {

Adam::Adam(ParameterList parameters, AdamOptions options) : parameters_(std::move(parameters)) {
  if (!(options.learning_rate > 0.0)) throw std::invalid_argument("Adam: learning rate must be positive");
  state_.options = options;
  for (const auto& p : parameters_) {
    if (!p.tensor.requires_grad()) {
      throw std::invalid_argument("Adam: parameter '" + p.name + "' does not require a gradient");
    }
    state_.first_moment.emplace_back(p.tensor.numel(), 0.0);
    state_.second_moment.emplace_back(p.tensor.numel(), 0.0);
  }
}

void Adam::step() {
  // Validate everything first so a bad gradient leaves all parameters untouched.
  for (const auto& p : parameters_) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NonFiniteGradient("non-finite gradient in parameter '" + p.name + "'");
    }
  }
  ++state_.step;
  const auto& o = state_.options;
  const double t = static_cast<double>(state_.step);
  const double correction1 = 1.0 - std::pow(o.beta1, t);
  const double correction2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t k = 0; k < parameters_.size(); ++k) {
    auto& param = parameters_[k].tensor;
    if (!param.has_grad()) continue;
    const auto g = param.grad();
    auto w = param.mutable_data();
    auto& m = state_.first_moment[k];
    auto& v = state_.second_moment[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g[i];
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      w[i] -= o.learning_rate * m_hat / (std::sqrt(v_hat) + o.epsilon);
    }
  }
}

void Adam::set_learning_rate(double learning_rate) {
  if (!(learning_rate > 0.0)) throw std::invalid_argument("Adam: learning rate must be positive");
  state_.options.learning_rate = learning_rate;
}

void Adam::zero_grad() {
  for (auto& p : parameters_) p.tensor.zero_grad();
}

}  // namespace dgrlab::ad
