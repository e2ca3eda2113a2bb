#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgrlab/tensor.hpp"

namespace dgrlab::ad {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

using ParameterList = std::vector<NamedTensor>;

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct OptimizerState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::int64_t step = 0;
  AdamOptions options;
};

class NonFiniteGradient : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Adam with bias correction. Parameters without an accumulated gradient
// are skipped for the step.
class Adam {
 public:
  Adam(ParameterList parameters, AdamOptions options = {});

  void step();
  void zero_grad();
  void set_learning_rate(double learning_rate);

  const ParameterList& parameters() const { return parameters_; }
  const OptimizerState& state() const { return state_; }

 private:
  ParameterList parameters_;
  OptimizerState state_;
};

}  // namespace dgrlab::ad
