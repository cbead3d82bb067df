#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lfsr/tensor.hpp"

namespace lfsr {

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Moment estimates for a fixed, ordered parameter list.
struct AdamState {
  AdamOptions options;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::int64_t t = 0;
};

AdamState make_adam_state(const std::vector<NamedTensor>& params, AdamOptions options = {});

// One bias-corrected Adam update using each parameter's accumulated grad.
// Parameters without a grad buffer are treated as having zero gradient.
// Throws DivergenceError naming the first parameter with a non-finite grad;
// no parameter is modified in that case.
void adam_step(const std::vector<NamedTensor>& params, AdamState& state);

class Adam {
 public:
  Adam() = default;
  Adam(std::vector<NamedTensor> params, AdamOptions options = {});

  void step() { adam_step(params_, state_); }
  void zero_grad();

  const std::vector<NamedTensor>& params() const { return params_; }
  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }

 private:
  std::vector<NamedTensor> params_;
  AdamState state_;
};

}  // namespace lfsr
