#include "lfsr/adam.hpp"

#include <cmath>

#include "lfsr/error.hpp"

namespace lfsr {

AdamState make_adam_state(const std::vector<NamedTensor>& params, AdamOptions options) {
  AdamState state;
  state.options = options;
  for (const auto& p : params) {
    state.m.emplace_back(p.tensor.shape());
    state.v.emplace_back(p.tensor.shape());
  }
  return state;
}

void adam_step(const std::vector<NamedTensor>& params, AdamState& state) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ShapeError("adam_step: state tracks " + std::to_string(state.m.size()) +
                     " parameters but " + std::to_string(params.size()) + " were given");
  }
  for (const auto& p : params) {
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw DivergenceError("non-finite gradient in parameter '" + p.name + "'");
    }
  }

  const auto& o = state.options;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    Tensor param = params[k].tensor;
    auto m = state.m[k].data();
    auto v = state.v[k].data();
    if (m.size() != param.numel()) {
      throw ShapeError("adam_step: moment shape mismatch for '" + params[k].name + "'");
    }
    const bool has_grad = param.has_grad();
    auto w = param.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double g = has_grad ? param.grad()[i] : 0.0;
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * g;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
    }
  }
}

Adam::Adam(std::vector<NamedTensor> params, AdamOptions options)
    : params_(std::move(params)), state_(make_adam_state(params_, options)) {}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

}  // namespace lfsr
