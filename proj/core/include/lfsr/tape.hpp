#pragma once

#include <functional>
#include <string_view>
#include <vector>

#include "lfsr/tensor.hpp"

namespace lfsr {

// Records differentiable operations in construction order so that backward()
// can replay them in exact reverse order.
//
// A tape is single-threaded. Leaves (tensors not produced on this tape)
// accumulate gradients across backward calls; intermediate gradients are
// reset at the start of every backward pass.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  struct Node {
    std::string_view op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  Tape() = default;
  explicit Tape(bool recording) : recording_(recording) {}

  static Tape no_grad() { return Tape(false); }

  bool recording() const { return recording_; }

  // True when an op over `inputs` must be recorded.
  bool wants(std::initializer_list<const Tensor*> inputs) const;

  void record(std::string_view op, std::vector<Tensor> inputs, Tensor output, BackwardFn fn);

  std::size_t size() const { return nodes_.size(); }
  const std::vector<Node>& nodes() const { return nodes_; }

  // Populates grads of every requires_grad tensor reachable from `loss`.
  // Throws ShapeError when loss is not a scalar or was not produced here.
  void backward(Tensor loss);

  void clear() { nodes_.clear(); }

 private:
  bool recording_ = true;
  std::vector<Node> nodes_;
};

}  // namespace lfsr
