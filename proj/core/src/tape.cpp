#include "lfsr/tape.hpp"

#include <algorithm>

#include "lfsr/error.hpp"

namespace lfsr {

bool Tape::wants(std::initializer_list<const Tensor*> inputs) const {
  if (!recording_) return false;
  return std::any_of(inputs.begin(), inputs.end(),
                     [](const Tensor* t) { return t && t->defined() && t->requires_grad(); });
}

void Tape::record(std::string_view op, std::vector<Tensor> inputs, Tensor output, BackwardFn fn) {
  output.set_requires_grad(true);
  nodes_.push_back(Node{op, std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::backward(Tensor loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw ShapeError("backward() needs a scalar loss, got " +
                     (loss.defined() ? shape_str(loss.shape()) : std::string("undefined")));
  }
  auto producer = std::find_if(nodes_.rbegin(), nodes_.rend(),
                               [&](const Node& n) { return n.output.same_storage(loss); });
  if (producer == nodes_.rend()) throw ShapeError("backward(): loss was not produced on this tape");

  // Nodes recorded after the loss cannot contribute to it.
  const auto last = static_cast<std::size_t>(std::distance(producer, nodes_.rend()));
  for (std::size_t i = 0; i < last; ++i) {
    nodes_[i].output.grad();
    nodes_[i].output.zero_grad();
  }
  loss.grad()[0] = 1.0;

  for (std::size_t i = last; i-- > 0;) nodes_[i].backward();
}

}  // namespace lfsr
