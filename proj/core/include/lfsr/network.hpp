#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lfsr/adam.hpp"
#include "lfsr/ops.hpp"
#include "lfsr/rng.hpp"
#include "lfsr/tape.hpp"
#include "lfsr/tensor.hpp"

namespace lfsr {

enum class LayerKind {
  Conv,
  BatchNorm,
  PReLU,
  ReLU,
  LeakyReLU,
  Sigmoid,
  MaxPool,
  PixelShuffle,
  GlobalAvgPool,
  Flatten,
  Dense,
  // Stores the current activation in a numbered slot.
  SaveSkip,
  // Adds the activation stored in a slot.
  AddSkip,
  // Lesion box head: soft-argmax centre plus pooled (h, w) -> [N,4].
  RoiHead,
};

const char* layer_kind_name(LayerKind kind);

struct Layer {
  LayerKind kind = LayerKind::ReLU;
  std::string name;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t stride = 1;
  ops::Padding padding = ops::Padding::Same;
  std::size_t factor = 0;
  double slope = 0.2;
  std::size_t slot = 0;
};

enum class Mode { Train, Eval };

// Ordered layer graph with named parameters (trainable) and buffers
// (batch-norm running statistics).
class NetworkSpec {
 public:
  std::string name;
  std::vector<Layer> layers;
  std::size_t input_channels = 1;
  // 0 accepts any spatial size; otherwise inputs must be input_size^2.
  std::size_t input_size = 0;
  std::map<std::string, Tensor> params;
  std::map<std::string, Tensor> buffers;
  Mode mode = Mode::Train;
  bool frozen = false;
  double bn_momentum = 0.9;
  double bn_eps = 1e-5;

  // Trainable parameters in name order; empty for frozen networks.
  std::vector<NamedTensor> trainable() const;
  std::size_t parameter_count() const;
  void zero_grad();
  void set_frozen(bool on);

  // Deep copy of parameters and buffers.
  NetworkSpec clone() const;

  // Channel bookkeeping and parameter presence. Throws ShapeError.
  void validate() const;
};

Tensor forward(NetworkSpec& net, Tape& tape, const Tensor& input);

// Eval-mode forward without recording.
Tensor infer(NetworkSpec& net, const Tensor& input);

// Text manifest: header lines then one "kind key=value ..." line per layer.
std::string layer_manifest(const NetworkSpec& net);
NetworkSpec parse_layer_manifest(const std::string& text);

// Writes <prefix>.lftb (params as "param/<name>", buffers as "buffer/<name>")
// and <prefix>.layers.
void save_network(const NetworkSpec& net, const std::filesystem::path& prefix);
NetworkSpec load_network(const std::filesystem::path& prefix);

// Replaces parameter values from a tensor container, e.g. externally trained
// perceptual weights. Names and shapes must match.
void load_weights(NetworkSpec& net, const std::filesystem::path& path);

// Incremental builder with seeded He (fan-in) initialization.
class NetworkBuilder {
 public:
  // `input_size` (0 = unknown) lets the builder track the spatial size,
  // which flatten() needs.
  NetworkBuilder(std::string name, std::size_t input_channels, std::uint64_t seed,
                 std::size_t input_size = 0);

  std::size_t channels() const { return channels_; }
  std::size_t spatial() const { return spatial_; }

  NetworkBuilder& conv(std::size_t out, std::size_t kernel, std::size_t stride = 1,
                       ops::Padding pad = ops::Padding::Same);
  NetworkBuilder& batchnorm();
  NetworkBuilder& prelu(double init = 0.25);
  NetworkBuilder& relu();
  NetworkBuilder& leaky_relu(double slope = 0.2);
  NetworkBuilder& sigmoid();
  NetworkBuilder& maxpool(std::size_t kernel = 2);
  NetworkBuilder& pixel_shuffle(std::size_t factor);
  NetworkBuilder& global_avg_pool();
  NetworkBuilder& flatten();
  NetworkBuilder& dense(std::size_t out);
  NetworkBuilder& save_skip(std::size_t slot);
  NetworkBuilder& add_skip(std::size_t slot);
  NetworkBuilder& roi_head();

  NetworkSpec build();

 private:
  std::string next_name(const char* kind);
  Tensor he_normal(Shape shape, std::size_t fan_in);

  NetworkSpec net_;
  std::size_t channels_;
  std::size_t spatial_;
  Rng rng_;
  std::map<std::size_t, std::size_t> skip_channels_;
};

}  // namespace lfsr
