#include "lfsr/network.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "lfsr/error.hpp"
#include "lfsr/tensor_io.hpp"

namespace lfsr {
namespace {

struct KindName {
  LayerKind kind;
  const char* name;
};

constexpr KindName kKindNames[] = {
    {LayerKind::Conv, "conv"},
    {LayerKind::BatchNorm, "batchnorm"},
    {LayerKind::PReLU, "prelu"},
    {LayerKind::ReLU, "relu"},
    {LayerKind::LeakyReLU, "leaky_relu"},
    {LayerKind::Sigmoid, "sigmoid"},
    {LayerKind::MaxPool, "maxpool"},
    {LayerKind::PixelShuffle, "pixel_shuffle"},
    {LayerKind::GlobalAvgPool, "global_avg_pool"},
    {LayerKind::Flatten, "flatten"},
    {LayerKind::Dense, "dense"},
    {LayerKind::SaveSkip, "save_skip"},
    {LayerKind::AddSkip, "add_skip"},
    {LayerKind::RoiHead, "roi_head"},
};

LayerKind kind_from_name(const std::string& name) {
  for (const auto& k : kKindNames)
    if (name == k.name) return k.kind;
  throw DataError("unknown layer kind '" + name + "'");
}

const Tensor& param(const NetworkSpec& net, const std::string& name) {
  auto it = net.params.find(name);
  if (it == net.params.end()) throw ShapeError(net.name + ": missing parameter '" + name + "'");
  return it->second;
}

Tensor& buffer(NetworkSpec& net, const std::string& name) {
  auto it = net.buffers.find(name);
  if (it == net.buffers.end()) throw ShapeError(net.name + ": missing buffer '" + name + "'");
  return it->second;
}

void expect_shape(const NetworkSpec& net, const std::string& name, const Shape& shape) {
  const Tensor& t = param(net, name);
  if (t.shape() != shape) {
    throw ShapeError(net.name + ": parameter '" + name + "' has shape " + shape_str(t.shape()) +
                     ", expected " + shape_str(shape));
  }
}

}  // namespace

const char* layer_kind_name(LayerKind kind) {
  for (const auto& k : kKindNames)
    if (k.kind == kind) return k.name;
  return "?";
}

std::vector<NamedTensor> NetworkSpec::trainable() const {
  std::vector<NamedTensor> out;
  if (frozen) return out;
  for (const auto& [name, t] : params) out.push_back({name, t});
  return out;
}

std::size_t NetworkSpec::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [name, t] : params) n += t.numel();
  return n;
}

void NetworkSpec::zero_grad() {
  for (auto& [name, t] : params) t.zero_grad();
}

void NetworkSpec::set_frozen(bool on) {
  frozen = on;
  for (auto& [name, t] : params) {
    t.set_requires_grad(!on);
    if (on) t.drop_grad();
  }
}

NetworkSpec NetworkSpec::clone() const {
  NetworkSpec out = *this;
  for (auto& [name, t] : out.params) {
    const bool rg = t.requires_grad();
    t = t.clone();
    t.set_requires_grad(rg);
  }
  for (auto& [name, t] : out.buffers) t = t.clone();
  return out;
}

void NetworkSpec::validate() const {
  std::size_t c = input_channels;
  std::map<std::size_t, std::size_t> slots;
  auto mismatch = [&](const Layer& l, std::size_t expected) {
    throw ShapeError(name + ": layer " + l.name + " (" + layer_kind_name(l.kind) + ") declares " +
                     std::to_string(expected) + " input channels but receives " + std::to_string(c));
  };
  for (const auto& l : layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        if (l.in_channels != c) mismatch(l, l.in_channels);
        expect_shape(*this, l.name + ".weight", {l.out_channels, l.in_channels, l.kernel, l.kernel});
        expect_shape(*this, l.name + ".bias", {l.out_channels});
        c = l.out_channels;
        break;
      case LayerKind::BatchNorm:
        if (l.in_channels != c) mismatch(l, l.in_channels);
        expect_shape(*this, l.name + ".gamma", {c});
        expect_shape(*this, l.name + ".beta", {c});
        if (!buffers.count(l.name + ".running_mean") || !buffers.count(l.name + ".running_var")) {
          throw ShapeError(name + ": missing running statistics for " + l.name);
        }
        break;
      case LayerKind::PReLU:
        if (l.in_channels != c) mismatch(l, l.in_channels);
        expect_shape(*this, l.name + ".alpha", {c});
        break;
      case LayerKind::PixelShuffle:
        if (l.factor < 1 || c % (l.factor * l.factor) != 0) mismatch(l, l.in_channels);
        c /= l.factor * l.factor;
        break;
      case LayerKind::Flatten:
        if (l.in_channels != c) mismatch(l, l.in_channels);
        c = l.out_channels;
        break;
      case LayerKind::Dense:
        if (l.in_channels != c) mismatch(l, l.in_channels);
        expect_shape(*this, l.name + ".weight", {l.out_channels, l.in_channels});
        expect_shape(*this, l.name + ".bias", {l.out_channels});
        c = l.out_channels;
        break;
      case LayerKind::SaveSkip:
        slots[l.slot] = c;
        break;
      case LayerKind::AddSkip:
        if (!slots.count(l.slot)) throw ShapeError(name + ": add_skip before save_skip in slot " + std::to_string(l.slot));
        if (slots[l.slot] != c) mismatch(l, slots[l.slot]);
        break;
      case LayerKind::RoiHead:
        if (l.in_channels != c) mismatch(l, l.in_channels);
        expect_shape(*this, l.name + ".heat_weight", {1, c, 1, 1});
        expect_shape(*this, l.name + ".heat_bias", {1});
        expect_shape(*this, l.name + ".size_weight", {2, c});
        expect_shape(*this, l.name + ".size_bias", {2});
        c = 4;
        break;
      default:
        break;
    }
  }
}

Tensor forward(NetworkSpec& net, Tape& tape, const Tensor& input) {
  if (input.rank() != 4 || input.dim(1) != net.input_channels) {
    throw ShapeError(net.name + ": expected [N," + std::to_string(net.input_channels) +
                     ",H,W] input, got " + shape_str(input.shape()));
  }
  if (net.input_size != 0 && (input.dim(2) != net.input_size || input.dim(3) != net.input_size)) {
    throw ShapeError(net.name + ": built for " + std::to_string(net.input_size) + "x" +
                     std::to_string(net.input_size) + " inputs, got " + shape_str(input.shape()));
  }
  const ops::BatchNormOptions bn{net.mode == Mode::Train ? ops::NormMode::Train : ops::NormMode::Eval,
                                 net.bn_momentum, net.bn_eps};
  Tensor x = input;
  std::map<std::size_t, Tensor> skips;
  for (const auto& l : net.layers) {
    switch (l.kind) {
      case LayerKind::Conv:
        x = ops::conv2d(tape, x, param(net, l.name + ".weight"), param(net, l.name + ".bias"), l.stride,
                        l.padding);
        break;
      case LayerKind::BatchNorm:
        x = ops::batchnorm2d(tape, x, param(net, l.name + ".gamma"), param(net, l.name + ".beta"),
                             buffer(net, l.name + ".running_mean"), buffer(net, l.name + ".running_var"),
                             bn);
        break;
      case LayerKind::PReLU: x = ops::prelu(tape, x, param(net, l.name + ".alpha")); break;
      case LayerKind::ReLU: x = ops::relu(tape, x); break;
      case LayerKind::LeakyReLU: x = ops::leaky_relu(tape, x, l.slope); break;
      case LayerKind::Sigmoid: x = ops::sigmoid(tape, x); break;
      case LayerKind::MaxPool: x = ops::maxpool2d(tape, x, l.factor, l.factor); break;
      case LayerKind::PixelShuffle: x = ops::pixel_shuffle(tape, x, l.factor); break;
      case LayerKind::GlobalAvgPool: x = ops::global_avg_pool(tape, x); break;
      case LayerKind::Flatten:
        x = ops::flatten(tape, x);
        if (x.dim(1) != l.out_channels) {
          throw ShapeError(net.name + ": flatten produced " + std::to_string(x.dim(1)) +
                           " features, expected " + std::to_string(l.out_channels));
        }
        break;
      case LayerKind::Dense:
        x = ops::dense(tape, x, param(net, l.name + ".weight"), param(net, l.name + ".bias"));
        break;
      case LayerKind::SaveSkip: skips[l.slot] = x; break;
      case LayerKind::AddSkip: x = ops::add(tape, x, skips.at(l.slot)); break;
      case LayerKind::RoiHead: {
        const Tensor heat = ops::conv2d(tape, x, param(net, l.name + ".heat_weight"),
                                        param(net, l.name + ".heat_bias"), 1, ops::Padding::Same);
        const Tensor centre = ops::spatial_softargmax(tape, heat);
        const Tensor pooled = ops::global_avg_pool(tape, x);
        const Tensor extent = ops::sigmoid(
            tape, ops::dense(tape, pooled, param(net, l.name + ".size_weight"),
                             param(net, l.name + ".size_bias")));
        x = ops::concat_cols(tape, centre, extent);
        break;
      }
    }
  }
  return x;
}

Tensor infer(NetworkSpec& net, const Tensor& input) {
  const Mode saved = net.mode;
  net.mode = Mode::Eval;
  Tape tape = Tape::no_grad();
  Tensor out = forward(net, tape, input);
  net.mode = saved;
  return out;
}

std::string layer_manifest(const NetworkSpec& net) {
  std::ostringstream os;
  os << "network " << net.name << '\n';
  os << "input_channels " << net.input_channels << '\n';
  os << "input_size " << net.input_size << '\n';
  os << "mode " << (net.mode == Mode::Train ? "train" : "eval") << '\n';
  os << "frozen " << (net.frozen ? 1 : 0) << '\n';
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g %.17g", net.bn_momentum, net.bn_eps);
  os << "batchnorm " << buf << '\n';
  for (const auto& l : net.layers) {
    std::snprintf(buf, sizeof buf, "%.17g", l.slope);
    os << "layer " << layer_kind_name(l.kind) << " name=" << l.name << " in=" << l.in_channels
       << " out=" << l.out_channels << " kernel=" << l.kernel << " stride=" << l.stride
       << " pad=" << (l.padding == ops::Padding::Same ? "same" : "valid") << " factor=" << l.factor
       << " slope=" << buf << " slot=" << l.slot << '\n';
  }
  return os.str();
}

NetworkSpec parse_layer_manifest(const std::string& text) {
  NetworkSpec net;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    auto fail = [&]() -> void {
      throw DataError("layer manifest line " + std::to_string(line_no) + " is malformed: " + line);
    };
    if (key == "network") {
      if (!(ls >> net.name)) fail();
    } else if (key == "input_channels") {
      if (!(ls >> net.input_channels)) fail();
    } else if (key == "input_size") {
      if (!(ls >> net.input_size)) fail();
    } else if (key == "mode") {
      std::string m;
      if (!(ls >> m)) fail();
      net.mode = m == "eval" ? Mode::Eval : Mode::Train;
    } else if (key == "frozen") {
      int f = 0;
      if (!(ls >> f)) fail();
      net.frozen = f != 0;
    } else if (key == "batchnorm") {
      if (!(ls >> net.bn_momentum >> net.bn_eps)) fail();
    } else if (key == "layer") {
      std::string kind;
      if (!(ls >> kind)) fail();
      Layer l;
      l.kind = kind_from_name(kind);
      std::string kv;
      while (ls >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) fail();
        const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
        try {
          if (k == "name") l.name = v;
          else if (k == "in") l.in_channels = std::stoul(v);
          else if (k == "out") l.out_channels = std::stoul(v);
          else if (k == "kernel") l.kernel = std::stoul(v);
          else if (k == "stride") l.stride = std::stoul(v);
          else if (k == "pad") l.padding = v == "valid" ? ops::Padding::Valid : ops::Padding::Same;
          else if (k == "factor") l.factor = std::stoul(v);
          else if (k == "slope") l.slope = std::stod(v);
          else if (k == "slot") l.slot = std::stoul(v);
          else fail();
        } catch (const std::logic_error&) {
          fail();
        }
      }
      net.layers.push_back(l);
    } else {
      fail();
    }
  }
  return net;
}

void save_network(const NetworkSpec& net, const std::filesystem::path& prefix) {
  std::vector<NamedTensor> tensors;
  for (const auto& [name, t] : net.params) tensors.push_back({"param/" + name, t});
  for (const auto& [name, t] : net.buffers) tensors.push_back({"buffer/" + name, t});
  auto weights = prefix;
  weights += ".lftb";
  save_tensors(weights, tensors);
  auto manifest = prefix;
  manifest += ".layers";
  std::ofstream out(manifest, std::ios::trunc);
  if (!out) throw DataError("cannot write " + manifest.string());
  out << layer_manifest(net);
}

NetworkSpec load_network(const std::filesystem::path& prefix) {
  auto manifest = prefix;
  manifest += ".layers";
  std::ifstream in(manifest);
  if (!in) throw DataError("cannot open " + manifest.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  NetworkSpec net = parse_layer_manifest(ss.str());
  auto weights = prefix;
  weights += ".lftb";
  for (auto& [name, t] : load_tensors(weights)) {
    if (name.rfind("param/", 0) == 0) {
      net.params[name.substr(6)] = t;
    } else if (name.rfind("buffer/", 0) == 0) {
      net.buffers[name.substr(7)] = t;
    } else {
      throw DataError(weights.string() + ": unexpected tensor '" + name + "'");
    }
  }
  net.set_frozen(net.frozen);
  net.validate();
  return net;
}

void load_weights(NetworkSpec& net, const std::filesystem::path& path) {
  auto tensors = load_tensor_map(path);
  for (auto& [name, t] : net.params) {
    auto it = tensors.find(name);
    if (it == tensors.end()) it = tensors.find("param/" + name);
    if (it == tensors.end()) throw DataError(path.string() + ": no weights for '" + name + "'");
    if (it->second.shape() != t.shape()) {
      throw DataError(path.string() + ": '" + name + "' has shape " + shape_str(it->second.shape()) +
                      ", network expects " + shape_str(t.shape()));
    }
    std::copy(it->second.data().begin(), it->second.data().end(), t.data().begin());
  }
}

NetworkBuilder::NetworkBuilder(std::string name, std::size_t input_channels, std::uint64_t seed,
                               std::size_t input_size)
    : channels_(input_channels), spatial_(input_size), rng_(Rng(seed).split(name)) {
  net_.name = std::move(name);
  net_.input_channels = input_channels;
  net_.input_size = input_size;
}

std::string NetworkBuilder::next_name(const char* kind) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "l%03zu_%s", net_.layers.size(), kind);
  return buf;
}

Tensor NetworkBuilder::he_normal(Shape shape, std::size_t fan_in) {
  Tensor t(std::move(shape));
  const double sd = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (double& v : t.data()) v = rng_.normal() * sd;
  return t;
}

NetworkBuilder& NetworkBuilder::conv(std::size_t out, std::size_t kernel, std::size_t stride,
                                     ops::Padding pad) {
  Layer l{LayerKind::Conv, next_name("conv"), channels_, out, kernel, stride, pad};
  net_.params[l.name + ".weight"] = he_normal({out, channels_, kernel, kernel}, channels_ * kernel * kernel);
  net_.params[l.name + ".bias"] = Tensor({out});
  if (spatial_) {
    const std::size_t padded = spatial_ + (pad == ops::Padding::Same ? 2 * (kernel / 2) : 0);
    spatial_ = (padded - kernel) / stride + 1;
  }
  channels_ = out;
  net_.layers.push_back(l);
  return *this;
}

NetworkBuilder& NetworkBuilder::batchnorm() {
  Layer l{LayerKind::BatchNorm, next_name("bn"), channels_, channels_};
  net_.params[l.name + ".gamma"] = Tensor({channels_}, 1.0);
  net_.params[l.name + ".beta"] = Tensor({channels_});
  net_.buffers[l.name + ".running_mean"] = Tensor({channels_});
  net_.buffers[l.name + ".running_var"] = Tensor({channels_}, 1.0);
  net_.layers.push_back(l);
  return *this;
}

NetworkBuilder& NetworkBuilder::prelu(double init) {
  Layer l{LayerKind::PReLU, next_name("prelu"), channels_, channels_};
  net_.params[l.name + ".alpha"] = Tensor({channels_}, init);
  net_.layers.push_back(l);
  return *this;
}

NetworkBuilder& NetworkBuilder::relu() {
  net_.layers.push_back(Layer{LayerKind::ReLU, next_name("relu"), channels_, channels_});
  return *this;
}

NetworkBuilder& NetworkBuilder::leaky_relu(double slope) {
  Layer l{LayerKind::LeakyReLU, next_name("lrelu"), channels_, channels_};
  l.slope = slope;
  net_.layers.push_back(l);
  return *this;
}

NetworkBuilder& NetworkBuilder::sigmoid() {
  net_.layers.push_back(Layer{LayerKind::Sigmoid, next_name("sigmoid"), channels_, channels_});
  return *this;
}

NetworkBuilder& NetworkBuilder::maxpool(std::size_t kernel) {
  Layer l{LayerKind::MaxPool, next_name("maxpool"), channels_, channels_};
  l.factor = kernel;
  if (spatial_) spatial_ /= kernel;
  net_.layers.push_back(l);
  return *this;
}

NetworkBuilder& NetworkBuilder::pixel_shuffle(std::size_t factor) {
  if (channels_ % (factor * factor) != 0) {
    throw ShapeError(net_.name + ": pixel_shuffle(" + std::to_string(factor) + ") on " +
                     std::to_string(channels_) + " channels");
  }
  Layer l{LayerKind::PixelShuffle, next_name("shuffle"), channels_, channels_ / (factor * factor)};
  l.factor = factor;
  channels_ /= factor * factor;
  if (spatial_) spatial_ *= factor;
  net_.layers.push_back(l);
  return *this;
}

NetworkBuilder& NetworkBuilder::global_avg_pool() {
  net_.layers.push_back(Layer{LayerKind::GlobalAvgPool, next_name("gap"), channels_, channels_});
  spatial_ = 0;
  return *this;
}

NetworkBuilder& NetworkBuilder::flatten() {
  if (!spatial_) throw ShapeError(net_.name + ": flatten needs a known spatial size");
  const std::size_t features = channels_ * spatial_ * spatial_;
  net_.layers.push_back(Layer{LayerKind::Flatten, next_name("flatten"), channels_, features});
  channels_ = features;
  spatial_ = 0;
  return *this;
}

NetworkBuilder& NetworkBuilder::dense(std::size_t out) {
  Layer l{LayerKind::Dense, next_name("dense"), channels_, out};
  net_.params[l.name + ".weight"] = he_normal({out, channels_}, channels_);
  net_.params[l.name + ".bias"] = Tensor({out});
  channels_ = out;
  net_.layers.push_back(l);
  return *this;
}

NetworkBuilder& NetworkBuilder::save_skip(std::size_t slot) {
  Layer l{LayerKind::SaveSkip, next_name("save"), channels_, channels_};
  l.slot = slot;
  skip_channels_[slot] = channels_;
  net_.layers.push_back(l);
  return *this;
}

NetworkBuilder& NetworkBuilder::add_skip(std::size_t slot) {
  Layer l{LayerKind::AddSkip, next_name("add"), channels_, channels_};
  l.slot = slot;
  net_.layers.push_back(l);
  return *this;
}

NetworkBuilder& NetworkBuilder::roi_head() {
  Layer l{LayerKind::RoiHead, next_name("roi"), channels_, 4};
  net_.params[l.name + ".heat_weight"] = he_normal({1, channels_, 1, 1}, channels_);
  net_.params[l.name + ".heat_bias"] = Tensor({1});
  net_.params[l.name + ".size_weight"] = he_normal({2, channels_}, channels_);
  net_.params[l.name + ".size_bias"] = Tensor({2});
  channels_ = 4;
  spatial_ = 0;
  net_.layers.push_back(l);
  return *this;
}

NetworkSpec NetworkBuilder::build() {
  NetworkSpec out = net_;
  out.set_frozen(false);
  out.validate();
  return out;
}

}  // namespace lfsr
