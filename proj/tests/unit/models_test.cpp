#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "lfsr/error.hpp"
#include "lfsr/models.hpp"
#include "lfsr/network.hpp"
#include "lfsr/phantom.hpp"
#include "lfsr/tensor_io.hpp"
#include "oracles.hpp"

using namespace lfsr;
using oracle::random_tensor;

TEST_SUITE_BEGIN("models");

namespace {

std::size_t count_kind(const NetworkSpec& net, LayerKind kind) {
  return static_cast<std::size_t>(
      std::count_if(net.layers.begin(), net.layers.end(), [kind](const Layer& l) { return l.kind == kind; }));
}

std::size_t conv_params(std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; }

double feature_distance(NetworkSpec& phi, const Tensor& a, const Tensor& b) {
  const Tensor fa = infer(phi, as_batch(a)), fb = infer(phi, as_batch(b));
  double s = 0.0;
  for (std::size_t i = 0; i < fa.numel(); ++i) s += (fa[i] - fb[i]) * (fa[i] - fb[i]);
  return s / fa.numel();
}

std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("lfsr_models_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("ld structure and feature size") {
  NetworkSpec ld = build_ld(8, 3, 1);
  ld.validate();
  CHECK(count_kind(ld, LayerKind::MaxPool) == 3);
  CHECK(count_kind(ld, LayerKind::Conv) == 1 + 3 * 4);
  CHECK(count_kind(ld, LayerKind::BatchNorm) == 1 + 3 * 4);
  CHECK(count_kind(ld, LayerKind::AddSkip) == 3 * 2);

  // Every stage: four conv+BN pairs and two skips before its max pool.
  std::size_t convs = 0, skips = 0;
  for (std::size_t i = 3; i < ld.layers.size(); ++i) {
    const auto& l = ld.layers[i];
    if (l.kind == LayerKind::Conv) {
      CHECK(ld.layers[i + 1].kind == LayerKind::BatchNorm);
      ++convs;
    }
    if (l.kind == LayerKind::AddSkip) ++skips;
    if (l.kind == LayerKind::MaxPool) {
      CHECK(convs == 4);
      CHECK(skips == 2);
      convs = skips = 0;
    }
  }

  NetworkSpec trunk = ld.clone();
  trunk.layers.pop_back();
  Tensor feat = infer(trunk, Tensor({1, 1, 64, 64}, 0.3));
  CHECK(feat.shape() == Shape{1, 8, 8, 8});
  CHECK_THROWS_AS(build_ld(8, 0), ShapeError);
}

TEST_CASE("ld outputs lie in the unit box") {
  NetworkSpec ld = build_ld(4, 2, 2);
  Rng rng(3);
  for (int i = 0; i < 5; ++i) {
    const Tensor out = infer(ld, random_tensor({2, 1, 32, 32}, rng, -20.0, 20.0));
    CHECK(out.shape() == Shape{2, 4});
    for (double v : out.data()) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
}

TEST_CASE("parameter counts match the layer arithmetic") {
  for (std::size_t c : {4u, 8u})
    for (std::size_t s : {1u, 3u}) {
      const std::size_t per_block = 2 * conv_params(c, c, 3) + 2 * 2 * c;
      const std::size_t expected = conv_params(1, c, 3) + 2 * c + s * 2 * per_block + (c + 1) + (2 * c + 2);
      CHECK(build_ld(c, s).parameter_count() == expected);
    }
  for (std::size_t scale : {2u, 4u}) {
    const std::size_t c = 8, n = 3;
    const std::size_t block = 2 * conv_params(c, c, 3) + 2 * 2 * c + c;
    const std::size_t stages = scale == 2 ? 1 : 2;
    const std::size_t expected = conv_params(1, c, 9) + c + n * block + conv_params(c, c, 3) + 2 * c +
                                 stages * (conv_params(c, 4 * c, 3) + c) + conv_params(c, 1, 9);
    CHECK(build_srresnet(n, scale, c).parameter_count() == expected);
  }
  {
    const std::size_t c = 4, in = 32;
    std::size_t expected = conv_params(1, c, 3);
    for (std::size_t k = c; k < 16 * c; k *= 2) expected += conv_params(k, 2 * k, 3);
    expected += 16 * c * (in / 16) * (in / 16) + 1;
    CHECK(build_discriminator(in, c).parameter_count() == expected);
  }
  CHECK(build_perceptual(0, 8).parameter_count() ==
        conv_params(1, 8, 3) + conv_params(8, 16, 3) + conv_params(16, 32, 3) + conv_params(32, 64, 3));
}

TEST_CASE("srresnet shapes and sub-pixel stages") {
  NetworkSpec g2 = build_srresnet(2, 2, 8, 1);
  CHECK(infer(g2, Tensor({1, 1, 32, 32}, 0.1)).shape() == Shape{1, 1, 64, 64});
  NetworkSpec g4 = build_srresnet(2, 4, 8, 1);
  CHECK(count_kind(g4, LayerKind::PixelShuffle) == 2);
  CHECK(count_kind(g2, LayerKind::PixelShuffle) == 1);
  CHECK(infer(g4, Tensor({2, 1, 8, 8}, 0.1)).shape() == Shape{2, 1, 32, 32});
  CHECK(count_kind(build_srresnet(), LayerKind::AddSkip) == 17);
  CHECK_THROWS_AS(build_srresnet(2, 3, 8), ShapeError);
}

TEST_CASE("zeroed final conv gives a constant output") {
  NetworkSpec g = build_srresnet(2, 2, 8, 1);
  const std::string last = g.layers.back().name;
  for (auto& v : g.params.at(last + ".weight").data()) v = 0.0;
  for (auto& v : g.params.at(last + ".bias").data()) v = 0.0;
  Rng rng(4);
  const Tensor out = infer(g, random_tensor({1, 1, 16, 16}, rng));
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("generator is translation covariant away from borders") {
  NetworkSpec g = build_srresnet(2, 2, 8, 5);
  Rng rng(6);
  const Tensor img = random_tensor({1, 1, 64, 64}, rng);
  Tape t = Tape::no_grad();
  const std::size_t a = 2, b = 3, n = 48;
  const Tensor sa = infer(g, ops::crop2d(t, img, 0, 0, n, n));
  const Tensor sb = infer(g, ops::crop2d(t, img, a, b, n, n));
  const std::size_t margin = 2 * 16;
  double worst = 0.0;
  for (std::size_t y = margin; y + margin < 2 * n; ++y)
    for (std::size_t x = margin; x + margin < 2 * n; ++x)
      worst = std::max(worst, std::abs(sb.at(0, 0, y, x) - sa.at(0, 0, y + 2 * a, x + 2 * b)));
  CHECK(worst < 1e-6);
}

TEST_CASE("discriminator range, batch permutation and input gradient") {
  NetworkSpec d = build_discriminator(32, 4, 7);
  d.mode = Mode::Eval;
  Rng rng(8);
  const Tensor x = random_tensor({3, 1, 32, 32}, rng);
  const Tensor out = infer(d, x);
  CHECK(out.shape() == Shape{3, 1});
  for (double v : out.data()) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  Tensor perm({3, 1, 32, 32});
  const std::size_t order[3] = {2, 0, 1};
  for (std::size_t i = 0; i < 3; ++i)
    std::copy_n(x.data().begin() + order[i] * 1024, 1024, perm.data().begin() + i * 1024);
  const Tensor pout = infer(d, perm);
  for (std::size_t i = 0; i < 3; ++i) CHECK(pout[i] == out[order[i]]);

  Tensor xi = x.clone();
  xi.set_requires_grad(true);
  Tape tape;
  tape.backward(ops::sum(tape, forward(d, tape, xi)));
  double norm = 0.0;
  for (double g : xi.grad()) norm += g * g;
  CHECK(norm > 0.0);

  CHECK_THROWS_AS(infer(d, Tensor({1, 1, 64, 64})), ShapeError);
  CHECK_THROWS_AS(build_discriminator(40), ShapeError);
}

TEST_CASE("perceptual network is frozen and deterministic") {
  NetworkSpec a = build_perceptual(11), b = build_perceptual(11);
  CHECK(a.frozen);
  CHECK(a.trainable().empty());
  PhantomConfig pc;
  pc.image_size = 64;
  const Sample s = gen_phantom(pc, 3);
  const Tensor fa = infer(a, as_batch(s.hr)), fb = infer(b, as_batch(s.hr));
  CHECK(oracle::max_abs_diff(fa, fb) == 0.0);
  CHECK(feature_distance(a, s.hr, s.hr) == 0.0);

  Tensor blurred = s.hr.clone();
  for (std::size_t r = 1; r + 1 < 64; ++r)
    for (std::size_t c = 1; c + 1 < 64; ++c) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) acc += s.hr.at(r + dy, c + dx);
      blurred.at(r, c) = acc / 9.0;
    }
  Tensor shuffled = s.hr.clone();
  Rng rng(12);
  auto d = shuffled.data();
  for (std::size_t i = d.size() - 1; i > 0; --i) std::swap(d[i], d[rng.below(i + 1)]);
  CHECK(feature_distance(a, s.hr, blurred) < feature_distance(a, s.hr, shuffled));
}

TEST_CASE("roi decoding stays inside the image") {
  Rng rng(13);
  for (int i = 0; i < 200; ++i) {
    RoiPrediction roi{rng.uniform(), rng.uniform(), rng.uniform(), rng.uniform()};
    const BoundingBox b = roi.decode(64, 48);
    CHECK(b.row0 >= 0);
    CHECK(b.col0 >= 0);
    CHECK(b.row0 + b.height <= 64);
    CHECK(b.col0 + b.width <= 48);
    CHECK(b.height >= 0);
  }
  const RoiPrediction r = roi_from_box(BoundingBox{10, 20, 8, 4}, 64, 64, 1.0);
  CHECK(r.decode(64, 64) == BoundingBox{10, 20, 8, 4});
}

TEST_CASE("crop_roi centring, clamping and LR-HR correspondence") {
  Rng rng(14);
  const Tensor lr = random_tensor({32, 32}, rng);
  RoiPrediction mid{0.5, 0.5, 0.2, 0.2};
  const Tensor c = crop_roi(lr, mid, 8);
  CHECK(c.shape() == Shape{8, 8});
  for (std::size_t r = 0; r < 8; ++r)
    for (std::size_t k = 0; k < 8; ++k) CHECK(c.at(r, k) == lr.at(12 + r, 12 + k));

  RoiPrediction corner{0.98, 0.01, 0.1, 0.1};
  const Tensor cc = crop_roi(lr, corner, 8);
  CHECK(cc.shape() == Shape{8, 8});
  CHECK(cc.at(0, 0) == lr.at(0, 24));

  for (int i = 0; i < 50; ++i) {
    RoiPrediction roi{rng.uniform(), rng.uniform(), 0.1, 0.1};
    for (std::size_t s : {2u, 4u}) {
      const BoundingBox wl = roi_window(roi, 32, 32, 8, 1), wh = roi_window(roi, 32, 32, 8, s);
      CHECK(std::abs(static_cast<double>(wl.row0 * static_cast<int>(s) - wh.row0)) <= 0.5);
      CHECK(std::abs(static_cast<double>(wl.col0 * static_cast<int>(s) - wh.col0)) <= 0.5);
      CHECK(wh.height == static_cast<int>(8 * s));
    }
  }
  CHECK_THROWS_AS(crop_roi(lr, mid, 40), ShapeError);
}

TEST_CASE("predict_roi runs on square power-of-two images only") {
  NetworkSpec ld = build_ld(4, 2, 1);
  const RoiPrediction r = predict_roi(ld, Tensor({32, 32}, 0.1));
  CHECK(r.cx >= 0.0);
  CHECK(r.w <= 1.0);
  CHECK_THROWS_AS(predict_roi(ld, Tensor({32, 16})), ShapeError);
}

TEST_CASE("network save, load and manifest round trip") {
  const auto dir = temp_dir("roundtrip");
  NetworkSpec g = build_srresnet(1, 2, 4, 9);
  g.buffers.begin()->second[0] = 0.125;
  save_network(g, dir / "g");
  NetworkSpec back = load_network(dir / "g");
  CHECK(back.layers.size() == g.layers.size());
  CHECK(layer_manifest(back) == layer_manifest(g));
  for (const auto& [name, t] : g.params) CHECK(oracle::max_abs_diff(back.params.at(name), t) == 0.0);
  for (const auto& [name, t] : g.buffers) CHECK(oracle::max_abs_diff(back.buffers.at(name), t) == 0.0);
  Rng rng(10);
  const Tensor x = random_tensor({1, 1, 8, 8}, rng);
  CHECK(oracle::max_abs_diff(infer(g, x), infer(back, x)) == 0.0);

  const NetworkSpec parsed = parse_layer_manifest(layer_manifest(g));
  CHECK(parsed.layers.size() == g.layers.size());
  CHECK(parsed.layers[0].kernel == 9);
  CHECK_THROWS(load_network(dir / "missing"));
}

TEST_CASE("load_weights replaces matching parameters") {
  const auto dir = temp_dir("weights");
  NetworkSpec a = build_perceptual(1), b = build_perceptual(2);
  std::vector<NamedTensor> named;
  for (const auto& [name, t] : a.params) named.push_back({name, t});
  save_tensors(dir / "w.lftb", named);
  load_weights(b, dir / "w.lftb");
  for (const auto& [name, t] : a.params) CHECK(oracle::max_abs_diff(b.params.at(name), t) == 0.0);
  std::vector<NamedTensor> wrong{{a.params.begin()->first, Tensor({1})}};
  save_tensors(dir / "bad.lftb", wrong);
  CHECK_THROWS(load_weights(b, dir / "bad.lftb"));
}

TEST_CASE("clone is deep and freezing drops trainables") {
  NetworkSpec a = build_discriminator(16, 2, 1);
  NetworkSpec b = a.clone();
  b.params.begin()->second[0] += 1.0;
  CHECK(a.params.begin()->second[0] != b.params.begin()->second[0]);
  CHECK_FALSE(a.trainable().empty());
  a.set_frozen(true);
  CHECK(a.trainable().empty());
  a.set_frozen(false);
  CHECK(a.trainable().size() == a.params.size());
}

TEST_CASE("validate catches channel mismatches") {
  NetworkSpec g = build_srresnet(1, 2, 4, 1);
  g.layers[0].out_channels = 5;
  CHECK_THROWS_AS(g.validate(), ShapeError);
}

TEST_SUITE_END();
