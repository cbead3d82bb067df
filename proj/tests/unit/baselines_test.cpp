#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "lfsr/baselines.hpp"
#include "lfsr/degradation.hpp"
#include "lfsr/error.hpp"
#include "lfsr/metrics.hpp"
#include "lfsr/phantom.hpp"
#include "oracles.hpp"

using namespace lfsr;

TEST_SUITE_BEGIN("baselines");

namespace {

double hand_bilinear(const Tensor& lr, std::size_t scale, std::size_t i, std::size_t j) {
  auto coord = [&](std::size_t o, std::size_t n) {
    const double s = (o + 0.5) / static_cast<double>(scale) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(n - 1));
  };
  const double y = coord(i, lr.dim(0)), x = coord(j, lr.dim(1));
  const auto y0 = static_cast<std::size_t>(std::floor(y)), x0 = static_cast<std::size_t>(std::floor(x));
  const std::size_t y1 = std::min(y0 + 1, lr.dim(0) - 1), x1 = std::min(x0 + 1, lr.dim(1) - 1);
  const double fy = y - y0, fx = x - x0;
  return (1 - fy) * ((1 - fx) * lr.at(y0, x0) + fx * lr.at(y0, x1)) + fy * ((1 - fx) * lr.at(y1, x0) + fx * lr.at(y1, x1));
}

double variance(const Tensor& t) {
  double s = 0.0, s2 = 0.0;
  for (double v : t.data()) s += v;
  const double mu = s / t.numel();
  for (double v : t.data()) s2 += (v - mu) * (v - mu);
  return s2 / t.numel();
}

double l2_diff(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("bilinear keeps constants") {
  const Tensor up = bilinear_upsample(Tensor({5, 7}, 0.4), 4);
  CHECK(up.shape() == Shape{20, 28});
  for (double v : up.data()) CHECK(v == doctest::Approx(0.4).epsilon(1e-15));
}

TEST_CASE("bilinear 2x2 ramp matches per-pixel evaluation") {
  Tensor lr({2, 2}, std::vector<double>{0, 1, 2, 3});
  const Tensor up = bilinear_upsample(lr, 2);
  CHECK(up.at(0, 0) == 0.0);
  CHECK(up.at(3, 3) == 3.0);
  CHECK(up.at(1, 1) == doctest::Approx(0.75));
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) CHECK(up.at(i, j) == doctest::Approx(hand_bilinear(lr, 2, i, j)).epsilon(1e-15));
}

TEST_CASE("bilinear matches per-pixel evaluation on random images") {
  Rng rng(1);
  for (std::size_t s : {2u, 4u}) {
    Tensor lr = oracle::random_tensor({6, 9}, rng);
    const Tensor up = bilinear_upsample(lr, s);
    for (std::size_t i = 0; i < up.dim(0); ++i)
      for (std::size_t j = 0; j < up.dim(1); ++j) CHECK(std::abs(up.at(i, j) - hand_bilinear(lr, s, i, j)) < 1e-14);
  }
  CHECK_THROWS_AS(bilinear_upsample(Tensor({2, 2}), 0), ShapeError);
}

TEST_CASE("bilinear beats nearest on a smooth blob") {
  Tensor hr({64, 64});
  for (std::size_t r = 0; r < 64; ++r)
    for (std::size_t c = 0; c < 64; ++c) {
      const double dy = r - 30.0, dx = c - 34.0;
      hr.at(r, c) = -1.0 + 1.6 * std::exp(-(dy * dy + dx * dx) / (2.0 * 9.0 * 9.0));
    }
  DegradeConfig cfg;
  const Tensor lr = degrade(hr, cfg);
  CHECK(psnr(bilinear_upsample(lr, 2), hr) > psnr(nearest_upsample(lr, 2), hr) + 1.0);
}

TEST_CASE("bilinear preserves the mean of a smooth periodic image") {
  Tensor lr({32, 32});
  for (std::size_t r = 0; r < 32; ++r)
    for (std::size_t c = 0; c < 32; ++c)
      lr.at(r, c) = 1.0 + 0.5 * std::cos(2.0 * std::numbers::pi * r / 32.0) * std::sin(2.0 * std::numbers::pi * c / 32.0);
  double a = 0.0, b = 0.0;
  for (double v : lr.data()) a += v;
  const Tensor up = bilinear_upsample(lr, 4);
  for (double v : up.data()) b += v;
  a /= lr.numel();
  b /= up.numel();
  CHECK(std::abs(a - b) / a < 0.01);
}

TEST_CASE("nlm leaves a constant image unchanged") {
  const Tensor out = nlm_denoise(Tensor({24, 24}, -0.25), 0.1);
  for (double v : out.data()) CHECK(v == doctest::Approx(-0.25).epsilon(1e-14));
}

TEST_CASE("nlm reduces noise variance and converges") {
  Rng rng(2);
  Tensor noisy({32, 32});
  for (auto& v : noisy.data()) v = 0.3 + rng.normal(0.0, 0.1);
  const Tensor once = nlm_denoise(noisy, 0.08);
  const Tensor twice = nlm_denoise(once, 0.08);
  CHECK(variance(once) < variance(noisy));
  CHECK(l2_diff(twice, once) < l2_diff(once, noisy));
}

TEST_CASE("nlm weights are non-negative and normalized") {
  Rng rng(3);
  Tensor img = oracle::random_tensor({25, 25}, rng);
  for (auto [r, c] : {std::pair<std::size_t, std::size_t>{0, 0}, {12, 12}, {24, 3}}) {
    const auto w = nlm_pixel_weights(img, r, c, 0.5);
    CHECK(w.size() == 21 * 21);
    double s = 0.0;
    for (double v : w) {
      CHECK(v >= 0.0);
      s += v;
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK_THROWS_AS(nlm_denoise(Tensor({10, 10}), 0.1), ShapeError);
  CHECK_THROWS_AS(nlm_denoise(Tensor({30, 30}), 0.0), ShapeError);
}

TEST_CASE("b_nld without noise is bilinear and is deterministic") {
  Rng rng(4);
  Tensor lr = oracle::random_tensor({24, 24}, rng);
  CHECK(oracle::max_abs_diff(b_nld(lr, 2, 0.0), bilinear_upsample(lr, 2)) == 0.0);
  CHECK(oracle::max_abs_diff(b_nld(lr, 2, 20.0), b_nld(lr, 2, 20.0)) == 0.0);
}

TEST_CASE("b_nld on phantoms improves on bilinear and degrades with sigma") {
  PhantomConfig pc;
  pc.image_size = 64;
  pc.n_samples = 6;
  const auto samples = gen_dataset(pc);
  double gain = 0.0;
  std::vector<double> by_sigma(3, 0.0);
  for (const auto& s : samples) {
    for (std::size_t k = 0; k < 3; ++k) {
      DegradeConfig cfg;
      cfg.sigma = 20.0 * k;
      cfg.seed = 3;
      const Tensor lr = degrade(s.hr, cfg, s.id);
      const double p = psnr(b_nld(lr, 2, cfg.sigma), s.hr);
      by_sigma[k] += p;
      if (k == 1) gain += p - psnr(bilinear_upsample(lr, 2), s.hr);
    }
  }
  CHECK(gain > 0.0);
  CHECK(by_sigma[0] > by_sigma[1]);
  CHECK(by_sigma[1] > by_sigma[2]);
}

TEST_SUITE_END();
