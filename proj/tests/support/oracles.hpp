#pragma once

// Independent reference implementations used by the unit and acceptance
// suites. Nothing here calls the library code it checks.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <functional>
#include <numbers>
#include <vector>

#include "lfsr/ops.hpp"
#include "lfsr/rng.hpp"
#include "lfsr/tape.hpp"
#include "lfsr/tensor.hpp"

namespace lfsr::oracle {

inline Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

// Values bounded away from zero, for kink-avoiding activation checks.
inline Tensor random_away_from_zero(Shape shape, Rng& rng, double min_abs = 0.05) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) {
    const double mag = rng.uniform(min_abs, 1.0);
    v = rng.uniform() < 0.5 ? -mag : mag;
  }
  return t;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Direct convolution over [N,C,H,W] x [F,C,kh,kw] with zero padding.
inline Tensor direct_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t stride, bool same) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t f = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const long ph = same ? static_cast<long>(kh / 2) : 0, pw = same ? static_cast<long>(kw / 2) : 0;
  const std::size_t oh = (h + 2 * ph - kh) / stride + 1, ow = (wd + 2 * pw - kw) / stride + 1;
  Tensor y({n, f, oh, ow});
  for (std::size_t in = 0; in < n; ++in)
    for (std::size_t of = 0; of < f; ++of)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = b.defined() ? b[of] : 0.0;
          for (std::size_t ic = 0; ic < c; ++ic)
            for (std::size_t ky = 0; ky < kh; ++ky)
              for (std::size_t kx = 0; kx < kw; ++kx) {
                const long iy = static_cast<long>(oy * stride + ky) - ph;
                const long ix = static_cast<long>(ox * stride + kx) - pw;
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                acc += x.at(in, ic, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)) *
                       w.at(of, ic, ky, kx);
              }
          y.at(in, of, oy, ox) = acc;
        }
  return y;
}

// Scalar loss builder evaluated on a fresh tape.
using LossFn = std::function<Tensor(Tape&)>;

// Norm-wise relative error between the tape gradient and central finite
// differences, maximised over the tensors in `wrt`.
inline double gradient_rel_error(const LossFn& f, const std::vector<Tensor>& wrt, double h = 1e-5) {
  for (auto t : wrt) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  {
    Tape tape;
    Tensor loss = f(tape);
    tape.backward(loss);
  }
  double worst = 0.0;
  for (auto t : wrt) {
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<double> numeric(t.numel());
    for (std::size_t i = 0; i < t.numel(); ++i) {
      const double x0 = t[i];
      t[i] = x0 + h;
      Tape tp = Tape::no_grad();
      const double fp = f(tp).item();
      t[i] = x0 - h;
      Tape tm = Tape::no_grad();
      const double fm = f(tm).item();
      t[i] = x0;
      numeric[i] = (fp - fm) / (2.0 * h);
    }
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
      na += analytic[i] * analytic[i];
      nn += numeric[i] * numeric[i];
    }
    const double denom = std::max({std::sqrt(na), std::sqrt(nn), 1e-12});
    worst = std::max(worst, std::sqrt(diff) / denom);
  }
  return worst;
}

// Reduces an arbitrary tensor to a scalar with fixed random weights so that
// every output element contributes a distinct gradient.
inline Tensor probe(Tape& tape, const Tensor& y, const Tensor& weights) {
  return ops::sum(tape, ops::mul(tape, y, weights));
}

// Naive O(N^2) orthonormal 2-D DFT.
inline std::vector<std::complex<double>> naive_dft2(const Tensor& img, bool inverse = false,
                                                    const std::vector<std::complex<double>>* in = nullptr) {
  const std::size_t h = img.dim(0), w = img.dim(1);
  std::vector<std::complex<double>> src(h * w), out(h * w);
  for (std::size_t i = 0; i < h * w; ++i) src[i] = in ? (*in)[i] : std::complex<double>(img[i], 0.0);
  const double sign = inverse ? 1.0 : -1.0;
  const double norm = 1.0 / std::sqrt(static_cast<double>(h * w));
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v) {
      std::complex<double> acc = 0.0;
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const double ang = sign * 2.0 * std::numbers::pi *
                             (static_cast<double>(u * y) / static_cast<double>(h) +
                              static_cast<double>(v * x) / static_cast<double>(w));
          acc += src[y * w + x] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
      out[u * w + v] = acc * norm;
    }
  return out;
}

inline double literal_psnr(const Tensor& a, const Tensor& b, double range) {
  double se = 0.0;
  for (std::size_t r = 0; r < a.dim(0); ++r)
    for (std::size_t c = 0; c < a.dim(1); ++c) {
      const double d = a.at(r, c) - b.at(r, c);
      se += d * d;
    }
  const double mse = se / static_cast<double>(a.numel());
  return 10.0 * std::log10(range * range / mse);
}

// Per-window SSIM with an 11x11 Gaussian (sigma 1.5), centred moments.
inline double literal_ssim(const Tensor& a, const Tensor& b, double range) {
  constexpr int n = 11;
  constexpr double sigma = 1.5;
  double wt[n][n];
  double total = 0.0;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double di = i - n / 2, dj = j - n / 2;
      wt[i][j] = std::exp(-(di * di + dj * dj) / (2.0 * sigma * sigma));
      total += wt[i][j];
    }
  for (auto& row : wt)
    for (auto& v : row) v /= total;
  const double c1 = std::pow(0.01 * range, 2), c2 = std::pow(0.03 * range, 2);
  const std::size_t h = a.dim(0), w = a.dim(1);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r + n <= h; ++r)
    for (std::size_t c = 0; c + n <= w; ++c) {
      double mx = 0.0, my = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          mx += wt[i][j] * a.at(r + i, c + j);
          my += wt[i][j] * b.at(r + i, c + j);
        }
      double vx = 0.0, vy = 0.0, cov = 0.0;
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
          const double dx = a.at(r + i, c + j) - mx, dy = b.at(r + i, c + j) - my;
          vx += wt[i][j] * dx * dx;
          vy += wt[i][j] * dy * dy;
          cov += wt[i][j] * dx * dy;
        }
      sum += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++count;
    }
  return sum / static_cast<double>(count);
}

// Exact two-sided sign test p-value for `wins` successes out of `n` trials.
inline double sign_test_p(std::size_t wins, std::size_t n) {
  const std::size_t k = std::min(wins, n - wins);
  double tail = 0.0;
  for (std::size_t i = 0; i <= k; ++i) {
    tail += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) -
                     static_cast<double>(n) * std::log(2.0));
  }
  return std::min(1.0, 2.0 * tail);
}

}  // namespace lfsr::oracle
