#include "lfsr/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "lfsr/error.hpp"

namespace lfsr::ops {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
  if (!t.defined() || t.rank() != rank) {
    throw ShapeError(std::string(op) + ": expected rank-" + std::to_string(rank) + " input, got " +
                     (t.defined() ? shape_str(t.shape()) : std::string("undefined")));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

struct ConvGeometry {
  std::size_t n, c, h, w;
  std::size_t f, kh, kw;
  std::size_t stride, pad_h, pad_w;
  std::size_t oh, ow;

  std::size_t patch() const { return c * kh * kw; }
  std::size_t out_pixels() const { return oh * ow; }
};

// Output rows handled per column block; keeps the block cache resident.
std::size_t rows_per_block(const ConvGeometry& g) {
  constexpr std::size_t kBudget = 1 << 15;
  return std::clamp<std::size_t>(kBudget / std::max<std::size_t>(g.patch() * g.ow, 1), 1, g.oh);
}

// Unfolds output rows [oy0, oy1) of one [C,H,W] image into a
// [C*kh*kw, (oy1-oy0)*ow] column matrix.
void im2col(const double* x, const ConvGeometry& g, std::size_t oy0, std::size_t oy1, double* col) {
  const std::size_t opix = (oy1 - oy0) * g.ow;
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        double* row = col + ((c * g.kh + ki) * g.kw + kj) * opix - oy0 * g.ow;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.pad_h);
          double* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.ow, 0.0);
            continue;
          }
          const double* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.pad_w);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : src[ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back into [C,H,W].
void col2im(const double* col, const ConvGeometry& g, std::size_t oy0, std::size_t oy1, double* dx) {
  const std::size_t opix = (oy1 - oy0) * g.ow;
  for (std::size_t c = 0; c < g.c; ++c) {
    for (std::size_t ki = 0; ki < g.kh; ++ki) {
      for (std::size_t kj = 0; kj < g.kw; ++kj) {
        const double* row = col + ((c * g.kh + ki) * g.kw + kj) * opix - oy0 * g.ow;
        for (std::size_t oy = oy0; oy < oy1; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ki) -
                          static_cast<std::ptrdiff_t>(g.pad_h);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          double* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          const double* src = row + oy * g.ow;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kj) -
                            static_cast<std::ptrdiff_t>(g.pad_w);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

// Number of elements after the channel axis (axis 1); 1 for rank <= 2.
std::size_t inner_size(const Tensor& t) {
  std::size_t inner = 1;
  for (std::size_t i = 2; i < t.rank(); ++i) inner *= t.dim(i);
  return inner;
}

template <class Fwd, class Deriv>
Tensor unary(Tape& tape, const Tensor& input, std::string_view name, Fwd fwd, Deriv deriv) {
  Tensor out(input.shape());
  auto x = input.data();
  auto y = out.data();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  if (tape.wants({&input})) {
    tape.record(name, {input}, out, [input, out, deriv]() mutable {
      if (!input.requires_grad()) return;
      auto gx = input.grad();
      auto gy = out.grad();
      auto xv = input.data();
      auto yv = out.data();
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += gy[i] * deriv(xv[i], yv[i]);
    });
  }
  return out;
}

}  // namespace

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride, Padding pad) {
  require_rank(input, 4, "conv2d");
  require_rank(weight, 4, "conv2d weight");
  if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
  ConvGeometry g{};
  g.n = input.dim(0);
  g.c = input.dim(1);
  g.h = input.dim(2);
  g.w = input.dim(3);
  g.f = weight.dim(0);
  g.kh = weight.dim(2);
  g.kw = weight.dim(3);
  if (weight.dim(1) != g.c) {
    throw ShapeError("conv2d: input has " + std::to_string(g.c) + " channels but weight " +
                     shape_str(weight.shape()) + " expects " + std::to_string(weight.dim(1)));
  }
  if (g.kh % 2 == 0 || g.kw % 2 == 0) {
    throw ShapeError("conv2d: kernel dims must be odd, got " + shape_str(weight.shape()));
  }
  if (bias.defined() && (bias.numel() != g.f)) {
    throw ShapeError("conv2d: bias " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(g.f) + " filters");
  }
  g.stride = stride;
  g.pad_h = pad == Padding::Same ? g.kh / 2 : 0;
  g.pad_w = pad == Padding::Same ? g.kw / 2 : 0;
  if (g.h + 2 * g.pad_h < g.kh || g.w + 2 * g.pad_w < g.kw) {
    throw ShapeError("conv2d: kernel " + shape_str(weight.shape()) + " larger than input " +
                     shape_str(input.shape()));
  }
  g.oh = (g.h + 2 * g.pad_h - g.kh) / stride + 1;
  g.ow = (g.w + 2 * g.pad_w - g.kw) / stride + 1;

  Tensor out({g.n, g.f, g.oh, g.ow});
  const std::size_t patch = g.patch();
  const std::size_t opix = g.out_pixels();
  const std::size_t block = rows_per_block(g);
  std::vector<double> col(patch * block * g.ow);
  ConstMatMap wmat(weight.data().data(), static_cast<Eigen::Index>(g.f),
                   static_cast<Eigen::Index>(patch));
  for (std::size_t n = 0; n < g.n; ++n) {
    double* y = out.data().data() + n * g.f * opix;
    for (std::size_t oy0 = 0; oy0 < g.oh; oy0 += block) {
      const std::size_t oy1 = std::min(g.oh, oy0 + block);
      const auto B = static_cast<Eigen::Index>((oy1 - oy0) * g.ow);
      im2col(input.data().data() + n * g.c * g.h * g.w, g, oy0, oy1, col.data());
      StridedMap yb(y + oy0 * g.ow, static_cast<Eigen::Index>(g.f), B,
                    Eigen::OuterStride<>(static_cast<Eigen::Index>(opix)));
      yb.noalias() = wmat * ConstMatMap(col.data(), static_cast<Eigen::Index>(patch), B);
    }
    if (bias.defined()) {
      for (std::size_t f = 0; f < g.f; ++f) {
        double* row = y + f * opix;
        for (std::size_t i = 0; i < opix; ++i) row[i] += bias[f];
      }
    }
  }

  if (tape.wants({&input, &weight, &bias})) {
    tape.record("conv2d", {input, weight, bias}, out, [input, weight, bias, out, g]() mutable {
      const std::size_t patch = g.patch();
      const std::size_t opix = g.out_pixels();
      const auto P = static_cast<Eigen::Index>(patch);
      const auto O = static_cast<Eigen::Index>(opix);
      const auto F = static_cast<Eigen::Index>(g.f);
      auto gy = out.grad();
      if (bias.defined() && bias.requires_grad()) {
        auto gb = bias.grad();
        for (std::size_t n = 0; n < g.n; ++n) {
          for (std::size_t f = 0; f < g.f; ++f) {
            const double* row = gy.data() + (n * g.f + f) * opix;
            double s = 0.0;
            for (std::size_t i = 0; i < opix; ++i) s += row[i];
            gb[f] += s;
          }
        }
      }
      const bool need_w = weight.requires_grad();
      const bool need_x = input.requires_grad();
      if (!need_w && !need_x) return;
      const std::size_t block = rows_per_block(g);
      std::vector<double> col(need_w ? patch * block * g.ow : 0);
      std::vector<double> dcol(need_x ? patch * block * g.ow : 0);
      ConstMatMap wmat(weight.data().data(), F, P);
      for (std::size_t n = 0; n < g.n; ++n) {
        const double* dy = gy.data() + n * g.f * opix;
        for (std::size_t oy0 = 0; oy0 < g.oh; oy0 += block) {
          const std::size_t oy1 = std::min(g.oh, oy0 + block);
          const auto B = static_cast<Eigen::Index>((oy1 - oy0) * g.ow);
          ConstStridedMap dyb(dy + oy0 * g.ow, F, B, Eigen::OuterStride<>(O));
          if (need_w) {
            im2col(input.data().data() + n * g.c * g.h * g.w, g, oy0, oy1, col.data());
            MatMap dw(weight.grad().data(), F, P);
            dw.noalias() += dyb * ConstMatMap(col.data(), P, B).transpose();
          }
          if (need_x) {
            MatMap dc(dcol.data(), P, B);
            dc.noalias() = wmat.transpose() * dyb;
            col2im(dcol.data(), g, oy0, oy1, input.grad().data() + n * g.c * g.h * g.w);
          }
        }
      }
    });
  }
  return out;
}

Tensor batchnorm2d(Tape& tape, const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   Tensor& running_mean, Tensor& running_var, const BatchNormOptions& opts) {
  require_rank(input, 4, "batchnorm2d");
  const std::size_t n = input.dim(0), c = input.dim(1), hw = input.dim(2) * input.dim(3);
  if (gamma.numel() != c || beta.numel() != c || running_mean.numel() != c ||
      running_var.numel() != c) {
    throw ShapeError("batchnorm2d: parameters must have " + std::to_string(c) + " elements");
  }
  const std::size_t count = n * hw;
  const bool train = opts.mode == NormMode::Train;
  if (train && count < 2) {
    throw ShapeError("batchnorm2d: Train mode needs at least 2 values per channel, got " +
                     shape_str(input.shape()));
  }

  Tensor out(input.shape());
  // Per-channel normalized input and 1/sqrt(var + eps), kept for backward.
  auto xhat = std::make_shared<std::vector<double>>(input.numel());
  auto inv_std = std::make_shared<std::vector<double>>(c);
  auto x = input.data();
  auto y = out.data();
  for (std::size_t ch = 0; ch < c; ++ch) {
    double mu, var;
    if (train) {
      double s = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = x.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) s += p[i];
      }
      mu = s / static_cast<double>(count);
      double ss = 0.0;
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = x.data() + (b * c + ch) * hw;
        for (std::size_t i = 0; i < hw; ++i) ss += (p[i] - mu) * (p[i] - mu);
      }
      var = ss / static_cast<double>(count);
      const double unbiased = ss / static_cast<double>(count - 1);
      running_mean[ch] = opts.momentum * running_mean[ch] + (1.0 - opts.momentum) * mu;
      running_var[ch] = opts.momentum * running_var[ch] + (1.0 - opts.momentum) * unbiased;
    } else {
      mu = running_mean[ch];
      var = running_var[ch];
    }
    const double is = 1.0 / std::sqrt(var + opts.eps);
    (*inv_std)[ch] = is;
    for (std::size_t b = 0; b < n; ++b) {
      const std::size_t off = (b * c + ch) * hw;
      for (std::size_t i = 0; i < hw; ++i) {
        const double xh = (x[off + i] - mu) * is;
        (*xhat)[off + i] = xh;
        y[off + i] = gamma[ch] * xh + beta[ch];
      }
    }
  }

  if (tape.wants({&input, &gamma, &beta})) {
    tape.record("batchnorm2d", {input, gamma, beta}, out,
                [input, gamma, beta, out, xhat, inv_std, n, c, hw, count, train]() mutable {
                  auto gy = out.grad();
                  const auto& xh = *xhat;
                  for (std::size_t ch = 0; ch < c; ++ch) {
                    double sum_dy = 0.0, sum_dy_xh = 0.0;
                    for (std::size_t b = 0; b < n; ++b) {
                      const std::size_t off = (b * c + ch) * hw;
                      for (std::size_t i = 0; i < hw; ++i) {
                        sum_dy += gy[off + i];
                        sum_dy_xh += gy[off + i] * xh[off + i];
                      }
                    }
                    if (gamma.requires_grad()) gamma.grad()[ch] += sum_dy_xh;
                    if (beta.requires_grad()) beta.grad()[ch] += sum_dy;
                    if (!input.requires_grad()) continue;
                    auto gx = input.grad();
                    const double g = gamma[ch];
                    const double is = (*inv_std)[ch];
                    if (train) {
                      const double m = static_cast<double>(count);
                      for (std::size_t b = 0; b < n; ++b) {
                        const std::size_t off = (b * c + ch) * hw;
                        for (std::size_t i = 0; i < hw; ++i) {
                          gx[off + i] += g * is / m *
                                         (m * gy[off + i] - sum_dy - xh[off + i] * sum_dy_xh);
                        }
                      }
                    } else {
                      for (std::size_t b = 0; b < n; ++b) {
                        const std::size_t off = (b * c + ch) * hw;
                        for (std::size_t i = 0; i < hw; ++i) gx[off + i] += g * is * gy[off + i];
                      }
                    }
                  }
                });
  }
  return out;
}

Tensor prelu(Tape& tape, const Tensor& input, const Tensor& alpha) {
  const std::size_t channels = input.rank() >= 2 ? input.dim(1) : 1;
  if (alpha.numel() != 1 && alpha.numel() != channels) {
    throw ShapeError("prelu: alpha " + shape_str(alpha.shape()) + " not broadcastable to " +
                     shape_str(input.shape()));
  }
  const bool shared = alpha.numel() == 1;
  const std::size_t inner = inner_size(input);
  const std::size_t outer = input.rank() >= 1 ? input.dim(0) : 1;
  Tensor out(input.shape());
  auto x = input.data();
  auto y = out.data();
  const std::size_t per_outer = shared ? x.size() / outer : channels * inner;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const std::size_t ch = shared ? 0 : (i % per_outer) / inner;
    y[i] = x[i] > 0.0 ? x[i] : alpha[ch] * x[i];
  }
  if (tape.wants({&input, &alpha})) {
    tape.record("prelu", {input, alpha}, out,
                [input, alpha, out, shared, inner, per_outer]() mutable {
                  auto gy = out.grad();
                  auto x = input.data();
                  const bool gin = input.requires_grad();
                  const bool galpha = alpha.requires_grad();
                  for (std::size_t i = 0; i < x.size(); ++i) {
                    const std::size_t ch = shared ? 0 : (i % per_outer) / inner;
                    if (x[i] > 0.0) {
                      if (gin) input.grad()[i] += gy[i];
                    } else {
                      if (gin) input.grad()[i] += alpha[ch] * gy[i];
                      if (galpha) alpha.grad()[ch] += x[i] * gy[i];
                    }
                  }
                });
  }
  return out;
}

Tensor relu(Tape& tape, const Tensor& input) {
  return unary(
      tape, input, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(Tape& tape, const Tensor& input, double slope) {
  return unary(
      tape, input, "leaky_relu", [slope](double v) { return v > 0.0 ? v : slope * v; },
      [slope](double v, double) { return v > 0.0 ? 1.0 : slope; });
}

Tensor sigmoid(Tape& tape, const Tensor& input) {
  return unary(
      tape, input, "sigmoid",
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh(Tape& tape, const Tensor& input) {
  return unary(
      tape, input, "tanh", [](double v) { return std::tanh(v); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor maxpool2d(Tape& tape, const Tensor& input, std::size_t kernel, std::size_t stride) {
  require_rank(input, 4, "maxpool2d");
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (kernel < 1 || stride < 1 || h % stride != 0 || w % stride != 0 || h < kernel || w < kernel) {
    throw ShapeError("maxpool2d: spatial dims of " + shape_str(input.shape()) +
                     " must be divisible by stride " + std::to_string(stride));
  }
  const std::size_t oh = (h - kernel) / stride + 1, ow = (w - kernel) / stride + 1;
  Tensor out({n, c, oh, ow});
  auto argmax = std::make_shared<std::vector<std::size_t>>(out.numel());
  auto x = input.data();
  auto y = out.data();
  std::size_t o = 0;
  for (std::size_t p = 0; p < n * c; ++p) {
    const std::size_t base = p * h * w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
        std::size_t best = base + oy * stride * w + ox * stride;
        for (std::size_t ki = 0; ki < kernel; ++ki) {
          for (std::size_t kj = 0; kj < kernel; ++kj) {
            const std::size_t idx = base + (oy * stride + ki) * w + ox * stride + kj;
            if (x[idx] > x[best]) best = idx;
          }
        }
        (*argmax)[o] = best;
        y[o] = x[best];
      }
    }
  }
  if (tape.wants({&input})) {
    tape.record("maxpool2d", {input}, out, [input, out, argmax]() mutable {
      auto gx = input.grad();
      auto gy = out.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) gx[(*argmax)[i]] += gy[i];
    });
  }
  return out;
}

namespace {

// Maps every element of the shuffled [N,C,H*r,W*r] tensor to its source index
// in [N,C*r*r,H,W].
template <class Visit>
void for_each_shuffle(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::size_t r,
                      Visit visit) {
  const std::size_t oh = h * r, ow = w * r;
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t x = 0; x < ow; ++x) {
          const std::size_t a = y % r, s = x % r;
          const std::size_t src = ((b * c * r * r + ch * r * r + a * r + s) * h + y / r) * w + x / r;
          const std::size_t dst = ((b * c + ch) * oh + y) * ow + x;
          visit(dst, src);
        }
}

}  // namespace

Tensor pixel_shuffle(Tape& tape, const Tensor& input, std::size_t factor) {
  require_rank(input, 4, "pixel_shuffle");
  const std::size_t rr = factor * factor;
  if (factor < 1 || input.dim(1) % rr != 0) {
    throw ShapeError("pixel_shuffle: channel count " + std::to_string(input.dim(1)) +
                     " not divisible by " + std::to_string(rr));
  }
  const std::size_t n = input.dim(0), c = input.dim(1) / rr, h = input.dim(2), w = input.dim(3);
  Tensor out({n, c, h * factor, w * factor});
  auto x = input.data();
  auto y = out.data();
  for_each_shuffle(n, c, h, w, factor, [&](std::size_t dst, std::size_t src) { y[dst] = x[src]; });
  if (tape.wants({&input})) {
    tape.record("pixel_shuffle", {input}, out, [input, out, n, c, h, w, factor]() mutable {
      auto gx = input.grad();
      auto gy = out.grad();
      for_each_shuffle(n, c, h, w, factor,
                       [&](std::size_t dst, std::size_t src) { gx[src] += gy[dst]; });
    });
  }
  return out;
}

Tensor pixel_unshuffle(Tape& tape, const Tensor& input, std::size_t factor) {
  require_rank(input, 4, "pixel_unshuffle");
  if (factor < 1 || input.dim(2) % factor != 0 || input.dim(3) % factor != 0) {
    throw ShapeError("pixel_unshuffle: spatial dims of " + shape_str(input.shape()) +
                     " not divisible by " + std::to_string(factor));
  }
  const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2) / factor,
                    w = input.dim(3) / factor;
  Tensor out({n, c * factor * factor, h, w});
  auto x = input.data();
  auto y = out.data();
  for_each_shuffle(n, c, h, w, factor, [&](std::size_t dst, std::size_t src) { y[src] = x[dst]; });
  if (tape.wants({&input})) {
    tape.record("pixel_unshuffle", {input}, out, [input, out, n, c, h, w, factor]() mutable {
      auto gx = input.grad();
      auto gy = out.grad();
      for_each_shuffle(n, c, h, w, factor,
                       [&](std::size_t dst, std::size_t src) { gx[dst] += gy[src]; });
    });
  }
  return out;
}

Tensor dense(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias) {
  require_rank(input, 2, "dense");
  require_rank(weight, 2, "dense weight");
  const std::size_t n = input.dim(0), k = input.dim(1), m = weight.dim(0);
  if (weight.dim(1) != k) {
    throw ShapeError("dense: input " + shape_str(input.shape()) + " incompatible with weight " +
                     shape_str(weight.shape()));
  }
  if (bias.defined() && bias.numel() != m) {
    throw ShapeError("dense: bias " + shape_str(bias.shape()) + " does not match " +
                     std::to_string(m) + " outputs");
  }
  const auto N = static_cast<Eigen::Index>(n), K = static_cast<Eigen::Index>(k),
             M = static_cast<Eigen::Index>(m);
  Tensor out({n, m});
  MatMap y(out.data().data(), N, M);
  y.noalias() = ConstMatMap(input.data().data(), N, K) *
                ConstMatMap(weight.data().data(), M, K).transpose();
  if (bias.defined()) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) out[i * m + j] += bias[j];
  }
  if (tape.wants({&input, &weight, &bias})) {
    tape.record("dense", {input, weight, bias}, out, [input, weight, bias, out, N, K, M]() mutable {
      ConstMatMap dy(out.grad().data(), N, M);
      if (input.requires_grad()) {
        MatMap(input.grad().data(), N, K).noalias() +=
            dy * ConstMatMap(weight.data().data(), M, K);
      }
      if (weight.requires_grad()) {
        MatMap(weight.grad().data(), M, K).noalias() +=
            dy.transpose() * ConstMatMap(input.data().data(), N, K);
      }
      if (bias.defined() && bias.requires_grad()) {
        auto gb = bias.grad();
        for (Eigen::Index i = 0; i < N; ++i)
          for (Eigen::Index j = 0; j < M; ++j) gb[static_cast<std::size_t>(j)] += dy(i, j);
      }
    });
  }
  return out;
}

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] + b[i];
  if (tape.wants({&a, &b})) {
    tape.record("add", {a, b}, out, [a, b, out]() mutable {
      auto gy = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i];
      }
    });
  }
  return out;
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] - b[i];
  if (tape.wants({&a, &b})) {
    tape.record("sub", {a, b}, out, [a, b, out]() mutable {
      auto gy = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] -= gy[i];
      }
    });
  }
  return out;
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a[i] * b[i];
  if (tape.wants({&a, &b})) {
    tape.record("mul", {a, b}, out, [a, b, out]() mutable {
      auto gy = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i] * b[i];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < gy.size(); ++i) gb[i] += gy[i] * a[i];
      }
    });
  }
  return out;
}

Tensor scale(Tape& tape, const Tensor& a, double factor) {
  return unary(
      tape, a, "scale", [factor](double v) { return factor * v; },
      [factor](double, double) { return factor; });
}

Tensor add_scalar(Tape& tape, const Tensor& a, double value) {
  return unary(
      tape, a, "add_scalar", [value](double v) { return v + value; },
      [](double, double) { return 1.0; });
}

Tensor sum(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  Tensor out = Tensor::scalar(s);
  if (tape.wants({&a})) {
    tape.record("sum", {a}, out, [a, out]() mutable {
      const double g = out.grad()[0];
      for (double& v : a.grad()) v += g;
    });
  }
  return out;
}

Tensor mean(Tape& tape, const Tensor& a) {
  double s = 0.0;
  for (double v : a.data()) s += v;
  const double n = static_cast<double>(a.numel());
  Tensor out = Tensor::scalar(s / n);
  if (tape.wants({&a})) {
    tape.record("mean", {a}, out, [a, out, n]() mutable {
      const double g = out.grad()[0] / n;
      for (double& v : a.grad()) v += g;
    });
  }
  return out;
}

Tensor flatten(Tape& tape, const Tensor& a) {
  if (a.rank() < 1) throw ShapeError("flatten: scalar input");
  const std::size_t n = a.dim(0);
  Tensor out = a.reshaped({n, a.numel() / n});
  if (tape.wants({&a})) {
    tape.record("flatten", {a}, out, [a, out]() mutable {
      auto ga = a.grad();
      auto gy = out.grad();
      for (std::size_t i = 0; i < gy.size(); ++i) ga[i] += gy[i];
    });
  }
  return out;
}

Tensor crop2d(Tape& tape, const Tensor& a, std::size_t row0, std::size_t col0, std::size_t height,
              std::size_t width) {
  require_rank(a, 4, "crop2d");
  const std::size_t n = a.dim(0), c = a.dim(1), h = a.dim(2), w = a.dim(3);
  if (height == 0 || width == 0 || row0 + height > h || col0 + width > w) {
    throw ShapeError("crop2d: window (" + std::to_string(row0) + "," + std::to_string(col0) + ")+" +
                     std::to_string(height) + "x" + std::to_string(width) + " outside " +
                     shape_str(a.shape()));
  }
  Tensor out({n, c, height, width});
  for (std::size_t p = 0; p < n * c; ++p)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x)
        out[(p * height + y) * width + x] = a[(p * h + row0 + y) * w + col0 + x];
  if (tape.wants({&a})) {
    tape.record("crop2d", {a}, out, [a, out, n, c, h, w, row0, col0, height, width]() mutable {
      auto ga = a.grad();
      auto gy = out.grad();
      for (std::size_t p = 0; p < n * c; ++p)
        for (std::size_t y = 0; y < height; ++y)
          for (std::size_t x = 0; x < width; ++x)
            ga[(p * h + row0 + y) * w + col0 + x] += gy[(p * height + y) * width + x];
    });
  }
  return out;
}

Tensor global_avg_pool(Tape& tape, const Tensor& a) {
  require_rank(a, 4, "global_avg_pool");
  const std::size_t n = a.dim(0), c = a.dim(1), hw = a.dim(2) * a.dim(3);
  Tensor out({n, c});
  for (std::size_t p = 0; p < n * c; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += a[p * hw + i];
    out[p] = s / static_cast<double>(hw);
  }
  if (tape.wants({&a})) {
    tape.record("global_avg_pool", {a}, out, [a, out, n, c, hw]() mutable {
      auto ga = a.grad();
      auto gy = out.grad();
      for (std::size_t p = 0; p < n * c; ++p) {
        const double g = gy[p] / static_cast<double>(hw);
        for (std::size_t i = 0; i < hw; ++i) ga[p * hw + i] += g;
      }
    });
  }
  return out;
}

Tensor spatial_softargmax(Tape& tape, const Tensor& a) {
  require_rank(a, 4, "spatial_softargmax");
  if (a.dim(1) != 1) throw ShapeError("spatial_softargmax: expected one channel, got " + shape_str(a.shape()));
  const std::size_t n = a.dim(0), h = a.dim(2), w = a.dim(3), hw = h * w;
  auto probs = std::make_shared<std::vector<double>>(a.numel());
  auto xs = std::make_shared<std::vector<double>>(hw);
  auto ys = std::make_shared<std::vector<double>>(hw);
  for (std::size_t i = 0; i < hw; ++i) {
    (*xs)[i] = (static_cast<double>(i % w) + 0.5) / static_cast<double>(w);
    (*ys)[i] = (static_cast<double>(i / w) + 0.5) / static_cast<double>(h);
  }
  Tensor out({n, 2});
  for (std::size_t b = 0; b < n; ++b) {
    const double* logits = a.data().data() + b * hw;
    double* p = probs->data() + b * hw;
    const double peak = *std::max_element(logits, logits + hw);
    double z = 0.0;
    for (std::size_t i = 0; i < hw; ++i) z += (p[i] = std::exp(logits[i] - peak));
    double cx = 0.0, cy = 0.0;
    for (std::size_t i = 0; i < hw; ++i) {
      p[i] /= z;
      cx += p[i] * (*xs)[i];
      cy += p[i] * (*ys)[i];
    }
    out[b * 2] = cx;
    out[b * 2 + 1] = cy;
  }
  if (tape.wants({&a})) {
    tape.record("spatial_softargmax", {a}, out, [a, out, probs, xs, ys, n, hw]() mutable {
      auto ga = a.grad();
      auto gy = out.grad();
      for (std::size_t b = 0; b < n; ++b) {
        const double* p = probs->data() + b * hw;
        const double cx = out[b * 2], cy = out[b * 2 + 1];
        const double gx = gy[b * 2], gyy = gy[b * 2 + 1];
        for (std::size_t i = 0; i < hw; ++i) {
          ga[b * hw + i] += p[i] * (gx * ((*xs)[i] - cx) + gyy * ((*ys)[i] - cy));
        }
      }
    });
  }
  return out;
}

Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b) {
  require_rank(a, 2, "concat_cols");
  require_rank(b, 2, "concat_cols");
  if (a.dim(0) != b.dim(0)) {
    throw ShapeError("concat_cols: row mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0), p = a.dim(1), q = b.dim(1);
  Tensor out({n, p + q});
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < p; ++j) out[i * (p + q) + j] = a[i * p + j];
    for (std::size_t j = 0; j < q; ++j) out[i * (p + q) + p + j] = b[i * q + j];
  }
  if (tape.wants({&a, &b})) {
    tape.record("concat_cols", {a, b}, out, [a, b, out, n, p, q]() mutable {
      auto gy = out.grad();
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < p; ++j) ga[i * p + j] += gy[i * (p + q) + j];
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t j = 0; j < q; ++j) gb[i * q + j] += gy[i * (p + q) + p + j];
      }
    });
  }
  return out;
}

Tensor mse_loss(Tape& tape, const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mse_loss");
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  Tensor out = Tensor::scalar(s / n);
  if (tape.wants({&a, &b})) {
    tape.record("mse_loss", {a, b}, out, [a, b, out, n]() mutable {
      const double g = 2.0 * out.grad()[0] / n;
      if (a.requires_grad()) {
        auto ga = a.grad();
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * (a[i] - b[i]);
      }
      if (b.requires_grad()) {
        auto gb = b.grad();
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g * (a[i] - b[i]);
      }
    });
  }
  return out;
}

}  // namespace lfsr::ops
