#include "lfsr/baselines.hpp"

#include <algorithm>
#include <cmath>

#include "lfsr/error.hpp"

namespace lfsr {
namespace {

void require_image(const Tensor& t, const char* op) {
  if (!t.defined() || t.rank() != 2) throw ShapeError(std::string(op) + ": expected a 2-D image");
}

// Mirror index without repeating the edge sample (numpy "reflect").
std::ptrdiff_t reflect(std::ptrdiff_t i, std::ptrdiff_t n) {
  if (n == 1) return 0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - i;
}

struct Padded {
  std::vector<double> data;
  std::ptrdiff_t rows, cols, pad;
  double at(std::ptrdiff_t r, std::ptrdiff_t c) const { return data[(r + pad) * cols + c + pad]; }
};

Padded pad_reflect(const Tensor& img, std::size_t pad) {
  const auto h = static_cast<std::ptrdiff_t>(img.dim(0)), w = static_cast<std::ptrdiff_t>(img.dim(1));
  const auto p = static_cast<std::ptrdiff_t>(pad);
  Padded out{std::vector<double>(static_cast<std::size_t>((h + 2 * p) * (w + 2 * p))), h + 2 * p,
             w + 2 * p, p};
  for (std::ptrdiff_t r = 0; r < out.rows; ++r)
    for (std::ptrdiff_t c = 0; c < out.cols; ++c)
      out.data[static_cast<std::size_t>(r * out.cols + c)] =
          img.at(static_cast<std::size_t>(reflect(r - p, h)), static_cast<std::size_t>(reflect(c - p, w)));
  return out;
}

void check_nlm(const Tensor& img, double h, const NlmOptions& opts) {
  require_image(img, "nlm_denoise");
  if (!(h > 0.0)) throw ShapeError("nlm_denoise: h must be > 0");
  if (opts.patch % 2 == 0 || opts.search % 2 == 0) {
    throw ShapeError("nlm_denoise: patch and search sizes must be odd");
  }
  if (img.dim(0) < opts.search || img.dim(1) < opts.search) {
    throw ShapeError("nlm_denoise: image " + shape_str(img.shape()) + " smaller than the " +
                     std::to_string(opts.search) + "x" + std::to_string(opts.search) +
                     " search window");
  }
}

double nlm_weight(double d2, double h, double noise_sigma) {
  return std::exp(-std::max(d2 - 2.0 * noise_sigma * noise_sigma, 0.0) / (h * h));
}

}  // namespace

Tensor bilinear_upsample(const Tensor& lr, std::size_t scale) {
  require_image(lr, "bilinear_upsample");
  if (scale < 1) throw ShapeError("bilinear_upsample: scale must be >= 1");
  const std::size_t h = lr.dim(0), w = lr.dim(1);
  Tensor out({h * scale, w * scale});
  const double s = static_cast<double>(scale);
  auto source = [s](std::size_t i, std::size_t n, std::size_t& i0, std::size_t& i1, double& f) {
    double x = (static_cast<double>(i) + 0.5) / s - 0.5;
    x = std::clamp(x, 0.0, static_cast<double>(n - 1));
    i0 = static_cast<std::size_t>(std::floor(x));
    i1 = std::min(i0 + 1, n - 1);
    f = x - static_cast<double>(i0);
  };
  for (std::size_t r = 0; r < h * scale; ++r) {
    std::size_t r0, r1;
    double fr;
    source(r, h, r0, r1, fr);
    for (std::size_t c = 0; c < w * scale; ++c) {
      std::size_t c0, c1;
      double fc;
      source(c, w, c0, c1, fc);
      const double top = (1.0 - fc) * lr.at(r0, c0) + fc * lr.at(r0, c1);
      const double bottom = (1.0 - fc) * lr.at(r1, c0) + fc * lr.at(r1, c1);
      out.at(r, c) = (1.0 - fr) * top + fr * bottom;
    }
  }
  return out;
}

Tensor nearest_upsample(const Tensor& lr, std::size_t scale) {
  require_image(lr, "nearest_upsample");
  if (scale < 1) throw ShapeError("nearest_upsample: scale must be >= 1");
  Tensor out({lr.dim(0) * scale, lr.dim(1) * scale});
  for (std::size_t r = 0; r < out.dim(0); ++r)
    for (std::size_t c = 0; c < out.dim(1); ++c) out.at(r, c) = lr.at(r / scale, c / scale);
  return out;
}

Tensor nlm_denoise(const Tensor& img, double h, const NlmOptions& opts) {
  check_nlm(img, h, opts);
  const auto rows = static_cast<std::ptrdiff_t>(img.dim(0));
  const auto cols = static_cast<std::ptrdiff_t>(img.dim(1));
  const auto half_patch = static_cast<std::ptrdiff_t>(opts.patch / 2);
  const auto half_search = static_cast<std::ptrdiff_t>(opts.search / 2);
  const Padded padded = pad_reflect(img, opts.patch / 2 + opts.search / 2);
  const double patch_area = static_cast<double>(opts.patch * opts.patch);

  // For each search offset, box-sum the squared difference image with an
  // integral image so every patch distance costs O(1).
  const std::ptrdiff_t er = rows + 2 * half_patch, ec = cols + 2 * half_patch;
  std::vector<double> integral(static_cast<std::size_t>((er + 1) * (ec + 1)));
  std::vector<double> weight_sum(img.numel(), 0.0), value_sum(img.numel(), 0.0);
  for (std::ptrdiff_t dy = -half_search; dy <= half_search; ++dy) {
    for (std::ptrdiff_t dx = -half_search; dx <= half_search; ++dx) {
      for (std::ptrdiff_t r = 0; r < er; ++r) {
        double row_acc = 0.0;
        for (std::ptrdiff_t c = 0; c < ec; ++c) {
          const std::ptrdiff_t y = r - half_patch, x = c - half_patch;
          const double d = padded.at(y, x) - padded.at(y + dy, x + dx);
          row_acc += d * d;
          integral[static_cast<std::size_t>((r + 1) * (ec + 1) + c + 1)] =
              integral[static_cast<std::size_t>(r * (ec + 1) + c + 1)] + row_acc;
        }
      }
      const auto P = static_cast<std::ptrdiff_t>(opts.patch);
      for (std::ptrdiff_t r = 0; r < rows; ++r) {
        for (std::ptrdiff_t c = 0; c < cols; ++c) {
          auto I = [&](std::ptrdiff_t a, std::ptrdiff_t b) {
            return integral[static_cast<std::size_t>(a * (ec + 1) + b)];
          };
          const double ssd = I(r + P, c + P) - I(r, c + P) - I(r + P, c) + I(r, c);
          const double wgt = nlm_weight(ssd / patch_area, h, opts.noise_sigma);
          const auto idx = static_cast<std::size_t>(r * cols + c);
          weight_sum[idx] += wgt;
          value_sum[idx] += wgt * padded.at(r + dy, c + dx);
        }
      }
    }
  }
  Tensor out(img.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = value_sum[i] / weight_sum[i];
  return out;
}

std::vector<double> nlm_pixel_weights(const Tensor& img, std::size_t row, std::size_t col, double h,
                                      const NlmOptions& opts) {
  check_nlm(img, h, opts);
  const Padded padded = pad_reflect(img, opts.patch / 2 + opts.search / 2);
  const auto hp = static_cast<std::ptrdiff_t>(opts.patch / 2);
  const auto hs = static_cast<std::ptrdiff_t>(opts.search / 2);
  const auto r = static_cast<std::ptrdiff_t>(row), c = static_cast<std::ptrdiff_t>(col);
  std::vector<double> weights;
  double total = 0.0;
  for (std::ptrdiff_t dy = -hs; dy <= hs; ++dy)
    for (std::ptrdiff_t dx = -hs; dx <= hs; ++dx) {
      double ssd = 0.0;
      for (std::ptrdiff_t a = -hp; a <= hp; ++a)
        for (std::ptrdiff_t b = -hp; b <= hp; ++b) {
          const double d = padded.at(r + a, c + b) - padded.at(r + dy + a, c + dx + b);
          ssd += d * d;
        }
      const double wgt =
          nlm_weight(ssd / static_cast<double>(opts.patch * opts.patch), h, opts.noise_sigma);
      weights.push_back(wgt);
      total += wgt;
    }
  for (double& v : weights) v /= total;
  return weights;
}

Tensor b_nld(const Tensor& lr, std::size_t scale, double sigma, const BnldOptions& opts) {
  require_image(lr, "b_nld");
  if (!(sigma >= 0.0)) throw ShapeError("b_nld: sigma must be >= 0");
  if (sigma == 0.0) return bilinear_upsample(lr, scale);
  const double noise = sigma / 255.0 * opts.data_range;
  NlmOptions nlm = opts.nlm;
  nlm.noise_sigma = noise;
  const double h = opts.h_factor * noise;
  if (opts.order == BnldOrder::UpsampleThenDenoise) {
    return nlm_denoise(bilinear_upsample(lr, scale), h, nlm);
  }
  return bilinear_upsample(nlm_denoise(lr, h, nlm), scale);
}

}  // namespace lfsr
