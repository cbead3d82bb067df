#include "lfsr/degradation.hpp"

#include <cmath>
#include <numbers>

#include "lfsr/error.hpp"

namespace lfsr {

double KSpaceGrid::energy() const {
  double e = 0.0;
  for (std::size_t i = 0; i < re.size(); ++i) e += re[i] * re[i] + im[i] * im[i];
  return e;
}

bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

void fft1d(double* re, double* im, std::size_t n, std::size_t stride, bool inverse) {
  if (n <= 1) return;
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i * stride], re[j * stride]);
      std::swap(im[i * stride], im[j * stride]);
    }
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const double angle = sign * 2.0 * std::numbers::pi * static_cast<double>(k) /
                           static_cast<double>(len);
      const double wr = std::cos(angle), wi = std::sin(angle);
      for (std::size_t start = 0; start < n; start += len) {
        const std::size_t a = (start + k) * stride, b = (start + k + half) * stride;
        const double tr = re[b] * wr - im[b] * wi;
        const double ti = re[b] * wi + im[b] * wr;
        re[b] = re[a] - tr;
        im[b] = im[a] - ti;
        re[a] += tr;
        im[a] += ti;
      }
    }
  }
}

namespace {

void transform2d(KSpaceGrid& g, bool inverse) {
  for (std::size_t r = 0; r < g.height; ++r) {
    fft1d(g.re.data() + r * g.width, g.im.data() + r * g.width, g.width, 1, inverse);
  }
  for (std::size_t c = 0; c < g.width; ++c) {
    fft1d(g.re.data() + c, g.im.data() + c, g.height, g.width, inverse);
  }
  const double s = 1.0 / std::sqrt(static_cast<double>(g.height * g.width));
  for (std::size_t i = 0; i < g.re.size(); ++i) {
    g.re[i] *= s;
    g.im[i] *= s;
  }
}

void require_image(const Tensor& image, const char* op) {
  if (!image.defined() || image.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a 2-D image");
  }
}

KSpaceGrid inverse_copy(const KSpaceGrid& k) {
  if (k.re.size() != k.height * k.width || k.im.size() != k.height * k.width) {
    throw ShapeError("ifft2: k-space arrays do not match " + std::to_string(k.height) + "x" +
                     std::to_string(k.width));
  }
  if (!is_power_of_two(k.height) || !is_power_of_two(k.width)) {
    throw ShapeError("ifft2: dims must be powers of two");
  }
  KSpaceGrid g = k;
  transform2d(g, true);
  return g;
}

// Fine-grid indices that alias onto coarse frequency index `u` of a length-n
// coarse axis embedded in a length-N fine axis.
struct Alias {
  std::size_t idx[2];
  std::size_t count;
};

Alias alias_of(std::size_t u, std::size_t n, std::size_t fine) {
  // Signed frequency; for even n the index n/2 is the Nyquist bin -n/2.
  const auto f = static_cast<std::ptrdiff_t>(u) -
                 (u >= (n + 1) / 2 ? static_cast<std::ptrdiff_t>(n) : 0);
  auto wrap = [fine](std::ptrdiff_t v) {
    return static_cast<std::size_t>((v % static_cast<std::ptrdiff_t>(fine) +
                                     static_cast<std::ptrdiff_t>(fine)) %
                                    static_cast<std::ptrdiff_t>(fine));
  };
  if (n % 2 == 0 && n > 1 && f == -static_cast<std::ptrdiff_t>(n / 2) && fine > n) {
    return Alias{{wrap(f), wrap(-f)}, 2};
  }
  return Alias{{wrap(f), 0}, 1};
}

}  // namespace

KSpaceGrid fft2(const Tensor& image) {
  require_image(image, "fft2");
  const std::size_t h = image.dim(0), w = image.dim(1);
  if (!is_power_of_two(h) || !is_power_of_two(w)) {
    throw ShapeError("fft2: image dims " + shape_str(image.shape()) + " must be powers of two");
  }
  KSpaceGrid g(h, w);
  auto src = image.data();
  std::copy(src.begin(), src.end(), g.re.begin());
  transform2d(g, false);
  return g;
}

Tensor ifft2(const KSpaceGrid& k) {
  KSpaceGrid g = inverse_copy(k);
  return Tensor({k.height, k.width}, std::move(g.re));
}

Tensor ifft2_imag(const KSpaceGrid& k) {
  KSpaceGrid g = inverse_copy(k);
  return Tensor({k.height, k.width}, std::move(g.im));
}

KSpaceGrid kspace_downsample(const KSpaceGrid& k, std::size_t scale) {
  if (scale < 1 || k.height % scale != 0 || k.width % scale != 0) {
    throw ShapeError("kspace_downsample: " + std::to_string(k.height) + "x" +
                     std::to_string(k.width) + " not divisible by scale " + std::to_string(scale));
  }
  const std::size_t h = k.height / scale, w = k.width / scale;
  KSpaceGrid out(h, w);
  const double s = 1.0 / static_cast<double>(scale);
  for (std::size_t u = 0; u < h; ++u) {
    const Alias rows = alias_of(u, h, k.height);
    for (std::size_t v = 0; v < w; ++v) {
      const Alias cols = alias_of(v, w, k.width);
      double re = 0.0, im = 0.0;
      for (std::size_t a = 0; a < rows.count; ++a) {
        for (std::size_t b = 0; b < cols.count; ++b) {
          const std::size_t idx = rows.idx[a] * k.width + cols.idx[b];
          re += k.re[idx];
          im += k.im[idx];
        }
      }
      const double weight = s / static_cast<double>(rows.count * cols.count);
      out.re[u * w + v] = re * weight;
      out.im[u * w + v] = im * weight;
    }
  }
  return out;
}

KSpaceGrid kspace_upsample(const KSpaceGrid& k, std::size_t scale) {
  if (scale < 1) throw ShapeError("kspace_upsample: scale must be >= 1");
  const std::size_t H = k.height * scale, W = k.width * scale;
  KSpaceGrid out(H, W);
  const double s = static_cast<double>(scale);
  for (std::size_t u = 0; u < k.height; ++u) {
    const Alias rows = alias_of(u, k.height, H);
    for (std::size_t v = 0; v < k.width; ++v) {
      const Alias cols = alias_of(v, k.width, W);
      const double weight = s / static_cast<double>(rows.count * cols.count);
      for (std::size_t a = 0; a < rows.count; ++a) {
        for (std::size_t b = 0; b < cols.count; ++b) {
          const std::size_t idx = rows.idx[a] * W + cols.idx[b];
          out.re[idx] += k.re[u * k.width + v] * weight;
          out.im[idx] += k.im[u * k.width + v] * weight;
        }
      }
    }
  }
  return out;
}

double kspace_noise_std(double sigma, double data_range) {
  return sigma / 255.0 * data_range / std::numbers::sqrt2;
}

KSpaceGrid add_kspace_awgn(const KSpaceGrid& k, double sigma, double data_range, Rng& rng,
                           NoiseModel model) {
  if (!(sigma >= 0.0)) throw ShapeError("add_kspace_awgn: sigma must be >= 0");
  KSpaceGrid out = k;
  if (sigma == 0.0) return out;
  const double per_component = kspace_noise_std(sigma, data_range);
  if (model == NoiseModel::Independent) {
    for (std::size_t i = 0; i < out.re.size(); ++i) {
      out.re[i] += rng.normal() * per_component;
      out.im[i] += rng.normal() * per_component;
    }
    return out;
  }
  // The orthonormal transform of real white noise with std sqrt(2)*sigma' is
  // exactly conjugate-symmetric complex noise with sigma' per component.
  Tensor field({k.height, k.width});
  const double spatial = per_component * std::numbers::sqrt2;
  for (double& v : field.data()) v = rng.normal() * spatial;
  const KSpaceGrid noise = fft2(field);
  for (std::size_t i = 0; i < out.re.size(); ++i) {
    out.re[i] += noise.re[i];
    out.im[i] += noise.im[i];
  }
  return out;
}

Normalized normalize(const Tensor& image) {
  const double n = static_cast<double>(image.numel());
  double s = 0.0;
  for (double v : image.data()) s += v;
  const double mu = s / n;
  double ss = 0.0;
  for (double v : image.data()) ss += (v - mu) * (v - mu);
  const double sd = std::sqrt(ss / n);
  if (!(sd > 1e-12)) throw ShapeError("normalize: image is (near-)constant, std = " + std::to_string(sd));
  Tensor out(image.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (image[i] - mu) / sd;
  return {out, mu, sd};
}

Tensor denormalize(const Tensor& image, double mean, double std) {
  Tensor out(image.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = image[i] * std + mean;
  return out;
}

void DegradeConfig::validate() const {
  if (scale != 2 && scale != 4) throw ShapeError("degrade: scale must be 2 or 4, got " + std::to_string(scale));
  if (!(sigma >= 0.0)) throw ShapeError("degrade: sigma must be >= 0");
  if (!(data_range > 0.0)) throw ShapeError("degrade: data_range must be > 0");
}

namespace {

Tensor box_decimate(const Tensor& hr, std::size_t s) {
  const std::size_t h = hr.dim(0) / s, w = hr.dim(1) / s;
  Tensor out({h, w});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      double acc = 0.0;
      for (std::size_t a = 0; a < s; ++a)
        for (std::size_t b = 0; b < s; ++b) acc += hr.at(r * s + a, c * s + b);
      out.at(r, c) = acc / static_cast<double>(s * s);
    }
  return out;
}

}  // namespace

Tensor degrade(const Tensor& hr, const DegradeConfig& cfg, Rng& rng) {
  cfg.validate();
  require_image(hr, "degrade");
  if (hr.dim(0) % cfg.scale != 0 || hr.dim(1) % cfg.scale != 0) {
    throw ShapeError("degrade: image " + shape_str(hr.shape()) + " not divisible by scale " +
                     std::to_string(cfg.scale));
  }
  if (cfg.method == DownsampleMethod::SpatialDecimation) {
    const KSpaceGrid k = fft2(box_decimate(hr, cfg.scale));
    return ifft2(add_kspace_awgn(k, cfg.sigma, cfg.data_range, rng, cfg.noise));
  }
  KSpaceGrid k = fft2(hr);
  if (cfg.order == NoiseOrder::BeforeTruncation) {
    k = add_kspace_awgn(k, cfg.sigma, cfg.data_range, rng, cfg.noise);
    return ifft2(kspace_downsample(k, cfg.scale));
  }
  k = kspace_downsample(k, cfg.scale);
  return ifft2(add_kspace_awgn(k, cfg.sigma, cfg.data_range, rng, cfg.noise));
}

Tensor degrade(const Tensor& hr, const DegradeConfig& cfg, std::uint64_t sample_id) {
  Rng rng = Rng(cfg.seed).split("degrade").split(sample_id);
  return degrade(hr, cfg, rng);
}

}  // namespace lfsr
