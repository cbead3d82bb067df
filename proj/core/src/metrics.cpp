#include "lfsr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "lfsr/error.hpp"

namespace lfsr {
namespace {

void require_pair(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

// Separable valid-mode filtering of an H x W image with a 1-D kernel.
std::vector<double> filter_valid(const std::vector<double>& img, std::size_t h, std::size_t w,
                                 const std::vector<double>& k) {
  const std::size_t n = k.size(), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> tmp(h * ow, 0.0);
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += k[j] * img[r * w + c + j];
      tmp[r * ow + c] = s;
    }
  std::vector<double> out(oh * ow, 0.0);
  for (std::size_t r = 0; r < oh; ++r)
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += k[i] * tmp[(r + i) * ow + c];
      out[r * ow + c] = s;
    }
  return out;
}

}  // namespace

double psnr(const Tensor& pred, const Tensor& ref, double data_range) {
  require_pair(pred, ref, "psnr");
  if (!(data_range > 0.0)) throw ShapeError("psnr: data_range must be > 0");
  double se = 0.0;
  for (std::size_t i = 0; i < pred.numel(); ++i) se += (pred[i] - ref[i]) * (pred[i] - ref[i]);
  const double mse = se / static_cast<double>(pred.numel());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(data_range * data_range / mse);
}

std::vector<double> gaussian_window(std::size_t size, double sigma) {
  std::vector<double> k(size);
  const double centre = (static_cast<double>(size) - 1.0) / 2.0;
  double s = 0.0;
  for (std::size_t i = 0; i < size; ++i) {
    const double d = static_cast<double>(i) - centre;
    s += (k[i] = std::exp(-d * d / (2.0 * sigma * sigma)));
  }
  for (double& v : k) v /= s;
  return k;
}

double ssim(const Tensor& pred, const Tensor& ref, double data_range, const SsimOptions& opts) {
  require_pair(pred, ref, "ssim");
  if (pred.rank() != 2) throw ShapeError("ssim: expected 2-D images");
  const std::size_t h = pred.dim(0), w = pred.dim(1), n = opts.window;
  if (h < n || w < n) {
    throw ShapeError("ssim: image " + shape_str(pred.shape()) + " smaller than the " +
                     std::to_string(n) + "x" + std::to_string(n) + " window");
  }
  const std::vector<double> k = gaussian_window(n, opts.gaussian_sigma);
  const std::vector<double> x(pred.data().begin(), pred.data().end());
  const std::vector<double> y(ref.data().begin(), ref.data().end());
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto mx = filter_valid(x, h, w, k), my = filter_valid(y, h, w, k);
  const auto sxx = filter_valid(xx, h, w, k), syy = filter_valid(yy, h, w, k),
             sxy = filter_valid(xy, h, w, k);
  const double c1 = (opts.k1 * data_range) * (opts.k1 * data_range);
  const double c2 = (opts.k2 * data_range) * (opts.k2 * data_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    total += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
             ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return total / static_cast<double>(mx.size());
}

BoundingBox BoundingBox::clamped(int rows, int cols) const {
  const int r0 = std::clamp(row0, 0, rows), c0 = std::clamp(col0, 0, cols);
  const int r1 = std::clamp(row0 + height, 0, rows), c1 = std::clamp(col0 + width, 0, cols);
  return BoundingBox{r0, c0, std::max(0, r1 - r0), std::max(0, c1 - c0)};
}

double coverage(const BoundingBox& box, const Tensor& mask) {
  if (mask.rank() != 2) throw ShapeError("coverage: mask must be 2-D");
  const std::size_t h = mask.dim(0), w = mask.dim(1);
  std::size_t total = 0, inside = 0;
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) {
      if (mask.at(r, c) <= 0.5) continue;
      ++total;
      if (box.contains(static_cast<int>(r), static_cast<int>(c))) ++inside;
    }
  if (total == 0) throw DataError("coverage: lesion mask is empty");
  return static_cast<double>(inside) / static_cast<double>(total);
}

const char* grade_name(DetectionGrade g) {
  switch (g) {
    case DetectionGrade::Perfect: return "perfect";
    case DetectionGrade::Acceptable: return "acceptable";
    case DetectionGrade::Miss: return "miss";
  }
  return "?";
}

DetectionGrade detection_grade(double cov) {
  if (!(cov >= 0.0 && cov <= 1.0)) {
    throw ShapeError("detection_grade: coverage " + std::to_string(cov) + " outside [0,1]");
  }
  if (cov >= 1.0 - 1e-12) return DetectionGrade::Perfect;
  if (cov >= 0.95) return DetectionGrade::Acceptable;
  return DetectionGrade::Miss;
}

MetricReport aggregate(const std::string& method, std::size_t scale, double sigma,
                       std::span<const SampleMetrics> results) {
  if (results.empty()) throw DataError("aggregate: no per-sample metrics for " + method);
  MetricReport r;
  r.method = method;
  r.scale = scale;
  r.sigma = sigma;
  r.samples = results.size();
  double psnr_sum = 0.0, ssim_sum = 0.0;
  for (const auto& s : results) {
    if (std::isinf(s.psnr)) {
      ++r.infinite_psnr;
    } else {
      psnr_sum += s.psnr;
    }
    ssim_sum += s.ssim;
    switch (s.grade) {
      case DetectionGrade::Perfect: ++r.perfect; break;
      case DetectionGrade::Acceptable: ++r.acceptable; break;
      case DetectionGrade::Miss: ++r.miss; break;
    }
  }
  const std::size_t finite = r.samples - r.infinite_psnr;
  r.psnr_mean = finite > 0 ? psnr_sum / static_cast<double>(finite)
                           : std::numeric_limits<double>::infinity();
  r.ssim_mean = ssim_sum / static_cast<double>(r.samples);
  return r;
}

std::string format_report_table(std::span<const MetricReport> reports) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-10s %5s %6s %9s %7s %8s %11s %5s\n", "method", "scale",
                "sigma", "psnr", "ssim", "perfect", "acceptable", "miss");
  out += line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-10s %5zu %6.1f %9.4f %7.4f %8zu %11zu %5zu\n",
                  r.method.c_str(), r.scale, r.sigma, r.psnr_mean, r.ssim_mean, r.perfect,
                  r.acceptable, r.miss);
    out += line;
  }
  return out;
}

}  // namespace lfsr
