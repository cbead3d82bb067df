#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "lfsr/tensor.hpp"

namespace lfsr {

// PSNR in dB against a fixed peak-to-peak range. Returns +infinity when the
// images are identical.
double psnr(const Tensor& pred, const Tensor& ref, double data_range = 2.0);

struct SsimOptions {
  std::size_t window = 11;
  double gaussian_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
};

// Mean SSIM over all fully contained Gaussian windows of two 2-D images.
double ssim(const Tensor& pred, const Tensor& ref, double data_range = 2.0,
            const SsimOptions& opts = {});

// Normalized 1-D Gaussian taps; the SSIM window is their outer product.
std::vector<double> gaussian_window(std::size_t size, double sigma);

struct BoundingBox {
  int row0 = 0;
  int col0 = 0;
  int height = 0;
  int width = 0;

  bool contains(int r, int c) const {
    return r >= row0 && r < row0 + height && c >= col0 && c < col0 + width;
  }
  // Intersection with [0,rows) x [0,cols).
  BoundingBox clamped(int rows, int cols) const;
  bool operator==(const BoundingBox&) const = default;
};

// Fraction of lesion pixels (mask > 0.5) inside the box. Throws DataError for
// an empty mask.
double coverage(const BoundingBox& box, const Tensor& mask);

enum class DetectionGrade { Perfect, Acceptable, Miss };

const char* grade_name(DetectionGrade g);

// Perfect: lesion fully covered; Acceptable: at least 95% covered.
DetectionGrade detection_grade(double coverage);

struct SampleMetrics {
  double psnr = 0.0;
  double ssim = 0.0;
  DetectionGrade grade = DetectionGrade::Perfect;
};

struct MetricReport {
  std::string method;
  std::size_t scale = 2;
  double sigma = 0.0;
  double psnr_mean = 0.0;
  double ssim_mean = 0.0;
  std::size_t samples = 0;
  // Samples whose PSNR was infinite; excluded from psnr_mean.
  std::size_t infinite_psnr = 0;
  std::size_t perfect = 0;
  std::size_t acceptable = 0;
  std::size_t miss = 0;

  bool operator==(const MetricReport&) const = default;
};

MetricReport aggregate(const std::string& method, std::size_t scale, double sigma,
                       std::span<const SampleMetrics> results);

// Fixed-width table: method, scale, sigma, psnr, ssim, perfect, acceptable, miss.
std::string format_report_table(std::span<const MetricReport> reports);

}  // namespace lfsr
