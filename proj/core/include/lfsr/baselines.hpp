#pragma once

#include <cstddef>
#include <vector>

#include "lfsr/tensor.hpp"

namespace lfsr {

// Half-pixel-centre (align_corners=false) bilinear interpolation of a 2-D
// image with edge clamping.
Tensor bilinear_upsample(const Tensor& lr, std::size_t scale);
Tensor nearest_upsample(const Tensor& lr, std::size_t scale);

struct NlmOptions {
  std::size_t patch = 7;
  std::size_t search = 21;
  // Noise std subtracted from patch distances: w = exp(-max(d2 - 2 sigma^2, 0) / h^2).
  double noise_sigma = 0.0;
};

// Non-local means over a square search window with reflect padding; d2 is
// the mean squared difference between patches.
Tensor nlm_denoise(const Tensor& img, double h, const NlmOptions& opts = {});

// Normalized weights used for one output pixel, row-major over the search
// window.
std::vector<double> nlm_pixel_weights(const Tensor& img, std::size_t row, std::size_t col, double h,
                                      const NlmOptions& opts = {});

enum class BnldOrder { DenoiseThenUpsample, UpsampleThenDenoise };

struct BnldOptions {
  double data_range = 2.0;
  // h = h_factor * (sigma/255) * data_range
  double h_factor = 0.8;
  BnldOrder order = BnldOrder::DenoiseThenUpsample;
  NlmOptions nlm;
};

// Bilinear + non-local-means baseline. With sigma == 0 this is plain
// bilinear interpolation.
Tensor b_nld(const Tensor& lr, std::size_t scale, double sigma, const BnldOptions& opts = {});

}  // namespace lfsr
