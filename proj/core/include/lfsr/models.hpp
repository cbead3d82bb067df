#pragma once

#include <cstdint>

#include "lfsr/metrics.hpp"
#include "lfsr/network.hpp"

namespace lfsr {

// Lesion detector: stem conv-BN-ReLU, then per stage two residual blocks
// (conv-BN-ReLU-conv-BN + skip) and a 2x max pool, then the ROI head.
// Output [N,4] = (cx, cy, h, w), each in [0,1].
NetworkSpec build_ld(std::size_t base_channels = 32, std::size_t n_stages = 3, std::uint64_t seed = 0);

// Generator: conv9-PReLU stem, n_res residual blocks, conv-BN + long skip,
// log2(scale) sub-pixel stages, conv9 to one channel.
NetworkSpec build_srresnet(std::size_t n_res = 16, std::size_t scale = 2, std::size_t channels = 64,
                           std::uint64_t seed = 0);

// Strided conv-LeakyReLU stack halving four times, dense, sigmoid.
// Accepts only input_size x input_size images.
NetworkSpec build_discriminator(std::size_t input_size, std::size_t channels = 32, std::uint64_t seed = 0);

// Frozen random-feature stand-in for the perceptual network:
// 4 x [conv3 stride 2, ReLU], channels base, 2*base, 4*base, 8*base.
NetworkSpec build_perceptual(std::uint64_t seed = 0, std::size_t base_channels = 8);

// Normalized lesion box. All fields in [0,1].
struct RoiPrediction {
  double cx = 0.5;
  double cy = 0.5;
  double h = 0.0;
  double w = 0.0;

  // Box in pixel coordinates of a rows x cols image, clamped to the image.
  BoundingBox decode(std::size_t rows, std::size_t cols) const;
};

// Target encoding of a pixel box, enlarged by `margin` about its centre and
// clipped to [0,1].
RoiPrediction roi_from_box(const BoundingBox& box, std::size_t rows, std::size_t cols, double margin = 1.25);

// Runs the detector on one LR image (2-D) in Eval mode.
RoiPrediction predict_roi(NetworkSpec& ld, const Tensor& image_lr);

// out_size x out_size window on the lr_rows x lr_cols grid centred on the ROI
// centre and shifted to stay inside, returned multiplied by `scale`.
// Throws ShapeError if out_size exceeds the LR image.
BoundingBox roi_window(const RoiPrediction& roi, std::size_t lr_rows, std::size_t lr_cols,
                       std::size_t out_size, std::size_t scale = 1);

// Crop of `image` (2-D, `scale` times the LR grid) over roi_window. Crops of
// an LR image (scale 1) and its HR image correspond pixel for pixel.
Tensor crop_roi(const Tensor& image, const RoiPrediction& roi, std::size_t out_size, std::size_t scale = 1);

Tensor crop_box(const Tensor& image, const BoundingBox& box);

// [H,W] <-> [1,1,H,W].
Tensor as_batch(const Tensor& image);
Tensor as_image(const Tensor& batch, std::size_t index = 0);

// Stacks equally sized 2-D images into [N,1,H,W].
Tensor stack_images(const std::vector<Tensor>& images);

// Single-image generator inference in Eval mode.
Tensor super_resolve(NetworkSpec& generator, const Tensor& lr);

}  // namespace lfsr
