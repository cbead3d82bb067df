#include "lfsr/models.hpp"

#include <algorithm>
#include <cmath>

#include "lfsr/degradation.hpp"
#include "lfsr/error.hpp"

namespace lfsr {

NetworkSpec build_ld(std::size_t base_channels, std::size_t n_stages, std::uint64_t seed) {
  if (base_channels == 0 || n_stages == 0 || n_stages > 6) {
    throw ShapeError("build_ld: need base_channels >= 1 and 1 <= n_stages <= 6");
  }
  NetworkBuilder b("ld", 1, seed);
  b.conv(base_channels, 3).batchnorm().relu();
  for (std::size_t s = 0; s < n_stages; ++s) {
    for (int block = 0; block < 2; ++block) {
      b.save_skip(0).conv(base_channels, 3).batchnorm().relu().conv(base_channels, 3).batchnorm().add_skip(0);
    }
    b.maxpool(2);
  }
  b.roi_head();
  return b.build();
}

NetworkSpec build_srresnet(std::size_t n_res, std::size_t scale, std::size_t channels, std::uint64_t seed) {
  if (scale != 2 && scale != 4) throw ShapeError("build_srresnet: scale must be 2 or 4, got " + std::to_string(scale));
  if (channels == 0) throw ShapeError("build_srresnet: channels must be positive");
  NetworkBuilder b("srresnet", 1, seed);
  b.conv(channels, 9).prelu().save_skip(0);
  for (std::size_t i = 0; i < n_res; ++i) {
    b.save_skip(1).conv(channels, 3).batchnorm().prelu().conv(channels, 3).batchnorm().add_skip(1);
  }
  b.conv(channels, 3).batchnorm().add_skip(0);
  for (std::size_t s = scale; s > 1; s /= 2) b.conv(4 * channels, 3).pixel_shuffle(2).prelu();
  b.conv(1, 9);
  return b.build();
}

NetworkSpec build_discriminator(std::size_t input_size, std::size_t channels, std::uint64_t seed) {
  if (input_size < 16 || input_size % 16 != 0) {
    throw ShapeError("build_discriminator: input size must be a positive multiple of 16, got " +
                     std::to_string(input_size));
  }
  if (channels == 0) throw ShapeError("build_discriminator: channels must be positive");
  NetworkBuilder b("discriminator", 1, seed, input_size);
  b.conv(channels, 3).leaky_relu();
  std::size_t c = channels;
  for (int i = 0; i < 4; ++i) {
    c *= 2;
    b.conv(c, 3, 2).leaky_relu();
  }
  b.flatten().dense(1).sigmoid();
  return b.build();
}

NetworkSpec build_perceptual(std::uint64_t seed, std::size_t base_channels) {
  NetworkBuilder b("perceptual", 1, seed);
  std::size_t c = base_channels;
  for (int i = 0; i < 4; ++i, c *= 2) b.conv(c, 3, 2).relu();
  NetworkSpec net = b.build();
  net.mode = Mode::Eval;
  net.set_frozen(true);
  return net;
}

BoundingBox RoiPrediction::decode(std::size_t rows, std::size_t cols) const {
  const double r = static_cast<double>(rows), c = static_cast<double>(cols);
  const double top = (cy - h / 2.0) * r, bottom = (cy + h / 2.0) * r;
  const double left = (cx - w / 2.0) * c, right = (cx + w / 2.0) * c;
  const int r0 = static_cast<int>(std::floor(top)), r1 = static_cast<int>(std::ceil(bottom));
  const int c0 = static_cast<int>(std::floor(left)), c1 = static_cast<int>(std::ceil(right));
  return BoundingBox{r0, c0, std::max(r1 - r0, 1), std::max(c1 - c0, 1)}.clamped(static_cast<int>(rows),
                                                                                 static_cast<int>(cols));
}

RoiPrediction roi_from_box(const BoundingBox& box, std::size_t rows, std::size_t cols, double margin) {
  const double r = static_cast<double>(rows), c = static_cast<double>(cols);
  RoiPrediction roi;
  roi.cy = (box.row0 + box.height / 2.0) / r;
  roi.cx = (box.col0 + box.width / 2.0) / c;
  roi.h = std::min(1.0, margin * box.height / r);
  roi.w = std::min(1.0, margin * box.width / c);
  return roi;
}

Tensor as_batch(const Tensor& image) {
  if (image.rank() != 2) throw ShapeError("expected a 2-D image, got " + shape_str(image.shape()));
  return image.reshaped({1, 1, image.dim(0), image.dim(1)});
}

Tensor as_image(const Tensor& batch, std::size_t index) {
  if (batch.rank() != 4 || batch.dim(1) != 1 || index >= batch.dim(0)) {
    throw ShapeError("as_image: expected [N,1,H,W] with N > index, got " + shape_str(batch.shape()));
  }
  const std::size_t h = batch.dim(2), w = batch.dim(3);
  Tensor out({h, w});
  std::copy_n(batch.data().begin() + static_cast<std::ptrdiff_t>(index * h * w), h * w, out.data().begin());
  return out;
}

Tensor stack_images(const std::vector<Tensor>& images) {
  if (images.empty()) throw ShapeError("stack_images: no images");
  const Shape shape = images.front().shape();
  if (shape.size() != 2) throw ShapeError("stack_images: expected 2-D images");
  Tensor out({images.size(), 1, shape[0], shape[1]});
  auto dst = out.data().begin();
  for (const auto& img : images) {
    if (img.shape() != shape) throw ShapeError("stack_images: images differ in shape");
    dst = std::copy(img.data().begin(), img.data().end(), dst);
  }
  return out;
}

RoiPrediction predict_roi(NetworkSpec& ld, const Tensor& image_lr) {
  if (image_lr.rank() != 2 || image_lr.dim(0) != image_lr.dim(1) || !is_power_of_two(image_lr.dim(0))) {
    throw ShapeError("predict_roi: expected a square power-of-two image, got " + shape_str(image_lr.shape()));
  }
  const Tensor out = infer(ld, as_batch(image_lr));
  if (out.rank() != 2 || out.dim(1) != 4) throw ShapeError("predict_roi: detector must emit [N,4]");
  return RoiPrediction{out[0], out[1], out[2], out[3]};
}

BoundingBox roi_window(const RoiPrediction& roi, std::size_t lr_rows, std::size_t lr_cols, std::size_t out_size,
                       std::size_t scale) {
  if (out_size == 0 || out_size > lr_rows || out_size > lr_cols) {
    throw ShapeError("crop size " + std::to_string(out_size) + " exceeds the " + std::to_string(lr_rows) + "x" +
                     std::to_string(lr_cols) + " image");
  }
  auto origin = [out_size](double centre, std::size_t extent) {
    const double start = std::round(centre * static_cast<double>(extent) - static_cast<double>(out_size) / 2.0);
    return static_cast<int>(std::clamp(start, 0.0, static_cast<double>(extent - out_size)));
  };
  const int s = static_cast<int>(scale), n = static_cast<int>(out_size);
  return BoundingBox{origin(roi.cy, lr_rows) * s, origin(roi.cx, lr_cols) * s, n * s, n * s};
}

Tensor crop_box(const Tensor& image, const BoundingBox& box) {
  if (image.rank() != 2) throw ShapeError("crop: expected a 2-D image");
  if (box.row0 < 0 || box.col0 < 0 || box.height <= 0 || box.width <= 0 ||
      static_cast<std::size_t>(box.row0 + box.height) > image.dim(0) ||
      static_cast<std::size_t>(box.col0 + box.width) > image.dim(1)) {
    throw ShapeError("crop window lies outside the " + shape_str(image.shape()) + " image");
  }
  const auto h = static_cast<std::size_t>(box.height), w = static_cast<std::size_t>(box.width);
  Tensor out({h, w});
  for (std::size_t r = 0; r < h; ++r)
    for (std::size_t c = 0; c < w; ++c) out.at(r, c) = image.at(box.row0 + r, box.col0 + c);
  return out;
}

Tensor crop_roi(const Tensor& image, const RoiPrediction& roi, std::size_t out_size, std::size_t scale) {
  if (image.rank() != 2) throw ShapeError("crop_roi: expected a 2-D image");
  if (scale == 0 || image.dim(0) % scale || image.dim(1) % scale) {
    throw ShapeError("crop_roi: image size is not a multiple of the scale");
  }
  return crop_box(image, roi_window(roi, image.dim(0) / scale, image.dim(1) / scale, out_size, scale));
}

Tensor super_resolve(NetworkSpec& generator, const Tensor& lr) {
  return as_image(infer(generator, as_batch(lr)));
}

}  // namespace lfsr
