#pragma once

#include <cstdint>
#include <vector>

#include "lfsr/rng.hpp"
#include "lfsr/tensor.hpp"

namespace lfsr {

// Complex 2-D spectrum in natural (unshifted) DFT order with orthonormal
// scaling: forward and inverse transforms both carry 1/sqrt(H*W).
struct KSpaceGrid {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> re;
  std::vector<double> im;

  KSpaceGrid() = default;
  KSpaceGrid(std::size_t h, std::size_t w) : height(h), width(w), re(h * w), im(h * w) {}

  double energy() const;
};

// In-place radix-2 transform of a length-n complex sequence with stride.
// `inverse` selects the +i exponent. No scaling is applied.
void fft1d(double* re, double* im, std::size_t n, std::size_t stride, bool inverse);

bool is_power_of_two(std::size_t n);

// Both dims must be powers of two.
KSpaceGrid fft2(const Tensor& image);
// Real part of the inverse transform.
Tensor ifft2(const KSpaceGrid& k);
// Imaginary part of the inverse transform.
Tensor ifft2_imag(const KSpaceGrid& k);

// Keeps the centred (H/scale)x(W/scale) low-frequency block, scaled by 1/scale
// so that constants are preserved. The coarse Nyquist row/column averages the
// two fine bins that alias onto it, which keeps real images real.
KSpaceGrid kspace_downsample(const KSpaceGrid& k, std::size_t scale);

// Zero-pads the spectrum to (H*scale)x(W*scale); ideal sinc interpolation.
// The coarse Nyquist bins are split evenly between the two fine bins.
KSpaceGrid kspace_upsample(const KSpaceGrid& k, std::size_t scale);

enum class NoiseModel {
  // Conjugate-symmetric noise: per-component std sigma' on paired bins, so the
  // inverse transform is real with spatial std (sigma/255)*range.
  Hermitian,
  // Every real and imaginary coefficient gets an independent N(0, sigma'^2).
  Independent,
};

// sigma' = (sigma/255) * data_range / sqrt(2).
double kspace_noise_std(double sigma, double data_range);

KSpaceGrid add_kspace_awgn(const KSpaceGrid& k, double sigma, double data_range, Rng& rng,
                           NoiseModel model = NoiseModel::Hermitian);

struct Normalized {
  Tensor image;
  double mean = 0.0;
  double std = 1.0;
};

// Zero-mean, unit-variance (population) rescaling.
Normalized normalize(const Tensor& image);
Tensor denormalize(const Tensor& image, double mean, double std);

enum class DownsampleMethod { KSpaceTruncation, SpatialDecimation };
enum class NoiseOrder { AfterTruncation, BeforeTruncation };

struct DegradeConfig {
  std::size_t scale = 2;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  double data_range = 2.0;
  DownsampleMethod method = DownsampleMethod::KSpaceTruncation;
  NoiseOrder order = NoiseOrder::AfterTruncation;
  NoiseModel noise = NoiseModel::Hermitian;

  void validate() const;
};

// Simulated low-resolution acquisition of a 2-D HR image.
Tensor degrade(const Tensor& hr, const DegradeConfig& cfg, Rng& rng);
// Uses the stream Rng(cfg.seed).split("degrade").split(sample_id).
Tensor degrade(const Tensor& hr, const DegradeConfig& cfg, std::uint64_t sample_id = 0);

}  // namespace lfsr
