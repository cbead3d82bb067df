#pragma once

#include <cstddef>

#include "lfsr/tape.hpp"
#include "lfsr/tensor.hpp"

// Differentiable tensor operations. Every op takes the tape that records it;
// nothing is recorded when the tape is not recording or no input requires
// grad.
namespace lfsr::ops {

enum class Padding { Same, Valid };

// [N,C,H,W] x [F,C,kh,kw] -> [N,F,H',W']. `bias` may be undefined.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              std::size_t stride = 1, Padding pad = Padding::Same);

enum class NormMode { Train, Eval };

struct BatchNormOptions {
  NormMode mode = NormMode::Train;
  double momentum = 0.9;
  double eps = 1e-5;
};

// Per-channel normalization of [N,C,H,W]. In Train mode the running
// statistics are updated in place: running = momentum * running +
// (1 - momentum) * batch (unbiased variance).
Tensor batchnorm2d(Tape& tape, const Tensor& input, const Tensor& gamma, const Tensor& beta,
                   Tensor& running_mean, Tensor& running_var, const BatchNormOptions& opts = {});

// `alpha` has one element or one per channel (axis 1).
Tensor prelu(Tape& tape, const Tensor& input, const Tensor& alpha);
Tensor relu(Tape& tape, const Tensor& input);
Tensor leaky_relu(Tape& tape, const Tensor& input, double slope = 0.2);
Tensor sigmoid(Tape& tape, const Tensor& input);
Tensor tanh(Tape& tape, const Tensor& input);

// Window maximum; gradient goes to the first row-major argmax of each window.
Tensor maxpool2d(Tape& tape, const Tensor& input, std::size_t kernel = 2, std::size_t stride = 2);

// [N, C*r*r, H, W] -> [N, C, H*r, W*r]
Tensor pixel_shuffle(Tape& tape, const Tensor& input, std::size_t factor);
// [N, C, H*r, W*r] -> [N, C*r*r, H, W]
Tensor pixel_unshuffle(Tape& tape, const Tensor& input, std::size_t factor);

// [N,K] x [M,K] -> [N,M]. `bias` may be undefined.
Tensor dense(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias);

Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape& tape, const Tensor& a, double factor);
Tensor add_scalar(Tape& tape, const Tensor& a, double value);

Tensor sum(Tape& tape, const Tensor& a);
Tensor mean(Tape& tape, const Tensor& a);

// [N, ...] -> [N, prod(...)]
Tensor flatten(Tape& tape, const Tensor& a);
// Spatial window of [N,C,H,W].
Tensor crop2d(Tape& tape, const Tensor& a, std::size_t row0, std::size_t col0, std::size_t height,
              std::size_t width);
// [N,C,H,W] -> [N,C]
Tensor global_avg_pool(Tape& tape, const Tensor& a);
// [N,1,H,W] -> [N,2]: softmax-weighted mean pixel-centre position (x, y),
// normalized to [0,1].
Tensor spatial_softargmax(Tape& tape, const Tensor& a);
// [N,p] ++ [N,q] -> [N,p+q]
Tensor concat_cols(Tape& tape, const Tensor& a, const Tensor& b);

Tensor mse_loss(Tape& tape, const Tensor& a, const Tensor& b);

}  // namespace lfsr::ops
