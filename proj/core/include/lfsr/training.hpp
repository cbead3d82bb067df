#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lfsr/adam.hpp"
#include "lfsr/baselines.hpp"
#include "lfsr/degradation.hpp"
#include "lfsr/metrics.hpp"
#include "lfsr/models.hpp"
#include "lfsr/network.hpp"
#include "lfsr/phantom.hpp"
#include "lfsr/tensor_io.hpp"

namespace lfsr {

struct LossWeights {
  double w_mse = 1.0;
  double w_vgg = 1.0;
  double w_adv = 1.0;

  // All >= 0 and at least one > 0. Throws std::invalid_argument.
  void validate() const;
};

// Scalar loss tensor plus the detached values of its terms.
struct GeneratorLoss {
  Tensor total;
  double mse = 0.0;
  double vgg = 0.0;
  double adv = 0.0;  // mean D output on SR; enters the total as -w_adv * adv
};

// w_mse * MSE(sr, hr) + w_vgg * MSE(phi(sr), phi(hr)). Terms with weight 0
// are not evaluated.
GeneratorLoss loss_supervised(Tape& tape, const Tensor& sr, const Tensor& hr, NetworkSpec& perceptual,
                              const LossWeights& w);

// loss_supervised - w_adv * mean(d_out_on_sr). d_out_on_sr must lie in (0,1).
GeneratorLoss loss_generator(Tape& tape, const Tensor& sr, const Tensor& hr, const Tensor& d_out_on_sr,
                             NetworkSpec& perceptual, const LossWeights& w);

// 1 - mean(d_hr) - mean(1 - d_sr), in [-1, 1]. Throws DataError for outputs
// outside (0,1).
Tensor loss_discriminator(Tape& tape, const Tensor& d_out_on_hr, const Tensor& d_out_on_sr);

// Fraction of HR outputs > 0.5 and SR outputs < 0.5.
double discriminator_accuracy(const Tensor& d_out_on_hr, const Tensor& d_out_on_sr);

enum class CropMode {
  Random,  // fresh random LR window per sample and epoch
  Roi,     // the pair's fixed ROI window
  Whole,   // entire image
};

const char* crop_mode_name(CropMode m);
CropMode parse_crop_mode(const std::string& s);

struct TrainConfig {
  std::size_t epochs_ld = 100;
  std::size_t epochs_srresnet = 350;
  std::size_t epochs_gan_pretrain = 50;
  std::size_t epochs_gan = 50;
  std::size_t batch_size = 8;
  double lr = 1e-4;
  double lr_d = 1e-4;
  std::uint64_t seed = 1;
  std::size_t scale = 2;
  double sigma = 0.0;
  // Divides every epoch count; results are floored and kept >= 1.
  std::size_t desk_scale = 1;

  std::size_t crop_lr = 32;
  double roi_margin = 1.25;
  CropMode sr_crop = CropMode::Random;
  CropMode gan_crop = CropMode::Random;

  std::size_t ld_channels = 32;
  std::size_t ld_stages = 3;
  std::size_t sr_channels = 64;
  std::size_t sr_blocks = 16;
  std::size_t d_channels = 32;
  std::size_t perceptual_channels = 8;

  // train_srresnet and the GAN pre-training phase.
  LossWeights sr_weights{1.0, 0.0, 0.0};
  // Adversarial phase.
  LossWeights gan_weights{1.0, 1.0, 1.0};
  std::size_t d_steps_per_g = 1;

  std::size_t effective_epochs(std::size_t base) const;
  void validate() const;

  // key=value lines; parse() accepts the same keys and ignores '#' comments.
  std::string to_text() const;
  void set(const std::string& key, const std::string& value);
  static TrainConfig parse(const std::string& text, TrainConfig base);
  std::uint64_t hash() const;
};

// Degraded pair for one sample. `box` is the ground-truth lesion box on the
// HR grid; `window` an LR-grid crop box used in Roi mode.
struct TrainingPair {
  std::uint64_t id = 0;
  Tensor lr;
  Tensor hr;
  BoundingBox box;
  BoundingBox window;
};

struct PairSet {
  std::size_t scale = 2;
  std::vector<TrainingPair> pairs;
};

// Degrades every sample with (scale, sigma, seed); windows come from the
// ground-truth boxes.
PairSet make_pairs(const std::vector<Sample>& samples, std::size_t scale, double sigma, std::uint64_t seed,
                   std::size_t crop_lr, double margin = 1.25);

// Replaces every window with the detector's prediction on the pair's LR image.
void assign_detected_windows(PairSet& set, NetworkSpec& ld, std::size_t crop_lr);

// Checkpointing and progress options shared by the training loops.
struct RunOptions {
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  bool resume = false;
  // Stops after this many epochs have completed in total (interruption).
  std::optional<std::size_t> stop_after;
  std::ostream* log = nullptr;
};

struct LdResult {
  NetworkSpec ld;
  RecordTable curve;  // epoch, loss
};

// Regresses roi_from_box(box, margin) from the whole LR image.
LdResult train_ld(const TrainConfig& cfg, const PairSet& train, const RunOptions& run = {});

struct SrResult {
  NetworkSpec generator;
  RecordTable curve;  // epoch, loss, mse, vgg, val_mse
  double val_mse_initial = 0.0;
  double val_mse_final = 0.0;
};

SrResult train_srresnet(const TrainConfig& cfg, const PairSet& train, const PairSet* validation,
                        const RunOptions& run = {});

struct GanStepStats {
  double g_total = 0.0;
  double g_mse = 0.0;
  double g_vgg = 0.0;
  double g_adv = 0.0;
  double d_loss = 0.0;
  double d_accuracy = 0.0;
};

// One batch of adversarial training: D updates on the detached SR output,
// then one G update through the same generator forward. Frozen networks
// are not updated.
class GanTrainer {
 public:
  GanTrainer(const TrainConfig& cfg, NetworkSpec& generator, NetworkSpec& discriminator, NetworkSpec& perceptual);

  GanStepStats step(const Tensor& lr_batch, const Tensor& hr_batch);

  Adam& g_optimizer() { return g_opt_; }
  Adam& d_optimizer() { return d_opt_; }

 private:
  TrainConfig cfg_;
  NetworkSpec* g_;
  NetworkSpec* d_;
  NetworkSpec* perceptual_;
  Adam g_opt_;
  Adam d_opt_;
};

struct GanResult {
  NetworkSpec generator;
  NetworkSpec discriminator;
  RecordTable curve;  // epoch, phase, g_total, g_mse, g_vgg, g_adv, d_loss, d_accuracy, val_mse
  double val_mse_adversarial_start = 0.0;
  double val_mse_final = 0.0;
};

// MSE pre-training followed by the adversarial phase. A supplied pretrained
// generator skips pre-training; a supplied discriminator replaces the
// freshly built one (its frozen flag is honoured).
GanResult train_gan(const TrainConfig& cfg, const PairSet& train, const PairSet* validation,
                    const std::optional<NetworkSpec>& pretrained_g = std::nullopt,
                    const std::optional<NetworkSpec>& initial_d = std::nullopt, const RunOptions& run = {});

// Mean per-pair MSE of the generator output (Eval mode) against HR, on the
// whole images or, with use_windows, on the ROI windows.
double validation_mse(NetworkSpec& generator, const PairSet& set, bool use_windows);

// Batch of crops for `indices` under `mode`; Random draws from `rng`.
std::pair<Tensor, Tensor> make_batch(const PairSet& set, const std::vector<std::size_t>& indices, CropMode mode,
                                     std::size_t crop_lr, Rng& rng);

struct EvalCell {
  std::size_t scale = 2;
  double sigma = 0.0;
  // LR crop size for this cell; 0 uses EvalOptions::crop_lr.
  std::size_t crop_lr = 0;
};

// Methods: "Bilinear", "B+NLD", "SRResNet", "SRGAN", "LFSR". LFSR needs a
// generator and a detector for the scale; other learned methods a generator.
class ModelRegistry {
 public:
  void add_generator(const std::string& method, std::size_t scale, NetworkSpec net);
  void add_detector(std::size_t scale, NetworkSpec net);
  bool has_generator(const std::string& method, std::size_t scale) const;
  bool has_detector(std::size_t scale) const;
  NetworkSpec& generator(const std::string& method, std::size_t scale);
  NetworkSpec& detector(std::size_t scale);

 private:
  std::map<std::pair<std::string, std::size_t>, NetworkSpec> generators_;
  std::map<std::size_t, NetworkSpec> detectors_;
};

struct EvalOptions {
  std::size_t crop_lr = 32;
  std::uint64_t seed = 1;
  double data_range = 2.0;
  double margin = 1.25;
  BnldOptions bnld;
};

struct EvalResult {
  std::vector<MetricReport> reports;
  // Parallel to reports: one entry per sample, in sample order.
  std::vector<std::vector<SampleMetrics>> samples;
};

// For each method and cell: degrade, super-resolve, score on the ROI window.
// Whole-image methods are scored on the ground-truth ROI window; LFSR on the
// window of its detector, graded by lesion coverage. Throws DataError for
// an unknown method or a missing model.
EvalResult evaluate_suite(const std::vector<std::string>& methods, const std::vector<Sample>& samples,
                          const std::vector<EvalCell>& cells, ModelRegistry& models, const EvalOptions& opts = {});

bool is_known_method(const std::string& method);

// Per-sample detection result on the HR grid.
struct DetectionResult {
  RoiPrediction roi;
  double window_coverage = 0.0;  // lesion fraction inside the crop window
  double box_coverage = 0.0;     // lesion fraction inside the decoded box
  DetectionGrade grade = DetectionGrade::Miss;
};

DetectionResult detect(NetworkSpec& ld, const Tensor& lr, const Sample& sample, std::size_t scale,
                       std::size_t crop_lr);

}  // namespace lfsr
