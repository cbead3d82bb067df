#include "lfsr/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "lfsr/error.hpp"
#include "lfsr/ops.hpp"
#include "lfsr/rng.hpp"

namespace lfsr {
namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void check_finite(double v, const char* what) {
  if (!std::isfinite(v)) throw DivergenceError(std::string("non-finite ") + what + " (" + fmt(v) + ")");
}

void check_unit_interval(const Tensor& t, const char* what) {
  for (double v : t.data()) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DataError(std::string(what) + " must lie in (0,1), got " + fmt(v));
    }
  }
}

std::vector<std::size_t> epoch_order(std::size_t n, Rng& rng) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

std::vector<std::vector<std::size_t>> batches_of(const std::vector<std::size_t>& order, std::size_t batch) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch)));
  }
  return out;
}

// Overwrites values of `dst` with those of `src` in place, keeping handles.
void copy_network_state(NetworkSpec& dst, const NetworkSpec& src) {
  auto copy = [](std::map<std::string, Tensor>& to, const std::map<std::string, Tensor>& from) {
    for (auto& [name, t] : to) {
      auto it = from.find(name);
      if (it == from.end() || it->second.shape() != t.shape()) {
        throw DataError("checkpoint does not match network tensor '" + name + "'");
      }
      std::copy(it->second.data().begin(), it->second.data().end(), t.data().begin());
    }
  };
  copy(dst.params, src.params);
  copy(dst.buffers, src.buffers);
}

void put_u64(std::vector<NamedTensor>& out, const std::string& name, std::uint64_t v) {
  out.push_back({name, Tensor({2}, std::vector<double>{static_cast<double>(v >> 32),
                                                       static_cast<double>(v & 0xffffffffULL)})});
}

std::uint64_t get_u64(const std::map<std::string, Tensor>& m, const std::string& name) {
  auto it = m.find(name);
  if (it == m.end() || it->second.numel() != 2) throw DataError("checkpoint lacks '" + name + "'");
  return (static_cast<std::uint64_t>(it->second[0]) << 32) | static_cast<std::uint64_t>(it->second[1]);
}

struct CheckpointIo {
  std::vector<std::pair<std::string, NetworkSpec*>> nets;
  std::vector<std::pair<std::string, AdamState*>> optimizers;
  std::map<std::string, double> scalars;
  RecordTable* curve = nullptr;
  std::size_t epochs_done = 0;
};

void save_checkpoint(const std::filesystem::path& dir, const CheckpointIo& ck, std::uint64_t config_hash) {
  std::filesystem::create_directories(dir);
  for (const auto& [name, net] : ck.nets) save_network(*net, dir / name);
  std::vector<NamedTensor> state;
  for (const auto& [name, opt] : ck.optimizers) {
    for (std::size_t i = 0; i < opt->m.size(); ++i) {
      state.push_back({name + "/m/" + std::to_string(i), opt->m[i]});
      state.push_back({name + "/v/" + std::to_string(i), opt->v[i]});
    }
    put_u64(state, name + "/t", static_cast<std::uint64_t>(opt->t));
  }
  put_u64(state, "epochs_done", ck.epochs_done);
  put_u64(state, "config_hash", config_hash);
  for (const auto& [name, v] : ck.scalars) state.push_back({"scalar/" + name, Tensor::scalar(v)});
  save_tensors(dir / "state.lftb", state);
  if (ck.curve) write_records(dir / "curve.tsv", *ck.curve);
}

// Returns false when no checkpoint exists in `dir`.
bool load_checkpoint(const std::filesystem::path& dir, CheckpointIo& ck, std::uint64_t config_hash) {
  if (!std::filesystem::exists(dir / "state.lftb")) return false;
  const auto state = load_tensor_map(dir / "state.lftb");
  if (get_u64(state, "config_hash") != config_hash) {
    throw DataError("checkpoint in " + dir.string() + " was written with a different configuration");
  }
  ck.epochs_done = get_u64(state, "epochs_done");
  for (auto& [name, net] : ck.nets) copy_network_state(*net, load_network(dir / name));
  for (auto& [name, opt] : ck.optimizers) {
    for (std::size_t i = 0; i < opt->m.size(); ++i) {
      const auto m = state.find(name + "/m/" + std::to_string(i));
      const auto v = state.find(name + "/v/" + std::to_string(i));
      if (m == state.end() || v == state.end() || m->second.shape() != opt->m[i].shape() ||
          v->second.shape() != opt->v[i].shape()) {
        throw DataError("checkpoint optimizer state '" + name + "' does not match");
      }
      std::copy(m->second.data().begin(), m->second.data().end(), opt->m[i].data().begin());
      std::copy(v->second.data().begin(), v->second.data().end(), opt->v[i].data().begin());
    }
    opt->t = static_cast<std::int64_t>(get_u64(state, name + "/t"));
  }
  for (auto& [name, v] : ck.scalars) {
    auto it = state.find("scalar/" + name);
    if (it == state.end()) throw DataError("checkpoint lacks scalar '" + name + "'");
    v = it->second.item();
  }
  if (ck.curve) *ck.curve = read_records(dir / "curve.tsv");
  return true;
}

void log_line(const RunOptions& run, const std::string& line) {
  if (run.log) *run.log << line << std::endl;
}

bool should_stop(const RunOptions& run, std::size_t epochs_done) {
  return run.stop_after && epochs_done >= *run.stop_after;
}

struct EpochMeans {
  double loss = 0.0, mse = 0.0, vgg = 0.0, adv = 0.0, d_loss = 0.0, d_acc = 0.0;
  std::size_t batches = 0;

  void add(const GanStepStats& s) {
    loss += s.g_total;
    mse += s.g_mse;
    vgg += s.g_vgg;
    adv += s.g_adv;
    d_loss += s.d_loss;
    d_acc += s.d_accuracy;
    ++batches;
  }
  void finish() {
    const double n = static_cast<double>(std::max<std::size_t>(batches, 1));
    loss /= n, mse /= n, vgg /= n, adv /= n, d_loss /= n, d_acc /= n;
  }
};

// One supervised generator epoch; the batch stream depends only on (seed, epoch).
EpochMeans supervised_epoch(const TrainConfig& cfg, NetworkSpec& g, NetworkSpec& perceptual, Adam& opt,
                            const PairSet& train, CropMode mode, const LossWeights& w, std::size_t epoch) {
  Rng rng = Rng(cfg.seed).split("generator").split(epoch);
  const auto order = epoch_order(train.pairs.size(), rng);
  EpochMeans means;
  g.mode = Mode::Train;
  for (const auto& idx : batches_of(order, cfg.batch_size)) {
    auto [lr, hr] = make_batch(train, idx, mode, cfg.crop_lr, rng);
    Tape tape;
    const Tensor sr = forward(g, tape, lr);
    GeneratorLoss loss = loss_supervised(tape, sr, hr, perceptual, w);
    check_finite(loss.total.item(), "generator loss");
    tape.backward(loss.total);
    opt.step();
    opt.zero_grad();
    GanStepStats s;
    s.g_total = loss.total.item();
    s.g_mse = loss.mse;
    s.g_vgg = loss.vgg;
    means.add(s);
  }
  means.finish();
  return means;
}

EpochMeans adversarial_epoch(const TrainConfig& cfg, GanTrainer& trainer, const PairSet& train, CropMode mode,
                             std::size_t epoch) {
  Rng rng = Rng(cfg.seed).split("generator").split(epoch);
  const auto order = epoch_order(train.pairs.size(), rng);
  EpochMeans means;
  for (const auto& idx : batches_of(order, cfg.batch_size)) {
    auto [lr, hr] = make_batch(train, idx, mode, cfg.crop_lr, rng);
    means.add(trainer.step(lr, hr));
  }
  means.finish();
  return means;
}

std::size_t discriminator_input(const TrainConfig& cfg, const PairSet& train, CropMode mode) {
  if (mode == CropMode::Whole) {
    if (train.pairs.empty()) throw DataError("empty training set");
    return train.pairs.front().hr.dim(0);
  }
  return cfg.crop_lr * cfg.scale;
}

std::size_t parse_size(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(value, &pos);
    if (pos != value.size() || v < 0) throw std::invalid_argument("");
    return static_cast<std::size_t>(v);
  } catch (const std::logic_error&) {
    throw std::invalid_argument("config key '" + key + "' expects a non-negative integer, got '" + value + "'");
  }
}

double parse_real(const std::string& key, const std::string& value) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size() || !std::isfinite(v)) throw std::invalid_argument("");
    return v;
  } catch (const std::logic_error&) {
    throw std::invalid_argument("config key '" + key + "' expects a number, got '" + value + "'");
  }
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void LossWeights::validate() const {
  if (!(w_mse >= 0.0 && w_vgg >= 0.0 && w_adv >= 0.0)) throw std::invalid_argument("loss weights must be >= 0");
  if (w_mse == 0.0 && w_vgg == 0.0 && w_adv == 0.0) {
    throw std::invalid_argument("at least one loss weight must be positive");
  }
}

GeneratorLoss loss_supervised(Tape& tape, const Tensor& sr, const Tensor& hr, NetworkSpec& perceptual,
                              const LossWeights& w) {
  if (sr.shape() != hr.shape()) {
    throw ShapeError("generator loss: SR " + shape_str(sr.shape()) + " vs HR " + shape_str(hr.shape()));
  }
  GeneratorLoss out;
  auto accumulate = [&](const Tensor& term) { out.total = out.total.defined() ? ops::add(tape, out.total, term) : term; };
  if (w.w_mse > 0.0) {
    const Tensor mse = ops::mse_loss(tape, sr, hr);
    out.mse = mse.item();
    accumulate(ops::scale(tape, mse, w.w_mse));
  }
  if (w.w_vgg > 0.0) {
    const Tensor target = infer(perceptual, hr);
    const Mode saved = perceptual.mode;
    perceptual.mode = Mode::Eval;
    const Tensor features = forward(perceptual, tape, sr);
    perceptual.mode = saved;
    const Tensor vgg = ops::mse_loss(tape, features, target);
    out.vgg = vgg.item();
    accumulate(ops::scale(tape, vgg, w.w_vgg));
  }
  if (!out.total.defined()) out.total = Tensor::scalar(0.0);
  return out;
}

GeneratorLoss loss_generator(Tape& tape, const Tensor& sr, const Tensor& hr, const Tensor& d_out_on_sr,
                             NetworkSpec& perceptual, const LossWeights& w) {
  check_unit_interval(d_out_on_sr, "discriminator output");
  LossWeights sup = w;
  sup.w_adv = 0.0;
  GeneratorLoss out = loss_supervised(tape, sr, hr, perceptual, sup);
  const Tensor adv = ops::mean(tape, d_out_on_sr);
  out.adv = adv.item();
  out.total = ops::add(tape, out.total, ops::scale(tape, adv, -w.w_adv));
  return out;
}

Tensor loss_discriminator(Tape& tape, const Tensor& d_out_on_hr, const Tensor& d_out_on_sr) {
  check_unit_interval(d_out_on_hr, "discriminator output on HR");
  check_unit_interval(d_out_on_sr, "discriminator output on SR");
  const Tensor true_rate = ops::mean(tape, d_out_on_hr);
  const Tensor false_rate = ops::mean(tape, ops::add_scalar(tape, ops::scale(tape, d_out_on_sr, -1.0), 1.0));
  return ops::add_scalar(tape, ops::scale(tape, ops::add(tape, true_rate, false_rate), -1.0), 1.0);
}

double discriminator_accuracy(const Tensor& d_out_on_hr, const Tensor& d_out_on_sr) {
  std::size_t correct = 0;
  for (double v : d_out_on_hr.data()) correct += v > 0.5;
  for (double v : d_out_on_sr.data()) correct += v < 0.5;
  return static_cast<double>(correct) / static_cast<double>(d_out_on_hr.numel() + d_out_on_sr.numel());
}

const char* crop_mode_name(CropMode m) {
  switch (m) {
    case CropMode::Random: return "random";
    case CropMode::Roi: return "roi";
    case CropMode::Whole: return "whole";
  }
  return "?";
}

CropMode parse_crop_mode(const std::string& s) {
  if (s == "random") return CropMode::Random;
  if (s == "roi") return CropMode::Roi;
  if (s == "whole") return CropMode::Whole;
  throw std::invalid_argument("crop mode must be random, roi or whole, got '" + s + "'");
}

std::size_t TrainConfig::effective_epochs(std::size_t base) const {
  if (base == 0) return 0;
  return std::max<std::size_t>(1, base / desk_scale);
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (!(lr > 0.0) || !(lr_d > 0.0)) throw std::invalid_argument("learning rates must be positive");
  if (scale != 2 && scale != 4) throw std::invalid_argument("scale must be 2 or 4");
  if (sigma < 0.0) throw std::invalid_argument("sigma must be >= 0");
  if (desk_scale == 0) throw std::invalid_argument("desk_scale must be positive");
  if (crop_lr == 0 || ld_channels == 0 || ld_stages == 0 || sr_channels == 0 || d_channels == 0 ||
      perceptual_channels == 0 || d_steps_per_g == 0) {
    throw std::invalid_argument("sizes must be positive");
  }
  if (!(roi_margin >= 1.0)) throw std::invalid_argument("roi_margin must be >= 1");
  sr_weights.validate();
  gan_weights.validate();
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "epochs_ld=" << epochs_ld << '\n'
     << "epochs_srresnet=" << epochs_srresnet << '\n'
     << "epochs_gan_pretrain=" << epochs_gan_pretrain << '\n'
     << "epochs_gan=" << epochs_gan << '\n'
     << "batch_size=" << batch_size << '\n'
     << "lr=" << fmt(lr) << '\n'
     << "lr_d=" << fmt(lr_d) << '\n'
     << "seed=" << seed << '\n'
     << "scale=" << scale << '\n'
     << "sigma=" << fmt(sigma) << '\n'
     << "desk_scale=" << desk_scale << '\n'
     << "crop_lr=" << crop_lr << '\n'
     << "roi_margin=" << fmt(roi_margin) << '\n'
     << "sr_crop=" << crop_mode_name(sr_crop) << '\n'
     << "gan_crop=" << crop_mode_name(gan_crop) << '\n'
     << "ld_channels=" << ld_channels << '\n'
     << "ld_stages=" << ld_stages << '\n'
     << "sr_channels=" << sr_channels << '\n'
     << "sr_blocks=" << sr_blocks << '\n'
     << "d_channels=" << d_channels << '\n'
     << "perceptual_channels=" << perceptual_channels << '\n'
     << "sr_w_mse=" << fmt(sr_weights.w_mse) << '\n'
     << "sr_w_vgg=" << fmt(sr_weights.w_vgg) << '\n'
     << "gan_w_mse=" << fmt(gan_weights.w_mse) << '\n'
     << "gan_w_vgg=" << fmt(gan_weights.w_vgg) << '\n'
     << "gan_w_adv=" << fmt(gan_weights.w_adv) << '\n'
     << "d_steps_per_g=" << d_steps_per_g << '\n';
  return os.str();
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  if (key == "epochs_ld") epochs_ld = parse_size(key, value);
  else if (key == "epochs_srresnet") epochs_srresnet = parse_size(key, value);
  else if (key == "epochs_gan_pretrain") epochs_gan_pretrain = parse_size(key, value);
  else if (key == "epochs_gan") epochs_gan = parse_size(key, value);
  else if (key == "batch_size") batch_size = parse_size(key, value);
  else if (key == "lr") lr = parse_real(key, value);
  else if (key == "lr_d") lr_d = parse_real(key, value);
  else if (key == "seed") seed = parse_size(key, value);
  else if (key == "scale") scale = parse_size(key, value);
  else if (key == "sigma") sigma = parse_real(key, value);
  else if (key == "desk_scale") desk_scale = parse_size(key, value);
  else if (key == "crop_lr") crop_lr = parse_size(key, value);
  else if (key == "roi_margin") roi_margin = parse_real(key, value);
  else if (key == "sr_crop") sr_crop = parse_crop_mode(value);
  else if (key == "gan_crop") gan_crop = parse_crop_mode(value);
  else if (key == "ld_channels") ld_channels = parse_size(key, value);
  else if (key == "ld_stages") ld_stages = parse_size(key, value);
  else if (key == "sr_channels") sr_channels = parse_size(key, value);
  else if (key == "sr_blocks") sr_blocks = parse_size(key, value);
  else if (key == "d_channels") d_channels = parse_size(key, value);
  else if (key == "perceptual_channels") perceptual_channels = parse_size(key, value);
  else if (key == "sr_w_mse") sr_weights.w_mse = parse_real(key, value);
  else if (key == "sr_w_vgg") sr_weights.w_vgg = parse_real(key, value);
  else if (key == "gan_w_mse") gan_weights.w_mse = parse_real(key, value);
  else if (key == "gan_w_vgg") gan_weights.w_vgg = parse_real(key, value);
  else if (key == "gan_w_adv") gan_weights.w_adv = parse_real(key, value);
  else if (key == "d_steps_per_g") d_steps_per_g = parse_size(key, value);
  else throw std::invalid_argument("unknown config key '" + key + "'");
}

TrainConfig TrainConfig::parse(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.resize(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(line_no) + " is not key=value: " + line);
    }
    base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

std::uint64_t TrainConfig::hash() const { return fnv1a(to_text()); }

PairSet make_pairs(const std::vector<Sample>& samples, std::size_t scale, double sigma, std::uint64_t seed,
                   std::size_t crop_lr, double margin) {
  DegradeConfig dc;
  dc.scale = scale;
  dc.sigma = sigma;
  dc.seed = seed;
  dc.validate();
  PairSet set;
  set.scale = scale;
  for (const auto& s : samples) {
    TrainingPair p;
    p.id = s.id;
    p.hr = s.hr;
    p.lr = degrade(s.hr, dc, s.id);
    p.box = s.bbox;
    p.window = roi_window(roi_from_box(s.bbox, s.hr.dim(0), s.hr.dim(1), margin), p.lr.dim(0), p.lr.dim(1),
                          crop_lr, 1);
    set.pairs.push_back(std::move(p));
  }
  return set;
}

void assign_detected_windows(PairSet& set, NetworkSpec& ld, std::size_t crop_lr) {
  for (auto& p : set.pairs) p.window = roi_window(predict_roi(ld, p.lr), p.lr.dim(0), p.lr.dim(1), crop_lr, 1);
}

std::pair<Tensor, Tensor> make_batch(const PairSet& set, const std::vector<std::size_t>& indices, CropMode mode,
                                     std::size_t crop_lr, Rng& rng) {
  std::vector<Tensor> lrs, hrs;
  const int s = static_cast<int>(set.scale);
  for (auto i : indices) {
    const TrainingPair& p = set.pairs.at(i);
    BoundingBox w;
    switch (mode) {
      case CropMode::Whole:
        w = BoundingBox{0, 0, static_cast<int>(p.lr.dim(0)), static_cast<int>(p.lr.dim(1))};
        break;
      case CropMode::Roi: w = p.window; break;
      case CropMode::Random: {
        if (crop_lr > p.lr.dim(0) || crop_lr > p.lr.dim(1)) throw ShapeError("crop exceeds the LR image");
        const int r0 = static_cast<int>(rng.below(p.lr.dim(0) - crop_lr + 1));
        const int c0 = static_cast<int>(rng.below(p.lr.dim(1) - crop_lr + 1));
        w = BoundingBox{r0, c0, static_cast<int>(crop_lr), static_cast<int>(crop_lr)};
        break;
      }
    }
    lrs.push_back(crop_box(p.lr, w));
    hrs.push_back(crop_box(p.hr, BoundingBox{w.row0 * s, w.col0 * s, w.height * s, w.width * s}));
  }
  return {stack_images(lrs), stack_images(hrs)};
}

double validation_mse(NetworkSpec& generator, const PairSet& set, bool use_windows) {
  if (set.pairs.empty()) return 0.0;
  const int s = static_cast<int>(set.scale);
  double total = 0.0;
  for (const auto& p : set.pairs) {
    Tensor lr = p.lr, hr = p.hr;
    if (use_windows) {
      const BoundingBox& w = p.window;
      lr = crop_box(p.lr, w);
      hr = crop_box(p.hr, BoundingBox{w.row0 * s, w.col0 * s, w.height * s, w.width * s});
    }
    const Tensor sr = super_resolve(generator, lr);
    double acc = 0.0;
    for (std::size_t i = 0; i < sr.numel(); ++i) acc += (sr[i] - hr[i]) * (sr[i] - hr[i]);
    total += acc / static_cast<double>(sr.numel());
  }
  return total / static_cast<double>(set.pairs.size());
}

LdResult train_ld(const TrainConfig& cfg, const PairSet& train, const RunOptions& run) {
  cfg.validate();
  if (train.pairs.empty()) throw DataError("train_ld: empty dataset");
  LdResult res;
  res.ld = build_ld(cfg.ld_channels, cfg.ld_stages, cfg.seed);
  res.curve.columns = {"epoch", "loss"};
  Adam opt(res.ld.trainable(), AdamOptions{cfg.lr});
  const std::size_t epochs = cfg.effective_epochs(cfg.epochs_ld);

  CheckpointIo ck;
  ck.nets = {{"ld", &res.ld}};
  ck.optimizers = {{"ld", &opt.state()}};
  ck.curve = &res.curve;
  if (run.resume && !run.checkpoint_dir.empty()) load_checkpoint(run.checkpoint_dir, ck, cfg.hash());

  for (std::size_t epoch = ck.epochs_done; epoch < epochs; ++epoch) {
    if (should_stop(run, epoch)) break;
    Rng rng = Rng(cfg.seed).split("ld").split(epoch);
    const auto order = epoch_order(train.pairs.size(), rng);
    res.ld.mode = Mode::Train;
    double sum = 0.0;
    std::size_t batches = 0;
    for (const auto& idx : batches_of(order, cfg.batch_size)) {
      std::vector<Tensor> images;
      Tensor target({idx.size(), 4});
      for (std::size_t b = 0; b < idx.size(); ++b) {
        const TrainingPair& p = train.pairs[idx[b]];
        images.push_back(p.lr);
        const RoiPrediction roi = roi_from_box(p.box, p.hr.dim(0), p.hr.dim(1), cfg.roi_margin);
        target[b * 4 + 0] = roi.cx;
        target[b * 4 + 1] = roi.cy;
        target[b * 4 + 2] = roi.h;
        target[b * 4 + 3] = roi.w;
      }
      Tape tape;
      const Tensor pred = forward(res.ld, tape, stack_images(images));
      const Tensor loss = ops::mse_loss(tape, pred, target);
      check_finite(loss.item(), "detector loss");
      tape.backward(loss);
      opt.step();
      opt.zero_grad();
      sum += loss.item();
      ++batches;
    }
    const double mean_loss = sum / static_cast<double>(batches);
    res.curve.rows.push_back({std::to_string(epoch + 1), fmt(mean_loss)});
    log_line(run, "[train-ld] epoch " + std::to_string(epoch + 1) + "/" + std::to_string(epochs) +
                      " loss=" + fmt(mean_loss));
    ck.epochs_done = epoch + 1;
    if (!run.checkpoint_dir.empty()) save_checkpoint(run.checkpoint_dir, ck, cfg.hash());
  }
  res.ld.mode = Mode::Eval;
  return res;
}

SrResult train_srresnet(const TrainConfig& cfg, const PairSet& train, const PairSet* validation,
                        const RunOptions& run) {
  cfg.validate();
  if (train.pairs.empty()) throw DataError("train_srresnet: empty dataset");
  if (train.scale != cfg.scale) throw DataError("training pairs were degraded at a different scale");
  SrResult res;
  res.generator = build_srresnet(cfg.sr_blocks, cfg.scale, cfg.sr_channels, cfg.seed);
  NetworkSpec perceptual = build_perceptual(cfg.seed, cfg.perceptual_channels);
  res.curve.columns = {"epoch", "loss", "mse", "vgg", "val_mse"};
  Adam opt(res.generator.trainable(), AdamOptions{cfg.lr});
  const std::size_t epochs = cfg.effective_epochs(cfg.epochs_srresnet);
  const bool windows = cfg.sr_crop == CropMode::Roi;

  CheckpointIo ck;
  ck.nets = {{"generator", &res.generator}};
  ck.optimizers = {{"generator", &opt.state()}};
  ck.curve = &res.curve;
  ck.scalars = {{"val_mse_initial", 0.0}};
  if (run.resume && !run.checkpoint_dir.empty() && load_checkpoint(run.checkpoint_dir, ck, cfg.hash())) {
    res.val_mse_initial = ck.scalars["val_mse_initial"];
  } else if (validation) {
    res.val_mse_initial = validation_mse(res.generator, *validation, windows);
    ck.scalars["val_mse_initial"] = res.val_mse_initial;
  }
  res.val_mse_final = res.val_mse_initial;

  for (std::size_t epoch = ck.epochs_done; epoch < epochs; ++epoch) {
    if (should_stop(run, epoch)) break;
    const EpochMeans m = supervised_epoch(cfg, res.generator, perceptual, opt, train, cfg.sr_crop, cfg.sr_weights, epoch);
    const double val = validation ? validation_mse(res.generator, *validation, windows) : 0.0;
    res.curve.rows.push_back({std::to_string(epoch + 1), fmt(m.loss), fmt(m.mse), fmt(m.vgg), fmt(val)});
    log_line(run, "[train-sr] epoch " + std::to_string(epoch + 1) + "/" + std::to_string(epochs) +
                      " loss=" + fmt(m.loss) + " val_mse=" + fmt(val));
    ck.epochs_done = epoch + 1;
    if (!run.checkpoint_dir.empty()) save_checkpoint(run.checkpoint_dir, ck, cfg.hash());
  }
  if (validation && !res.curve.rows.empty()) res.val_mse_final = std::stod(res.curve.rows.back()[4]);
  res.generator.mode = Mode::Eval;
  return res;
}

GanTrainer::GanTrainer(const TrainConfig& cfg, NetworkSpec& generator, NetworkSpec& discriminator,
                       NetworkSpec& perceptual)
    : cfg_(cfg),
      g_(&generator),
      d_(&discriminator),
      perceptual_(&perceptual),
      g_opt_(generator.trainable(), AdamOptions{cfg.lr}),
      d_opt_(discriminator.trainable(), AdamOptions{cfg.lr_d}) {}

GanStepStats GanTrainer::step(const Tensor& lr_batch, const Tensor& hr_batch) {
  GanStepStats stats;
  g_->mode = g_->frozen ? Mode::Eval : Mode::Train;
  Tape tape(!g_->frozen);
  const Tensor sr = forward(*g_, tape, lr_batch);

  {
    const Tensor d_hr = infer(*d_, hr_batch);
    const Tensor d_sr = infer(*d_, sr.clone());
    stats.d_accuracy = discriminator_accuracy(d_hr, d_sr);
  }
  if (!d_->frozen) {
    for (std::size_t k = 0; k < cfg_.d_steps_per_g; ++k) {
      d_->zero_grad();
      Tape d_tape;
      const Tensor d_hr = forward(*d_, d_tape, hr_batch);
      const Tensor d_sr = forward(*d_, d_tape, sr.clone());
      const Tensor l_d = loss_discriminator(d_tape, d_hr, d_sr);
      stats.d_loss = l_d.item();
      check_finite(stats.d_loss, "discriminator loss");
      d_tape.backward(l_d);
      d_opt_.step();
    }
    d_->zero_grad();
  } else {
    Tape none = Tape::no_grad();
    stats.d_loss = loss_discriminator(none, infer(*d_, hr_batch), infer(*d_, sr.clone())).item();
  }

  const Tensor d_out = forward(*d_, tape, sr);
  GeneratorLoss loss = loss_generator(tape, sr, hr_batch, d_out, *perceptual_, cfg_.gan_weights);
  stats.g_total = loss.total.item();
  stats.g_mse = loss.mse;
  stats.g_vgg = loss.vgg;
  stats.g_adv = loss.adv;
  check_finite(stats.g_total, "generator loss");
  if (!g_->frozen) {
    tape.backward(loss.total);
    g_opt_.step();
    g_opt_.zero_grad();
    d_->zero_grad();
  }
  return stats;
}

GanResult train_gan(const TrainConfig& cfg, const PairSet& train, const PairSet* validation,
                    const std::optional<NetworkSpec>& pretrained_g, const std::optional<NetworkSpec>& initial_d,
                    const RunOptions& run) {
  cfg.validate();
  if (train.pairs.empty()) throw DataError("train_gan: empty dataset");
  if (train.scale != cfg.scale) throw DataError("training pairs were degraded at a different scale");
  GanResult res;
  res.generator = pretrained_g ? pretrained_g->clone() : build_srresnet(cfg.sr_blocks, cfg.scale, cfg.sr_channels, cfg.seed);
  res.discriminator = initial_d ? initial_d->clone()
                                : build_discriminator(discriminator_input(cfg, train, cfg.gan_crop), cfg.d_channels, cfg.seed);
  NetworkSpec perceptual = build_perceptual(cfg.seed, cfg.perceptual_channels);
  res.curve.columns = {"epoch", "phase", "g_total", "g_mse", "g_vgg", "g_adv", "d_loss", "d_accuracy", "val_mse"};
  const bool windows = cfg.gan_crop == CropMode::Roi;
  const std::size_t pre_epochs = pretrained_g ? 0 : cfg.effective_epochs(cfg.epochs_gan_pretrain);
  const std::size_t adv_epochs = cfg.effective_epochs(cfg.epochs_gan);

  GanTrainer trainer(cfg, res.generator, res.discriminator, perceptual);
  Adam& g_opt = trainer.g_optimizer();
  CheckpointIo ck;
  ck.nets = {{"generator", &res.generator}, {"discriminator", &res.discriminator}};
  ck.optimizers = {{"generator", &g_opt.state()}, {"discriminator", &trainer.d_optimizer().state()}};
  ck.curve = &res.curve;
  ck.scalars = {{"val_mse_adversarial_start", 0.0}};
  const bool resumed = run.resume && !run.checkpoint_dir.empty() && load_checkpoint(run.checkpoint_dir, ck, cfg.hash());
  if (resumed) res.val_mse_adversarial_start = ck.scalars["val_mse_adversarial_start"];

  auto finish_epoch = [&](std::size_t global, const char* phase, const EpochMeans& m) {
    const double val = validation ? validation_mse(res.generator, *validation, windows) : 0.0;
    res.curve.rows.push_back({std::to_string(global + 1), phase, fmt(m.loss), fmt(m.mse), fmt(m.vgg), fmt(m.adv),
                              fmt(m.d_loss), fmt(m.d_acc), fmt(val)});
    log_line(run, std::string("[train-gan] ") + phase + " epoch " + std::to_string(global + 1) + "/" +
                      std::to_string(pre_epochs + adv_epochs) + " g=" + fmt(m.loss) + " mse=" + fmt(m.mse) +
                      " d=" + fmt(m.d_loss) + " d_acc=" + fmt(m.d_acc) + " val_mse=" + fmt(val));
    ck.epochs_done = global + 1;
    if (!run.checkpoint_dir.empty()) save_checkpoint(run.checkpoint_dir, ck, cfg.hash());
  };

  for (std::size_t e = ck.epochs_done; e < pre_epochs; ++e) {
    if (should_stop(run, e)) return res;
    finish_epoch(e, "pretrain", supervised_epoch(cfg, res.generator, perceptual, g_opt, train, cfg.gan_crop,
                                                 cfg.sr_weights, e));
  }
  if (ck.epochs_done <= pre_epochs) {
    res.val_mse_adversarial_start = validation ? validation_mse(res.generator, *validation, windows) : 0.0;
    ck.scalars["val_mse_adversarial_start"] = res.val_mse_adversarial_start;
  }
  res.val_mse_final = res.val_mse_adversarial_start;
  for (std::size_t e = std::max(ck.epochs_done, pre_epochs); e < pre_epochs + adv_epochs; ++e) {
    if (should_stop(run, e)) return res;
    finish_epoch(e, "adversarial", adversarial_epoch(cfg, trainer, train, cfg.gan_crop, e - pre_epochs));
  }
  if (validation && !res.curve.rows.empty()) res.val_mse_final = std::stod(res.curve.rows.back()[8]);
  res.generator.mode = Mode::Eval;
  return res;
}

void ModelRegistry::add_generator(const std::string& method, std::size_t scale, NetworkSpec net) {
  generators_[{method, scale}] = std::move(net);
}

void ModelRegistry::add_detector(std::size_t scale, NetworkSpec net) { detectors_[scale] = std::move(net); }

bool ModelRegistry::has_generator(const std::string& method, std::size_t scale) const {
  return generators_.count({method, scale}) > 0;
}

bool ModelRegistry::has_detector(std::size_t scale) const { return detectors_.count(scale) > 0; }

NetworkSpec& ModelRegistry::generator(const std::string& method, std::size_t scale) {
  auto it = generators_.find({method, scale});
  if (it == generators_.end()) {
    throw DataError("no " + method + " generator registered for X" + std::to_string(scale));
  }
  return it->second;
}

NetworkSpec& ModelRegistry::detector(std::size_t scale) {
  auto it = detectors_.find(scale);
  if (it == detectors_.end()) throw DataError("no lesion detector registered for X" + std::to_string(scale));
  return it->second;
}

bool is_known_method(const std::string& method) {
  return method == "Bilinear" || method == "B+NLD" || method == "SRResNet" || method == "SRGAN" || method == "LFSR";
}

DetectionResult detect(NetworkSpec& ld, const Tensor& lr, const Sample& sample, std::size_t scale,
                       std::size_t crop_lr) {
  DetectionResult r;
  r.roi = predict_roi(ld, lr);
  const BoundingBox window = roi_window(r.roi, lr.dim(0), lr.dim(1), crop_lr, scale);
  r.window_coverage = coverage(window, sample.lesion_mask);
  r.box_coverage = coverage(r.roi.decode(sample.hr.dim(0), sample.hr.dim(1)), sample.lesion_mask);
  r.grade = detection_grade(r.window_coverage);
  return r;
}

EvalResult evaluate_suite(const std::vector<std::string>& methods, const std::vector<Sample>& samples,
                          const std::vector<EvalCell>& cells, ModelRegistry& models, const EvalOptions& opts) {
  if (samples.empty()) throw DataError("evaluate_suite: no samples");
  for (const auto& m : methods) {
    if (!is_known_method(m)) throw DataError("unknown method '" + m + "'");
    for (const auto& cell : cells) {
      if ((m == "SRResNet" || m == "SRGAN" || m == "LFSR") && !models.has_generator(m, cell.scale)) {
        throw DataError("no " + m + " model for X" + std::to_string(cell.scale));
      }
      if (m == "LFSR" && !models.has_detector(cell.scale)) {
        throw DataError("LFSR needs a lesion detector for X" + std::to_string(cell.scale));
      }
    }
  }
  EvalResult out;
  for (const auto& method : methods) {
    for (const auto& cell : cells) {
      DegradeConfig dc;
      dc.scale = cell.scale;
      dc.sigma = cell.sigma;
      dc.seed = opts.seed;
      dc.data_range = opts.data_range;
      dc.validate();
      const std::size_t crop = cell.crop_lr > 0 ? cell.crop_lr : opts.crop_lr;
      std::vector<SampleMetrics> per;
      for (const auto& s : samples) {
        const Tensor lr = degrade(s.hr, dc, s.id);
        SampleMetrics sm;
        Tensor sr, hr;
        if (method == "LFSR") {
          NetworkSpec& ld = models.detector(cell.scale);
          const DetectionResult det = detect(ld, lr, s, cell.scale, crop);
          sr = super_resolve(models.generator(method, cell.scale), crop_roi(lr, det.roi, crop, 1));
          hr = crop_roi(s.hr, det.roi, crop, cell.scale);
          sm.grade = det.grade;
        } else {
          Tensor full;
          if (method == "Bilinear") full = bilinear_upsample(lr, cell.scale);
          else if (method == "B+NLD") full = b_nld(lr, cell.scale, cell.sigma, opts.bnld);
          else full = super_resolve(models.generator(method, cell.scale), lr);
          const BoundingBox window =
              roi_window(roi_from_box(s.bbox, s.hr.dim(0), s.hr.dim(1), opts.margin), lr.dim(0), lr.dim(1),
                         crop, cell.scale);
          sr = crop_box(full, window);
          hr = crop_box(s.hr, window);
          sm.grade = detection_grade(coverage(window, s.lesion_mask));
        }
        sm.psnr = psnr(sr, hr, opts.data_range);
        sm.ssim = ssim(sr, hr, opts.data_range);
        per.push_back(sm);
      }
      out.reports.push_back(aggregate(method, cell.scale, cell.sigma, per));
      out.samples.push_back(std::move(per));
    }
  }
  return out;
}

}  // namespace lfsr
