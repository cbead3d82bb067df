#include "cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <ostream>
#include <sstream>

#include "lfsr/baselines.hpp"
#include "lfsr/degradation.hpp"
#include "lfsr/error.hpp"
#include "lfsr/metrics.hpp"
#include "lfsr/models.hpp"
#include "lfsr/phantom.hpp"
#include "lfsr/tensor_io.hpp"
#include "lfsr/training.hpp"

#ifndef LFSR_BUILD_ID
#define LFSR_BUILD_ID "unknown"
#endif

namespace lfsr::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

constexpr const char* kManifest = "manifest.json";

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void prepare_output_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError("output path " + dir.string() + " is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir)) {
    if (!force) throw UsageError("output directory " + dir.string() + " is not empty (pass --force to overwrite)");
    for (const auto& entry : fs::directory_iterator(dir)) fs::remove_all(entry.path());
  }
  fs::create_directories(dir);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& args)
      : start_(std::chrono::steady_clock::now()) {
    doc_["command"] = std::move(command);
    doc_["args"] = args;
    doc_["build_id"] = LFSR_BUILD_ID;
  }

  json& config() { return doc_["config"]; }
  void seed(std::uint64_t s) { doc_["seed"] = s; }
  void output(const fs::path& p) { doc_["outputs"].push_back(p.string()); }
  json& results() { return doc_["results"]; }

  void write(const fs::path& dir) {
    doc_["wall_time_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    write_text(dir / kManifest, doc_.dump(2) + "\n");
  }

 private:
  json doc_;
  std::chrono::steady_clock::time_point start_;
};

json config_json(const TrainConfig& cfg) {
  json j = json::object();
  std::istringstream in(cfg.to_text());
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) j[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return j;
}

void write_stopped_manifest(Manifest& manifest, const TrainConfig& cfg, const fs::path& dir, std::size_t epochs,
                            std::ostream& out) {
  manifest.config() = config_json(cfg);
  manifest.seed(cfg.seed);
  manifest.output(dir / "checkpoint");
  manifest.results()["stopped_after_epochs"] = epochs;
  manifest.write(dir);
  out << "stopped after " << epochs << " epochs; resume with --resume\n";
}

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::size_t desk_scale = 1;
  std::vector<std::string> overrides;
  bool resume = false;
  bool force = false;
  std::size_t stop_after = 0;
  std::string pretrained;
  std::string ld;
};

void add_train_options(CLI::App* cmd, TrainArgs& a) {
  cmd->add_option("--data", a.data, "Dataset directory")->required();
  cmd->add_option("--config", a.config, "key=value config file");
  cmd->add_option("--desk-scale", a.desk_scale, "Divide every epoch count by this factor")->check(CLI::PositiveNumber);
  cmd->add_option("--out", a.out, "Run directory")->required();
  cmd->add_option("--set", a.overrides, "Config override key=value (repeatable)");
  cmd->add_flag("--resume", a.resume, "Continue from the run directory's checkpoint");
  cmd->add_flag("--force", a.force, "Clear a non-empty run directory");
  cmd->add_option("--stop-after", a.stop_after, "Stop after this many epochs in total (0 = run to the end)");
}

TrainConfig resolve_config(const TrainArgs& a, bool desk_flag_given) {
  TrainConfig cfg;
  if (!a.config.empty()) cfg = TrainConfig::parse(read_text(a.config), cfg);
  for (const auto& kv : a.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (desk_flag_given) cfg.desk_scale = a.desk_scale;
  cfg.validate();
  return cfg;
}

struct TrainData {
  std::vector<Sample> train;
  std::vector<Sample> validation;
  PairSet train_pairs;
  PairSet validation_pairs;
};

TrainData load_training_data(const std::string& dir, const TrainConfig& cfg) {
  TrainData d;
  const auto all = load_dataset(dir);
  const auto split = split_dataset(all);
  d.train = select(all, split.train);
  d.validation = select(all, split.validation);
  if (d.train.empty()) throw DataError("dataset " + dir + " has no training samples");
  d.train_pairs = make_pairs(d.train, cfg.scale, cfg.sigma, cfg.seed, cfg.crop_lr, cfg.roi_margin);
  d.validation_pairs = make_pairs(d.validation, cfg.scale, cfg.sigma, cfg.seed, cfg.crop_lr, cfg.roi_margin);
  return d;
}

void open_train_dir(const TrainArgs& a) {
  if (a.resume) {
    fs::create_directories(a.out);
  } else {
    prepare_output_dir(a.out, a.force);
  }
}

RunOptions run_options(const TrainArgs& a, std::ostream& out) {
  RunOptions run;
  run.checkpoint_dir = fs::path(a.out) / "checkpoint";
  run.resume = a.resume;
  if (a.stop_after > 0) run.stop_after = a.stop_after;
  run.log = &out;
  return run;
}

std::string model_name(const std::string& kind, std::size_t scale) { return kind + "_x" + std::to_string(scale); }

int cmd_phantom_gen(std::size_t n, std::size_t size, std::uint64_t seed, const std::string& out_dir, bool force,
                    const std::vector<std::string>& args, std::ostream& out) {
  if (size < 32 || !is_power_of_two(size)) {
    throw UsageError("--size must be a power of two >= 32, got " + std::to_string(size));
  }
  if (n == 0) throw UsageError("--n must be positive");
  prepare_output_dir(out_dir, force);
  Manifest manifest("phantom-gen", args);
  PhantomConfig cfg;
  cfg.n_samples = n;
  cfg.image_size = size;
  cfg.seed = seed;
  const auto samples = gen_dataset(cfg);
  save_dataset(out_dir, samples);
  manifest.config() = {{"n", n}, {"size", size}, {"seed", seed}, {"out", out_dir}};
  manifest.seed(seed);
  manifest.output(fs::path(out_dir) / kDatasetManifest);
  manifest.write(out_dir);
  out << "wrote " << samples.size() << " phantoms (" << size << "x" << size << ") to " << out_dir << "\n";
  return kOk;
}

int cmd_degrade(const std::string& data, std::size_t scale, double sigma, std::uint64_t seed,
                const std::string& out_dir, bool force, bool pgm, const std::vector<std::string>& args,
                std::ostream& out) {
  DegradeConfig dc;
  dc.scale = scale;
  dc.sigma = sigma;
  dc.seed = seed;
  try {
    dc.validate();
  } catch (const std::exception& e) {
    throw UsageError(e.what());
  }
  const auto samples = load_dataset(data);
  prepare_output_dir(out_dir, force);
  Manifest manifest("degrade", args);
  RecordTable table;
  table.columns = {"id", "file", "psnr_bilinear"};
  double total = 0.0;
  for (const auto& s : samples) {
    const Tensor lr = degrade(s.hr, dc, s.id);
    char name[64];
    std::snprintf(name, sizeof name, "lr_%05llu", static_cast<unsigned long long>(s.id));
    save_tensors(fs::path(out_dir) / (std::string(name) + ".lftb"), {{"lr", lr}});
    if (pgm) export_pgm(lr, fs::path(out_dir) / (std::string(name) + ".pgm"));
    const double p = psnr(bilinear_upsample(lr, scale), s.hr, dc.data_range);
    total += p;
    table.rows.push_back({std::to_string(s.id), std::string(name) + ".lftb", fmt(p)});
    out << name << ".lftb " << lr.dim(0) << "x" << lr.dim(1) << " psnr(bilinear, hr)=" << fmt(p) << "\n";
  }
  write_records(fs::path(out_dir) / "degrade.tsv", table);
  manifest.config() = {{"data", data}, {"scale", scale}, {"sigma", sigma}, {"seed", seed}, {"out", out_dir}};
  manifest.seed(seed);
  manifest.output(fs::path(out_dir) / "degrade.tsv");
  manifest.results()["mean_psnr_bilinear"] = total / static_cast<double>(samples.size());
  manifest.write(out_dir);
  return kOk;
}

int cmd_train_ld(const TrainArgs& a, bool desk_given, const std::vector<std::string>& args, std::ostream& out) {
  const TrainConfig cfg = resolve_config(a, desk_given);
  TrainData d = load_training_data(a.data, cfg);
  open_train_dir(a);
  Manifest manifest("train-ld", args);
  const LdResult res = train_ld(cfg, d.train_pairs, run_options(a, out));
  if (a.stop_after > 0 && res.curve.rows.size() < cfg.effective_epochs(cfg.epochs_ld)) {
    write_stopped_manifest(manifest, cfg, a.out, res.curve.rows.size(), out);
    return kOk;
  }
  const fs::path prefix = fs::path(a.out) / model_name("ld", cfg.scale);
  NetworkSpec ld = res.ld;
  save_network(ld, prefix);
  write_records(fs::path(a.out) / "curve.tsv", res.curve);
  write_text(fs::path(a.out) / "config.txt", cfg.to_text());

  RecordTable det;
  det.columns = {"id", "cx", "cy", "h", "w", "window_coverage", "box_coverage", "grade"};
  std::size_t hits = 0;
  for (std::size_t i = 0; i < d.validation.size(); ++i) {
    const DetectionResult r = detect(ld, d.validation_pairs.pairs[i].lr, d.validation[i], cfg.scale, cfg.crop_lr);
    hits += r.grade != DetectionGrade::Miss;
    det.rows.push_back({std::to_string(d.validation[i].id), fmt(r.roi.cx), fmt(r.roi.cy), fmt(r.roi.h),
                        fmt(r.roi.w), fmt(r.window_coverage), fmt(r.box_coverage), grade_name(r.grade)});
  }
  write_records(fs::path(a.out) / "detections.tsv", det);
  out << "validation detections: " << hits << "/" << d.validation.size() << " perfect or acceptable\n";

  manifest.config() = config_json(cfg);
  manifest.seed(cfg.seed);
  manifest.output(prefix.string() + ".lftb");
  manifest.output(fs::path(a.out) / "curve.tsv");
  manifest.output(fs::path(a.out) / "detections.tsv");
  manifest.results()["detection_rate"] =
      d.validation.empty() ? 0.0 : static_cast<double>(hits) / static_cast<double>(d.validation.size());
  manifest.write(a.out);
  return kOk;
}

int cmd_train_sr(const TrainArgs& a, bool desk_given, const std::vector<std::string>& args, std::ostream& out) {
  const TrainConfig cfg = resolve_config(a, desk_given);
  TrainData d = load_training_data(a.data, cfg);
  open_train_dir(a);
  Manifest manifest("train-sr", args);
  const SrResult res = train_srresnet(cfg, d.train_pairs, &d.validation_pairs, run_options(a, out));
  if (a.stop_after > 0 && res.curve.rows.size() < cfg.effective_epochs(cfg.epochs_srresnet)) {
    write_stopped_manifest(manifest, cfg, a.out, res.curve.rows.size(), out);
    return kOk;
  }
  const fs::path prefix = fs::path(a.out) / model_name("srresnet", cfg.scale);
  save_network(res.generator, prefix);
  write_records(fs::path(a.out) / "curve.tsv", res.curve);
  write_text(fs::path(a.out) / "config.txt", cfg.to_text());
  out << "trained " << res.curve.rows.size() << " epochs; validation MSE " << fmt(res.val_mse_initial) << " -> "
      << fmt(res.val_mse_final) << "\n";
  manifest.config() = config_json(cfg);
  manifest.seed(cfg.seed);
  manifest.output(prefix.string() + ".lftb");
  manifest.output(fs::path(a.out) / "curve.tsv");
  manifest.results()["val_mse_initial"] = res.val_mse_initial;
  manifest.results()["val_mse_final"] = res.val_mse_final;
  manifest.write(a.out);
  return kOk;
}

int cmd_train_gan(const TrainArgs& a, bool desk_given, const std::vector<std::string>& args, std::ostream& out) {
  const TrainConfig cfg = resolve_config(a, desk_given);
  TrainData d = load_training_data(a.data, cfg);
  const bool roi = cfg.gan_crop == CropMode::Roi;
  if (roi && !a.ld.empty()) {
    NetworkSpec ld = load_network(a.ld);
    assign_detected_windows(d.train_pairs, ld, cfg.crop_lr);
    assign_detected_windows(d.validation_pairs, ld, cfg.crop_lr);
  }
  std::optional<NetworkSpec> pretrained;
  if (!a.pretrained.empty()) pretrained = load_network(a.pretrained);
  open_train_dir(a);
  Manifest manifest("train-gan", args);
  const GanResult res = train_gan(cfg, d.train_pairs, &d.validation_pairs, pretrained, std::nullopt, run_options(a, out));
  const std::size_t total = (pretrained ? 0 : cfg.effective_epochs(cfg.epochs_gan_pretrain)) +
                            cfg.effective_epochs(cfg.epochs_gan);
  if (a.stop_after > 0 && res.curve.rows.size() < total) {
    write_stopped_manifest(manifest, cfg, a.out, res.curve.rows.size(), out);
    return kOk;
  }
  const fs::path prefix = fs::path(a.out) / model_name(roi ? "lfsr" : "srgan", cfg.scale);
  save_network(res.generator, prefix);
  save_network(res.discriminator, fs::path(a.out) / model_name("discriminator", cfg.scale));
  write_records(fs::path(a.out) / "curve.tsv", res.curve);
  write_text(fs::path(a.out) / "config.txt", cfg.to_text());
  out << "validation MSE at adversarial start " << fmt(res.val_mse_adversarial_start) << ", final "
      << fmt(res.val_mse_final) << "\n";
  manifest.config() = config_json(cfg);
  manifest.config()["pretrained"] = a.pretrained;
  manifest.config()["ld"] = a.ld;
  manifest.seed(cfg.seed);
  manifest.output(prefix.string() + ".lftb");
  manifest.output(fs::path(a.out) / "curve.tsv");
  manifest.results()["val_mse_adversarial_start"] = res.val_mse_adversarial_start;
  manifest.results()["val_mse_final"] = res.val_mse_final;
  manifest.write(a.out);
  return kOk;
}

std::vector<EvalCell> parse_grid(const std::string& text) {
  std::vector<EvalCell> cells;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::vector<std::string> parts;
    std::stringstream fields(item);
    std::string f;
    while (std::getline(fields, f, ':')) parts.push_back(f);
    if (parts.size() < 2 || parts.size() > 3) {
      throw UsageError("--grid entries are scale:sigma[:crop], got '" + item + "'");
    }
    try {
      EvalCell c;
      c.scale = std::stoul(parts[0]);
      c.sigma = std::stod(parts[1]);
      if (parts.size() == 3) c.crop_lr = std::stoul(parts[2]);
      if (c.scale != 2 && c.scale != 4) throw UsageError("grid scale must be 2 or 4, got " + item);
      if (c.sigma < 0.0) throw UsageError("grid sigma must be >= 0, got " + item);
      cells.push_back(c);
    } catch (const std::logic_error&) {
      throw UsageError("cannot parse grid entry '" + item + "'");
    }
  }
  if (cells.empty()) throw UsageError("--grid is empty");
  return cells;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

// Finds <kind>_x<scale>.layers files below `root`.
void register_models(const fs::path& root, ModelRegistry& reg, std::ostream& out) {
  static const std::vector<std::pair<std::string, std::string>> kinds = {
      {"srresnet", "SRResNet"}, {"srgan", "SRGAN"}, {"lfsr", "LFSR"}, {"ld", ""}};
  std::map<std::string, fs::path> seen;
  for (const auto& entry : fs::recursive_directory_iterator(root)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".layers") continue;
    const std::string stem = entry.path().stem().string();
    if (entry.path().parent_path().filename() == "checkpoint") continue;
    for (const auto& [kind, method] : kinds) {
      for (std::size_t scale : {2u, 4u}) {
        if (stem != model_name(kind, scale)) continue;
        if (seen.count(stem)) {
          throw DataError("more than one " + stem + " model under " + root.string() + ": " + seen[stem].string() +
                          " and " + entry.path().string());
        }
        const fs::path prefix = entry.path().parent_path() / stem;
        seen[stem] = prefix;
        NetworkSpec net = load_network(prefix);
        if (method.empty()) reg.add_detector(scale, std::move(net));
        else reg.add_generator(method, scale, std::move(net));
        out << "loaded " << prefix.string() << "\n";
      }
    }
  }
}

int cmd_eval(const std::string& models, const std::string& data, const std::string& grid, const std::string& methods,
             const std::string& report, std::uint64_t seed, std::size_t crop, bool all_samples, bool force,
             const std::vector<std::string>& args, std::ostream& out) {
  const auto cells = parse_grid(grid);
  const auto method_list = split_list(methods);
  for (const auto& m : method_list) {
    if (!is_known_method(m)) throw UsageError("unknown method '" + m + "'");
  }
  ModelRegistry reg;
  if (!models.empty()) {
    if (!fs::is_directory(models)) throw DataError("model directory " + models + " does not exist");
    register_models(models, reg, out);
  }
  const auto all = load_dataset(data);
  const auto samples = all_samples ? all : select(all, split_dataset(all).validation);
  const fs::path report_path(report);
  const fs::path run_dir = report_path.has_parent_path() ? report_path.parent_path() : fs::path(".");
  fs::create_directories(run_dir);
  if (fs::exists(run_dir / kManifest) && !force) {
    throw UsageError(run_dir.string() + " already holds a run manifest (pass --force to replace it)");
  }
  Manifest manifest("eval", args);
  EvalOptions opts;
  opts.seed = seed;
  opts.crop_lr = crop;
  const EvalResult res = evaluate_suite(method_list, samples, cells, reg, opts);

  RecordTable table;
  table.columns = {"method", "scale", "sigma", "psnr", "ssim", "samples", "infinite_psnr", "perfect", "acceptable", "miss"};
  for (const auto& r : res.reports) {
    table.rows.push_back({r.method, std::to_string(r.scale), fmt(r.sigma), fmt(r.psnr_mean), fmt(r.ssim_mean),
                          std::to_string(r.samples), std::to_string(r.infinite_psnr), std::to_string(r.perfect),
                          std::to_string(r.acceptable), std::to_string(r.miss)});
  }
  write_records(report_path, table);
  out << format_report_table(res.reports);
  manifest.config() = {{"models", models}, {"data", data},   {"grid", grid}, {"methods", methods},
                       {"report", report}, {"seed", seed},   {"crop", crop}, {"all", all_samples}};
  manifest.seed(seed);
  manifest.output(report_path);
  manifest.results()["reports"] = res.reports.size();
  manifest.write(run_dir);
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Lesion-focused super-resolution experiments on synthetic phantoms", "lfsr"};
  app.require_subcommand(1);

  std::size_t pg_n = 200, pg_size = 128;
  std::uint64_t pg_seed = 1;
  std::string pg_out;
  bool pg_force = false;
  auto* pg = app.add_subcommand("phantom-gen", "Generate a phantom dataset");
  pg->add_option("--n", pg_n, "Number of samples");
  pg->add_option("--size", pg_size, "Image side (power of two >= 32)");
  pg->add_option("--seed", pg_seed, "Generator seed");
  pg->add_option("--out", pg_out, "Output directory")->required();
  pg->add_flag("--force", pg_force, "Clear a non-empty output directory");

  std::string dg_data, dg_out;
  std::size_t dg_scale = 2;
  double dg_sigma = 0.0;
  std::uint64_t dg_seed = 1;
  bool dg_force = false, dg_pgm = false;
  auto* dg = app.add_subcommand("degrade", "Simulate low-resolution noisy acquisitions");
  dg->add_option("--data", dg_data, "Dataset directory")->required();
  dg->add_option("--scale", dg_scale, "Downsampling factor (2 or 4)");
  dg->add_option("--sigma", dg_sigma, "Noise level on the 0-255 scale");
  dg->add_option("--seed", dg_seed, "Noise seed");
  dg->add_option("--out", dg_out, "Output directory")->required();
  dg->add_flag("--force", dg_force, "Clear a non-empty output directory");
  dg->add_flag("--pgm", dg_pgm, "Also export 16-bit PGM previews");

  TrainArgs ld_args, sr_args, gan_args;
  auto* tld = app.add_subcommand("train-ld", "Train the lesion detector");
  add_train_options(tld, ld_args);
  auto* tsr = app.add_subcommand("train-sr", "Train the SRResNet generator with pixel MSE");
  add_train_options(tsr, sr_args);
  auto* tgan = app.add_subcommand("train-gan", "MSE pre-training then adversarial training");
  add_train_options(tgan, gan_args);
  tgan->add_option("--pretrained", gan_args.pretrained, "Generator prefix to start from (skips pre-training)");
  tgan->add_option("--ld", gan_args.ld, "Detector prefix supplying ROI windows when gan_crop=roi");

  std::string ev_models, ev_data, ev_grid = "2:0,2:20,2:40,4:0,4:20,4:40", ev_methods = "B+NLD,SRResNet,SRGAN,LFSR",
                                  ev_report;
  std::uint64_t ev_seed = 1;
  std::size_t ev_crop = 32;
  bool ev_all = false, ev_force = false;
  auto* ev = app.add_subcommand("eval", "Score methods over a (scale, sigma) grid");
  ev->add_option("--models", ev_models, "Directory searched for trained models");
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--grid", ev_grid, "Comma-separated scale:sigma[:crop] cells");
  ev->add_option("--methods", ev_methods, "Comma-separated methods (Bilinear, B+NLD, SRResNet, SRGAN, LFSR)");
  ev->add_option("--report", ev_report, "Report file (TSV)")->required();
  ev->add_option("--seed", ev_seed, "Degradation seed");
  ev->add_option("--crop", ev_crop, "LR crop size of the ROI window");
  ev->add_flag("--all", ev_all, "Score every sample instead of the validation split");
  ev->add_flag("--force", ev_force, "Replace an existing manifest next to the report");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "lfsr: " << e.what() << "\n";
    return kUsage;
  }

  std::vector<std::string> full{"lfsr"};
  full.insert(full.end(), args.begin(), args.end());
  try {
    if (*pg) return cmd_phantom_gen(pg_n, pg_size, pg_seed, pg_out, pg_force, full, out);
    if (*dg) return cmd_degrade(dg_data, dg_scale, dg_sigma, dg_seed, dg_out, dg_force, dg_pgm, full, out);
    if (*tld) return cmd_train_ld(ld_args, tld->count("--desk-scale") > 0, full, out);
    if (*tsr) return cmd_train_sr(sr_args, tsr->count("--desk-scale") > 0, full, out);
    if (*tgan) return cmd_train_gan(gan_args, tgan->count("--desk-scale") > 0, full, out);
    if (*ev) {
      return cmd_eval(ev_models, ev_data, ev_grid, ev_methods, ev_report, ev_seed, ev_crop, ev_all, ev_force, full, out);
    }
  } catch (const UsageError& e) {
    err << "lfsr: " << e.what() << "\n";
    return kUsage;
  } catch (const DivergenceError& e) {
    err << "lfsr: numeric divergence: " << e.what() << "\n";
    return kDivergence;
  } catch (const DataError& e) {
    err << "lfsr: data error: " << e.what() << "\n";
    return kData;
  } catch (const std::invalid_argument& e) {
    err << "lfsr: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    err << "lfsr: data error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}

}  // namespace lfsr::cli
