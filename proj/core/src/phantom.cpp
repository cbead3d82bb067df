#include "lfsr/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "lfsr/degradation.hpp"
#include "lfsr/error.hpp"
#include "lfsr/rng.hpp"
#include "lfsr/tensor_io.hpp"

namespace lfsr {
namespace {

constexpr double kPi = std::numbers::pi;

struct Wave {
  double fx, fy, phase, amplitude;
};

// Plane waves with frequencies (cycles per image) drawn from [fmin, fmax].
std::vector<Wave> random_waves(Rng& rng, int count, double fmin, double fmax, double amplitude) {
  std::vector<Wave> waves;
  for (int i = 0; i < count; ++i) {
    const double f = rng.uniform(fmin, fmax);
    const double dir = rng.uniform(0.0, kPi);
    waves.push_back({f * std::cos(dir), f * std::sin(dir), rng.uniform(0.0, 2.0 * kPi), amplitude});
  }
  return waves;
}

double eval_waves(const std::vector<Wave>& waves, double u, double v) {
  double s = 0.0;
  for (const auto& w : waves) s += w.amplitude * std::cos(2.0 * kPi * (w.fx * u + w.fy * v) + w.phase);
  return s;
}

struct Ellipse {
  double cx, cy, a, b, angle;

  // Normalized radius: 1 on the boundary.
  double radius(double x, double y) const {
    const double dx = x - cx, dy = y - cy;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (c * dx + s * dy) / a, v = (-s * dx + c * dy) / b;
    return std::sqrt(u * u + v * v);
  }
};

double smoothstep(double t) {
  t = std::clamp(t, 0.0, 1.0);
  return t * t * (3.0 - 2.0 * t);
}

constexpr double kBrainRadius = 0.86;
constexpr double kLesionLimit = 0.8;

}  // namespace

void PhantomConfig::validate() const {
  if (!is_power_of_two(image_size) || image_size < 32) {
    throw DataError("phantom image size must be a power of two >= 32, got " + std::to_string(image_size));
  }
  if (!(lesion_radius_min > 0.0 && lesion_radius_max >= lesion_radius_min)) {
    throw DataError("phantom lesion radius range is invalid");
  }
}

Sample gen_phantom(const PhantomConfig& cfg, std::uint64_t id) {
  cfg.validate();
  const std::size_t n = cfg.image_size;
  const double size = static_cast<double>(n);
  Rng rng = Rng(cfg.seed).split("phantom").split(id);

  const Ellipse head{size / 2.0 + rng.uniform(-0.03, 0.03) * size,
                     size / 2.0 + rng.uniform(-0.03, 0.03) * size, rng.uniform(0.38, 0.42) * size,
                     rng.uniform(0.43, 0.46) * size, rng.uniform(-0.15, 0.15)};
  const auto coarse = random_waves(rng, 4, 0.5, 2.5, 0.06);
  const auto medium = random_waves(rng, 6, 4.0, 12.0, 0.035);
  const auto fine = random_waves(rng, 6, 18.0, 40.0, 0.02);
  const double skull_level = rng.uniform(0.6, 0.8);

  Ellipse lesion{};
  const double r_scale = size / 128.0;
  bool placed = false;
  for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
    lesion.a = rng.uniform(cfg.lesion_radius_min, cfg.lesion_radius_max) * r_scale;
    lesion.b = rng.uniform(cfg.lesion_radius_min, cfg.lesion_radius_max) * r_scale;
    lesion.angle = rng.uniform(0.0, kPi);
    const double extent = kLesionLimit * std::max(head.a, head.b);
    lesion.cx = head.cx + rng.uniform(-extent, extent);
    lesion.cy = head.cy + rng.uniform(-extent, extent);
    const double reach = std::max(lesion.a, lesion.b) + 1.0;
    placed = true;
    for (double y = std::floor(lesion.cy - reach); y <= lesion.cy + reach && placed; y += 1.0) {
      for (double x = std::floor(lesion.cx - reach); x <= lesion.cx + reach; x += 1.0) {
        if (lesion.radius(x + 0.5, y + 0.5) > 1.0) continue;
        if (x < 0 || y < 0 || x >= size || y >= size || head.radius(x + 0.5, y + 0.5) > kLesionLimit) {
          placed = false;
          break;
        }
      }
    }
  }
  if (!placed) {
    throw DataError("phantom " + std::to_string(id) + ": lesion placement failed after 100 tries");
  }
  const bool necrotic = rng.uniform() < 0.5;
  const auto lesion_texture = random_waves(rng, 3, 10.0, 20.0, 0.06);
  const double lesion_gain = rng.uniform(0.65, 0.85);

  Sample s;
  s.id = id;
  s.hr = Tensor({n, n});
  s.lesion_mask = Tensor({n, n});
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      const double x = static_cast<double>(c) + 0.5, y = static_cast<double>(r) + 0.5;
      const double u = x / size, v = y / size;
      const double q = head.radius(x, y);
      double value;
      if (q > 1.0) {
        value = -1.0;
      } else if (q > 0.9) {
        value = skull_level + 0.5 * eval_waves(coarse, u, v);
      } else if (q > kBrainRadius) {
        value = -0.6;
      } else {
        value = -0.15 + eval_waves(coarse, u, v) + eval_waves(medium, u, v) + eval_waves(fine, u, v);
      }
      const double rho = lesion.radius(x, y);
      if (rho <= 1.0) {
        s.lesion_mask.at(r, c) = 1.0;
        const double profile = 0.25 + 0.75 * smoothstep((1.0 - rho) / 0.3);
        double boost = lesion_gain * profile + profile * eval_waves(lesion_texture, u, v);
        if (necrotic && rho < 0.45) boost -= 0.4 * smoothstep((0.45 - rho) / 0.15);
        value += boost;
      }
      s.hr.at(r, c) = std::clamp(value, -1.0, 1.0);
    }
  }
  s.bbox = tight_bounds(s.lesion_mask);
  return s;
}

std::vector<Sample> gen_dataset(const PhantomConfig& cfg) {
  std::vector<Sample> out;
  out.reserve(cfg.n_samples);
  for (std::size_t i = 0; i < cfg.n_samples; ++i) out.push_back(gen_phantom(cfg, i));
  return out;
}

BoundingBox tight_bounds(const Tensor& mask) {
  if (mask.rank() != 2) throw ShapeError("tight_bounds: mask must be 2-D");
  int r0 = -1, r1 = -1, c0 = -1, c1 = -1;
  for (std::size_t r = 0; r < mask.dim(0); ++r)
    for (std::size_t c = 0; c < mask.dim(1); ++c) {
      if (mask.at(r, c) <= 0.5) continue;
      const int ri = static_cast<int>(r), ci = static_cast<int>(c);
      if (r0 < 0 || ri < r0) r0 = ri;
      if (ri > r1) r1 = ri;
      if (c0 < 0 || ci < c0) c0 = ci;
      if (ci > c1) c1 = ci;
    }
  if (r0 < 0) throw DataError("tight_bounds: empty mask");
  return BoundingBox{r0, c0, r1 - r0 + 1, c1 - c0 + 1};
}

DatasetSplit split_dataset(const std::vector<Sample>& samples, double validation_fraction) {
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  auto key = [&](std::size_t i) { return mix64(samples[i].id ^ 0x5851f42d4c957f2dULL); };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto ka = key(a), kb = key(b);
    return ka != kb ? ka < kb : samples[a].id < samples[b].id;
  });
  const auto n_val = static_cast<std::size_t>(
      std::llround(validation_fraction * static_cast<double>(samples.size())));
  DatasetSplit split;
  split.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  split.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(split.validation.begin(), split.validation.end());
  std::sort(split.train.begin(), split.train.end());
  return split;
}

std::vector<Sample> select(const std::vector<Sample>& samples, const std::vector<std::size_t>& idx) {
  std::vector<Sample> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(samples.at(i));
  return out;
}

void save_dataset(const std::filesystem::path& dir, const std::vector<Sample>& samples) {
  std::filesystem::create_directories(dir);
  std::ostringstream manifest;
  for (const auto& s : samples) {
    char file[64];
    std::snprintf(file, sizeof file, "sample_%05llu.lftb", static_cast<unsigned long long>(s.id));
    save_tensors(dir / file, {{"hr", s.hr}, {"mask", s.lesion_mask}});
    manifest << s.id << ' ' << file << ' ' << s.bbox.row0 << ' ' << s.bbox.col0 << ' '
             << s.bbox.height << ' ' << s.bbox.width << '\n';
  }
  std::ofstream out(dir / kDatasetManifest, std::ios::trunc);
  if (!out) throw DataError("cannot write " + (dir / kDatasetManifest).string());
  out << manifest.str();
}

std::vector<Sample> load_dataset(const std::filesystem::path& dir) {
  std::ifstream in(dir / kDatasetManifest);
  if (!in) throw DataError("no dataset manifest at " + (dir / kDatasetManifest).string());
  std::vector<Sample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream ls(line);
    Sample s;
    std::string file;
    if (!(ls >> s.id >> file >> s.bbox.row0 >> s.bbox.col0 >> s.bbox.height >> s.bbox.width)) {
      throw DataError((dir / kDatasetManifest).string() + ": malformed line " + std::to_string(line_no));
    }
    auto tensors = load_tensor_map(dir / file);
    if (!tensors.count("hr") || !tensors.count("mask")) {
      throw DataError(file + ": missing 'hr' or 'mask' tensor");
    }
    s.hr = tensors.at("hr");
    s.lesion_mask = tensors.at("mask");
    if (s.hr.rank() != 2 || s.hr.shape() != s.lesion_mask.shape()) {
      throw DataError(file + ": hr/mask must be 2-D tensors of equal shape");
    }
    out.push_back(std::move(s));
  }
  if (out.empty()) throw DataError("dataset at " + dir.string() + " is empty");
  return out;
}

}  // namespace lfsr
