#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "lfsr/error.hpp"
#include "lfsr/metrics.hpp"
#include "oracles.hpp"

using namespace lfsr;
using oracle::random_tensor;

TEST_SUITE_BEGIN("metrics");

namespace {

// Mask with `n` lesion pixels laid out row-major from (row0, col0), `width` per row.
Tensor strip_mask(std::size_t rows, std::size_t cols, std::size_t row0, std::size_t col0, std::size_t width,
                  std::size_t n) {
  Tensor m({rows, cols}, 0.0);
  for (std::size_t i = 0; i < n; ++i) m.at(row0 + i / width, col0 + i % width) = 1.0;
  return m;
}

}  // namespace

TEST_CASE("psnr closed forms") {
  Rng rng(1);
  Tensor a = random_tensor({8, 8}, rng);
  CHECK(std::isinf(psnr(a, a)));
  Tensor b = a.clone();
  for (auto& v : b.data()) v += 0.02;
  CHECK(psnr(b, a, 2.0) == doctest::Approx(40.0).epsilon(1e-12));
  Tensor z({4}, 0.0), o({4}, 2.0);
  CHECK(psnr(z, o, 2.0) == doctest::Approx(0.0));
  CHECK_THROWS_AS(psnr(Tensor({2, 2}), Tensor({2, 3})), ShapeError);
}

TEST_CASE("psnr is scale-consistent") {
  Rng rng(2);
  Tensor a = random_tensor({16, 16}, rng), b = random_tensor({16, 16}, rng);
  Tensor a3 = a.clone(), b3 = b.clone();
  for (auto& v : a3.data()) v *= 3.0;
  for (auto& v : b3.data()) v *= 3.0;
  CHECK(std::abs(psnr(a, b, 2.0) - psnr(a3, b3, 6.0)) < 1e-10);
}

TEST_CASE("psnr and ssim match literal references") {
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    Tensor a = random_tensor({32, 32}, rng), b = a.clone();
    for (auto& v : b.data()) v += rng.normal(0.0, 0.2);
    CHECK(std::abs(psnr(a, b) - oracle::literal_psnr(a, b, 2.0)) < 1e-10);
    CHECK(std::abs(ssim(a, b) - oracle::literal_ssim(a, b, 2.0)) < 1e-10);
  }
}

TEST_CASE("ssim identities") {
  Rng rng(4);
  Tensor a = random_tensor({20, 24}, rng), b = random_tensor({20, 24}, rng);
  CHECK(std::abs(ssim(a, a) - 1.0) < 1e-12);
  CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-12);
  const double s = ssim(a, b);
  CHECK(s >= -1.0);
  CHECK(s <= 1.0);
  CHECK_THROWS_AS(ssim(Tensor({10, 10}), Tensor({10, 10})), ShapeError);
}

TEST_CASE("ssim of a texture mirrored about its mean level is negative") {
  Tensor a({32, 32});
  for (std::size_t r = 0; r < 32; ++r)
    for (std::size_t c = 0; c < 32; ++c) a.at(r, c) = 0.5 + 0.3 * std::sin(0.7 * r) * std::cos(0.5 * c);
  Tensor b = a.clone();
  for (auto& v : b.data()) v = 1.0 - v;
  CHECK(ssim(b, a) < 0.0);
}

TEST_CASE("gaussian window is normalized and symmetric") {
  const auto k = gaussian_window(11, 1.5);
  double s = 0.0;
  for (double v : k) s += v;
  CHECK(s == doctest::Approx(1.0));
  CHECK(k[0] == doctest::Approx(k[10]));
  CHECK(k[5] > k[4]);
}

TEST_CASE("coverage") {
  Tensor m = strip_mask(20, 20, 5, 5, 10, 100);
  CHECK(coverage(BoundingBox{0, 0, 20, 20}, m) == 1.0);
  CHECK(coverage(BoundingBox{16, 0, 4, 20}, m) == 0.0);
  // Rows 5..14 hold ten pixels each.
  CHECK(coverage(BoundingBox{5, 5, 9, 10}, m) == doctest::Approx(0.90));
  CHECK(coverage(BoundingBox{5, 5, 10, 5}, m) == doctest::Approx(0.50));
  Tensor m95({20, 20}, 0.0);
  for (std::size_t i = 0; i < 100; ++i) m95.at(i / 10, i % 10) = 1.0;
  CHECK(coverage(BoundingBox{0, 0, 10, 10}, m95) == 1.0);
  CHECK(coverage(BoundingBox{0, 0, 10, 9}, m95) == doctest::Approx(0.90));
  CHECK_THROWS_AS(coverage(BoundingBox{0, 0, 5, 5}, Tensor({5, 5}, 0.0)), DataError);
}

TEST_CASE("coverage of exactly 95 of 100 lesion pixels") {
  // 95 pixels fill rows 0..9 of a 10-wide block; 5 more sit in row 11.
  Tensor last({12, 12}, 0.0);
  for (std::size_t i = 0; i < 95; ++i) last.at(i / 10, i % 10) = 1.0;
  for (std::size_t c = 5; c < 10; ++c) last.at(11, c) = 1.0;
  CHECK(coverage(BoundingBox{0, 0, 10, 10}, last) == doctest::Approx(0.95));
  CHECK(detection_grade(coverage(BoundingBox{0, 0, 10, 10}, last)) == DetectionGrade::Acceptable);
  CHECK(detection_grade(coverage(BoundingBox{0, 0, 12, 12}, last)) == DetectionGrade::Perfect);
  CHECK(detection_grade(coverage(BoundingBox{0, 0, 9, 10}, last)) == DetectionGrade::Miss);
}

TEST_CASE("coverage is monotone in the box") {
  Rng rng(5);
  Tensor m({24, 24}, 0.0);
  for (auto& v : m.data()) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
  double previous = 0.0;
  for (int grow = 0; grow <= 12; ++grow) {
    const double cov = coverage(BoundingBox{12 - grow, 12 - grow, 2 * grow, 2 * grow}, m);
    CHECK(cov >= previous);
    previous = cov;
  }
  CHECK(previous == 1.0);
}

TEST_CASE("detection grade thresholds") {
  CHECK(detection_grade(1.0) == DetectionGrade::Perfect);
  CHECK(detection_grade(1.0 - 1e-13) == DetectionGrade::Perfect);
  CHECK(detection_grade(0.95) == DetectionGrade::Acceptable);
  CHECK(detection_grade(0.999) == DetectionGrade::Acceptable);
  CHECK(detection_grade(0.94) == DetectionGrade::Miss);
  CHECK(detection_grade(0.0) == DetectionGrade::Miss);
  CHECK_THROWS(detection_grade(1.5));
  CHECK_THROWS(detection_grade(-0.1));
  CHECK(std::string(grade_name(DetectionGrade::Acceptable)) == "acceptable");
}

TEST_CASE("box clamping") {
  const BoundingBox b = BoundingBox{-3, 5, 10, 20}.clamped(8, 16);
  CHECK(b == BoundingBox{0, 5, 7, 11});
}

TEST_CASE("aggregate") {
  const std::vector<SampleMetrics> one{{30.0, 0.9, DetectionGrade::Perfect}};
  const MetricReport r1 = aggregate("m", 2, 0.0, one);
  CHECK(r1.psnr_mean == 30.0);
  CHECK(r1.ssim_mean == 0.9);

  const std::vector<SampleMetrics> three{{30.0, 0.9, DetectionGrade::Perfect},
                                         {32.0, 0.8, DetectionGrade::Perfect},
                                         {std::numeric_limits<double>::infinity(), 1.0, DetectionGrade::Acceptable}};
  const MetricReport r3 = aggregate("m", 4, 20.0, three);
  CHECK(r3.perfect == 2);
  CHECK(r3.acceptable == 1);
  CHECK(r3.miss == 0);
  CHECK(r3.infinite_psnr == 1);
  CHECK(r3.psnr_mean == doctest::Approx(31.0));
  CHECK(r3.ssim_mean == doctest::Approx(0.9));
  CHECK(r3.perfect + r3.acceptable + r3.miss == r3.samples);
  CHECK_THROWS(aggregate("m", 2, 0.0, std::vector<SampleMetrics>{}));
}

TEST_CASE("report table lists every report") {
  const std::vector<SampleMetrics> one{{30.0, 0.9, DetectionGrade::Perfect}};
  const std::vector<MetricReport> reports{aggregate("B+NLD", 2, 0.0, one), aggregate("LFSR", 4, 40.0, one)};
  const std::string table = format_report_table(reports);
  CHECK(table.find("method") != std::string::npos);
  CHECK(table.find("B+NLD") != std::string::npos);
  CHECK(table.find("LFSR") != std::string::npos);
  CHECK(std::count(table.begin(), table.end(), '\n') == 3);
}

TEST_SUITE_END();
