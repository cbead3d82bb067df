#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "cli.hpp"
#include "lfsr/phantom.hpp"
#include "lfsr/tensor_io.hpp"

namespace fs = std::filesystem;
using lfsr::cli::run;

TEST_SUITE_BEGIN("cli");

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome lfsr_cmd(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Outcome o;
  o.code = run(args, out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "lfsr_cli_test" / name;
  fs::remove_all(p);
  fs::create_directories(p.parent_path());
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) files[fs::relative(e.path(), root).string()] = slurp(e.path());
  return files;
}

std::size_t manifests_under(const fs::path& root) {
  std::size_t n = 0;
  for (const auto& e : fs::recursive_directory_iterator(root)) n += e.path().filename() == "manifest.json";
  return n;
}

// Ten 128-pixel phantoms shared by the training and evaluation cases.
const fs::path& dataset() {
  static const fs::path dir = [] {
    const fs::path d = scratch("data128");
    REQUIRE(lfsr_cmd({"phantom-gen", "--n", "10", "--size", "128", "--seed", "4", "--out", d.string()}).code == 0);
    return d;
  }();
  return dir;
}

std::vector<std::string> tiny(std::vector<std::string> args, std::size_t scale) {
  for (const char* kv : {"sr_channels=4", "sr_blocks=1", "ld_channels=4", "ld_stages=2", "d_channels=2",
                         "perceptual_channels=4", "crop_lr=8", "batch_size=2", "lr=1e-3", "lr_d=1e-3"}) {
    args.push_back("--set");
    args.push_back(kv);
  }
  args.push_back("--set");
  args.push_back("scale=" + std::to_string(scale));
  return args;
}

}  // namespace

TEST_CASE("phantom-gen writes samples and a manifest") {
  const fs::path out = scratch("pg");
  const Outcome o = lfsr_cmd({"phantom-gen", "--n", "10", "--size", "64", "--seed", "3", "--out", out.string()});
  REQUIRE(o.code == 0);
  std::size_t containers = 0;
  for (const auto& e : fs::directory_iterator(out)) containers += e.path().extension() == ".lftb";
  CHECK(containers == 10);
  CHECK(fs::exists(out / lfsr::kDatasetManifest));
  CHECK(manifests_under(out) == 1);

  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(m["command"] == "phantom-gen");
  CHECK(m["seed"] == 3);
  CHECK(m.contains("build_id"));
  CHECK(m.contains("wall_time_seconds"));
  CHECK(m["config"]["size"] == 64);
}

TEST_CASE("phantom-gen with the same seed reproduces the dataset") {
  const fs::path a = scratch("pg_a"), b = scratch("pg_b");
  REQUIRE(lfsr_cmd({"phantom-gen", "--n", "5", "--size", "32", "--seed", "9", "--out", a.string()}).code == 0);
  REQUIRE(lfsr_cmd({"phantom-gen", "--n", "5", "--size", "32", "--seed", "9", "--out", b.string()}).code == 0);
  auto ta = tree(a), tb = tree(b);
  REQUIRE(ta.size() == tb.size());
  for (const auto& [name, bytes] : ta) {
    if (name == "manifest.json") continue;
    CHECK_MESSAGE(bytes == tb.at(name), name);
  }
  auto ma = nlohmann::json::parse(ta.at("manifest.json")), mb = nlohmann::json::parse(tb.at("manifest.json"));
  for (auto* m : {&ma, &mb}) {
    m->erase("wall_time_seconds");
    (*m)["args"].clear();
    (*m)["config"].erase("out");
    (*m)["outputs"].clear();
  }
  CHECK(ma == mb);
}

TEST_CASE("phantom-gen validates its arguments and output directory") {
  const fs::path out = scratch("pg_bad");
  const Outcome size = lfsr_cmd({"phantom-gen", "--size", "100", "--out", out.string()});
  CHECK(size.code == lfsr::cli::kUsage);
  CHECK(size.err.find("power of two") != std::string::npos);
  CHECK_FALSE(fs::exists(out));

  fs::create_directories(out);
  std::ofstream(out / "keep.txt") << "x";
  const Outcome busy = lfsr_cmd({"phantom-gen", "--n", "2", "--size", "32", "--out", out.string()});
  CHECK(busy.code == lfsr::cli::kUsage);
  CHECK(busy.err.find("--force") != std::string::npos);
  CHECK(lfsr_cmd({"phantom-gen", "--n", "2", "--size", "32", "--out", out.string(), "--force"}).code == 0);
  CHECK_FALSE(fs::exists(out / "keep.txt"));
}

TEST_CASE("degrade halves the grid and reports psnr per file") {
  const fs::path data = dataset();
  const fs::path a = scratch("dg_a"), b = scratch("dg_b");
  const Outcome o = lfsr_cmd({"degrade", "--data", data.string(), "--scale", "2", "--sigma", "0", "--seed", "1",
                              "--out", a.string()});
  REQUIRE(o.code == 0);
  CHECK(o.out.find("psnr") != std::string::npos);
  REQUIRE(lfsr_cmd({"degrade", "--data", data.string(), "--scale", "2", "--sigma", "0", "--seed", "77", "--out",
                    b.string()})
              .code == 0);
  const auto table = lfsr::read_records(a / "degrade.tsv");
  CHECK(table.columns.back() == "psnr_bilinear");
  REQUIRE(table.rows.size() == 10);
  for (const auto& row : table.rows) {
    const auto lr = lfsr::load_tensor_map(a / row[1]).at("lr");
    CHECK(lr.shape() == lfsr::Shape{64, 64});
    CHECK(std::stod(row[2]) > 15.0);
    CHECK(slurp(a / row[1]) == slurp(b / row[1]));
  }
  CHECK(manifests_under(a) == 1);
  CHECK(lfsr_cmd({"degrade", "--data", data.string(), "--scale", "3", "--out", scratch("dg_c").string()}).code ==
        lfsr::cli::kUsage);
}

TEST_CASE("train-sr honours the desk scale") {
  const fs::path out = scratch("sr_desk");
  const Outcome o =
      lfsr_cmd(tiny({"train-sr", "--data", dataset().string(), "--desk-scale", "50", "--out", out.string()}, 2));
  REQUIRE_MESSAGE(o.code == 0, o.err);
  CHECK(lfsr::read_records(out / "curve.tsv").rows.size() == 7);
  CHECK(fs::exists(out / "srresnet_x2.lftb"));
  CHECK(fs::exists(out / "srresnet_x2.layers"));
  CHECK(manifests_under(out) == 1);
  const auto m = nlohmann::json::parse(slurp(out / "manifest.json"));
  CHECK(m["config"]["desk_scale"] == "50");
  CHECK(m["results"].contains("val_mse_final"));
}

TEST_CASE("interrupted and resumed train-sr equals an uninterrupted run") {
  const fs::path full = scratch("sr_full"), part = scratch("sr_part");
  const auto base = [](const fs::path& out) {
    return tiny({"train-sr", "--data", dataset().string(), "--set", "epochs_srresnet=4", "--out", out.string()}, 2);
  };
  REQUIRE(lfsr_cmd(base(full)).code == 0);
  auto stop = base(part);
  stop.insert(stop.end(), {"--stop-after", "2"});
  const Outcome first = lfsr_cmd(stop);
  REQUIRE(first.code == 0);
  CHECK(first.out.find("resume with --resume") != std::string::npos);
  CHECK_FALSE(fs::exists(part / "srresnet_x2.lftb"));
  CHECK(manifests_under(part) == 1);
  auto resume = base(part);
  resume.push_back("--resume");
  REQUIRE(lfsr_cmd(resume).code == 0);
  CHECK(slurp(full / "srresnet_x2.lftb") == slurp(part / "srresnet_x2.lftb"));
  CHECK(slurp(full / "curve.tsv") == slurp(part / "curve.tsv"));
  CHECK(manifests_under(part) == 1);

  auto changed = base(part);
  changed.insert(changed.end(), {"--resume", "--set", "lr=5e-4"});
  CHECK(lfsr_cmd(changed).code == lfsr::cli::kData);
}

TEST_CASE("eval emits the full 24-cell report") {
  const fs::path models = scratch("models");
  const std::string data = dataset().string();
  for (std::size_t s : {2u, 4u}) {
    const std::string x = std::to_string(s);
    const fs::path ld = models / ("ld" + x), sr = models / ("sr" + x), gan = models / ("gan" + x),
                   lfsr_dir = models / ("lfsr" + x);
    REQUIRE(lfsr_cmd(tiny({"train-ld", "--data", data, "--set", "epochs_ld=1", "--out", ld.string()}, s)).code == 0);
    CHECK(lfsr::read_records(ld / "detections.tsv").rows.size() == 2);
    REQUIRE(lfsr_cmd(tiny({"train-sr", "--data", data, "--set", "epochs_srresnet=1", "--out", sr.string()}, s)).code ==
            0);
    const std::vector<std::string> gan_epochs{"--set", "epochs_gan_pretrain=1", "--set", "epochs_gan=1"};
    auto g = tiny({"train-gan", "--data", data, "--out", gan.string()}, s);
    g.insert(g.end(), gan_epochs.begin(), gan_epochs.end());
    REQUIRE(lfsr_cmd(g).code == 0);
    CHECK(fs::exists(gan / ("discriminator_x" + x + ".lftb")));
    auto l = tiny({"train-gan", "--data", data, "--set", "gan_crop=roi", "--ld", (ld / ("ld_x" + x)).string(),
                   "--pretrained", (sr / ("srresnet_x" + x)).string(), "--out", lfsr_dir.string()},
                  s);
    l.insert(l.end(), gan_epochs.begin(), gan_epochs.end());
    REQUIRE(lfsr_cmd(l).code == 0);
    CHECK(fs::exists(lfsr_dir / ("lfsr_x" + x + ".lftb")));
    for (const auto& d : {ld, sr, gan, lfsr_dir}) CHECK(manifests_under(d) == 1);
  }

  const fs::path report_dir = scratch("report");
  const std::vector<std::string> eval{"eval",   "--models", models.string(), "--data", data, "--crop", "8",
                                      "--report", (report_dir / "report.tsv").string()};
  const Outcome o = lfsr_cmd(eval);
  REQUIRE_MESSAGE(o.code == 0, o.err);
  const auto table = lfsr::read_records(report_dir / "report.tsv");
  CHECK(table.rows.size() == 24);
  for (const char* m : {"B+NLD", "SRResNet", "SRGAN", "LFSR"}) CHECK(o.out.find(m) != std::string::npos);
  CHECK(manifests_under(report_dir) == 1);
  const std::string first = slurp(report_dir / "report.tsv");

  const Outcome again = lfsr_cmd(eval);
  CHECK(again.code == lfsr::cli::kUsage);
  auto forced = eval;
  forced.push_back("--force");
  REQUIRE(lfsr_cmd(forced).code == 0);
  CHECK(slurp(report_dir / "report.tsv") == first);

  const Outcome missing = lfsr_cmd({"eval", "--data", data, "--methods", "SRResNet", "--report",
                                    (scratch("report_missing") / "r.tsv").string()});
  CHECK(missing.code == lfsr::cli::kData);
}

TEST_CASE("exit codes") {
  CHECK(lfsr_cmd({}).code == lfsr::cli::kUsage);
  CHECK(lfsr_cmd({"--help"}).code == lfsr::cli::kOk);
  CHECK(lfsr_cmd({"frobnicate"}).code == lfsr::cli::kUsage);
  CHECK(lfsr_cmd({"train-sr", "--out", scratch("x").string()}).code == lfsr::cli::kUsage);
  const Outcome no_data = lfsr_cmd({"train-sr", "--data", scratch("nothing").string(), "--out", scratch("y").string()});
  CHECK(no_data.code == lfsr::cli::kData);
  CHECK_FALSE(no_data.err.empty());
  CHECK(lfsr_cmd({"train-sr", "--data", dataset().string(), "--set", "lr=-1", "--out", scratch("z").string()}).code ==
        lfsr::cli::kUsage);
  CHECK(lfsr_cmd({"eval", "--data", dataset().string(), "--grid", "3:0", "--report", scratch("g").string() + "/r.tsv"})
            .code == lfsr::cli::kUsage);
  CHECK(lfsr_cmd({"eval", "--data", dataset().string(), "--methods", "Magic", "--report",
                  scratch("h").string() + "/r.tsv"})
            .code == lfsr::cli::kUsage);
}

TEST_SUITE_END();
