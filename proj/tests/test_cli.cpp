#include "weaksurg/cli.hpp"

#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "weaksurg/synthvid.hpp"

using namespace weaksurg;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
  fs::path path;
  TempDir() {
    static int counter = 0;
    path = fs::temp_directory_path() / ("weaksurg_cli_" + std::to_string(::getpid()) + "_" +
                                        std::to_string(counter++));
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"weaksurg"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::run(static_cast<int>(argv.size()), argv.data());
}

std::uint64_t tree_hash(const fs::path& root) {
  std::vector<fs::path> files;
  for (const auto& entry : fs::recursive_directory_iterator(root))
    if (entry.is_regular_file()) files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::uint64_t acc = 1469598103934665603ULL;
  for (const auto& f : files) {
    const std::string rel = fs::relative(f, root).string();
    acc ^= synthvid::fnv1a64(reinterpret_cast<const std::uint8_t*>(rel.data()), rel.size());
    acc *= 1099511628211ULL;
    acc ^= synthvid::hash_file(f.string());
    acc *= 1099511628211ULL;
  }
  return acc;
}

void write_tiny_config(const fs::path& path, bool pter, bool ctsc) {
  json j;
  j["learning_rate"] = 1e-3;
  j["batch_size"] = 4;
  j["epochs"] = 1;
  j["seed"] = 5;
  j["window_k"] = 3;
  j["local_crops"] = 2;
  j["crop_size"] = 16;
  j["crop_encode_size"] = 16;
  j["enable_pter"] = pter;
  j["enable_ctsc"] = ctsc;
  j["encoder"] = {{"patch_size", 8}, {"embed_dim", 16}, {"depth", 1},
                  {"heads", 2},      {"proj_dim", 8},   {"mlp_ratio", 2}};
  std::ofstream out(path);
  out << j.dump(2);
}

}  // namespace

TEST_CASE("cli: synth writes the documented tree and repeats bit-identically") {
  TempDir dir;
  const auto out1 = (dir.path / "d1").string();
  const auto out2 = (dir.path / "d2").string();
  const std::vector<std::string> base = {"synth",      "--clips",  "3", "--frames", "4",
                                         "--classes",  "4",        "--size", "32",
                                         "--objects",  "2",        "--seed", "9"};
  auto args1 = base;
  args1.push_back("--out");
  args1.push_back(out1);
  auto args2 = base;
  args2.push_back("--out");
  args2.push_back(out2);
  CHECK(run_cli(args1) == 0);
  CHECK(run_cli(args2) == 0);

  CHECK(fs::exists(fs::path(out1) / "meta.json"));
  CHECK(fs::exists(fs::path(out1) / "clips" / "clip_0000" / "frames" / "000000.png"));
  CHECK(fs::exists(fs::path(out1) / "clips" / "clip_0002" / "labels.json"));
  CHECK(fs::exists(fs::path(out1) / "clips" / "clip_0002" / "masks" / "000003.png"));
  CHECK(tree_hash(out1) == tree_hash(out2));
}

TEST_CASE("cli: bad flags exit 2") {
  TempDir dir;
  CHECK(run_cli({"synth", "--out", (dir.path / "x").string(), "--classes", "0"}) == 2);
  CHECK(run_cli({"synth"}) == 2);                       // missing --out
  CHECK(run_cli({"does-not-exist"}) == 2);              // unknown subcommand
  CHECK(run_cli({"eval", "--data", "nowhere"}) == 2);   // neither --ckpt nor --oracle-cam
}

TEST_CASE("cli: missing inputs exit 3") {
  TempDir dir;
  write_tiny_config(dir.path / "cfg.json", false, false);
  CHECK(run_cli({"train", "--config", (dir.path / "cfg.json").string(), "--data",
                 (dir.path / "missing").string(), "--out", (dir.path / "out").string()}) == 3);
  CHECK(run_cli({"eval", "--oracle-cam", "--data", (dir.path / "missing").string()}) == 3);
}

TEST_CASE("cli: train -> eval -> export-plots round trip") {
  TempDir dir;
  const auto data = (dir.path / "data").string();
  REQUIRE(run_cli({"synth", "--out", data, "--clips", "3", "--frames", "4", "--classes",
                   "4", "--size", "32", "--objects", "2", "--val-clips", "1", "--seed",
                   "3"}) == 0);

  write_tiny_config(dir.path / "cfg.json", false, false);
  const auto out = (dir.path / "run").string();
  REQUIRE(run_cli({"train", "--config", (dir.path / "cfg.json").string(), "--data", data,
                   "--out", out}) == 0);
  CHECK(fs::exists(fs::path(out) / "checkpoint.bin"));
  CHECK(fs::exists(fs::path(out) / "run_record.jsonl"));

  // record of a cls-only run carries only cls loss entries
  std::ifstream rec(fs::path(out) / "run_record.jsonl");
  std::string line;
  int steps = 0;
  while (std::getline(rec, line)) {
    const json j = json::parse(line);
    if (j["type"] == "step") {
      ++steps;
      CHECK(!j.contains("l_pter"));
      CHECK(!j.contains("l_ctsc"));
    }
  }
  CHECK(steps > 0);

  const auto report = (dir.path / "report.json").string();
  REQUIRE(run_cli({"eval", "--ckpt", (fs::path(out) / "checkpoint.bin").string(), "--data",
                   data, "--stage", "pseudo_mask", "--split", "val", "--out", report}) == 0);
  std::ifstream rin(report);
  json rj;
  rin >> rj;
  CHECK(rj["stage"] == "pseudo_mask");
  CHECK(rj["semantic"].contains("ch_iou"));

  const auto plots = (dir.path / "plots").string();
  REQUIRE(run_cli({"export-plots", "--ckpt", (fs::path(out) / "checkpoint.bin").string(),
                   "--data", data, "--out", plots, "--clip", "clip_0002", "--max-frames",
                   "2"}) == 0);
  CHECK(fs::exists(fs::path(plots) / "clip_0002" / "000000_panel.png"));
  CHECK(fs::exists(fs::path(plots) / "clip_0002" / "000001_panel.png"));
  CHECK(!fs::exists(fs::path(plots) / "clip_0002" / "000002_panel.png"));
}

TEST_CASE("cli: oracle CAM evaluation reports near-perfect seeds") {
  TempDir dir;
  const auto data = (dir.path / "data").string();
  REQUIRE(run_cli({"synth", "--out", data, "--clips", "2", "--frames", "3", "--classes",
                   "4", "--size", "32", "--objects", "2", "--val-clips", "1", "--seed",
                   "8"}) == 0);
  const auto report = (dir.path / "report.json").string();
  REQUIRE(run_cli({"eval", "--oracle-cam", "--data", data, "--stage", "cam_seed", "--split",
                   "val", "--out", report}) == 0);
  std::ifstream rin(report);
  json rj;
  rin >> rj;
  CHECK(rj["semantic"]["ch_iou"].get<double>() >= 99.0);
}

TEST_CASE("cli: unknown stage exits 2, corrupt checkpoint exits 4") {
  TempDir dir;
  const auto data = (dir.path / "data").string();
  REQUIRE(run_cli({"synth", "--out", data, "--clips", "2", "--frames", "2", "--classes",
                   "3", "--size", "32", "--objects", "2", "--seed", "1"}) == 0);
  CHECK(run_cli({"eval", "--oracle-cam", "--data", data, "--stage", "nope"}) == 2);

  const auto bad = (dir.path / "bad.bin").string();
  {
    std::ofstream out(bad, std::ios::binary);
    out << "garbage";
  }
  CHECK(run_cli({"eval", "--ckpt", bad, "--data", data, "--stage", "cam_seed"}) == 4);
  CHECK(run_cli({"export-plots", "--ckpt", bad, "--data", data, "--out",
                 (dir.path / "p").string()}) == 4);
}

TEST_CASE("cli: global --seed overrides the synth seed") {
  TempDir dir;
  const auto a = (dir.path / "a").string();
  const auto b = (dir.path / "b").string();
  CHECK(run_cli({"--seed", "77", "synth", "--out", a, "--clips", "2", "--frames", "2",
                 "--classes", "3", "--size", "32", "--objects", "2"}) == 0);
  CHECK(run_cli({"synth", "--out", b, "--clips", "2", "--frames", "2", "--classes", "3",
                 "--size", "32", "--objects", "2", "--seed", "77"}) == 0);
  CHECK(tree_hash(a) == tree_hash(b));
}
