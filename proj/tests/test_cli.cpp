#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "xmadapt/error.hpp"
#include "xmadapt/runconfig.hpp"

using namespace xmadapt;
namespace fs = std::filesystem;

#ifndef XMADAPT_CLI_PATH
#error "XMADAPT_CLI_PATH must point at the built command line binary"
#endif

namespace {

struct CmdResult {
  int status = -1;
  std::string out;  // stdout and stderr combined

  bool contains(const std::string& needle) const { return out.find(needle) != std::string::npos; }
};

CmdResult run_cli(const std::string& args) {
  const std::string cmd = std::string(XMADAPT_CLI_PATH) + " " + args + " 2>&1";
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  CmdResult r;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  int rc = pclose(pipe);
  r.status = WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  return r;
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("xmadapt-test-cli-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  f << text;
  REQUIRE(f.good());
}

std::string checksum_line(const CmdResult& r) {
  size_t at = r.out.find("checksum fnv1a64:");
  REQUIRE(at != std::string::npos);
  return r.out.substr(at, std::string("checksum fnv1a64:").size() + 16);
}

// Shared tiny-model flags: 16x16 images, 2 blocks, 16-wide tokens.
const std::string kTinyModel =
    "--image-size 16 --patch-size 4 --embed-dim 16 --depth 2 --heads 2 "
    "--mlp-ratio 2 --adapter-depth 1";

// One tiny dataset reused by the train/eval/compare cases.
const fs::path& shared_dataset() {
  static fs::path dir = [] {
    fs::path d = fresh_dir("data");
    write_file(d / "spec.json", "{\"image_size\": 16, \"min_intersection\": 20, \"seed\": 9}");
    CmdResult r = run_cli("gen-data --spec " + (d / "spec.json").string() + " --out " +
                          (d / "ds").string() + " --train 4 --test 2");
    REQUIRE(r.status == 0);
    return d / "ds";
  }();
  return dir;
}

}  // namespace

TEST_CASE("RunConfig: defaults, parsing and key rejection") {
  RunConfig def;
  CHECK(def.image_size == 64);
  CHECK(def.epochs == 30);
  CHECK(def.variant == "cross");
  def.validate();

  RunConfig partial = RunConfig::parse("{\"epochs\": 5, \"variant\": \"early\", \"lr\": 0.01}");
  CHECK(partial.epochs == 5);
  CHECK(partial.variant == "early");
  CHECK(partial.lr == doctest::Approx(0.01));
  CHECK(partial.image_size == 64);  // untouched keys keep their defaults

  CHECK_THROWS_AS(RunConfig::parse("{\"epoch\": 5}"), ConfigError);      // typo'd key
  CHECK_THROWS_AS(RunConfig::parse("{\"epochs\": \"5\"}"), ConfigError); // wrong type
  CHECK_THROWS_AS(RunConfig::parse("{\"epochs\": 5"), ConfigError);      // malformed
  CHECK_THROWS_AS(RunConfig::parse("[1,2]"), ConfigError);               // not an object
  CHECK_THROWS_AS(RunConfig::load("/no/such/config.json"), IoError);
}

TEST_CASE("RunConfig: to_json round trip preserves every field") {
  RunConfig cfg;
  cfg.image_size = 32;
  cfg.patch_size = 4;
  cfg.embed_dim = 48;
  cfg.depth = 6;
  cfg.adapter_depth = 3;
  cfg.heads = 3;
  cfg.mlp_ratio = 2.5;
  cfg.variant = "single:flair";
  cfg.lambda_dice = 0.75;
  cfg.lambda_ce = 1.25;
  cfg.lr = 5e-4;
  cfg.batch_size = 2;
  cfg.epochs = 12;
  cfg.seed = 1234;
  cfg.data_dir = "/tmp/somewhere";
  cfg.out_dir = "/tmp/elsewhere";

  RunConfig back = RunConfig::parse(cfg.to_json());
  CHECK(back.image_size == cfg.image_size);
  CHECK(back.patch_size == cfg.patch_size);
  CHECK(back.embed_dim == cfg.embed_dim);
  CHECK(back.depth == cfg.depth);
  CHECK(back.adapter_depth == cfg.adapter_depth);
  CHECK(back.heads == cfg.heads);
  CHECK(back.mlp_ratio == cfg.mlp_ratio);
  CHECK(back.variant == cfg.variant);
  CHECK(back.lambda_dice == cfg.lambda_dice);
  CHECK(back.lambda_ce == cfg.lambda_ce);
  CHECK(back.lr == cfg.lr);
  CHECK(back.batch_size == cfg.batch_size);
  CHECK(back.epochs == cfg.epochs);
  CHECK(back.seed == cfg.seed);
  CHECK(back.data_dir == cfg.data_dir);
  CHECK(back.out_dir == cfg.out_dir);
}

TEST_CASE("RunConfig: validation failures") {
  RunConfig bad_lr;
  bad_lr.lr = 0.0;
  CHECK_THROWS_AS(bad_lr.validate(), ConfigError);
  RunConfig bad_batch;
  bad_batch.batch_size = 0;
  CHECK_THROWS_AS(bad_batch.validate(), ConfigError);
  RunConfig bad_variant;
  bad_variant.variant = "late";
  CHECK_THROWS_AS(bad_variant.validate(), ConfigError);
  RunConfig deep_adapter;
  deep_adapter.adapter_depth = 9;  // deeper than the 8-block encoder
  CHECK_THROWS_AS(deep_adapter.validate(), ConfigError);
  RunConfig bad_patch;
  bad_patch.patch_size = 6;  // not a power of two
  CHECK_THROWS_AS(bad_patch.validate(), ConfigError);
}

TEST_CASE("cli config: defaults and flag overrides") {
  CmdResult def = run_cli("config --defaults");
  CHECK(def.status == 0);
  RunConfig parsed = RunConfig::parse(def.out);
  CHECK(parsed.epochs == 30);
  CHECK(parsed.variant == "cross");

  CmdResult overridden = run_cli("config --epochs 7 --variant early --lr 0.002");
  CHECK(overridden.status == 0);
  RunConfig o = RunConfig::parse(overridden.out);
  CHECK(o.epochs == 7);
  CHECK(o.variant == "early");
  CHECK(o.lr == doctest::Approx(0.002));
}

TEST_CASE("cli: malformed invocations exit 2") {
  CHECK(run_cli("config --no-such-flag").status == 2);
  CHECK(run_cli("eval " + kTinyModel).status == 2);  // --checkpoint is required
  CHECK(run_cli("nonsense-subcommand").status == 2);
  CmdResult bad_variant = run_cli("config --variant late");
  CHECK(bad_variant.status == 2);
  CHECK(bad_variant.contains("late"));

  fs::path dir = fresh_dir("badcfg");
  write_file(dir / "bad.json", "{\"epoch\": 5}");
  CmdResult bad_key = run_cli("config --config " + (dir / "bad.json").string());
  CHECK(bad_key.status == 2);
  CHECK(bad_key.contains("epoch"));
  fs::remove_all(dir);
}

TEST_CASE("cli gen-data: checksummed and reproducible") {
  fs::path dir = fresh_dir("gen");
  write_file(dir / "spec.json", "{\"image_size\": 16, \"min_intersection\": 20, \"seed\": 9}");
  const std::string base = "gen-data --spec " + (dir / "spec.json").string() + " --train 2 --test 1";

  CmdResult a = run_cli(base + " --out " + (dir / "a").string());
  REQUIRE(a.status == 0);
  CHECK(a.contains("wrote 3 samples (2 train, 1 test)"));
  CHECK(fs::exists(dir / "a" / "manifest.json"));

  CmdResult b = run_cli(base + " --out " + (dir / "b").string());
  REQUIRE(b.status == 0);
  CHECK(checksum_line(a) == checksum_line(b));  // same spec, same bytes

  CmdResult c = run_cli(base + " --out " + (dir / "c").string() + " --seed 10");
  REQUIRE(c.status == 0);
  CHECK(checksum_line(a) != checksum_line(c));

  // An unattainable overlap requirement is a clean config-style failure.
  write_file(dir / "hard.json", "{\"image_size\": 16, \"min_intersection\": 257}");
  CmdResult hard = run_cli("gen-data --spec " + (dir / "hard.json").string() + " --out " +
                           (dir / "d").string() + " --train 1 --test 0");
  CHECK(hard.status == 2);
  fs::remove_all(dir);
}

TEST_CASE("cli train and eval: artifacts and report table") {
  fs::path out = fresh_dir("train-out");
  const std::string data = " --data-dir " + shared_dataset().string();
  CmdResult tr = run_cli("train " + kTinyModel + data + " --variant cross --epochs 2 " +
                         "--batch-size 2 --seed 5 --out-dir " + (out / "run").string());
  REQUIRE(tr.status == 0);
  CHECK(tr.contains("epoch   1/2"));
  CHECK(tr.contains("epoch   2/2"));
  CHECK(fs::exists(out / "run" / "history.csv"));
  CHECK(fs::exists(out / "run" / "checkpoint.xmck"));

  CmdResult ev = run_cli("eval " + kTinyModel + data + " --variant cross --checkpoint " +
                         (out / "run" / "checkpoint.xmck").string() + " --out-dir " +
                         (out / "eval").string());
  REQUIRE(ev.status == 0);
  CHECK(ev.contains("| Variant | Dice (%) | Hd95 |"));
  CHECK(ev.contains("| cross | "));
  REQUIRE(fs::exists(out / "eval" / "eval.csv"));
  std::ifstream csv(out / "eval" / "eval.csv");
  std::string header;
  std::getline(csv, header);
  CHECK(header == "id,dice_percent,hd95");
  int rows = 0;
  for (std::string line; std::getline(csv, line);) ++rows;
  CHECK(rows == 2);  // one per test sample

  // Evaluating against a mismatched architecture is a checkpoint format error.
  CmdResult wrong = run_cli(
      "eval --image-size 16 --patch-size 4 --embed-dim 8 --depth 2 --heads 2"
      " --mlp-ratio 2 --adapter-depth 1" +
      data + " --variant cross --checkpoint " + (out / "run" / "checkpoint.xmck").string());
  CHECK(wrong.status == 5);
  fs::remove_all(out);
}

TEST_CASE("cli compare: missing checkpoint names the variant and exits 6") {
  fs::path dir = fresh_dir("compare");
  const std::string data_dir = shared_dataset().string();
  for (const char* name : {"t1", "t1ce", "t2", "flair", "early", "cross"}) {
    RunConfig cfg;
    cfg.image_size = 16;
    cfg.patch_size = 4;
    cfg.embed_dim = 16;
    cfg.depth = 2;
    cfg.heads = 2;
    cfg.mlp_ratio = 2.0;
    cfg.adapter_depth = 1;
    cfg.variant = std::string(name) == "early" || std::string(name) == "cross"
                      ? std::string(name)
                      : "single:" + std::string(name);
    cfg.data_dir = data_dir;
    cfg.out_dir = (dir / ("out-" + std::string(name))).string();
    write_file(dir / (std::string(name) + ".json"), cfg.to_json());
  }
  CmdResult r = run_cli("compare --config-dir " + dir.string());
  CHECK(r.status == 6);
  CHECK(r.contains("missing checkpoint for variant 't1'"));
  fs::remove_all(dir);
}

TEST_CASE("cli params: dual-stream accounting at reference scale") {
  CmdResult r = run_cli("params --variant cross");
  REQUIRE(r.status == 0);
  CHECK(r.contains("| Variant | All | Training | Percent |"));
  CHECK(r.contains("| cross | 906668 | 74028 | 8.16 |"));

  CmdResult nf = run_cli("params --variant cross --no-freeze");
  REQUIRE(nf.status == 0);
  CHECK(nf.contains("| cross | 906668 | 906668 | 100.00 |"));
}

TEST_CASE("cli gradcheck: tiny model end to end") {
  CmdResult r = run_cli("gradcheck " + kTinyModel + " --variant cross --seed 11");
  REQUIRE(r.status == 0);
  CHECK(r.contains("gradcheck: PASS"));
  CHECK_FALSE(r.contains("FAIL"));
  CHECK(r.contains("end-to-end adapter0.w"));
}

TEST_CASE("cli gradcheck: default configuration passes") {
  CmdResult r = run_cli("gradcheck");
  REQUIRE(r.status == 0);
  CHECK(r.contains("gradcheck: PASS"));
  CHECK_FALSE(r.contains("FAIL"));
}
