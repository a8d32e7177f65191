#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ect/train.hpp"

using namespace ect;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kWork = fs::temp_directory_path() / "ect_train_cli_test";

struct Fixture {
  Fixture() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    write_toy_dataset((kWork / "data").string(), 3, 7);
  }
};

RunConfig small_run(const std::string& out) {
  RunConfig cfg;
  cfg.data_root = (kWork / "data").string();
  cfg.out_dir = (kWork / out).string();
  cfg.seed = 7;
  cfg.optim.steps = 8;
  cfg.optim.batch_size = 1;
  cfg.optim.lr = 1e-5;
  cfg.optim.checkpoint_every = 4;
  cfg.loss.lambda_a = 0;
  cfg.augment.horizontal_flip = false;
  cfg.augment.scales = {1.0};
  cfg.augment.rotations_deg = {0};
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(ECT_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WEXITSTATUS(rc);
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json report_without_timestamp(const fs::path& p) {
  json j = json::parse(slurp(p));
  j.erase("timestamp");
  return j;
}

}  // namespace

TEST_CASE("config files: flat text and JSON parse to the same run config") {
  Fixture fx;
  const fs::path flat = kWork / "run.cfg";
  {
    std::ofstream os(flat);
    os << "# toy run\nsteps = 5\nlr = 3e-5\nlambda_a = 0\nbeta_r = 3.5\ngamma_d = 0.7\n"
       << "scales = 1.0\nrotations = 0\nhflip = false\nseed = 9\n";
  }
  RunConfig a = load_run_config(flat.string());
  CHECK(a.optim.steps == 5);
  CHECK(a.loss.for_task(Task::Reflectance).beta == 3.5);
  CHECK(a.loss.for_task(Task::Depth).gamma == 0.7);
  CHECK(a.seed == 9);

  const fs::path jpath = kWork / "run.json";
  {
    std::ofstream os(jpath);
    os << run_config_json(a).dump(2);
  }
  RunConfig b = load_run_config(jpath.string());
  CHECK(run_config_json(b) == run_config_json(a));
  CHECK(config_hash(a) == config_hash(b));

  CHECK_THROWS_AS(apply_config_key(a, "no_such_key", "1"), ConfigError);
}

TEST_CASE("training runs, logs, and is seed-deterministic") {
  Fixture fx;
  TrainResult r1 = train(small_run("run1"));
  REQUIRE(r1.log.size() == 8);
  for (const auto& row : r1.log) {
    CHECK(std::isfinite(row.l_total));
    CHECK(row.l_alignment == 0.0);
    CHECK(row.l_total == row.l_erind);  // lambda_a = 0
  }
  TrainResult r2 = train(small_run("run2"));
  CHECK(slurp(kWork / "run1/train_log.jsonl") == slurp(kWork / "run2/train_log.jsonl"));
}

TEST_CASE("resume reproduces the continuation exactly") {
  Fixture fx;
  RunConfig cfg = small_run("full");  // checkpoint_every = 4 -> ckpt_step4
  TrainResult full = train(cfg);

  RunConfig cfg2 = small_run("resumed");
  TrainResult cont = train(cfg2, (kWork / "full/ckpt_step4").string());
  REQUIRE(cont.log.size() == 4);
  for (int k = 0; k < 4; ++k) {
    const double want = full.log[static_cast<size_t>(4 + k)].l_total;
    CHECK(std::abs(cont.log[static_cast<size_t>(k)].l_total - want) <=
          1e-6 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("checkpoint save/load/save round-trips byte-identically") {
  Fixture fx;
  RunConfig cfg = small_run("ck");
  cfg.optim.steps = 2;
  TrainResult r = train(cfg);
  Checkpoint ck = load_checkpoint(r.final_checkpoint_base);
  const std::string copy = (kWork / "ck/copy").string();
  save_checkpoint(copy, ck.store, ck.velocity, ck.config, ck.step, ck.loss_tail);
  CHECK(slurp(r.final_checkpoint_base + ".ect") == slurp(copy + ".ect"));
  CHECK(slurp(r.final_checkpoint_base + ".json") == slurp(copy + ".json"));
}

TEST_CASE("training with lambda_a > 0 requires a phi checkpoint, then runs") {
  Fixture fx;
  RunConfig cfg = small_run("ea2");
  cfg.loss.lambda_a = 0.1;
  CHECK_THROWS_AS(train(cfg), ConfigError);

  // tiny phi
  InverseNetConfig ncfg;
  ncfg.input_size = 32;
  ncfg.conv_channels[0] = 4;
  ncfg.conv_channels[1] = 8;
  ncfg.conv_channels[2] = 8;
  ncfg.fc_dim = 16;
  InverseTransformNet phi(ncfg, 3);
  PretrainReport rep;
  save_phi_checkpoint((kWork / "phi").string(), phi, rep);
  cfg.phi_checkpoint = (kWork / "phi").string();
  cfg.optim.steps = 3;
  TrainResult r = train(cfg);
  for (const auto& row : r.log) {
    CHECK(std::isfinite(row.l_alignment));
    CHECK(row.l_total == doctest::Approx(row.l_erind + 0.1 * row.l_alignment).epsilon(1e-12));
  }
}

TEST_CASE("predict writes five maps and respects --resize semantics") {
  Fixture fx;
  RunConfig cfg = small_run("pred");
  cfg.optim.steps = 1;
  TrainResult r = train(cfg);
  Checkpoint ck = load_checkpoint(r.final_checkpoint_base);

  const std::string img = (kWork / "data/images/train/0000.png").string();
  auto files = predict(ck, img, (kWork / "predout").string());
  REQUIRE(files.size() == 5);
  for (const auto& f : files) CHECK(fs::exists(f));
  auto again = predict(ck, img, (kWork / "predout2").string());
  CHECK(slurp(files[0]) == slurp(again[0]));

  // 70x70 input: rejected without --resize, processed with it
  Image<Real> big;
  for (auto& c : big.ch) c = MatX::Constant(70, 70, 0.4);
  png::write_rgb8((kWork / "big.png").string(), big);
  CHECK_THROWS_AS(predict(ck, (kWork / "big.png").string(), (kWork / "predbig").string(), false),
                  ConfigError);
  auto resized = predict(ck, (kWork / "big.png").string(), (kWork / "predbig").string(), true);
  MatX m = png::read_gray8(resized[0]);
  CHECK(m.rows() == 70);
  CHECK(m.cols() == 70);
}

TEST_CASE("cli: make-toy, train, predict, eval, derive, plot-pr, dump-attn") {
  Fixture fx;
  const std::string root = (kWork / "cdata").string();
  REQUIRE(run_cli("make-toy --out " + root + " --count 2 --seed 5") == 0);
  CHECK(fs::exists(fs::path(root) / "images/train/0001.png"));

  // train via CLI with overrides
  const std::string out = (kWork / "crun").string();
  REQUIRE(run_cli("train --set data_root=" + root + " --set out_dir=" + out +
                  " --set steps=2 --set batch_size=1 --set lambda_a=0 --set hflip=false"
                  " --set scales=1.0 --set rotations=0 --set lr=1e-5") == 0);
  CHECK(fs::exists(fs::path(out) / "checkpoint_final.ect"));
  CHECK(fs::exists(fs::path(out) / "report.json"));

  // predict via CLI
  REQUIRE(run_cli("predict --checkpoint " + out + "/checkpoint_final --image " + root +
                  "/images/train/0000.png --out " + (kWork / "cpred").string()) == 0);
  CHECK(fs::exists(kWork / "cpred/generic.png"));

  // eval on perfect predictions (the GT maps themselves)
  const std::string pdir = (kWork / "perfect").string();
  for (const char* c : {"reflectance", "illumination", "normal", "depth"}) {
    fs::create_directories(fs::path(pdir) / c);
    for (const char* id : {"0000", "0001"})
      fs::copy_file(fs::path(root) / "gt" / c / "train" / (std::string(id) + ".png"),
                    fs::path(pdir) / c / (std::string(id) + ".png"));
  }
  // gt dir layout for eval: gt/{cause}/{id}.png
  const std::string gdir = (kWork / "gteval").string();
  for (const char* c : {"reflectance", "illumination", "normal", "depth"}) {
    fs::create_directories(fs::path(gdir) / c);
    for (const char* id : {"0000", "0001"})
      fs::copy_file(fs::path(root) / "gt" / c / "train" / (std::string(id) + ".png"),
                    fs::path(gdir) / c / (std::string(id) + ".png"));
  }
  const std::string eout = (kWork / "eout").string();
  REQUIRE(run_cli("eval --pred-dir " + pdir + " --gt-dir " + gdir + " --out " + eout +
                  " --pairs " + root + "/pairs/train.jsonl") == 0);
  json summary = json::parse(slurp(fs::path(eout) / "summary.json"));
  for (const char* c : {"reflectance", "illumination", "normal", "depth"}) {
    CHECK(summary["per_cause"][c]["ods"].get<double>() == doctest::Approx(1.0));
    CHECK(summary["per_cause"][c]["ois"].get<double>() == doctest::Approx(1.0));
    CHECK(summary["per_cause"][c]["ap"].get<double>() == doctest::Approx(1.0));
  }
  CHECK(summary["average"]["ods"].get<double>() == doctest::Approx(1.0));
  CHECK(summary.contains("mean_recall"));

  // eval determinism: byte-identical summaries modulo the timestamp field
  const std::string eout2 = (kWork / "eout2").string();
  REQUIRE(run_cli("eval --pred-dir " + pdir + " --gt-dir " + gdir + " --out " + eout2 +
                  " --pairs " + root + "/pairs/train.jsonl") == 0);
  CHECK(report_without_timestamp(fs::path(eout) / "summary.json") ==
        report_without_timestamp(fs::path(eout2) / "summary.json"));

  // derive: ge from instances, then de/ne, ie from shadows
  REQUIRE(run_cli("derive ge --in " + root + "/aux/instance/train --out " +
                  (kWork / "dge").string()) == 0);
  REQUIRE(run_cli("derive ie --in " + root + "/aux/shadow/train --out " +
                  (kWork / "die").string()) == 0);
  REQUIRE(run_cli("derive de --in " + root + "/aux/depth/train --ge " + (kWork / "dge").string() +
                  " --out " + (kWork / "dde").string()) == 0);
  REQUIRE(run_cli("derive ne --in " + root + "/aux/normal/train --ge " + (kWork / "dge").string() +
                  " --out " + (kWork / "dne").string()) == 0);
  for (const char* d : {"dge", "die", "dde", "dne"})
    CHECK(fs::exists(kWork / d / "0000.png"));
  // subset law on files
  MatX ge = binarize_gt_png(png::read_gray8((kWork / "dge/0000.png").string()));
  MatX de = binarize_gt_png(png::read_gray8((kWork / "dde/0000.png").string()));
  MatX ne = binarize_gt_png(png::read_gray8((kWork / "dne/0000.png").string()));
  CHECK(((de.array() <= ge.array()).all()));
  CHECK(((ne.array() <= ge.array()).all()));
  CHECK(de.sum() > 0);
  CHECK(ne.sum() > 0);

  // plot-pr from the eval summary
  REQUIRE(run_cli("plot-pr --summary " + eout + "/summary.json --out " +
                  (kWork / "prout").string()) == 0);
  CHECK(fs::exists(kWork / "prout/pr_reflectance.csv"));
  CHECK(fs::exists(kWork / "prout/pr_depth.png"));

  // dump-attn
  REQUIRE(run_cli("dump-attn --checkpoint " + out + "/checkpoint_final --image " + root +
                  "/images/train/0000.png --out " + (kWork / "attn").string()) == 0);
  CHECK(fs::exists(kWork / "attn/stage4_d.png"));
  json attn_report = json::parse(slurp(kWork / "attn/report.json"));
  CHECK(attn_report["files"].size() == 16);

  // exit codes: validation error -> 1, io error -> 2
  CHECK(run_cli("train --set no_such_key=1") == 1);
  CHECK(run_cli("predict --checkpoint " + (kWork / "missing").string() + " --image x --out y") ==
        2);
}

TEST_CASE("environment variable overrides the data root") {
  Fixture fx;
  RunConfig cfg = small_run("env");
  setenv("ECT_DATA_ROOT", (kWork / "data").string().c_str(), 1);
  const std::string cfg_path = (kWork / "env.cfg").string();
  {
    std::ofstream os(cfg_path);
    os << "steps = 1\nbatch_size = 1\nlambda_a = 0\nhflip = false\nscales = 1.0\n"
       << "rotations = 0\ndata_root = /nonexistent\nout_dir = " << (kWork / "envrun").string()
       << "\n";
  }
  REQUIRE(run_cli("train --config " + cfg_path) == 0);
  unsetenv("ECT_DATA_ROOT");
}
