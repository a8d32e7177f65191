// Command-line surface: train, predict, eval, derive, pretrain-inverse,
// plot-pr, dump-attn, make-toy. Every command writes a JSON report with the
// timestamp kept in its own field so reports stay byte-comparable.

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "ect/train.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
  return buf;
}

void write_report(const std::string& path, json body) {
  body["timestamp"] = now_iso8601();
  std::ofstream os(path);
  if (!os) throw ect::IoError("report: cannot write " + path);
  os << body.dump(2) << "\n";
}

std::vector<std::string> png_ids(const fs::path& dir) {
  if (!fs::exists(dir)) throw ect::IoError("missing directory " + dir.string());
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") ids.push_back(e.path().stem().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

ect::RunConfig load_config_with_overrides(const std::string& path,
                                          const std::vector<std::string>& sets) {
  ect::RunConfig cfg = path.empty() ? ect::RunConfig{} : ect::load_run_config(path);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ect::ConfigError("--set expects key=value, got " + kv);
    ect::apply_config_key(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (const char* env = std::getenv("ECT_DATA_ROOT"); env && *env) cfg.data_root = env;
  return cfg;
}

json summary_to_json(const ect::EvalSummary& s) {
  json j;
  j["ods"] = s.ods_f;
  j["ois"] = s.ois_f;
  j["ap"] = s.ap;
  j["ods_threshold"] = s.ods_threshold;
  j["best_thresholds"] = s.per_image_best_threshold;
  json curve = json::array();
  for (const auto& pt : s.pr_curve) curve.push_back({pt.threshold, pt.precision, pt.recall});
  j["curve"] = curve;
  return j;
}

ect::EvalSummary summary_from_json(const json& j) {
  ect::EvalSummary s;
  s.ods_f = j.at("ods").get<double>();
  s.ois_f = j.at("ois").get<double>();
  s.ap = j.at("ap").get<double>();
  s.ods_threshold = j.value("ods_threshold", 0.0);
  for (const auto& row : j.at("curve"))
    s.pr_curve.push_back({row[0].get<double>(), row[1].get<double>(), row[2].get<double>()});
  return s;
}

std::vector<ect::PointPair> load_pairs_jsonl(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ect::IoError("pairs: cannot open " + path);
  std::vector<ect::PointPair> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line);
    ect::PointPair p;
    p.image_id = j.at("image").get<std::string>();
    p.x1 = j.at("x1").get<int>();
    p.y1 = j.at("y1").get<int>();
    p.x2 = j.at("x2").get<int>();
    p.y2 = j.at("y2").get<int>();
    p.equal_reflectance = j.at("equal").get<bool>();
    out.push_back(p);
  }
  return out;
}

// ---------------------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets,
              const std::string& resume) {
  ect::RunConfig cfg = load_config_with_overrides(config_path, sets);
  ect::TrainResult res = ect::train(cfg, resume);
  json report;
  report["command"] = "train";
  report["config"] = ect::run_config_json(cfg);
  report["config_hash"] = ect::config_hash(cfg);
  report["steps_run"] = res.log.size();
  report["final_checkpoint"] = res.final_checkpoint_base;
  if (!res.log.empty()) {
    report["first_loss"] = res.log.front().l_total;
    report["final_loss"] = res.log.back().l_total;
  }
  write_report((fs::path(cfg.out_dir) / "report.json").string(), report);
  std::cout << "train: " << res.log.size() << " step(s), final checkpoint "
            << res.final_checkpoint_base << "\n";
  return 0;
}

int cmd_predict(const std::string& ckpt, const std::string& image, const std::string& out,
                bool resize) {
  ect::Checkpoint c = ect::load_checkpoint(ckpt);
  auto files = ect::predict(c, image, out, resize);
  json report;
  report["command"] = "predict";
  report["checkpoint"] = ckpt;
  report["image"] = image;
  report["config_hash"] = ect::config_hash(c.config);
  report["files"] = files;
  write_report((fs::path(out) / "report.json").string(), report);
  std::cout << "predict: wrote " << files.size() << " map(s) to " << out << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, const std::string& out_dir,
             std::vector<std::string> causes, double tol, const std::string& pairs_path,
             const std::string& pairs_cause) {
  fs::create_directories(out_dir);
  json per_cause;
  double sum_ods = 0, sum_ois = 0, sum_ap = 0;
  int counted = 0;
  for (const auto& cause : causes) {
    const fs::path gdir = fs::path(gt_dir) / cause;
    const fs::path pdir = fs::path(pred_dir) / cause;
    std::vector<ect::MatX> preds, gts;
    for (const auto& id : png_ids(gdir)) {
      const fs::path p = pdir / (id + ".png");
      if (!fs::exists(p)) throw ect::IoError("eval: missing prediction " + p.string());
      preds.push_back(ect::png::read_gray8(p.string()) / 255.0);
      gts.push_back(ect::binarize_gt_png(ect::png::read_gray8((gdir / (id + ".png")).string())));
    }
    ect::EvalSummary s = ect::evaluate_dataset(preds, gts, ect::default_thresholds(), tol);
    per_cause[cause] = summary_to_json(s);
    sum_ods += s.ods_f;
    sum_ois += s.ois_f;
    sum_ap += s.ap;
    ++counted;
  }
  json report;
  report["command"] = "eval";
  report["pred_dir"] = pred_dir;
  report["gt_dir"] = gt_dir;
  report["tolerance"] = tol;
  report["per_cause"] = per_cause;
  if (counted > 0)
    report["average"] = {{"ods", sum_ods / counted}, {"ois", sum_ois / counted},
                         {"ap", sum_ap / counted}};

  if (!pairs_path.empty()) {
    auto pairs = load_pairs_jsonl(pairs_path);
    std::map<std::string, std::vector<ect::PointPair>> by_image;
    for (const auto& p : pairs) by_image[p.image_id].push_back(p);
    std::vector<ect::MatX> probs;
    std::vector<std::vector<ect::PointPair>> per_image;
    for (const auto& [id, ps] : by_image) {
      const fs::path p = fs::path(pred_dir) / pairs_cause / (id + ".png");
      if (!fs::exists(p)) throw ect::IoError("eval: missing prediction " + p.string());
      probs.push_back(ect::png::read_gray8(p.string()) / 255.0);
      per_image.push_back(ps);
    }
    report["mean_recall"] = ect::mean_recall_dataset(probs, per_image);
    report["pairs_file"] = pairs_path;
  }
  write_report((fs::path(out_dir) / "summary.json").string(), report);
  std::cout << "eval: wrote " << (fs::path(out_dir) / "summary.json").string() << "\n";
  return 0;
}

int cmd_derive(const std::string& kind, const std::string& in_dir, const std::string& ge_dir,
               const std::string& out_dir, const ect::DerivationConfig& dcfg) {
  dcfg.validate();
  fs::create_directories(out_dir);
  json stats;
  for (const auto& id : png_ids(in_dir)) {
    const std::string in_path = (fs::path(in_dir) / (id + ".png")).string();
    ect::MatX result;
    if (kind == "ge") {
      ect::MatX raw = ect::png::read_gray16(in_path);
      Eigen::MatrixXi labels = raw.cast<int>();
      result = ect::derive_generic_from_instances<ect::Real>(labels);
    } else if (kind == "ie") {
      ect::MatX mask = ect::binarize_gt_png(ect::png::read_gray8(in_path));
      result = ect::derive_illumination_edges(mask, dcfg);
    } else {
      if (ge_dir.empty()) throw ect::ConfigError("derive " + kind + ": --ge directory required");
      const fs::path gp = fs::path(ge_dir) / (id + ".png");
      if (!fs::exists(gp)) throw ect::IoError("derive: missing GE map " + gp.string());
      ect::MatX ge = ect::binarize_gt_png(ect::png::read_gray8(gp.string()));
      if (kind == "de") {
        ect::MatX depth = ect::depth_from_png16(ect::png::read_gray16(in_path));
        result = ect::derive_depth_edges(ge, depth, dcfg);
      } else if (kind == "ne") {
        auto normals = ect::normals_from_rgb8(ect::png::read_rgb8(in_path));
        result = ect::derive_normal_edges(ge, normals, dcfg);
      } else {
        throw ect::ConfigError("derive: unknown kind " + kind);
      }
    }
    ect::png::write_gray8_raw((fs::path(out_dir) / (id + ".png")).string(), result * 255.0);
    stats[id] = static_cast<long>(result.sum());
  }
  json report;
  report["command"] = "derive";
  report["kind"] = kind;
  report["in"] = in_dir;
  report["out"] = out_dir;
  report["window"] = dcfg.window;
  report["tau_d"] = dcfg.tau_depth;
  report["tau_n"] = dcfg.tau_normal_deg;
  report["edge_pixels"] = stats;
  write_report((fs::path(out_dir) / "report.json").string(), report);
  std::cout << "derive " << kind << ": " << stats.size() << " map(s) to " << out_dir << "\n";
  return 0;
}

int cmd_pretrain_inverse(const std::string& maps_dir, const std::string& out_base,
                         ect::PretrainConfig pcfg, int input_size) {
  std::vector<ect::MatX> corpus;
  for (const auto& id : png_ids(maps_dir))
    corpus.push_back(ect::png::read_gray8((fs::path(maps_dir) / (id + ".png")).string()) / 255.0);
  ect::InverseNetConfig ncfg;
  ncfg.input_size = input_size;
  ect::InverseTransformNet net(ncfg, pcfg.seed);
  ect::PretrainReport rep = ect::pretrain_inverse_net(net, corpus, pcfg);
  fs::create_directories(fs::path(out_base).parent_path().empty()
                             ? fs::path(".")
                             : fs::path(out_base).parent_path());
  ect::save_phi_checkpoint(out_base, net, rep);
  json report;
  report["command"] = "pretrain-inverse";
  report["maps"] = maps_dir;
  report["checkpoint"] = out_base;
  report["final_validation_mse"] = rep.final_validation_mse;
  report["steps"] = rep.steps;
  report["seed"] = rep.seed;
  report["max_translation_px"] = rep.sampler.max_translation_px;
  report["max_rotation_deg"] = rep.sampler.max_rotation_deg;
  report["max_scale_delta"] = rep.sampler.max_scale_delta;
  write_report(out_base + ".report.json", report);
  std::cout << "pretrain-inverse: validation MSE " << rep.final_validation_mse << ", saved "
            << out_base << ".ect\n";
  return 0;
}

int cmd_plot_pr(const std::string& summary_path, const std::string& out_dir) {
  std::ifstream is(summary_path);
  if (!is) throw ect::IoError("plot-pr: cannot open " + summary_path);
  json j = json::parse(is);
  fs::create_directories(out_dir);
  json files = json::array();
  for (auto it = j.at("per_cause").begin(); it != j.at("per_cause").end(); ++it) {
    ect::EvalSummary s = summary_from_json(it.value());
    const std::string csv = (fs::path(out_dir) / ("pr_" + it.key() + ".csv")).string();
    const std::string png = (fs::path(out_dir) / ("pr_" + it.key() + ".png")).string();
    ect::pr_curve_export(s, csv, png);
    files.push_back(csv);
    files.push_back(png);
  }
  json report;
  report["command"] = "plot-pr";
  report["summary"] = summary_path;
  report["files"] = files;
  write_report((fs::path(out_dir) / "report.json").string(), report);
  std::cout << "plot-pr: " << files.size() << " file(s) in " << out_dir << "\n";
  return 0;
}

int cmd_dump_attn(const std::string& ckpt, const std::string& image, const std::string& out) {
  ect::Checkpoint c = ect::load_checkpoint(ckpt);
  ect::Image<ect::Real> img = ect::png::read_rgb8(image);
  ect::ParamStore store = c.store;
  ect::FullOutput fo = ect::forward_full(store, c.config.model, img);
  auto files = ect::export_attention(fo.attention, c.config.model.image_height,
                                     c.config.model.image_width, out);
  json report;
  report["command"] = "dump-attn";
  report["checkpoint"] = ckpt;
  report["image"] = image;
  report["files"] = files;
  write_report((fs::path(out) / "report.json").string(), report);
  std::cout << "dump-attn: " << files.size() << " map(s) to " << out << "\n";
  return 0;
}

int cmd_make_toy(const std::string& out, int count, std::uint64_t seed, int size) {
  ect::write_toy_dataset(out, count, seed, size);
  json report;
  report["command"] = "make-toy";
  report["out"] = out;
  report["count"] = count;
  report["seed"] = seed;
  report["size"] = size;
  write_report((fs::path(out) / "report.json").string(), report);
  std::cout << "make-toy: " << count << " scene(s) in " << out << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-grained edge detection with learned cause tokens"};
  app.require_subcommand(1);

  // train
  std::string config_path, resume;
  std::vector<std::string> sets;
  auto* train_cmd = app.add_subcommand("train", "Train the two-stage model");
  train_cmd->add_option("--config", config_path, "Config file (flat key=value or JSON)");
  train_cmd->add_option("--set", sets, "Override single keys, e.g. --set steps=100");
  train_cmd->add_option("--resume", resume, "Checkpoint base to resume from");

  // predict
  std::string p_ckpt, p_image, p_out;
  bool p_resize = false;
  auto* predict_cmd = app.add_subcommand("predict", "Run the model on one image");
  predict_cmd->add_option("--checkpoint", p_ckpt, "Checkpoint base path")->required();
  predict_cmd->add_option("--image", p_image, "Input image (PNG)")->required();
  predict_cmd->add_option("--out", p_out, "Output directory")->required();
  predict_cmd->add_flag("--resize", p_resize, "Resize non-matching inputs");

  // eval
  std::string e_pred, e_gt, e_out = "eval_out", e_pairs, e_pairs_cause = "reflectance";
  std::vector<std::string> e_causes = {"reflectance", "illumination", "normal", "depth"};
  double e_tol = ect::kDefaultTolerance;
  auto* eval_cmd = app.add_subcommand("eval", "BSDS-protocol evaluation");
  eval_cmd->add_option("--pred-dir", e_pred, "Predictions root (one subdir per cause)")->required();
  eval_cmd->add_option("--gt-dir", e_gt, "Ground-truth root (one subdir per cause)")->required();
  eval_cmd->add_option("--out", e_out, "Output directory");
  eval_cmd->add_option("--causes", e_causes, "Cause subdirectories to evaluate");
  eval_cmd->add_option("--tol", e_tol, "Match tolerance as a fraction of the image diagonal");
  eval_cmd->add_option("--pairs", e_pairs, "Point-pair JSONL for mean-recall");
  eval_cmd->add_option("--pairs-cause", e_pairs_cause, "Prediction maps used for pairs");

  // derive
  std::string d_kind, d_in, d_ge, d_out;
  ect::DerivationConfig dcfg;
  auto* derive_cmd = app.add_subcommand("derive", "Derive GT edge maps from auxiliary maps");
  derive_cmd->add_option("kind", d_kind, "One of: ge, ie, de, ne")->required();
  derive_cmd->add_option("--in", d_in, "Input directory")->required();
  derive_cmd->add_option("--ge", d_ge, "Generic-edge directory (for de/ne)");
  derive_cmd->add_option("--out", d_out, "Output directory")->required();
  derive_cmd->add_option("--window", dcfg.window, "Window half-width");
  derive_cmd->add_option("--tau-d", dcfg.tau_depth, "Depth threshold (meters)");
  derive_cmd->add_option("--tau-n", dcfg.tau_normal_deg, "Normal angle threshold (degrees)");

  // pretrain-inverse
  std::string pi_maps, pi_out = "phi";
  int pi_input = 64;
  ect::PretrainConfig pcfg;
  auto* pi_cmd = app.add_subcommand("pretrain-inverse", "Pretrain the inverse transform net");
  pi_cmd->add_option("--maps", pi_maps, "Directory of edge maps (grayscale PNG)")->required();
  pi_cmd->add_option("--out", pi_out, "Output checkpoint base");
  pi_cmd->add_option("--steps", pcfg.steps, "Training steps");
  pi_cmd->add_option("--seed", pcfg.seed, "Seed");
  pi_cmd->add_option("--input-size", pi_input, "Network input size P");
  pi_cmd->add_option("--max-translation", pcfg.sampler.max_translation_px, "Sampler: max px");
  pi_cmd->add_option("--max-rotation", pcfg.sampler.max_rotation_deg, "Sampler: max degrees");
  pi_cmd->add_option("--max-scale-delta", pcfg.sampler.max_scale_delta, "Sampler: scale range");

  // plot-pr
  std::string pp_summary, pp_out = "pr_out";
  auto* pp_cmd = app.add_subcommand("plot-pr", "Export PR curves from an eval summary");
  pp_cmd->add_option("--summary", pp_summary, "summary.json from eval")->required();
  pp_cmd->add_option("--out", pp_out, "Output directory");

  // dump-attn
  std::string da_ckpt, da_image, da_out = "attn_out";
  auto* da_cmd = app.add_subcommand("dump-attn", "Export decoder attention maps");
  da_cmd->add_option("--checkpoint", da_ckpt, "Checkpoint base path")->required();
  da_cmd->add_option("--image", da_image, "Input image (PNG)")->required();
  da_cmd->add_option("--out", da_out, "Output directory");

  // make-toy
  std::string mt_out;
  int mt_count = 8, mt_size = 64;
  std::uint64_t mt_seed = 7;
  auto* mt_cmd = app.add_subcommand("make-toy", "Generate the bundled synthetic dataset");
  mt_cmd->add_option("--out", mt_out, "Output directory")->required();
  mt_cmd->add_option("--count", mt_count, "Number of scenes");
  mt_cmd->add_option("--seed", mt_seed, "Seed");
  mt_cmd->add_option("--size", mt_size, "Scene size in pixels");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train_cmd) return cmd_train(config_path, sets, resume);
    if (*predict_cmd) return cmd_predict(p_ckpt, p_image, p_out, p_resize);
    if (*eval_cmd) return cmd_eval(e_pred, e_gt, e_out, e_causes, e_tol, e_pairs, e_pairs_cause);
    if (*derive_cmd) return cmd_derive(d_kind, d_in, d_ge, d_out, dcfg);
    if (*pi_cmd) return cmd_pretrain_inverse(pi_maps, pi_out, pcfg, pi_input);
    if (*pp_cmd) return cmd_plot_pr(pp_summary, pp_out);
    if (*da_cmd) return cmd_dump_attn(da_ckpt, da_image, da_out);
    if (*mt_cmd) return cmd_make_toy(mt_out, mt_count, mt_seed, mt_size);
  } catch (const ect::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const ect::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
