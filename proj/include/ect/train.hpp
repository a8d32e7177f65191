#ifndef ECT_TRAIN_HPP
#define ECT_TRAIN_HPP

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "ect/alignment.hpp"
#include "ect/cause_decoder.hpp"
#include "ect/config.hpp"
#include "ect/data_pipeline.hpp"
#include "ect/optimizer.hpp"
#include "ect/toy_data.hpp"

namespace ect {

// ---------------------------------------------------------------------------
// Checkpoints: one named-array archive ("p/" parameters, "v/" optimizer
// velocity) plus a JSON manifest with the config snapshot, step and seed.
// ---------------------------------------------------------------------------

struct Checkpoint {
  ParamStore store;
  std::map<std::string, MatX> velocity;
  RunConfig config;
  int step = 0;
  std::vector<double> loss_tail;
};

inline void save_checkpoint(const std::string& base, const ParamStore& store,
                            const std::map<std::string, MatX>& velocity, const RunConfig& cfg,
                            int step, const std::vector<double>& loss_tail) {
  std::map<std::string, MatX> arrays;
  for (const auto& [name, m] : store.arrays()) arrays.emplace("p/" + name, m);
  for (const auto& [name, m] : velocity) arrays.emplace("v/" + name, m);
  save_archive(arrays, base + ".ect");
  nlohmann::json manifest;
  manifest["config"] = run_config_json(cfg);
  manifest["step"] = step;
  manifest["seed"] = cfg.seed;
  manifest["loss_tail"] = loss_tail;
  std::ofstream os(base + ".json");
  if (!os) throw IoError("checkpoint: cannot write manifest " + base + ".json");
  os << manifest.dump(2) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& base) {
  Checkpoint ck;
  std::ifstream is(base + ".json");
  if (!is) throw IoError("checkpoint: cannot open manifest " + base + ".json");
  nlohmann::json manifest = nlohmann::json::parse(is);
  ck.config = run_config_from_json(manifest.at("config"));
  ck.step = manifest.at("step").get<int>();
  if (manifest.contains("loss_tail")) ck.loss_tail = manifest["loss_tail"].get<std::vector<double>>();
  ck.store.set_seed(ck.config.seed);
  for (auto& [name, m] : load_archive(base + ".ect")) {
    if (name.rfind("p/", 0) == 0)
      ck.store.arrays().emplace(name.substr(2), std::move(m));
    else if (name.rfind("v/", 0) == 0)
      ck.velocity.emplace(name.substr(2), std::move(m));
  }
  // Shape coherence between manifest config and arrays.
  if (ck.store.has("s2.tokens") &&
      ck.store.at("s2.tokens").cols() != ck.config.model.embed_dim)
    throw ConfigError("checkpoint: manifest config does not match array shapes");
  return ck;
}

// Phi checkpoints: separate archive + report manifest.
inline void save_phi_checkpoint(const std::string& base, const InverseTransformNet& net,
                                const PretrainReport& report) {
  std::map<std::string, MatX> arrays;
  for (const auto& [name, m] : net.store().arrays()) arrays.emplace(name, m);
  save_archive(arrays, base + ".ect");
  nlohmann::json j;
  j["input_size"] = net.config().input_size;
  j["mode"] = net.config().mode == AlignmentParams::Mode::Affine ? "affine" : "homography";
  j["conv_channels"] = {net.config().conv_channels[0], net.config().conv_channels[1],
                        net.config().conv_channels[2]};
  j["fc_dim"] = net.config().fc_dim;
  j["final_validation_mse"] = report.final_validation_mse;
  j["steps"] = report.steps;
  j["seed"] = report.seed;
  j["max_translation_px"] = report.sampler.max_translation_px;
  j["max_rotation_deg"] = report.sampler.max_rotation_deg;
  j["max_scale_delta"] = report.sampler.max_scale_delta;
  std::ofstream os(base + ".json");
  if (!os) throw IoError("phi checkpoint: cannot write manifest");
  os << j.dump(2) << "\n";
}

inline InverseTransformNet load_phi_checkpoint(const std::string& base) {
  std::ifstream is(base + ".json");
  if (!is) throw IoError("phi checkpoint: cannot open manifest " + base + ".json");
  nlohmann::json j = nlohmann::json::parse(is);
  InverseNetConfig cfg;
  cfg.input_size = j.at("input_size").get<int>();
  cfg.mode = j.at("mode").get<std::string>() == "homography" ? AlignmentParams::Mode::Homography
                                                             : AlignmentParams::Mode::Affine;
  if (j.contains("conv_channels"))
    for (int i = 0; i < 3; ++i) cfg.conv_channels[i] = j["conv_channels"][static_cast<size_t>(i)].get<int>();
  cfg.fc_dim = j.value("fc_dim", cfg.fc_dim);
  ParamStore store(j.value("seed", 0ull));
  store.arrays() = load_archive(base + ".ect");
  return InverseTransformNet(cfg, std::move(store));
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct LogRow {
  int step = 0;
  double l_erind = 0;
  double l_alignment = 0;
  double l_total = 0;
  double lr = 0;
};

struct TrainResult {
  std::vector<LogRow> log;
  std::string final_checkpoint_base;
};

inline std::map<Task, GroundTruthEdgeMap<Real>> sample_gts_flat(const Sample& s) {
  std::map<Task, GroundTruthEdgeMap<Real>> out;
  for (const auto& [t, g] : s.gt) {
    GroundTruthEdgeMap<Real> flat;
    flat.data = image_to_grid(g.data);
    flat.edge_count = g.edge_count;
    flat.nonedge_count = g.nonedge_count;
    out.emplace(t, std::move(flat));
  }
  return out;
}

inline std::string format_log_row(const LogRow& r) {
  std::string out = "{\"step\":" + std::to_string(r.step);
  out += ",\"l_erind\":" + format_g17(r.l_erind);
  out += ",\"l_alignment\":" + format_g17(r.l_alignment);
  out += ",\"l_total\":" + format_g17(r.l_total);
  out += ",\"lr\":" + format_g17(r.lr) + "}";
  return out;
}

/// Minimizes total_loss = erind + lambda_a * alignment with momentum SGD and
/// cosine step-size decay. Deterministic given the config seed; resuming from
/// a checkpoint continues the exact same trajectory.
inline TrainResult train(const RunConfig& cfg, const std::string& resume_base = "") {
  cfg.validate();
  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);

  Dataset data = load_dataset(cfg.data_root, "train");
  if (data.samples.empty()) throw ConfigError("train: empty dataset");
  if (data.stats.degenerate_gt_warnings > 0)
    std::fprintf(stderr, "train: warning: %ld sample(s) with empty ground truth\n",
                 data.stats.degenerate_gt_warnings);

  const bool use_align = cfg.loss.lambda_a > 0;
  std::unique_ptr<InverseTransformNet> phi;
  if (use_align) {
    if (cfg.phi_checkpoint.empty() || !fs::exists(cfg.phi_checkpoint + ".ect"))
      throw ConfigError(
          "train: lambda_a > 0 requires a pretrained inverse-net checkpoint (phi_checkpoint)");
    phi = std::make_unique<InverseTransformNet>(load_phi_checkpoint(cfg.phi_checkpoint));
  }

  ParamStore store(cfg.seed);
  SgdMomentum opt(cfg.optim.momentum);
  int start_step = 0;
  if (!resume_base.empty()) {
    Checkpoint ck = load_checkpoint(resume_base);
    store.arrays() = std::move(ck.store.arrays());
    opt.velocity() = std::move(ck.velocity);
    start_step = ck.step;
  }

  const size_t n = data.samples.size();
  const int B = cfg.optim.batch_size;
  TrainResult result;
  std::vector<double> loss_tail;

  std::ofstream log_os((fs::path(cfg.out_dir) / "train_log.jsonl").string(),
                       start_step == 0 ? std::ios::trunc : std::ios::app);
  if (!log_os) throw IoError("train: cannot open train_log.jsonl");

  for (int step = start_step + 1; step <= cfg.optim.steps; ++step) {
    ad::Tape<Real> tape;
    Bound params(tape, store, true);
    ad::Var<Real> batch_erind, batch_align;
    for (int j = 0; j < B; ++j) {
      const std::uint64_t pos = static_cast<std::uint64_t>(step - 1) * B + static_cast<std::uint64_t>(j);
      const Sample& base = data.samples[stream_index(n, cfg.seed, pos)];
      Rng aug_rng(sub_seed(cfg.seed, 0xa0600000ull + pos));
      Sample s = augment(base, cfg.augment, aug_rng);

      ForwardGraph g = ect_forward(params, cfg.model, tape.constant(image_as_grid(s.image)));
      std::map<Task, ad::Var<Real>> preds;
      preds.emplace(Task::Edge, g.s1.edge_prob);
      for (int c = 0; c < 4; ++c)
        preds.emplace(static_cast<Task>(c + 1), g.s2.cause_probs[static_cast<size_t>(c)]);
      ad::Var<Real> erind = erind_loss_node(preds, sample_gts_flat(s), cfg.loss);
      batch_erind = j == 0 ? erind : ad::add(batch_erind, erind);

      if (use_align) {
        ad::Var<Real> grind = ad::max4(g.s2.cause_probs[0], g.s2.cause_probs[1],
                                       g.s2.cause_probs[2], g.s2.cause_probs[3]);
        ad::Var<Real> theta = phi->forward(tape, g.s1.edge_prob, grind, cfg.model.image_height,
                                           cfg.model.image_width, false);
        ad::Var<Real> al = alignment_loss_node(theta, phi->config().mode);
        batch_align = j == 0 ? al : ad::add(batch_align, al);
      }
    }
    batch_erind = ad::scale(batch_erind, Real(1) / B);
    ad::Var<Real> total = batch_erind;
    double align_value = 0;
    if (use_align) {
      batch_align = ad::scale(batch_align, Real(1) / B);
      align_value = batch_align.value()(0, 0);
      total = ad::add(batch_erind, ad::scale(batch_align, cfg.loss.lambda_a));
    }

    LogRow row;
    row.step = step;
    row.l_erind = batch_erind.value()(0, 0);
    row.l_alignment = align_value;
    row.l_total = total.value()(0, 0);
    row.lr = cosine_lr(cfg.optim.lr, cfg.optim.lr_min_ratio, step - 1, cfg.optim.steps);
    if (!std::isfinite(row.l_total)) throw ConfigError("train: non-finite loss at step " +
                                                       std::to_string(step));

    tape.backward(total);
    opt.step(store, params.gradients(), row.lr);

    log_os << format_log_row(row) << "\n";
    result.log.push_back(row);
    loss_tail.push_back(row.l_total);
    if (loss_tail.size() > 100) loss_tail.erase(loss_tail.begin());

    if (cfg.optim.checkpoint_every > 0 && step % cfg.optim.checkpoint_every == 0 &&
        step != cfg.optim.steps) {
      save_checkpoint((fs::path(cfg.out_dir) / ("ckpt_step" + std::to_string(step))).string(),
                      store, opt.velocity(), cfg, step, loss_tail);
    }
  }
  log_os.flush();
  if (!log_os) throw IoError("train: log write failed");

  result.final_checkpoint_base = (fs::path(cfg.out_dir) / "checkpoint_final").string();
  save_checkpoint(result.final_checkpoint_base, store, opt.velocity(), cfg, cfg.optim.steps,
                  loss_tail);
  return result;
}

// ---------------------------------------------------------------------------
// Prediction
// ---------------------------------------------------------------------------

/// Writes generic.png, reflectance.png, illumination.png, normal.png,
/// depth.png (8-bit, value = round(255 * prob)). With allow_resize, inputs of
/// other sizes are processed at the model size and the outputs resized back.
inline std::vector<std::string> predict(const Checkpoint& ck, const std::string& image_path,
                                        const std::string& out_dir, bool allow_resize = false) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  Image<Real> img = png::read_rgb8(image_path);
  const ModelConfig& mc = ck.config.model;
  const int oh = img.height(), ow = img.width();
  const bool needs_resize = oh != mc.image_height || ow != mc.image_width;
  if (needs_resize && !allow_resize)
    throw ConfigError("predict: image is " + std::to_string(ow) + "x" + std::to_string(oh) +
                      " but the model expects " + std::to_string(mc.image_width) + "x" +
                      std::to_string(mc.image_height) + "; pass --resize to process anyway");
  Image<Real> in = img;
  if (needs_resize)
    for (auto& c : in.ch) c = resize_bilinear(c, mc.image_height, mc.image_width);

  ParamStore store = ck.store;  // copy; forward does not mutate
  FullOutput out = forward_full(store, mc, in);

  auto finish = [&](MatX m) {
    if (needs_resize) m = resize_bilinear(m, oh, ow);
    return m;
  };
  std::vector<std::string> files;
  auto write = [&](const std::string& name, const MatX& m) {
    const std::string path = (fs::path(out_dir) / name).string();
    png::write_gray8(path, finish(m));
    files.push_back(path);
  };
  write("generic.png", out.generic);
  write("reflectance.png", out.fine[Cause::Reflectance]);
  write("illumination.png", out.fine[Cause::Illumination]);
  write("normal.png", out.fine[Cause::Normal]);
  write("depth.png", out.fine[Cause::Depth]);
  return files;
}

}  // namespace ect

#endif  // ECT_TRAIN_HPP
