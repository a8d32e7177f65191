#ifndef ECT_CONFIG_HPP
#define ECT_CONFIG_HPP

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ect/data_pipeline.hpp"
#include "ect/derivation.hpp"
#include "ect/losses.hpp"
#include "ect/model_core.hpp"

namespace ect {

struct OptimSettings {
  double lr = 2e-5;
  double momentum = 0.9;
  double lr_min_ratio = 0.01;
  int steps = 2000;
  int batch_size = 2;
  int checkpoint_every = 500;

  void validate() const {
    if (lr <= 0 || momentum < 0 || momentum >= 1) throw ConfigError("optim: bad lr/momentum");
    if (steps < 1 || batch_size < 1) throw ConfigError("optim: steps and batch_size must be >= 1");
  }
};

struct RunConfig {
  ModelConfig model;
  LossConfig loss;
  AugmentConfig augment;
  DerivationConfig derivation;
  OptimSettings optim;
  std::string data_root;
  std::string out_dir = "runs/default";
  std::string phi_checkpoint;
  std::uint64_t seed = 7;

  void validate() const {
    model.validate();
    loss.validate();
    augment.validate();
    derivation.validate();
    optim.validate();
    if (augment.crop_height != model.image_height || augment.crop_width != model.image_width)
      throw ConfigError("config: crop dims must equal model input dims");
  }
};

// ---------------------------------------------------------------------------
// Serialization. The same flat keys work in `key = value` files and in JSON.
// ---------------------------------------------------------------------------

namespace cfgkeys {

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stod(item));
  }
  return out;
}

inline bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "on") return true;
  if (s == "false" || s == "0" || s == "off") return false;
  throw ConfigError("config: bad boolean value '" + s + "'");
}

inline std::string join(const std::vector<double>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    std::ostringstream os;
    os << v[i];
    out += os.str();
  }
  return out;
}

}  // namespace cfgkeys

inline void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
  using cfgkeys::parse_bool;
  using cfgkeys::parse_list;
  auto as_int = [&] { return std::stoi(value); };
  auto as_double = [&] { return std::stod(value); };

  if (key == "height") cfg.model.image_height = as_int();
  else if (key == "width") cfg.model.image_width = as_int();
  else if (key == "embed_dim") cfg.model.embed_dim = as_int();
  else if (key == "feature_stride") cfg.model.feature_stride = as_int();
  else if (key == "patch_size") cfg.model.patch_size = as_int();
  else if (key == "encoder_layers") cfg.model.encoder_layers = as_int();
  else if (key == "encoder_heads") cfg.model.encoder_heads = as_int();
  else if (key == "decoder_stages") cfg.model.decoder_stages = as_int();
  else if (key == "decoder_heads") cfg.model.decoder_heads = as_int();
  else if (key == "adaptive_tokens") cfg.model.adaptive_tokens = parse_bool(value);
  else if (key == "decoder_downsample_conv") cfg.model.decoder_downsample_conv = parse_bool(value);
  else if (key == "taps") {
    cfg.model.tap_indices.clear();
    for (double v : parse_list(value)) cfg.model.tap_indices.push_back(static_cast<int>(v));
  } else if (key.rfind("lambda_", 0) == 0 || key.rfind("beta_", 0) == 0 ||
             key.rfind("gamma_", 0) == 0) {
    const std::string suffix = key.substr(key.find('_') + 1);
    if (key == "lambda_a") {
      cfg.loss.lambda_a = as_double();
      return;
    }
    int ti = -1;
    for (size_t i = 0; i < kTasks.size(); ++i)
      if (suffix == task_letter(kTasks[i])) ti = static_cast<int>(i);
    if (ti < 0) throw ConfigError("config: unknown task suffix in key " + key);
    TaskWeights& w = cfg.loss.task[static_cast<size_t>(ti)];
    if (key.rfind("lambda_", 0) == 0) w.lambda = as_double();
    else if (key.rfind("beta_", 0) == 0) w.beta = as_double();
    else w.gamma = as_double();
  }
  else if (key == "eps") cfg.loss.eps = as_double();
  else if (key == "normalize_by_pixels") cfg.loss.normalize_by_pixels = parse_bool(value);
  else if (key == "use_bce") cfg.loss.use_bce = parse_bool(value);
  else if (key == "hflip") cfg.augment.horizontal_flip = parse_bool(value);
  else if (key == "scales") cfg.augment.scales = parse_list(value);
  else if (key == "rotations") cfg.augment.rotations_deg = parse_list(value);
  else if (key == "crop_h") cfg.augment.crop_height = as_int();
  else if (key == "crop_w") cfg.augment.crop_width = as_int();
  else if (key == "window") cfg.derivation.window = as_int();
  else if (key == "tau_d") cfg.derivation.tau_depth = as_double();
  else if (key == "tau_n") cfg.derivation.tau_normal_deg = as_double();
  else if (key == "lr") cfg.optim.lr = as_double();
  else if (key == "momentum") cfg.optim.momentum = as_double();
  else if (key == "lr_min_ratio") cfg.optim.lr_min_ratio = as_double();
  else if (key == "steps") cfg.optim.steps = as_int();
  else if (key == "batch_size") cfg.optim.batch_size = as_int();
  else if (key == "checkpoint_every") cfg.optim.checkpoint_every = as_int();
  else if (key == "data_root") cfg.data_root = value;
  else if (key == "out_dir") cfg.out_dir = value;
  else if (key == "phi_checkpoint") cfg.phi_checkpoint = value;
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(std::stoull(value));
  else throw ConfigError("config: unknown key '" + key + "'");
}

inline nlohmann::json run_config_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["height"] = cfg.model.image_height;
  j["width"] = cfg.model.image_width;
  j["embed_dim"] = cfg.model.embed_dim;
  j["feature_stride"] = cfg.model.feature_stride;
  j["patch_size"] = cfg.model.patch_size;
  j["encoder_layers"] = cfg.model.encoder_layers;
  j["encoder_heads"] = cfg.model.encoder_heads;
  j["taps"] = cfg.model.tap_indices;
  j["decoder_stages"] = cfg.model.decoder_stages;
  j["decoder_heads"] = cfg.model.decoder_heads;
  j["adaptive_tokens"] = cfg.model.adaptive_tokens;
  j["decoder_downsample_conv"] = cfg.model.decoder_downsample_conv;
  for (Task t : kTasks) {
    const auto& w = cfg.loss.for_task(t);
    j[std::string("lambda_") + task_letter(t)] = w.lambda;
    j[std::string("beta_") + task_letter(t)] = w.beta;
    j[std::string("gamma_") + task_letter(t)] = w.gamma;
  }
  j["lambda_a"] = cfg.loss.lambda_a;
  j["eps"] = cfg.loss.eps;
  j["normalize_by_pixels"] = cfg.loss.normalize_by_pixels;
  j["use_bce"] = cfg.loss.use_bce;
  j["hflip"] = cfg.augment.horizontal_flip;
  j["scales"] = cfg.augment.scales;
  j["rotations"] = cfg.augment.rotations_deg;
  j["crop_h"] = cfg.augment.crop_height;
  j["crop_w"] = cfg.augment.crop_width;
  j["window"] = cfg.derivation.window;
  j["tau_d"] = cfg.derivation.tau_depth;
  j["tau_n"] = cfg.derivation.tau_normal_deg;
  j["lr"] = cfg.optim.lr;
  j["momentum"] = cfg.optim.momentum;
  j["lr_min_ratio"] = cfg.optim.lr_min_ratio;
  j["steps"] = cfg.optim.steps;
  j["batch_size"] = cfg.optim.batch_size;
  j["checkpoint_every"] = cfg.optim.checkpoint_every;
  j["data_root"] = cfg.data_root;
  j["out_dir"] = cfg.out_dir;
  j["phi_checkpoint"] = cfg.phi_checkpoint;
  j["seed"] = cfg.seed;
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  RunConfig cfg;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const auto& v = it.value();
    std::string s;
    if (v.is_string()) s = v.get<std::string>();
    else if (v.is_boolean()) s = v.get<bool>() ? "true" : "false";
    else if (v.is_array()) {
      for (size_t i = 0; i < v.size(); ++i) {
        if (i) s += ",";
        s += nlohmann::json(v[i]).dump();
      }
    } else s = v.dump();
    apply_config_key(cfg, it.key(), s);
  }
  return cfg;
}

/// Accepts both JSON files and flat `key = value` text (# comments allowed).
inline RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open " + path);
  std::stringstream buf;
  buf << is.rdbuf();
  std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && (text[first] == '{')) {
    return run_config_from_json(nlohmann::json::parse(text));
  }
  RunConfig cfg;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (line.find_first_not_of(" \t\r") != std::string::npos)
        throw ConfigError("config: bad line " + std::to_string(lineno) + " in " + path);
      continue;
    }
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    };
    apply_config_key(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

inline std::string config_hash(const RunConfig& cfg) {
  return hex64(fnv1a(run_config_json(cfg).dump()));
}

}  // namespace ect

#endif  // ECT_CONFIG_HPP
