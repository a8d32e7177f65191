#ifndef ECT_MODEL_CORE_HPP
#define ECT_MODEL_CORE_HPP

#include <string>
#include <vector>

#include "ect/nn.hpp"
#include "ect/types.hpp"

namespace ect {

struct ModelConfig {
  int image_height = 64;
  int image_width = 64;
  int embed_dim = 32;       // D
  int feature_stride = 4;   // s
  int patch_size = 8;       // p
  int encoder_layers = 4;   // L
  int encoder_heads = 4;
  std::vector<int> tap_indices = {1, 2, 3, 4};  // 1-based encoder layers feeding reassemble
  int decoder_stages = 4;   // N
  int decoder_heads = 4;
  std::uint64_t seed = 7;

  bool adaptive_tokens = true;        // off: the inadaptive-token ablation
  bool decoder_downsample_conv = false;  // default 4x4 average pooling

  int tokens_h() const { return image_height / patch_size; }
  int tokens_w() const { return image_width / patch_size; }
  int feat_h() const { return image_height / feature_stride; }
  int feat_w() const { return image_width / feature_stride; }

  void validate() const {
    if (image_height <= 0 || image_width <= 0) throw ConfigError("config: image dims must be positive");
    if (patch_size <= 0 || image_height % patch_size != 0 || image_width % patch_size != 0)
      throw ConfigError("config: H and W must be divisible by patch_size");
    if (patch_size % 4 != 0)
      throw ConfigError("config: patch_size must be divisible by 4 (two stride-2 stem convs)");
    if (feature_stride < 1 || (feature_stride & (feature_stride - 1)) != 0)
      throw ConfigError("config: feature_stride must be a power of two");
    if (image_height % (4 * feature_stride) != 0 || image_width % (4 * feature_stride) != 0)
      throw ConfigError("config: H and W must be divisible by 4*feature_stride");
    if (embed_dim <= 0 || encoder_heads <= 0 || decoder_heads <= 0)
      throw ConfigError("config: dims and head counts must be positive");
    if (embed_dim % encoder_heads != 0 || embed_dim % decoder_heads != 0)
      throw ConfigError("config: embed_dim must be divisible by the head counts");
    if (embed_dim % 4 != 0) throw ConfigError("config: embed_dim must be divisible by 4");
    if (encoder_layers < 1) throw ConfigError("config: encoder_layers must be >= 1");
    if (decoder_stages < 1) throw ConfigError("config: decoder_stages must be >= 1");
    if (tap_indices.size() != 4) throw ConfigError("config: tap_indices must have exactly 4 entries");
    int prev = 0;
    for (int t : tap_indices) {
      if (t <= prev) throw ConfigError("config: tap_indices must be strictly increasing");
      if (t < 1 || t > encoder_layers) throw ConfigError("config: tap index out of range");
      prev = t;
    }
  }
};

struct Dims {
  int h = 0, w = 0;
};

using VarR = ad::Var<Real>;

// ---------------------------------------------------------------------------
// Stage 1
// ---------------------------------------------------------------------------

/// Hybrid embedding: two stride-2 convolutions, linear projection of the
/// remaining (p/4)^2 patches, plus a learned position embedding.
inline VarR patch_embed(Bound& p, const ModelConfig& cfg, VarR image_grid) {
  cfg.validate();
  if (image_grid.rows() != static_cast<Eigen::Index>(cfg.image_height) * cfg.image_width ||
      image_grid.cols() != 3)
    throw ConfigError("patch_embed: image dims do not match config");
  const int d = cfg.embed_dim;
  int h = cfg.image_height, w = cfg.image_width;
  VarR x = ad::relu(nn::conv3x3(p, "s1.stem1", image_grid, h, w, d / 2, 2));
  h /= 2;
  w /= 2;
  x = ad::relu(nn::conv3x3(p, "s1.stem2", x, h, w, d, 2));
  h /= 2;
  w /= 2;

  const int k = cfg.patch_size / 4;
  std::vector<VarR> pieces;
  for (const auto& plan : ad::patch_gather_plans(h, w, k)) pieces.push_back(ad::gather_rows(x, plan));
  VarR patches = pieces.size() == 1 ? pieces[0] : ad::hconcat(pieces);
  VarR tokens = nn::linear(p, "s1.proj", patches, d);

  VarR pos = p("s1.pos", static_cast<Eigen::Index>(cfg.tokens_h()) * cfg.tokens_w(), d,
               Init::Normal02);
  return ad::add(tokens, pos);
}

/// L pre-norm encoder layers; returns every layer's output.
inline std::vector<VarR> encode(Bound& p, const ModelConfig& cfg, VarR tokens) {
  if (tokens.cols() != cfg.embed_dim) throw ConfigError("encode: token dim != embed_dim");
  std::vector<VarR> outs;
  VarR x = tokens;
  for (int l = 0; l < cfg.encoder_layers; ++l) {
    x = nn::encoder_layer(p, "s1.enc" + std::to_string(l), x, cfg.encoder_heads);
    outs.push_back(x);
  }
  return outs;
}

/// Pyramid target dims: 4 levels at strides (8s, 4s, 2s, s), coarse to fine.
inline std::vector<Dims> pyramid_dims(const ModelConfig& cfg) {
  std::vector<Dims> out;
  for (int k = 0; k < 4; ++k) {
    const int stride = cfg.feature_stride * (8 >> k);
    out.push_back({cfg.image_height / stride, cfg.image_width / stride});
  }
  return out;
}

/// Tapped layer outputs reshaped to the token grid and resampled per scale
/// with one convolution each.
inline std::vector<VarR> reassemble(Bound& p, const ModelConfig& cfg,
                                    const std::vector<VarR>& layer_outputs) {
  if (static_cast<int>(layer_outputs.size()) != cfg.encoder_layers)
    throw ConfigError("reassemble: expected one output per encoder layer");
  for (int t : cfg.tap_indices)
    if (t < 1 || t > static_cast<int>(layer_outputs.size()))
      throw ConfigError("reassemble: tap index out of range");
  const std::vector<Dims> dims = pyramid_dims(cfg);
  std::vector<VarR> maps;
  for (int k = 0; k < 4; ++k) {
    VarR tokens = layer_outputs[static_cast<size_t>(cfg.tap_indices[static_cast<size_t>(k)] - 1)];
    VarR resized = ad::apply_interp(
        tokens, ad::resize_plan(cfg.tokens_h(), cfg.tokens_w(), dims[static_cast<size_t>(k)].h,
                                dims[static_cast<size_t>(k)].w));
    maps.push_back(nn::conv3x3(p, "s1.reasm" + std::to_string(k), resized,
                               dims[static_cast<size_t>(k)].h, dims[static_cast<size_t>(k)].w,
                               cfg.embed_dim));
  }
  return maps;
}

/// Progressive coarse-to-fine fusion; each step upsamples 2x through an RCU
/// and adds the next finer level. Handles a degenerate single-level pyramid
/// by resampling it to stride s.
inline VarR fuse(Bound& p, const ModelConfig& cfg, const std::vector<VarR>& pyramid,
                 const std::vector<Dims>& dims) {
  if (pyramid.empty()) throw ConfigError("fuse: empty pyramid");
  if (pyramid.size() != dims.size()) throw ConfigError("fuse: pyramid/dims mismatch");
  for (const auto& level : pyramid)
    if (level.cols() != cfg.embed_dim) throw ConfigError("fuse: channel count mismatch");
  VarR f = pyramid[0];
  Dims cur = dims[0];
  for (size_t k = 1; k < pyramid.size(); ++k) {
    if (dims[k].h != 2 * cur.h || dims[k].w != 2 * cur.w)
      throw ConfigError("fuse: pyramid levels must double in resolution");
    VarR up = nn::up_block(p, "s1.fuse" + std::to_string(k), f, cur.h, cur.w);
    f = ad::add(up, pyramid[k]);
    cur = dims[k];
  }
  if (cur.h != cfg.feat_h() || cur.w != cfg.feat_w())
    f = ad::apply_interp(f, ad::resize_plan(cur.h, cur.w, cfg.feat_h(), cfg.feat_w()));
  return f;
}

/// Shared head shape: log2(s) bilinear 2x steps with interleaved convolutions
/// (channels halving), then a per-pixel linear to `out_channels` logits.
inline VarR prediction_head(Bound& p, const std::string& prefix, const ModelConfig& cfg, VarR m,
                            int out_channels) {
  int h = cfg.feat_h(), w = cfg.feat_w();
  int c = cfg.embed_dim;
  VarR x = m;
  int steps = 0;
  for (int s = cfg.feature_stride; s > 1; s /= 2) ++steps;
  for (int j = 0; j < steps; ++j) {
    x = ad::apply_interp(x, ad::resize_plan(h, w, 2 * h, 2 * w));
    h *= 2;
    w *= 2;
    const int next_c = std::max(c / 2, 4);
    x = ad::relu(nn::conv3x3(p, prefix + ".up" + std::to_string(j), x, h, w, next_c));
    c = next_c;
  }
  // Zero-init final projection: training starts from logits 0 (prob 0.5).
  return nn::linear(p, prefix + ".out", x, out_channels, Init::Zero);
}

/// Generic-edge head: logits squashed through the logistic function.
inline VarR generic_head(Bound& p, const ModelConfig& cfg, VarR m) {
  if (m.rows() != static_cast<Eigen::Index>(cfg.feat_h()) * cfg.feat_w())
    throw ConfigError("generic_head: feature map not at stride s");
  return ad::sigmoid(prediction_head(p, "s1.head", cfg, m, 1));
}

struct Stage1Graph {
  VarR edge_prob;                 // (H*W) x 1 in (0,1)
  VarR feature;                   // (H/s * W/s) x D
  std::vector<VarR> layer_outputs;
};

inline Stage1Graph stage1_forward(Bound& p, const ModelConfig& cfg, VarR image_grid) {
  Stage1Graph g;
  VarR tokens = patch_embed(p, cfg, image_grid);
  g.layer_outputs = encode(p, cfg, tokens);
  std::vector<VarR> pyramid = reassemble(p, cfg, g.layer_outputs);
  g.feature = fuse(p, cfg, pyramid, pyramid_dims(cfg));
  g.edge_prob = generic_head(p, cfg, g.feature);
  return g;
}

// Value-level wrapper.
struct Stage1Output {
  MatX edge_prob;      // H x W
  Grid<Real> feature;  // at stride s
};

inline Stage1Output forward_stage1(ParamStore& store, const ModelConfig& cfg,
                                   const Image<Real>& image) {
  cfg.validate();
  image.validate();
  if (image.height() != cfg.image_height || image.width() != cfg.image_width)
    throw ConfigError("forward_stage1: image dims do not match config");
  ad::Tape<Real> tape;
  Bound p(tape, store, false);
  MatX grid(static_cast<Eigen::Index>(cfg.image_height) * cfg.image_width, 3);
  for (int c = 0; c < 3; ++c) grid.col(c) = image_to_grid(image.ch[static_cast<size_t>(c)]);
  Stage1Graph g = stage1_forward(p, cfg, tape.constant(grid));
  Stage1Output out;
  out.edge_prob = grid_to_image(MatX(g.edge_prob.value()), cfg.image_height, cfg.image_width);
  out.feature = Grid<Real>(g.feature.value(), cfg.feat_h(), cfg.feat_w());
  return out;
}

}  // namespace ect

#endif  // ECT_MODEL_CORE_HPP
