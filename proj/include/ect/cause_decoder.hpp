#ifndef ECT_CAUSE_DECODER_HPP
#define ECT_CAUSE_DECODER_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "ect/model_core.hpp"
#include "ect/png_io.hpp"

namespace ect {

// ---------------------------------------------------------------------------
// Stage 2: learned cause tokens, cause-aware decoder stages, residual fusion,
// fine-grained head.
// ---------------------------------------------------------------------------

/// The four learnable cause tokens, rows ordered (r, i, n, d).
inline VarR base_cause_tokens(Bound& p, const ModelConfig& cfg) {
  return p("s2.tokens", 4, cfg.embed_dim, Init::Normal02);
}

/// Stage-wise adaptation: self-attention over the four stacked tokens with
/// parameters owned by the given stage. Residual, so zero-init output
/// projection reproduces the base tokens exactly. No position information is
/// attached, keeping the operation permutation-equivariant over rows.
inline VarR adapt_tokens(Bound& p, const ModelConfig& cfg, VarR base, int stage_index) {
  if (stage_index < 1 || stage_index > cfg.decoder_stages)
    throw ConfigError("adapt_tokens: stage index out of range");
  if (base.value().rows() != 4 || base.cols() != cfg.embed_dim)
    throw ConfigError("adapt_tokens: expected 4 x D tokens");
  const std::string prefix = "s2.adapt" + std::to_string(stage_index);
  return ad::add(base, nn::attn_branch(p, prefix, base, cfg.decoder_heads));
}

/// Downsample the stride-s feature map by 4 per side and flatten to tokens.
inline VarR downsample_and_flatten(Bound& p, const ModelConfig& cfg, VarR feature, Dims dims) {
  if (dims.h % 4 != 0 || dims.w % 4 != 0)
    throw ConfigError("downsample_and_flatten: feature dims must be divisible by 4");
  if (feature.rows() != static_cast<Eigen::Index>(dims.h) * dims.w)
    throw ConfigError("downsample_and_flatten: dims mismatch");
  if (cfg.decoder_downsample_conv) {
    VarR x = ad::relu(nn::conv3x3(p, "s2.down1", feature, dims.h, dims.w, cfg.embed_dim, 2));
    return nn::conv3x3(p, "s2.down2", x, dims.h / 2, dims.w / 2, cfg.embed_dim, 2);
  }
  return ad::apply_interp(feature, ad::avgpool_plan(dims.h, dims.w, 4));
}

/// One cause-aware decoder stage: token self-attention, then cross-attention
/// with image tokens as queries and the four adapted cause tokens as keys and
/// values. Per-cause attention weights (head-averaged) land in attn_out.
inline VarR decoder_stage(Bound& p, const ModelConfig& cfg, VarR tokens_in, VarR adapted,
                          int stage_index, std::array<MatX, 4>* attn_out, Dims grid) {
  if (adapted.value().rows() != 4) throw ConfigError("decoder_stage: expected 4 cause tokens");
  if (tokens_in.cols() != adapted.cols()) throw ConfigError("decoder_stage: dim mismatch");
  const std::string prefix = "s2.dec" + std::to_string(stage_index);
  VarR x = ad::add(tokens_in, nn::attn_branch(p, prefix + ".self", tokens_in, cfg.decoder_heads));
  MatX attn_avg;
  VarR n = nn::layer_norm(p, prefix + ".cross.ln", x);
  VarR cross = nn::multihead_attention(p, prefix + ".cross.attn", n, adapted, cfg.decoder_heads,
                                       &attn_avg);
  if (attn_out) {
    for (int c = 0; c < 4; ++c)
      (*attn_out)[static_cast<size_t>(c)] = grid_to_image(MatX(attn_avg.col(c)), grid.h, grid.w);
  }
  return ad::add(x, cross);
}

/// Eq.-3 residual fusion: UP(UP(M''_N) + UP(M''_1)) + M, where
/// UP(x) = conv(upsample2(RCU(x))). Each UP doubles the grid side.
inline VarR residual_fusion(Bound& p, const ModelConfig& cfg, VarR feature, Dims feat_dims,
                            VarR m1, VarR mn, Dims grid_dims) {
  if (feat_dims.h != 4 * grid_dims.h || feat_dims.w != 4 * grid_dims.w)
    throw ConfigError("residual_fusion: token grids must be at 1/4 the feature resolution");
  if (m1.rows() != static_cast<Eigen::Index>(grid_dims.h) * grid_dims.w ||
      mn.rows() != m1.rows())
    throw ConfigError("residual_fusion: grid dims mismatch");
  VarR up_n = nn::up_block(p, "s2.rf.n", mn, grid_dims.h, grid_dims.w);
  VarR up_1 = nn::up_block(p, "s2.rf.one", m1, grid_dims.h, grid_dims.w);
  VarR mid = ad::add(up_n, up_1);
  VarR outer = nn::up_block(p, "s2.rf.outer", mid, 2 * grid_dims.h, 2 * grid_dims.w);
  (void)cfg;
  return ad::add(outer, feature);
}

/// Fine-grained head: one 4-channel trunk; logits squashed per channel,
/// channel order fixed (r, i, n, d).
inline VarR fine_grained_head(Bound& p, const ModelConfig& cfg, VarR m_adapted) {
  if (m_adapted.rows() != static_cast<Eigen::Index>(cfg.feat_h()) * cfg.feat_w())
    throw ConfigError("fine_grained_head: feature map not at stride s");
  return ad::sigmoid(prediction_head(p, "s2.head", cfg, m_adapted, 4));
}

struct Stage2Graph {
  std::array<VarR, 4> cause_probs;  // each (H*W) x 1, order (r, i, n, d)
  VarR stacked;                     // (H*W) x 4
  AttentionMapBundle<Real> attention;
  VarR base_tokens;
};

inline Stage2Graph stage2_forward(Bound& p, const ModelConfig& cfg, VarR feature) {
  Stage2Graph g;
  const Dims feat{cfg.feat_h(), cfg.feat_w()};
  const Dims grid{feat.h / 4, feat.w / 4};
  g.attention.grid_height = grid.h;
  g.attention.grid_width = grid.w;

  VarR tokens = downsample_and_flatten(p, cfg, feature, feat);
  tokens = ad::add(tokens, p.tape().constant(nn::sinusoidal_embedding_2d(grid.h, grid.w, cfg.embed_dim)));

  g.base_tokens = base_cause_tokens(p, cfg);
  VarR m1, x = tokens;
  for (int n = 1; n <= cfg.decoder_stages; ++n) {
    VarR adapted = cfg.adaptive_tokens ? adapt_tokens(p, cfg, g.base_tokens, n) : g.base_tokens;
    std::array<MatX, 4> attn;
    x = decoder_stage(p, cfg, x, adapted, n, &attn, grid);
    g.attention.stages.push_back(std::move(attn));
    if (n == 1) m1 = x;
  }
  VarR fused = residual_fusion(p, cfg, feature, feat, m1, x, grid);
  VarR probs = fine_grained_head(p, cfg, fused);
  g.stacked = probs;
  for (int c = 0; c < 4; ++c) g.cause_probs[static_cast<size_t>(c)] = ad::cols(probs, c, 1);
  return g;
}

// Value-level wrapper.
struct Stage2Output {
  FineGrainedPrediction<Real> prediction;
  AttentionMapBundle<Real> attention;
};

inline Stage2Output forward_stage2(ParamStore& store, const ModelConfig& cfg,
                                   const Grid<Real>& feature) {
  cfg.validate();
  if (feature.height != cfg.feat_h() || feature.width != cfg.feat_w() ||
      feature.channels() != cfg.embed_dim)
    throw ConfigError("forward_stage2: feature map does not match config");
  ad::Tape<Real> tape;
  Bound p(tape, store, false);
  Stage2Graph g = stage2_forward(p, cfg, tape.constant(feature.m));
  Stage2Output out;
  out.attention = g.attention;
  for (int c = 0; c < 4; ++c)
    out.prediction.maps[static_cast<size_t>(c)] = grid_to_image(
        MatX(g.cause_probs[static_cast<size_t>(c)].value()), cfg.image_height, cfg.image_width);
  return out;
}

// ---------------------------------------------------------------------------
// Attention export (one grayscale PNG per stage and cause)
// ---------------------------------------------------------------------------

/// Writes stage{n}_{cause}.png files: bilinear upsample to H x W, min-max
/// normalized per map. A constant map renders as mid-gray (128).
inline std::vector<std::string> export_attention(const AttentionMapBundle<Real>& bundle,
                                                 int out_height, int out_width,
                                                 const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  std::vector<std::string> files;
  auto plan = ad::resize_plan(bundle.grid_height, bundle.grid_width, out_height, out_width);
  for (size_t n = 0; n < bundle.stages.size(); ++n)
    for (int c = 0; c < 4; ++c) {
      const MatX& map = bundle.stages[n][static_cast<size_t>(c)];
      MatX up = grid_to_image(
          ad::apply_interp_values(image_to_grid(map), plan), out_height, out_width);
      const double lo = up.minCoeff();
      const double hi = up.maxCoeff();
      MatX out8;
      if (hi - lo < 1e-12)
        out8 = MatX::Constant(out_height, out_width, 128.0);
      else
        out8 = ((up.array() - lo) / (hi - lo) * 255.0).matrix();
      const std::string name =
          "stage" + std::to_string(n + 1) + "_" + cause_letter(static_cast<Cause>(c)) + ".png";
      const std::string path = (fs::path(out_dir) / name).string();
      png::write_gray8_raw(path, out8);
      files.push_back(path);
    }
  return files;
}

// ---------------------------------------------------------------------------
// Full two-stage forward
// ---------------------------------------------------------------------------

struct ForwardGraph {
  Stage1Graph s1;
  Stage2Graph s2;
};

inline ForwardGraph ect_forward(Bound& p, const ModelConfig& cfg, VarR image_grid) {
  ForwardGraph g;
  g.s1 = stage1_forward(p, cfg, image_grid);
  g.s2 = stage2_forward(p, cfg, g.s1.feature);
  return g;
}

struct FullOutput {
  MatX generic;  // H x W
  FineGrainedPrediction<Real> fine;
  AttentionMapBundle<Real> attention;
  Grid<Real> feature;
};

inline MatX image_as_grid(const Image<Real>& image) {
  MatX grid(static_cast<Eigen::Index>(image.height()) * image.width(), 3);
  for (int c = 0; c < 3; ++c) grid.col(c) = image_to_grid(image.ch[static_cast<size_t>(c)]);
  return grid;
}

inline FullOutput forward_full(ParamStore& store, const ModelConfig& cfg,
                               const Image<Real>& image) {
  cfg.validate();
  image.validate();
  if (image.height() != cfg.image_height || image.width() != cfg.image_width)
    throw ConfigError("forward_full: image dims do not match config");
  ad::Tape<Real> tape;
  Bound p(tape, store, false);
  ForwardGraph g = ect_forward(p, cfg, tape.constant(image_as_grid(image)));
  FullOutput out;
  out.generic = grid_to_image(MatX(g.s1.edge_prob.value()), cfg.image_height, cfg.image_width);
  for (int c = 0; c < 4; ++c)
    out.fine.maps[static_cast<size_t>(c)] = grid_to_image(
        MatX(g.s2.cause_probs[static_cast<size_t>(c)].value()), cfg.image_height, cfg.image_width);
  out.attention = g.s2.attention;
  out.feature = Grid<Real>(g.s1.feature.value(), cfg.feat_h(), cfg.feat_w());
  return out;
}

}  // namespace ect

#endif  // ECT_CAUSE_DECODER_HPP
