#ifndef ECT_ALIGNMENT_HPP
#define ECT_ALIGNMENT_HPP

#include <string>
#include <vector>

#include "ect/nn.hpp"
#include "ect/optimizer.hpp"
#include "ect/types.hpp"

namespace ect {

// ---------------------------------------------------------------------------
// Aggregation: pixelwise maximum over the four cause maps
// ---------------------------------------------------------------------------

/// Pixelwise max of the four fine-grained maps; ties resolve to the earliest
/// cause in the fixed order r < i < n < d (relevant only for gradients).
template <class S>
Mat<S> aggregate_max(const FineGrainedPrediction<S>& pred) {
  for (int i = 1; i < 4; ++i)
    require_same_shape(pred.maps[0], pred.maps[static_cast<size_t>(i)], "aggregate_max");
  Mat<S> out = pred.maps[0];
  for (int i = 1; i < 4; ++i) out = out.cwiseMax(pred.maps[static_cast<size_t>(i)]);
  return out;
}

// ---------------------------------------------------------------------------
// Transform parameters and warping
// ---------------------------------------------------------------------------

struct AlignmentParams {
  enum class Mode { Affine, Homography };
  Mode mode = Mode::Affine;
  MatX theta;  // 2x3 (affine) or 3x3 with last row (0,0,1) (homography)

  static AlignmentParams identity(Mode m = Mode::Affine) {
    AlignmentParams p;
    p.mode = m;
    if (m == Mode::Affine) {
      p.theta = MatX::Zero(2, 3);
      p.theta(0, 0) = p.theta(1, 1) = 1.0;
    } else {
      p.theta = MatX::Identity(3, 3);
    }
    return p;
  }

  static int dof(Mode m) { return m == Mode::Affine ? 6 : 8; }

  /// Row-major free parameters (homography drops the fixed last row).
  Eigen::VectorXd flat() const {
    const int n = dof(mode);
    Eigen::VectorXd v(n);
    int k = 0;
    for (int r = 0; r < (mode == Mode::Affine ? 2 : 3); ++r)
      for (int c = 0; c < 3 && k < n; ++c) v(k++) = theta(r, c);
    return v;
  }

  static AlignmentParams from_flat(const Eigen::VectorXd& v, Mode m) {
    AlignmentParams p = identity(m);
    int k = 0;
    for (int r = 0; r < (m == Mode::Affine ? 2 : 3); ++r)
      for (int c = 0; c < 3 && k < dof(m); ++c) p.theta(r, c) = v(k++);
    return p;
  }

  void validate() const {
    if (mode == Mode::Affine) {
      if (theta.rows() != 2 || theta.cols() != 3) throw ConfigError("theta: affine must be 2x3");
    } else {
      if (theta.rows() != 3 || theta.cols() != 3)
        throw ConfigError("theta: homography must be 3x3");
      if (theta(2, 0) != 0 || theta(2, 1) != 0 || theta(2, 2) != 1)
        throw ConfigError("theta: homography last row must be (0,0,1)");
    }
    if (!theta.allFinite()) throw ConfigError("theta: non-finite entries");
  }
};

namespace detail {
inline double to_norm_x(double x, int w) { return 2.0 * (x + 0.5) / w - 1.0; }
inline double to_norm_y(double y, int h) { return 2.0 * (y + 0.5) / h - 1.0; }
inline double from_norm_x(double u, int w) { return (u + 1.0) * w / 2.0 - 0.5; }
inline double from_norm_y(double v, int h) { return (v + 1.0) * h / 2.0 - 0.5; }
}  // namespace detail

/// Bilinear warp with zero padding. theta maps normalized output coordinates
/// to normalized source coordinates, so a theta built with
/// translation_params(dx, dy, ...) shifts image content by (+dx, +dy) pixels.
template <class S>
Mat<S> apply_transform(const Mat<S>& edge_map, const AlignmentParams& params) {
  params.validate();
  const double det =
      params.theta(0, 0) * params.theta(1, 1) - params.theta(0, 1) * params.theta(1, 0);
  if (std::abs(det) < 1e-12) throw ConfigError("apply_transform: singular theta");
  const int h = static_cast<int>(edge_map.rows());
  const int w = static_cast<int>(edge_map.cols());
  Mat<S> out = Mat<S>::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double u = detail::to_norm_x(x, w);
      const double v = detail::to_norm_y(y, h);
      double su = params.theta(0, 0) * u + params.theta(0, 1) * v + params.theta(0, 2);
      double sv = params.theta(1, 0) * u + params.theta(1, 1) * v + params.theta(1, 2);
      if (params.mode == AlignmentParams::Mode::Homography) {
        const double sw = params.theta(2, 0) * u + params.theta(2, 1) * v + params.theta(2, 2);
        if (std::abs(sw) < 1e-12) continue;
        su /= sw;
        sv /= sw;
      }
      const double sx = detail::from_norm_x(su, w);
      const double sy = detail::from_norm_y(sv, h);
      const int x0 = static_cast<int>(std::floor(sx));
      const int y0 = static_cast<int>(std::floor(sy));
      const double tx = sx - x0;
      const double ty = sy - y0;
      double acc = 0;
      for (int dy = 0; dy <= 1; ++dy)
        for (int dx = 0; dx <= 1; ++dx) {
          const int yy = y0 + dy, xx = x0 + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
          acc += (dy ? ty : 1 - ty) * (dx ? tx : 1 - tx) * static_cast<double>(edge_map(yy, xx));
        }
      out(y, x) = static_cast<S>(acc);
    }
  return out;
}

/// Content shift by (+dx, +dy) pixels.
inline AlignmentParams translation_params(double dx_px, double dy_px, int w, int h,
                                          AlignmentParams::Mode m = AlignmentParams::Mode::Affine) {
  AlignmentParams p = AlignmentParams::identity(m);
  p.theta(0, 2) = -2.0 * dx_px / w;
  p.theta(1, 2) = -2.0 * dy_px / h;
  return p;
}

/// Content rotation by deg around center composed with uniform scale.
inline AlignmentParams rot_scale_params(double deg, double scl,
                                        AlignmentParams::Mode m = AlignmentParams::Mode::Affine) {
  AlignmentParams p = AlignmentParams::identity(m);
  const double a = deg * M_PI / 180.0;
  const double c = std::cos(a) / scl, s = std::sin(a) / scl;
  p.theta(0, 0) = c;
  p.theta(0, 1) = s;
  p.theta(1, 0) = -s;
  p.theta(1, 1) = c;
  return p;
}

/// apply_transform(img, compose(a, b)) == apply_transform(apply_transform(img, b), a).
inline AlignmentParams compose(const AlignmentParams& a, const AlignmentParams& b) {
  AlignmentParams out = AlignmentParams::identity(a.mode);
  MatX a3 = MatX::Identity(3, 3), b3 = MatX::Identity(3, 3);
  a3.topRows(a.theta.rows()) = a.theta;
  b3.topRows(b.theta.rows()) = b.theta;
  MatX c3 = b3 * a3;
  out.theta = a.mode == AlignmentParams::Mode::Affine ? MatX(c3.topRows(2)) : c3;
  return out;
}

// ---------------------------------------------------------------------------
// Inverse transformation network Phi
// ---------------------------------------------------------------------------

struct InverseNetConfig {
  int input_size = 64;  // P; both maps are resized to P x P
  AlignmentParams::Mode mode = AlignmentParams::Mode::Affine;
  int conv_channels[3] = {8, 16, 32};
  int fc_dim = 64;
};

/// Shared graph builder: resize both maps to P x P, stack as 2 channels,
/// three stride-2 convolutions, then a two-layer regressor to the transform
/// parameters. The output layer is zero-init with an identity bias.
inline ad::Var<Real> phi_forward(const InverseNetConfig& cfg, Bound& bp, ad::Var<Real> a,
                                 ad::Var<Real> b, int in_h, int in_w) {
  auto plan = ad::resize_plan(in_h, in_w, cfg.input_size, cfg.input_size);
  ad::Var<Real> x = ad::hconcat<Real>({ad::apply_interp(a, plan), ad::apply_interp(b, plan)});
  int h = cfg.input_size, w = cfg.input_size;
  for (int i = 0; i < 3; ++i) {
    x = ad::relu(nn::conv3x3(bp, "phi.conv" + std::to_string(i), x, h, w, cfg.conv_channels[i], 2));
    h = (h + 1) / 2;
    w = (w + 1) / 2;
  }
  x = ad::flatten_rows(x);
  x = ad::relu(nn::linear(bp, "phi.fc1", x, cfg.fc_dim));
  return nn::linear(bp, "phi.out", x, AlignmentParams::dof(cfg.mode), Init::Zero);
}

class InverseTransformNet {
 public:
  InverseTransformNet(InverseNetConfig cfg, std::uint64_t seed) : cfg_(cfg), store_(seed) {
    if (cfg_.input_size % 8 != 0)
      throw ConfigError("inverse net: input_size must be divisible by 8");
    ad::Tape<Real> tape;
    Bound bp(tape, store_, false);
    ad::Var<Real> z = tape.constant(
        MatX::Zero(static_cast<Eigen::Index>(cfg_.input_size) * cfg_.input_size, 1));
    phi_forward(cfg_, bp, z, z, cfg_.input_size, cfg_.input_size);
    store_.at("phi.out.b") = AlignmentParams::identity(cfg_.mode).flat().transpose();
  }

  InverseTransformNet(InverseNetConfig cfg, ParamStore store)
      : cfg_(cfg), store_(std::move(store)) {}

  ad::Var<Real> forward(ad::Tape<Real>& tape, ad::Var<Real> generic_grid,
                        ad::Var<Real> rind_grid, int in_h, int in_w, bool train_phi) const {
    Bound bp(tape, const_cast<ParamStore&>(store_), train_phi);
    return phi_forward(cfg_, bp, generic_grid, rind_grid, in_h, in_w);
  }

  const InverseNetConfig& config() const { return cfg_; }
  ParamStore& store() { return store_; }
  const ParamStore& store() const { return store_; }

 private:
  InverseNetConfig cfg_;
  ParamStore store_;
};

/// theta-hat = Phi(E_generic, G_rind) as plain values.
inline AlignmentParams predict_theta(const InverseTransformNet& net, const MatX& generic_map,
                                     const MatX& rind_map) {
  require_same_shape(generic_map, rind_map, "predict_theta");
  ad::Tape<Real> tape;
  ad::Var<Real> g = tape.constant(image_to_grid(generic_map));
  ad::Var<Real> r = tape.constant(image_to_grid(rind_map));
  ad::Var<Real> out = net.forward(tape, g, r, static_cast<int>(generic_map.rows()),
                                  static_cast<int>(generic_map.cols()), false);
  return AlignmentParams::from_flat(out.value().row(0).transpose(), net.config().mode);
}

// ---------------------------------------------------------------------------
// Alignment loss: || theta - I ||_F
// ---------------------------------------------------------------------------

inline double alignment_loss(const AlignmentParams& p) {
  p.validate();
  return (p.theta - AlignmentParams::identity(p.mode).theta).norm();
}

/// Graph form over a flat (1 x dof) theta node.
inline ad::Var<Real> alignment_loss_node(ad::Var<Real> theta_flat, AlignmentParams::Mode mode) {
  ad::Tape<Real>& tape = *theta_flat.tape;
  ad::Var<Real> id = tape.constant(AlignmentParams::identity(mode).flat().transpose());
  ad::Var<Real> d = ad::sub(theta_flat, id);
  return ad::cwise_sqrt(ad::sum(ad::cwise_mul(d, d)));
}

// ---------------------------------------------------------------------------
// Pretraining
// ---------------------------------------------------------------------------

struct TransformSamplerConfig {
  double max_translation_px = 5.0;
  double max_rotation_deg = 10.0;
  double max_scale_delta = 0.1;  // scale in [1 - d, 1 + d]
};

inline AlignmentParams sample_transform(Rng& rng, const TransformSamplerConfig& cfg, int w, int h,
                                        AlignmentParams::Mode mode = AlignmentParams::Mode::Affine) {
  const double dx = rng.uniform(-cfg.max_translation_px, cfg.max_translation_px);
  const double dy = rng.uniform(-cfg.max_translation_px, cfg.max_translation_px);
  const double deg = rng.uniform(-cfg.max_rotation_deg, cfg.max_rotation_deg);
  const double scl = rng.uniform(1.0 - cfg.max_scale_delta, 1.0 + cfg.max_scale_delta);
  return compose(translation_params(dx, dy, w, h, mode), rot_scale_params(deg, scl, mode));
}

struct PretrainConfig {
  TransformSamplerConfig sampler;
  int steps = 1500;
  int batch_size = 8;
  double lr = 2e-3;
  double momentum = 0.9;
  double lr_min_ratio = 0.05;
  int validation_pairs = 64;
  std::uint64_t seed = 11;
};

struct PretrainReport {
  double final_validation_mse = 0;
  int steps = 0;
  std::uint64_t seed = 0;
  TransformSamplerConfig sampler;
};

/// Trains Phi to regress the transform between a corpus map and its warped
/// copy, squared error on the flat parameters. The net is trained in place
/// and treated as frozen afterwards.
inline PretrainReport pretrain_inverse_net(InverseTransformNet& net,
                                           const std::vector<MatX>& corpus,
                                           const PretrainConfig& cfg) {
  if (corpus.empty()) throw ConfigError("pretrain_inverse_net: empty corpus");
  const auto mode = net.config().mode;

  struct Pair {
    MatX a, b;
    Eigen::VectorXd target;
  };
  auto make_pair = [&](Rng& rng) {
    const MatX& m = corpus[static_cast<size_t>(rng.below(corpus.size()))];
    AlignmentParams theta =
        sample_transform(rng, cfg.sampler, static_cast<int>(m.cols()), static_cast<int>(m.rows()), mode);
    Pair pr;
    pr.a = m;
    pr.b = apply_transform(m, theta);
    pr.target = theta.flat();
    return pr;
  };

  Rng val_rng(sub_seed(cfg.seed, fnv1a("phi-val")));
  std::vector<Pair> val;
  for (int i = 0; i < cfg.validation_pairs; ++i) val.push_back(make_pair(val_rng));

  SgdMomentum opt(cfg.momentum);
  for (int step = 0; step < cfg.steps; ++step) {
    Rng rng(sub_seed(cfg.seed, 0x70686900ull + static_cast<std::uint64_t>(step)));
    ad::Tape<Real> tape;
    Bound bp(tape, net.store(), true);
    ad::Var<Real> loss;
    for (int b = 0; b < cfg.batch_size; ++b) {
      Pair pr = make_pair(rng);
      ad::Var<Real> a = tape.constant(image_to_grid(pr.a));
      ad::Var<Real> bb = tape.constant(image_to_grid(pr.b));
      ad::Var<Real> pred = phi_forward(net.config(), bp, a, bb, static_cast<int>(pr.a.rows()),
                                       static_cast<int>(pr.a.cols()));
      ad::Var<Real> d = ad::sub(pred, tape.constant(pr.target.transpose()));
      ad::Var<Real> l = ad::mean(ad::cwise_mul(d, d));
      loss = b == 0 ? l : ad::add(loss, l);
    }
    loss = ad::scale(loss, Real(1) / cfg.batch_size);
    tape.backward(loss);
    opt.step(net.store(), bp.gradients(), cosine_lr(cfg.lr, cfg.lr_min_ratio, step, cfg.steps));
  }

  PretrainReport rep;
  rep.steps = cfg.steps;
  rep.seed = cfg.seed;
  rep.sampler = cfg.sampler;
  double total = 0;
  for (const auto& pr : val) {
    AlignmentParams est = predict_theta(net, pr.a, pr.b);
    total += (est.flat() - pr.target).squaredNorm() / static_cast<double>(pr.target.size());
  }
  rep.final_validation_mse = total / static_cast<double>(val.size());
  return rep;
}

}  // namespace ect

#endif  // ECT_ALIGNMENT_HPP
