#ifndef ECT_DERIVATION_HPP
#define ECT_DERIVATION_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "ect/metrics.hpp"
#include "ect/types.hpp"

namespace ect {

struct DerivationConfig {
  int window = 2;              // half-width; window is (2w+1)^2
  double tau_depth = 0.1;      // meters
  double tau_normal_deg = 15;  // degrees

  void validate() const {
    if (window < 1) throw ConfigError("derivation: window must be >= 1");
    if (!(tau_depth > 0)) throw ConfigError("derivation: tau_depth must be > 0");
    if (!(tau_normal_deg > 0 && tau_normal_deg < 180))
      throw ConfigError("derivation: tau_normal_deg must be in (0, 180)");
  }
};

/// Unit normal field as three H x W channels.
template <class S>
struct NormalMap {
  std::array<Mat<S>, 3> ch;

  void validate(double tol = 1e-3) const {
    for (int c = 1; c < 3; ++c) require_same_shape(ch[0], ch[static_cast<size_t>(c)], "NormalMap");
    for (Eigen::Index y = 0; y < ch[0].rows(); ++y)
      for (Eigen::Index x = 0; x < ch[0].cols(); ++x) {
        const double n = std::sqrt(static_cast<double>(
            ch[0](y, x) * ch[0](y, x) + ch[1](y, x) * ch[1](y, x) + ch[2](y, x) * ch[2](y, x)));
        if (std::abs(n - 1.0) > tol)
          throw ConfigError("NormalMap: non-unit normal beyond tolerance");
      }
  }
};

// ---------------------------------------------------------------------------
// Local variation intensity. Window is clipped at image borders. Depth values
// <= 0 count as invalid; a fully invalid window yields "undefined" (nullopt),
// which downstream ops exclude.
// ---------------------------------------------------------------------------

template <class S>
std::optional<double> local_variation_depth(const Mat<S>& depth, int y, int x,
                                            const DerivationConfig& cfg) {
  cfg.validate();
  double lo = 0, hi = 0;
  bool any = false;
  for (int dy = -cfg.window; dy <= cfg.window; ++dy)
    for (int dx = -cfg.window; dx <= cfg.window; ++dx) {
      const int yy = y + dy, xx = x + dx;
      if (yy < 0 || yy >= depth.rows() || xx < 0 || xx >= depth.cols()) continue;
      const double v = static_cast<double>(depth(yy, xx));
      if (v <= 0) continue;
      if (!any) {
        lo = hi = v;
        any = true;
      } else {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  if (!any) return std::nullopt;
  return hi - lo;
}

/// Largest pairwise angle (degrees) between normals in the window.
template <class S>
double local_variation_normal(const NormalMap<S>& normal, int y, int x,
                              const DerivationConfig& cfg) {
  cfg.validate();
  std::vector<std::array<double, 3>> ns;
  for (int dy = -cfg.window; dy <= cfg.window; ++dy)
    for (int dx = -cfg.window; dx <= cfg.window; ++dx) {
      const int yy = y + dy, xx = x + dx;
      if (yy < 0 || yy >= normal.ch[0].rows() || xx < 0 || xx >= normal.ch[0].cols()) continue;
      ns.push_back({static_cast<double>(normal.ch[0](yy, xx)),
                    static_cast<double>(normal.ch[1](yy, xx)),
                    static_cast<double>(normal.ch[2](yy, xx))});
    }
  double worst = 0;
  for (size_t i = 0; i < ns.size(); ++i)
    for (size_t j = i + 1; j < ns.size(); ++j) {
      double dot = ns[i][0] * ns[j][0] + ns[i][1] * ns[j][1] + ns[i][2] * ns[j][2];
      dot = std::clamp(dot, -1.0, 1.0);
      worst = std::max(worst, std::acos(dot) * 180.0 / M_PI);
    }
  return worst;
}

/// 1 if both mask values occur in the window, else 0.
template <class S>
double local_variation_shadow(const Mat<S>& mask, int y, int x, const DerivationConfig& cfg) {
  cfg.validate();
  bool saw0 = false, saw1 = false;
  for (int dy = -cfg.window; dy <= cfg.window; ++dy)
    for (int dx = -cfg.window; dx <= cfg.window; ++dx) {
      const int yy = y + dy, xx = x + dx;
      if (yy < 0 || yy >= mask.rows() || xx < 0 || xx >= mask.cols()) continue;
      (mask(yy, xx) != S(0) ? saw1 : saw0) = true;
    }
  return saw0 && saw1 ? 1.0 : 0.0;
}

// ---------------------------------------------------------------------------
// Edge derivation
// ---------------------------------------------------------------------------

/// GE: pixels with any 4-neighbor holding a different instance label, thinned.
template <class S>
Mat<S> derive_generic_from_instances(const Eigen::MatrixXi& labels) {
  const int h = static_cast<int>(labels.rows());
  const int w = static_cast<int>(labels.cols());
  Mat<S> edges = Mat<S>::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int l = labels(y, x);
      const bool boundary = (y > 0 && labels(y - 1, x) != l) || (y + 1 < h && labels(y + 1, x) != l) ||
                            (x > 0 && labels(y, x - 1) != l) || (x + 1 < w && labels(y, x + 1) != l);
      if (boundary) edges(y, x) = S(1);
    }
  return thin(edges);
}

/// IE: shadow-mask local variation, thinned to 1-pixel width.
template <class S>
Mat<S> derive_illumination_edges(const Mat<S>& shadow_mask, const DerivationConfig& cfg) {
  cfg.validate();
  const int h = static_cast<int>(shadow_mask.rows());
  const int w = static_cast<int>(shadow_mask.cols());
  Mat<S> band = Mat<S>::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      band(y, x) = static_cast<S>(local_variation_shadow(shadow_mask, y, x, cfg));
  return thin(band);
}

/// DE: GE pixels whose depth local variation exceeds tau_depth. Pixels whose
/// window holds no valid depth are excluded.
template <class S>
Mat<S> derive_depth_edges(const Mat<S>& ge, const Mat<S>& depth, const DerivationConfig& cfg) {
  cfg.validate();
  require_same_shape(ge, depth, "derive_depth_edges");
  Mat<S> out = Mat<S>::Zero(ge.rows(), ge.cols());
  for (Eigen::Index y = 0; y < ge.rows(); ++y)
    for (Eigen::Index x = 0; x < ge.cols(); ++x) {
      if (ge(y, x) == S(0)) continue;
      const auto v = local_variation_depth(depth, static_cast<int>(y), static_cast<int>(x), cfg);
      if (v && *v > cfg.tau_depth) out(y, x) = S(1);
    }
  return out;
}

/// NE: GE pixels whose normal local variation exceeds tau_normal_deg.
template <class S>
Mat<S> derive_normal_edges(const Mat<S>& ge, const NormalMap<S>& normal,
                           const DerivationConfig& cfg) {
  cfg.validate();
  require_same_shape(ge, normal.ch[0], "derive_normal_edges");
  normal.validate();
  Mat<S> out = Mat<S>::Zero(ge.rows(), ge.cols());
  for (Eigen::Index y = 0; y < ge.rows(); ++y)
    for (Eigen::Index x = 0; x < ge.cols(); ++x) {
      if (ge(y, x) == S(0)) continue;
      if (local_variation_normal(normal, static_cast<int>(y), static_cast<int>(x), cfg) >
          cfg.tau_normal_deg)
        out(y, x) = S(1);
    }
  return out;
}

// ---------------------------------------------------------------------------
// Reflectance point pairs
// ---------------------------------------------------------------------------

struct PairAnnotation {
  std::string image;
  double x1 = -1, y1 = -1, x2 = -1, y2 = -1;
  std::string relation;  // "equal" or any inequality ("darker", "unequal", ...)
};

/// Converts raw annotations into point pairs. Records with coordinates
/// outside [0,w) x [0,h) or an empty relation are skipped and counted.
inline std::vector<PointPair> derive_reflectance_pairs(const std::vector<PairAnnotation>& records,
                                                       int height, int width,
                                                       long* skipped = nullptr) {
  std::vector<PointPair> out;
  long bad = 0;
  for (const auto& r : records) {
    const bool in_bounds = r.x1 >= 0 && r.x1 < width && r.x2 >= 0 && r.x2 < width && r.y1 >= 0 &&
                           r.y1 < height && r.y2 >= 0 && r.y2 < height;
    if (!in_bounds || r.relation.empty() || r.image.empty()) {
      ++bad;
      continue;
    }
    PointPair p;
    p.image_id = r.image;
    p.x1 = static_cast<int>(r.x1);
    p.y1 = static_cast<int>(r.y1);
    p.x2 = static_cast<int>(r.x2);
    p.y2 = static_cast<int>(r.y2);
    p.equal_reflectance = (r.relation == "equal");
    out.push_back(p);
  }
  if (skipped) *skipped = bad;
  return out;
}

// ---------------------------------------------------------------------------
// File conventions for auxiliary maps
// ---------------------------------------------------------------------------

/// Depth files are 16-bit PNG in millimeters; 0 means invalid.
inline MatX depth_from_png16(const MatX& raw_mm) { return raw_mm / 1000.0; }

/// Normal files are 8-bit RGB mapping [0,255] -> [-1,1], renormalized.
template <class S>
NormalMap<S> normals_from_rgb8(const Image<S>& img) {
  NormalMap<S> n;
  for (auto& c : n.ch) c.resize(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      double v[3];
      for (int c = 0; c < 3; ++c) v[c] = 2.0 * static_cast<double>(img.ch[static_cast<size_t>(c)](y, x)) - 1.0;
      const double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
      if (len < 1e-9) throw ConfigError("normals_from_rgb8: zero-length normal");
      for (int c = 0; c < 3; ++c) n.ch[static_cast<size_t>(c)](y, x) = static_cast<S>(v[c] / len);
    }
  return n;
}

}  // namespace ect

#endif  // ECT_DERIVATION_HPP
