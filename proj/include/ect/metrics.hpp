#ifndef ECT_METRICS_HPP
#define ECT_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "ect/png_io.hpp"
#include "ect/types.hpp"

namespace ect {

// ---------------------------------------------------------------------------
// Binarization and morphological thinning
// ---------------------------------------------------------------------------

template <class S>
Mat<S> binarize(const Mat<S>& prob, double t) {
  return (prob.array() >= S(t)).template cast<S>().matrix();
}

/// Zhang-Suen thinning. Preserves 8-connectivity and endpoints of 1-pixel
/// lines; closed loops stay closed.
template <class S>
Mat<S> thin(const Mat<S>& binary) {
  const int h = static_cast<int>(binary.rows());
  const int w = static_cast<int>(binary.cols());
  std::vector<std::uint8_t> img(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img[static_cast<size_t>(y) * w + x] = binary(y, x) != S(0);

  auto at = [&](int y, int x) -> int {
    return (y >= 0 && y < h && x >= 0 && x < w) ? img[static_cast<size_t>(y) * w + x] : 0;
  };
  std::vector<int> to_delete;
  bool changed = true;
  while (changed) {
    changed = false;
    for (int phase = 0; phase < 2; ++phase) {
      to_delete.clear();
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          if (!img[static_cast<size_t>(y) * w + x]) continue;
          // neighbors p2..p9 clockwise from north
          const int p[8] = {at(y - 1, x), at(y - 1, x + 1), at(y, x + 1), at(y + 1, x + 1),
                            at(y + 1, x), at(y + 1, x - 1), at(y, x - 1), at(y - 1, x - 1)};
          int b = 0;
          for (int k = 0; k < 8; ++k) b += p[k];
          if (b < 2 || b > 6) continue;
          int a = 0;
          for (int k = 0; k < 8; ++k)
            if (p[k] == 0 && p[(k + 1) % 8] == 1) ++a;
          if (a != 1) continue;
          if (phase == 0) {
            if (p[0] * p[2] * p[4] != 0) continue;
            if (p[2] * p[4] * p[6] != 0) continue;
          } else {
            if (p[0] * p[2] * p[6] != 0) continue;
            if (p[0] * p[4] * p[6] != 0) continue;
          }
          to_delete.push_back(y * w + x);
        }
      if (!to_delete.empty()) {
        changed = true;
        for (int idx : to_delete) img[static_cast<size_t>(idx)] = 0;
      }
    }
  }
  Mat<S> out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(y, x) = static_cast<S>(img[static_cast<size_t>(y) * w + x]);
  return out;
}

template <class S>
Mat<S> binarize_and_thin(const Mat<S>& prob, double t) {
  if (!(t > 0.0 && t < 1.0)) throw ConfigError("binarize_and_thin: threshold must be in (0,1)");
  return thin(binarize(prob, t));
}

// ---------------------------------------------------------------------------
// Correspondence by maximum-cardinality bipartite matching
// ---------------------------------------------------------------------------

struct MatchCounts {
  long tp_pred = 0;
  long n_pred = 0;
  long tp_gt = 0;
  long n_gt = 0;

  MatchCounts& operator+=(const MatchCounts& o) {
    tp_pred += o.tp_pred;
    n_pred += o.n_pred;
    tp_gt += o.tp_gt;
    n_gt += o.n_gt;
    return *this;
  }
};

struct PixelList {
  std::vector<int> xs, ys;
};

template <class S>
PixelList edge_pixels(const Mat<S>& binary) {
  PixelList out;
  for (Eigen::Index y = 0; y < binary.rows(); ++y)
    for (Eigen::Index x = 0; x < binary.cols(); ++x)
      if (binary(y, x) != S(0)) {
        out.ys.push_back(static_cast<int>(y));
        out.xs.push_back(static_cast<int>(x));
      }
  return out;
}

/// Maximum-cardinality matching between edge pixels of `pred` and `gt` with
/// Euclidean distance at most tol * diag. Each pixel is matched at most once.
template <class S>
MatchCounts match_edges(const Mat<S>& pred, const Mat<S>& gt, double tol) {
  require_same_shape(pred, gt, "match_edges");
  if (tol < 0) throw ConfigError("match_edges: tol must be >= 0");
  const double diag = std::sqrt(static_cast<double>(pred.rows()) * pred.rows() +
                                static_cast<double>(pred.cols()) * pred.cols());
  const double radius2 = tol * diag * tol * diag;

  const PixelList p = edge_pixels(pred);
  const PixelList g = edge_pixels(gt);
  const int np = static_cast<int>(p.xs.size());
  const int ng = static_cast<int>(g.xs.size());

  std::vector<std::vector<int>> cand(static_cast<size_t>(np));
  for (int i = 0; i < np; ++i)
    for (int j = 0; j < ng; ++j) {
      const double dx = p.xs[static_cast<size_t>(i)] - g.xs[static_cast<size_t>(j)];
      const double dy = p.ys[static_cast<size_t>(i)] - g.ys[static_cast<size_t>(j)];
      if (dx * dx + dy * dy <= radius2) cand[static_cast<size_t>(i)].push_back(j);
    }

  // Kuhn's augmenting-path algorithm; graphs here are tiny per image.
  std::vector<int> match_gt(static_cast<size_t>(ng), -1);
  std::vector<char> visited(static_cast<size_t>(ng));
  std::function<bool(int)> try_assign = [&](int i) -> bool {
    for (int j : cand[static_cast<size_t>(i)]) {
      if (visited[static_cast<size_t>(j)]) continue;
      visited[static_cast<size_t>(j)] = 1;
      if (match_gt[static_cast<size_t>(j)] < 0 || try_assign(match_gt[static_cast<size_t>(j)])) {
        match_gt[static_cast<size_t>(j)] = i;
        return true;
      }
    }
    return false;
  };
  long matched = 0;
  for (int i = 0; i < np; ++i) {
    std::fill(visited.begin(), visited.end(), 0);
    if (try_assign(i)) ++matched;
  }

  MatchCounts c;
  c.n_pred = np;
  c.n_gt = ng;
  c.tp_pred = matched;
  c.tp_gt = matched;
  return c;
}

// ---------------------------------------------------------------------------
// Dataset-level ODS / OIS / AP
// ---------------------------------------------------------------------------

struct PrPoint {
  double threshold = 0;
  double precision = 0;
  double recall = 0;
};

struct EvalSummary {
  double ods_f = 0;
  double ois_f = 0;
  double ap = 0;
  double ods_threshold = 0;
  std::vector<PrPoint> pr_curve;
  std::vector<double> per_image_best_threshold;
};

inline double precision_of(const MatchCounts& c) {
  return c.n_pred > 0 ? static_cast<double>(c.tp_pred) / static_cast<double>(c.n_pred) : 1.0;
}
inline double recall_of(const MatchCounts& c) {
  return c.n_gt > 0 ? static_cast<double>(c.tp_gt) / static_cast<double>(c.n_gt) : 0.0;
}
inline double f_measure(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }
inline double f_of(const MatchCounts& c) { return f_measure(precision_of(c), recall_of(c)); }

inline std::vector<double> default_thresholds() {
  std::vector<double> t;
  for (int k = 1; k <= 99; ++k) t.push_back(k / 100.0);
  return t;
}

constexpr double kDefaultTolerance = 0.0075;

/// AP = mean of upper-envelope interpolated precision over the recall levels
/// {0, 0.01, ..., 1} that are attained by some threshold with predictions.
inline double average_precision(const std::vector<PrPoint>& curve,
                                const std::vector<char>& has_pred) {
  double total = 0;
  int attained = 0;
  for (int k = 0; k <= 100; ++k) {
    const double r = k / 100.0;
    double best = -1;
    for (size_t i = 0; i < curve.size(); ++i)
      if (has_pred[i] && curve[i].recall >= r) best = std::max(best, curve[i].precision);
    if (best >= 0) {
      total += best;
      ++attained;
    }
  }
  return attained > 0 ? total / attained : 0.0;
}

template <class S>
EvalSummary evaluate_dataset(const std::vector<Mat<S>>& preds, const std::vector<Mat<S>>& gts,
                             std::vector<double> thresholds = default_thresholds(),
                             double tol = kDefaultTolerance) {
  if (preds.empty() || preds.size() != gts.size())
    throw ConfigError("evaluate_dataset: empty or misaligned inputs");
  if (!std::is_sorted(thresholds.begin(), thresholds.end()))
    throw ConfigError("evaluate_dataset: thresholds must be increasing");
  const size_t n_img = preds.size();
  const size_t n_t = thresholds.size();

  std::vector<std::vector<MatchCounts>> counts(n_img, std::vector<MatchCounts>(n_t));
  for (size_t i = 0; i < n_img; ++i) {
    require_same_shape(preds[i], gts[i], "evaluate_dataset");
    for (size_t k = 0; k < n_t; ++k) {
      Mat<S> bin = binarize_and_thin(preds[i], thresholds[k]);
      counts[i][k] = match_edges(bin, gts[i], tol);
    }
  }

  EvalSummary s;
  std::vector<char> has_pred(n_t, 0);
  double best_f = -1;
  size_t ods_k = 0;
  for (size_t k = 0; k < n_t; ++k) {
    MatchCounts tot;
    for (size_t i = 0; i < n_img; ++i) tot += counts[i][k];
    PrPoint pt;
    pt.threshold = thresholds[k];
    pt.precision = precision_of(tot);
    pt.recall = recall_of(tot);
    s.pr_curve.push_back(pt);
    has_pred[k] = tot.n_pred > 0;
    const double f = f_measure(pt.precision, pt.recall);
    if (f > best_f) {
      best_f = f;
      ods_k = k;
    }
  }
  s.ods_f = std::max(best_f, 0.0);
  s.ods_threshold = thresholds[ods_k];

  // Per-image best thresholds; ties in per-image F resolve to the dataset
  // ODS threshold so that images with flat F curves (typically all-zero)
  // contribute their counts at the globally chosen operating point.
  MatchCounts ois_total;
  for (size_t i = 0; i < n_img; ++i) {
    double best = -1;
    size_t best_k = 0;
    for (size_t k = 0; k < n_t; ++k) {
      const double f = f_of(counts[i][k]);
      if (f > best) {
        best = f;
        best_k = k;
      }
    }
    if (f_of(counts[i][ods_k]) == best) best_k = ods_k;
    ois_total += counts[i][best_k];
    s.per_image_best_threshold.push_back(thresholds[best_k]);
  }
  s.ois_f = f_of(ois_total);
  s.ap = average_precision(s.pr_curve, has_pred);
  return s;
}

// ---------------------------------------------------------------------------
// Point-pair mean recall
// ---------------------------------------------------------------------------

struct PointPair {
  std::string image_id;
  int x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  bool equal_reflectance = false;
};

/// 8-connected Bresenham rasterization of the segment (x1,y1)-(x2,y2).
inline std::vector<std::pair<int, int>> raster_segment(int x1, int y1, int x2, int y2) {
  std::vector<std::pair<int, int>> pts;
  const int dx = std::abs(x2 - x1), dy = -std::abs(y2 - y1);
  const int sx = x1 < x2 ? 1 : -1, sy = y1 < y2 ? 1 : -1;
  int err = dx + dy;
  int x = x1, y = y1;
  while (true) {
    pts.emplace_back(x, y);
    if (x == x2 && y == y2) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y += sy;
    }
  }
  return pts;
}

/// Mean over thresholds of the fraction of unequal-reflectance pairs whose
/// connecting segment crosses a pixel with prob >= t.
template <class S>
double mean_recall_pairs(const Mat<S>& prob, const std::vector<PointPair>& pairs,
                         const std::vector<double>& thresholds = default_thresholds()) {
  std::vector<double> seg_max;
  for (const auto& pp : pairs) {
    if (pp.equal_reflectance) continue;
    if (pp.x1 < 0 || pp.x1 >= prob.cols() || pp.x2 < 0 || pp.x2 >= prob.cols() || pp.y1 < 0 ||
        pp.y1 >= prob.rows() || pp.y2 < 0 || pp.y2 >= prob.rows())
      throw ConfigError("mean_recall_pairs: point outside image bounds");
    double m = 0;
    for (auto [x, y] : raster_segment(pp.x1, pp.y1, pp.x2, pp.y2))
      m = std::max(m, static_cast<double>(prob(y, x)));
    seg_max.push_back(m);
  }
  if (seg_max.empty()) throw ConfigError("mean_recall_pairs: no unequal-reflectance pairs");
  double total = 0;
  for (double t : thresholds) {
    long hit = 0;
    for (double m : seg_max)
      if (m >= t) ++hit;
    total += static_cast<double>(hit) / static_cast<double>(seg_max.size());
  }
  return total / static_cast<double>(thresholds.size());
}

/// Pooled over many images: recall counts aggregate over all unequal pairs.
template <class S>
double mean_recall_dataset(const std::vector<Mat<S>>& probs,
                           const std::vector<std::vector<PointPair>>& pairs_per_image,
                           const std::vector<double>& thresholds = default_thresholds()) {
  if (probs.size() != pairs_per_image.size())
    throw ConfigError("mean_recall_dataset: misaligned inputs");
  std::vector<double> seg_max;
  for (size_t i = 0; i < probs.size(); ++i)
    for (const auto& pp : pairs_per_image[i]) {
      if (pp.equal_reflectance) continue;
      double m = 0;
      for (auto [x, y] : raster_segment(pp.x1, pp.y1, pp.x2, pp.y2)) {
        if (x < 0 || x >= probs[i].cols() || y < 0 || y >= probs[i].rows())
          throw ConfigError("mean_recall_dataset: point outside image bounds");
        m = std::max(m, static_cast<double>(probs[i](y, x)));
      }
      seg_max.push_back(m);
    }
  if (seg_max.empty()) throw ConfigError("mean_recall_dataset: no unequal-reflectance pairs");
  double total = 0;
  for (double t : thresholds) {
    long hit = 0;
    for (double m : seg_max)
      if (m >= t) ++hit;
    total += static_cast<double>(hit) / static_cast<double>(seg_max.size());
  }
  return total / static_cast<double>(thresholds.size());
}

// ---------------------------------------------------------------------------
// PR-curve export (CSV + rendered image)
// ---------------------------------------------------------------------------

inline std::string format_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline void write_pr_csv(const EvalSummary& summary, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("pr export: cannot open " + path);
  os << "threshold,precision,recall\n";
  for (const auto& pt : summary.pr_curve)
    os << format_g17(pt.threshold) << ',' << format_g17(pt.precision) << ','
       << format_g17(pt.recall) << '\n';
  if (!os) throw IoError("pr export: write failed " + path);
}

/// Renders the PR curve into a square grayscale plot (recall on x, precision
/// on y, origin bottom-left).
inline void write_pr_plot(const EvalSummary& summary, const std::string& path, int size = 256) {
  MatX img = MatX::Constant(size, size, 255.0);
  const int margin = 16;
  const int span = size - 2 * margin;
  auto px = [&](double recall) { return margin + static_cast<int>(std::lround(recall * span)); };
  auto py = [&](double precision) {
    return size - 1 - margin - static_cast<int>(std::lround(precision * span));
  };
  for (int i = 0; i <= span; ++i) {
    img(size - 1 - margin, margin + i) = 128;  // x axis
    img(size - 1 - margin - i, margin) = 128;  // y axis
  }
  for (size_t i = 1; i < summary.pr_curve.size(); ++i) {
    const auto& a = summary.pr_curve[i - 1];
    const auto& b = summary.pr_curve[i];
    for (auto [x, y] : raster_segment(px(a.recall), py(a.precision), px(b.recall), py(b.precision)))
      if (y >= 0 && y < size && x >= 0 && x < size) img(y, x) = 0;
  }
  png::write_gray8_raw(path, img);
}

inline void pr_curve_export(const EvalSummary& summary, const std::string& csv_path,
                            const std::string& plot_path) {
  write_pr_csv(summary, csv_path);
  write_pr_plot(summary, plot_path);
}

}  // namespace ect

#endif  // ECT_METRICS_HPP
