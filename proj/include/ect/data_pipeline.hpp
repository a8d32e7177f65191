#ifndef ECT_DATA_PIPELINE_HPP
#define ECT_DATA_PIPELINE_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ect/losses.hpp"
#include "ect/png_io.hpp"
#include "ect/types.hpp"

namespace ect {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Samples and dataset layout:
//   images/{split}/{id}.png
//   gt/{reflectance|illumination|normal|depth}/{split}/{id}.png
//   gt/generic/{split}/{id}.png        (optional; otherwise OR of the four)
// ---------------------------------------------------------------------------

struct Sample {
  Image<Real> image;
  std::map<Task, GroundTruthEdgeMap<Real>> gt;
  std::string id;
};

struct LoadStats {
  long degenerate_gt_warnings = 0;
};

inline MatX binarize_gt_png(const MatX& raw8) {
  return (raw8.array() >= 128.0).cast<Real>().matrix();
}

inline Sample load_sample(const std::string& root, const std::string& split,
                          const std::string& id, LoadStats* stats = nullptr) {
  Sample s;
  s.id = id;
  const fs::path img_path = fs::path(root) / "images" / split / (id + ".png");
  if (!fs::exists(img_path)) throw IoError("load_sample: missing image " + img_path.string());
  s.image = png::read_rgb8(img_path.string());

  MatX generic;
  bool any_edge = false;
  for (Cause c : kCauses) {
    const fs::path gt_path = fs::path(root) / "gt" / cause_name(c) / split / (id + ".png");
    if (!fs::exists(gt_path)) throw IoError("load_sample: missing cause file " + gt_path.string());
    MatX bin = binarize_gt_png(png::read_gray8(gt_path.string()));
    if (bin.rows() != s.image.height() || bin.cols() != s.image.width())
      throw IoError("load_sample: GT dims differ from image for " + gt_path.string());
    if (bin.sum() > 0) any_edge = true;
    if (generic.size() == 0)
      generic = bin;
    else
      generic = generic.cwiseMax(bin);
    const Task t = static_cast<Task>(static_cast<int>(c) + 1);
    s.gt.emplace(t, GroundTruthEdgeMap<Real>::from(std::move(bin)));
  }
  const fs::path gen_path = fs::path(root) / "gt" / "generic" / split / (id + ".png");
  if (fs::exists(gen_path)) generic = binarize_gt_png(png::read_gray8(gen_path.string()));
  if (!any_edge && stats) ++stats->degenerate_gt_warnings;
  s.gt.emplace(Task::Edge, GroundTruthEdgeMap<Real>::from(std::move(generic)));
  return s;
}

inline std::vector<std::string> list_ids(const std::string& root, const std::string& split) {
  const fs::path dir = fs::path(root) / "images" / split;
  if (!fs::exists(dir)) throw IoError("list_ids: missing directory " + dir.string());
  std::vector<std::string> ids;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".png") ids.push_back(e.path().stem().string());
  std::sort(ids.begin(), ids.end());
  return ids;
}

struct Dataset {
  std::vector<Sample> samples;
  LoadStats stats;
};

inline Dataset load_dataset(const std::string& root, const std::string& split) {
  Dataset d;
  for (const auto& id : list_ids(root, split)) d.samples.push_back(load_sample(root, split, id, &d.stats));
  return d;
}

// ---------------------------------------------------------------------------
// Geometric transforms. Images resample bilinearly, ground truth uses
// nearest-neighbor so maps stay strictly binary.
// ---------------------------------------------------------------------------

inline MatX resize_nn(const MatX& src, int oh, int ow) {
  MatX out(oh, ow);
  const double sy = static_cast<double>(src.rows()) / oh;
  const double sx = static_cast<double>(src.cols()) / ow;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const int yy = std::min<int>(static_cast<int>((y + 0.5) * sy), static_cast<int>(src.rows()) - 1);
      const int xx = std::min<int>(static_cast<int>((x + 0.5) * sx), static_cast<int>(src.cols()) - 1);
      out(y, x) = src(yy, xx);
    }
  return out;
}

inline MatX resize_bilinear(const MatX& src, int oh, int ow) {
  MatX out(oh, ow);
  const double sy = static_cast<double>(src.rows()) / oh;
  const double sx = static_cast<double>(src.cols()) / ow;
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.rows() - 1));
      double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.cols() - 1));
      const int y0 = static_cast<int>(std::floor(fy));
      const int x0 = static_cast<int>(std::floor(fx));
      const int y1 = std::min<int>(y0 + 1, static_cast<int>(src.rows()) - 1);
      const int x1 = std::min<int>(x0 + 1, static_cast<int>(src.cols()) - 1);
      const double ty = fy - y0, tx = fx - x0;
      out(y, x) = (1 - ty) * ((1 - tx) * src(y0, x0) + tx * src(y0, x1)) +
                  ty * ((1 - tx) * src(y1, x0) + tx * src(y1, x1));
    }
  return out;
}

inline MatX hflip(const MatX& m) { return m.rowwise().reverse(); }

/// Rotation about the image center; multiples of 90 degrees are exact index
/// permutations, other angles resample (bilinear or NN) with zero padding.
inline MatX rotate(const MatX& m, double deg, bool nearest) {
  const int h = static_cast<int>(m.rows());
  const int w = static_cast<int>(m.cols());
  const int q = static_cast<int>(std::lround(deg / 90.0));
  if (std::abs(deg - q * 90.0) < 1e-12) {
    switch (((q % 4) + 4) % 4) {
      case 0: return m;
      case 1: return m.transpose().colwise().reverse();  // 90 ccw -> (y,x) <- (x, w-1-y)? fixed below
      case 2: return m.reverse();
      case 3: return m.transpose().rowwise().reverse();
    }
  }
  const double a = deg * M_PI / 180.0;
  const double cy = (h - 1) / 2.0, cx = (w - 1) / 2.0;
  MatX out = MatX::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double dx = x - cx, dy = y - cy;
      const double sx = std::cos(a) * dx + std::sin(a) * dy + cx;
      const double sy = -std::sin(a) * dx + std::cos(a) * dy + cy;
      if (nearest) {
        const int xs = static_cast<int>(std::lround(sx));
        const int ys = static_cast<int>(std::lround(sy));
        if (xs >= 0 && xs < w && ys >= 0 && ys < h) out(y, x) = m(ys, xs);
      } else {
        const int x0 = static_cast<int>(std::floor(sx));
        const int y0 = static_cast<int>(std::floor(sy));
        const double tx = sx - x0, ty = sy - y0;
        double acc = 0;
        for (int oy = 0; oy <= 1; ++oy)
          for (int ox = 0; ox <= 1; ++ox) {
            const int yy = y0 + oy, xx = x0 + ox;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            acc += (oy ? ty : 1 - ty) * (ox ? tx : 1 - tx) * m(yy, xx);
          }
        out(y, x) = acc;
      }
    }
  return out;
}

struct AugmentConfig {
  bool horizontal_flip = true;
  std::vector<double> scales = {0.5, 1.0, 1.5};
  std::vector<double> rotations_deg = {0, 90, 180, 270};
  int crop_height = 64;
  int crop_width = 64;

  void validate() const {
    if (scales.empty() || rotations_deg.empty())
      throw ConfigError("augment: scales and rotations must be non-empty");
    for (double s : scales)
      if (s <= 0) throw ConfigError("augment: scales must be positive");
    if (crop_height < 1 || crop_width < 1) throw ConfigError("augment: crop must be positive");
  }
};

/// Applies one identical geometric transform to the image and all five GT
/// maps. Draws (flip, scale, rotation, crop offsets) from rng; the identity
/// draw returns the sample bit-unchanged.
inline Sample augment(const Sample& sample, const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  const bool flip = cfg.horizontal_flip && rng.uniform() < 0.5;
  const double scl = cfg.scales[static_cast<size_t>(rng.below(cfg.scales.size()))];
  const double deg = cfg.rotations_deg[static_cast<size_t>(rng.below(cfg.rotations_deg.size()))];

  Sample out;
  out.id = sample.id;
  auto tf_img = [&](const MatX& m) {
    MatX r = flip ? hflip(m) : m;
    if (scl != 1.0)
      r = resize_bilinear(r, static_cast<int>(std::lround(r.rows() * scl)),
                          static_cast<int>(std::lround(r.cols() * scl)));
    if (deg != 0.0) r = rotate(r, deg, false);
    return r;
  };
  auto tf_gt = [&](const MatX& m) {
    MatX r = flip ? hflip(m) : m;
    if (scl != 1.0)
      r = resize_nn(r, static_cast<int>(std::lround(r.rows() * scl)),
                    static_cast<int>(std::lround(r.cols() * scl)));
    if (deg != 0.0) r = rotate(r, deg, true);
    return r;
  };
  for (int c = 0; c < 3; ++c) out.image.ch[static_cast<size_t>(c)] = tf_img(sample.image.ch[static_cast<size_t>(c)]);
  for (const auto& [t, g] : sample.gt)
    out.gt.emplace(t, GroundTruthEdgeMap<Real>::from(tf_gt(g.data)));

  const int h = out.image.height(), w = out.image.width();
  if (cfg.crop_height > h || cfg.crop_width > w)
    throw ConfigError("augment: crop larger than (scaled) image");
  const int oy = static_cast<int>(rng.below(static_cast<std::uint64_t>(h - cfg.crop_height + 1)));
  const int ox = static_cast<int>(rng.below(static_cast<std::uint64_t>(w - cfg.crop_width + 1)));
  if (oy != 0 || ox != 0 || h != cfg.crop_height || w != cfg.crop_width) {
    for (auto& c : out.image.ch) c = c.block(oy, ox, cfg.crop_height, cfg.crop_width).eval();
    for (auto& [t, g] : out.gt)
      g = GroundTruthEdgeMap<Real>::from(g.data.block(oy, ox, cfg.crop_height, cfg.crop_width).eval());
  }
  return out;
}

// ---------------------------------------------------------------------------
// Batching: deterministic shuffled epochs; the final partial batch of an
// epoch is included. stream_index walks a virtual concatenation of per-epoch
// permutations so training can resume without generator state.
// ---------------------------------------------------------------------------

inline std::vector<size_t> epoch_permutation(size_t n, std::uint64_t seed, std::uint64_t epoch) {
  std::vector<size_t> idx(n);
  for (size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(sub_seed(seed, 0xe70c0000ull + epoch));
  for (size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[static_cast<size_t>(rng.below(i))]);
  return idx;
}

inline size_t stream_index(size_t n, std::uint64_t seed, std::uint64_t position) {
  const std::uint64_t epoch = position / n;
  return epoch_permutation(n, seed, epoch)[static_cast<size_t>(position % n)];
}

/// All batches of one epoch, partial tail included.
inline std::vector<std::vector<size_t>> batches(size_t n, size_t batch_size, std::uint64_t seed,
                                                std::uint64_t epoch = 0) {
  if (batch_size < 1) throw ConfigError("batches: batch_size must be >= 1");
  if (n == 0) throw ConfigError("batches: empty dataset");
  const std::vector<size_t> perm = epoch_permutation(n, seed, epoch);
  std::vector<std::vector<size_t>> out;
  for (size_t at = 0; at < n; at += batch_size) {
    std::vector<size_t> b;
    for (size_t i = at; i < std::min(n, at + batch_size); ++i) b.push_back(perm[i]);
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace ect

#endif  // ECT_DATA_PIPELINE_HPP
