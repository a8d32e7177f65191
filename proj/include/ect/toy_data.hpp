#ifndef ECT_TOY_DATA_HPP
#define ECT_TOY_DATA_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "ect/derivation.hpp"
#include "ect/metrics.hpp"
#include "ect/png_io.hpp"
#include "ect/types.hpp"

namespace ect {

// ---------------------------------------------------------------------------
// Procedural 64x64 scenes with analytic fine-grained ground truth:
//   - a vertical albedo split        -> reflectance edge (full-height line)
//   - a shadow disk on the left side -> illumination edge (ring)
//   - a two-plane "roof" top right   -> normal edge (crease + outline)
//   - a floating box bottom right    -> depth edge (outline)
// The roof sits nearer than the background, so its outline carries both a
// depth and a normal discontinuity; edges may hold several cause labels.
// ---------------------------------------------------------------------------

struct ToyScene {
  std::string id;
  Image<Real> image;
  std::array<MatX, 4> gt;  // (r, i, n, d)
  MatX gt_generic;
  MatX depth_m;
  NormalMap<Real> normals;
  MatX shadow_mask;
  Eigen::MatrixXi instances;
  std::vector<PointPair> pairs;
};

namespace toy_detail {

/// Inner 4-neighbor contour of a region mask (pixels of the region adjacent
/// to a non-region pixel).
inline MatX inner_contour(const Eigen::MatrixXi& region) {
  const int h = static_cast<int>(region.rows());
  const int w = static_cast<int>(region.cols());
  MatX out = MatX::Zero(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      if (!region(y, x)) continue;
      const bool edge = (y == 0 || !region(y - 1, x)) || (y + 1 == h || !region(y + 1, x)) ||
                        (x == 0 || !region(y, x - 1)) || (x + 1 == w || !region(y, x + 1));
      // Outer image border does not count as an edge for interior regions.
      const bool border_only = (y == 0 || y + 1 == h || x == 0 || x + 1 == w) &&
                               !((y > 0 && !region(y - 1, x)) || (y + 1 < h && !region(y + 1, x)) ||
                                 (x > 0 && !region(y, x - 1)) || (x + 1 < w && !region(y, x + 1)));
      if (edge && !border_only) out(y, x) = 1;
    }
  return out;
}

}  // namespace toy_detail

inline ToyScene make_toy_scene(int index, std::uint64_t seed, int size = 64) {
  Rng rng(sub_seed(seed, 0x70790000ull + static_cast<std::uint64_t>(index)));
  const int n = size;
  ToyScene s;
  {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", index);
    s.id = buf;
  }

  // Layout parameters (margins keep features apart by > 3 px).
  const int ar = n / 2 - 6 + static_cast<int>(rng.below(13));         // albedo split column
  const int disk_cx = 8 + static_cast<int>(rng.below(static_cast<std::uint64_t>(std::max(2, ar - 8 - 6 - 2))));
  const int disk_cy = n / 2 + static_cast<int>(rng.below(n / 2 - 12)) + 2;
  const double disk_r = 5.0 + rng.uniform() * 2.5;
  const int rx0 = ar + 4 + static_cast<int>(rng.below(4));
  const int rx1 = n - 6 - static_cast<int>(rng.below(3));
  const int ry0 = 4 + static_cast<int>(rng.below(3));
  const int ry1 = ry0 + 18 + static_cast<int>(rng.below(5));
  const int yc = (ry0 + ry1) / 2 + static_cast<int>(rng.below(5)) - 2;  // crease row
  const int bx0 = ar + 4 + static_cast<int>(rng.below(4));
  const int bx1 = bx0 + 14 + static_cast<int>(rng.below(6));
  const int by0 = ry1 + 6 + static_cast<int>(rng.below(4));
  const int by1 = std::min(n - 4, by0 + 14 + static_cast<int>(rng.below(6)));

  auto rand_color = [&](double lo, double hi) {
    std::array<double, 3> c;
    for (auto& v : c) v = rng.uniform(lo, hi);
    return c;
  };
  auto far_color = [&](const std::array<double, 3>& other) {
    for (int tries = 0; tries < 64; ++tries) {
      auto c = rand_color(0.25, 0.9);
      double d = 0;
      for (int k = 0; k < 3; ++k) d = std::max(d, std::abs(c[static_cast<size_t>(k)] - other[static_cast<size_t>(k)]));
      if (d > 0.3) return c;
    }
    return rand_color(0.25, 0.9);
  };
  const auto albedo_left = rand_color(0.3, 0.9);
  const auto albedo_right = far_color(albedo_left);
  const auto albedo_roof = far_color(albedo_right);
  const auto albedo_box = far_color(albedo_right);

  const double tilt = 22.0 * M_PI / 180.0;
  const double light[3] = {0.2506, -0.3509, 0.9023};

  s.instances = Eigen::MatrixXi::Zero(n, n);
  s.depth_m = MatX::Constant(n, n, 2.2);
  for (auto& c : s.normals.ch) c = MatX::Zero(n, n);
  s.normals.ch[2].setConstant(1.0);
  s.shadow_mask = MatX::Zero(n, n);
  for (auto& c : s.image.ch) c = MatX::Zero(n, n);

  Eigen::MatrixXi roof = Eigen::MatrixXi::Zero(n, n);
  Eigen::MatrixXi box = Eigen::MatrixXi::Zero(n, n);
  Eigen::MatrixXi roof_upper = Eigen::MatrixXi::Zero(n, n);
  Eigen::MatrixXi roof_lower = Eigen::MatrixXi::Zero(n, n);

  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const bool in_roof = x >= rx0 && x <= rx1 && y >= ry0 && y <= ry1;
      const bool in_box = x >= bx0 && x <= bx1 && y >= by0 && y <= by1;
      const double dd = std::sqrt(static_cast<double>((x - disk_cx) * (x - disk_cx) +
                                                      (y - disk_cy) * (y - disk_cy)));
      const bool in_disk = dd <= disk_r;

      std::array<double, 3> albedo = x < ar ? albedo_left : albedo_right;
      double nx = 0, ny = 0, nz = 1;
      double depth = 2.2;
      double shade_mul = 1.0;
      int inst = 0;

      if (in_roof) {
        albedo = albedo_roof;
        const bool upper = y <= yc;
        ny = upper ? std::sin(tilt) : -std::sin(tilt);
        nz = std::cos(tilt);
        depth = 1.6 + 0.01 * std::abs(y - yc);
        inst = upper ? 1 : 2;
        (upper ? roof_upper : roof_lower)(y, x) = 1;
        roof(y, x) = 1;
      } else if (in_box) {
        albedo = albedo_box;
        depth = 1.2;
        inst = 3;
        box(y, x) = 1;
      } else if (in_disk) {
        s.shadow_mask(y, x) = 1;
        shade_mul = 0.45;
      }

      s.instances(y, x) = inst;
      s.depth_m(y, x) = depth;
      s.normals.ch[0](y, x) = nx;
      s.normals.ch[1](y, x) = ny;
      s.normals.ch[2](y, x) = nz;
      const double lambert = std::max(0.2, nx * light[0] + ny * light[1] + nz * light[2]);
      for (int c = 0; c < 3; ++c)
        s.image.ch[static_cast<size_t>(c)](y, x) =
            std::clamp(albedo[static_cast<size_t>(c)] * lambert * shade_mul, 0.0, 1.0);
    }

  // Analytic ground truth.
  MatX re = MatX::Zero(n, n);
  for (int y = 0; y < n; ++y) re(y, ar) = 1;  // first column of the right albedo region

  MatX ie = MatX::Zero(n, n);
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x)
      if (s.shadow_mask(y, x) != 0) {
        const bool rim = (y == 0 || s.shadow_mask(y - 1, x) == 0) ||
                         (y + 1 == n || s.shadow_mask(y + 1, x) == 0) ||
                         (x == 0 || s.shadow_mask(y, x - 1) == 0) ||
                         (x + 1 == n || s.shadow_mask(y, x + 1) == 0);
        if (rim) ie(y, x) = 1;
      }

  MatX roof_outline = toy_detail::inner_contour(roof);
  MatX ne = roof_outline;
  for (int x = rx0; x <= rx1; ++x) ne(yc, x) = 1;  // crease
  MatX de = toy_detail::inner_contour(box).cwiseMax(roof_outline);

  s.gt = {re, ie, ne, de};
  s.gt_generic = re.cwiseMax(ie).cwiseMax(ne).cwiseMax(de);

  // Reflectance point pairs over background pixels (instance 0).
  auto bg_point = [&](int x_lo, int x_hi) {
    for (int tries = 0; tries < 256; ++tries) {
      const int x = x_lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(x_hi - x_lo)));
      const int y = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 2)));
      if (s.instances(y, x) == 0) return std::pair<int, int>{x, y};
    }
    return std::pair<int, int>{x_lo, 1};
  };
  for (int k = 0; k < 24; ++k) {
    const bool cross = k % 2 == 0;
    auto [x1, y1] = bg_point(1, ar - 1);
    auto [x2, y2] = cross ? bg_point(ar + 1, n - 1) : bg_point(1, ar - 1);
    PointPair pp;
    pp.image_id = s.id;
    pp.x1 = x1;
    pp.y1 = y1;
    pp.x2 = x2;
    pp.y2 = y2;
    pp.equal_reflectance = !cross;
    s.pairs.push_back(pp);
  }
  return s;
}

/// Writes the dataset in the standard layout plus auxiliary maps and point
/// pairs, all under `root` with split "train".
inline void write_toy_dataset(const std::string& root, int count, std::uint64_t seed,
                              int size = 64) {
  namespace fs = std::filesystem;
  const std::string split = "train";
  for (const char* d : {"images", "gt/reflectance", "gt/illumination", "gt/normal", "gt/depth",
                        "gt/generic", "aux/depth", "aux/normal", "aux/shadow", "aux/instance"})
    fs::create_directories(fs::path(root) / d / split);
  fs::create_directories(fs::path(root) / "pairs");

  std::ofstream pairs_out((fs::path(root) / "pairs" / (split + ".jsonl")).string());
  if (!pairs_out) throw IoError("write_toy_dataset: cannot write pairs file");

  for (int i = 0; i < count; ++i) {
    ToyScene s = make_toy_scene(i, seed, size);
    const std::string name = s.id + ".png";
    auto p = [&](const std::string& sub) {
      return (fs::path(root) / sub / split / name).string();
    };
    png::write_rgb8(p("images"), s.image);
    png::write_gray8_raw(p("gt/reflectance"), s.gt[0] * 255.0);
    png::write_gray8_raw(p("gt/illumination"), s.gt[1] * 255.0);
    png::write_gray8_raw(p("gt/normal"), s.gt[2] * 255.0);
    png::write_gray8_raw(p("gt/depth"), s.gt[3] * 255.0);
    png::write_gray8_raw(p("gt/generic"), s.gt_generic * 255.0);
    png::write_gray16(p("aux/depth"), s.depth_m * 1000.0);  // millimeters
    png::write_gray16(p("aux/instance"), s.instances.cast<Real>());
    png::write_gray8_raw(p("aux/shadow"), s.shadow_mask * 255.0);
    Image<Real> nimg;
    for (int c = 0; c < 3; ++c)
      nimg.ch[static_cast<size_t>(c)] =
          ((s.normals.ch[static_cast<size_t>(c)].array() + 1.0) / 2.0).matrix();
    png::write_rgb8(p("aux/normal"), nimg);
    for (const auto& pp : s.pairs)
      pairs_out << "{\"image\":\"" << pp.image_id << "\",\"x1\":" << pp.x1 << ",\"y1\":" << pp.y1
                << ",\"x2\":" << pp.x2 << ",\"y2\":" << pp.y2
                << ",\"equal\":" << (pp.equal_reflectance ? "true" : "false") << "}\n";
  }
  if (!pairs_out) throw IoError("write_toy_dataset: pairs write failed");
}

}  // namespace ect

#endif  // ECT_TOY_DATA_HPP
