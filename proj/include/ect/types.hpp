#ifndef ECT_TYPES_HPP
#define ECT_TYPES_HPP

#include <array>
#include <string>
#include <vector>

#include "ect/common.hpp"

namespace ect {

/// Spatial grid stored row-major as a (height*width) x channels matrix;
/// row index r = y * width + x. Used both for token sets (channels = embed
/// dim) and for multi-channel feature maps.
template <class Scalar>
struct Grid {
  Mat<Scalar> m;
  int height = 0;
  int width = 0;

  Grid() = default;
  Grid(int h, int w, int channels) : m(Mat<Scalar>::Zero(h * w, channels)), height(h), width(w) {}
  Grid(Mat<Scalar> data, int h, int w) : m(std::move(data)), height(h), width(w) {
    if (m.rows() != static_cast<Eigen::Index>(h) * w)
      throw ConfigError("Grid: data rows do not match height*width");
  }

  int channels() const { return static_cast<int>(m.cols()); }
  Eigen::Index tokens() const { return m.rows(); }
};

/// H x W single-channel image as a plain Eigen matrix, m(y, x).
template <class Scalar>
Mat<Scalar> grid_to_image(const Mat<Scalar>& col, int h, int w) {
  if (col.rows() != static_cast<Eigen::Index>(h) * w || col.cols() != 1)
    throw ConfigError("grid_to_image: expected (h*w) x 1 data");
  Mat<Scalar> out(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) out(y, x) = col(static_cast<Eigen::Index>(y) * w + x, 0);
  return out;
}

template <class Scalar>
Mat<Scalar> image_to_grid(const Mat<Scalar>& img) {
  Mat<Scalar> out(img.rows() * img.cols(), 1);
  for (Eigen::Index y = 0; y < img.rows(); ++y)
    for (Eigen::Index x = 0; x < img.cols(); ++x) out(y * img.cols() + x, 0) = img(y, x);
  return out;
}

/// RGB image, channels in [0,1], each H x W.
template <class Scalar>
struct Image {
  std::array<Mat<Scalar>, 3> ch;

  int height() const { return static_cast<int>(ch[0].rows()); }
  int width() const { return static_cast<int>(ch[0].cols()); }

  void validate() const {
    for (const auto& c : ch) {
      if (c.rows() != ch[0].rows() || c.cols() != ch[0].cols())
        throw ConfigError("Image: channel dims differ");
      if (!c.allFinite()) throw ConfigError("Image: non-finite values");
      if (c.minCoeff() < Scalar(0) || c.maxCoeff() > Scalar(1))
        throw ConfigError("Image: values outside [0,1]");
    }
  }
};

enum class Cause { Reflectance = 0, Illumination = 1, Normal = 2, Depth = 3 };

inline const char* cause_name(Cause c) {
  switch (c) {
    case Cause::Reflectance: return "reflectance";
    case Cause::Illumination: return "illumination";
    case Cause::Normal: return "normal";
    case Cause::Depth: return "depth";
  }
  return "?";
}

inline const char* cause_letter(Cause c) {
  switch (c) {
    case Cause::Reflectance: return "r";
    case Cause::Illumination: return "i";
    case Cause::Normal: return "n";
    case Cause::Depth: return "d";
  }
  return "?";
}

constexpr std::array<Cause, 4> kCauses = {Cause::Reflectance, Cause::Illumination, Cause::Normal,
                                          Cause::Depth};

/// One probability map per cause, all H x W in [0,1].
template <class Scalar>
struct FineGrainedPrediction {
  std::array<Mat<Scalar>, 4> maps;  // indexed by Cause

  Mat<Scalar>& operator[](Cause c) { return maps[static_cast<size_t>(c)]; }
  const Mat<Scalar>& operator[](Cause c) const { return maps[static_cast<size_t>(c)]; }
};

/// Cross-attention weights per decoder stage and cause, on the decoder token
/// grid. maps[stage][cause] is grid_h x grid_w.
template <class Scalar>
struct AttentionMapBundle {
  std::vector<std::array<Mat<Scalar>, 4>> stages;
  int grid_height = 0;
  int grid_width = 0;
};

template <class Scalar>
void require_same_shape(const Mat<Scalar>& a, const Mat<Scalar>& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ConfigError(std::string(what) + ": shape mismatch");
}

}  // namespace ect

#endif  // ECT_TYPES_HPP
