#ifndef ECT_OPS_HPP
#define ECT_OPS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <memory>
#include <tuple>
#include <utility>
#include <vector>

#include "ect/tape.hpp"

namespace ect::ad {

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra primitives
// ---------------------------------------------------------------------------

template <class S>
Var<S> add(Var<S> a, Var<S> b) {
  return a.tape->apply(a.value() + b.value(), {a, b}, [a, b](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    t.accumulate(a.id, g);
    t.accumulate(b.id, g);
  });
}

template <class S>
Var<S> sub(Var<S> a, Var<S> b) {
  return a.tape->apply(a.value() - b.value(), {a, b}, [a, b](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    t.accumulate(a.id, g);
    if (t.node(b.id).requires_grad) t.grad_buffer(b.id) -= g;
  });
}

template <class S>
Var<S> cwise_mul(Var<S> a, Var<S> b) {
  return a.tape->apply(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    if (t.node(a.id).requires_grad) t.grad_buffer(a.id) += g.cwiseProduct(t.node(b.id).value);
    if (t.node(b.id).requires_grad) t.grad_buffer(b.id) += g.cwiseProduct(t.node(a.id).value);
  });
}

template <class S>
Var<S> scale(Var<S> a, S c) {
  return a.tape->apply(a.value() * c, {a}, [a, c](Tape<S>& t, int self) {
    if (t.node(a.id).requires_grad) t.grad_buffer(a.id) += t.node(self).grad * c;
  });
}

template <class S>
Var<S> add_const(Var<S> a, S c) {
  return a.tape->apply(a.value().array() + c, {a}, [a](Tape<S>& t, int self) {
    t.accumulate(a.id, t.node(self).grad);
  });
}

/// c - a, elementwise.
template <class S>
Var<S> rsub_const(S c, Var<S> a) {
  return a.tape->apply((c - a.value().array()).matrix(), {a}, [a](Tape<S>& t, int self) {
    if (t.node(a.id).requires_grad) t.grad_buffer(a.id) -= t.node(self).grad;
  });
}

template <class S>
Var<S> matmul(Var<S> a, Var<S> b) {
  return a.tape->apply(a.value() * b.value(), {a, b}, [a, b](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    if (t.node(a.id).requires_grad)
      t.grad_buffer(a.id).noalias() += g * t.node(b.id).value.transpose();
    if (t.node(b.id).requires_grad)
      t.grad_buffer(b.id).noalias() += t.node(a.id).value.transpose() * g;
  });
}

/// a * b^T
template <class S>
Var<S> matmul_nt(Var<S> a, Var<S> b) {
  return a.tape->apply(a.value() * b.value().transpose(), {a, b}, [a, b](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    if (t.node(a.id).requires_grad) t.grad_buffer(a.id).noalias() += g * t.node(b.id).value;
    if (t.node(b.id).requires_grad)
      t.grad_buffer(b.id).noalias() += g.transpose() * t.node(a.id).value;
  });
}

template <class S>
Var<S> sum(Var<S> a) {
  Mat<S> v(1, 1);
  v(0, 0) = a.value().sum();
  return a.tape->apply(std::move(v), {a}, [a](Tape<S>& t, int self) {
    if (t.node(a.id).requires_grad)
      t.grad_buffer(a.id).array() += t.node(self).grad(0, 0);
  });
}

template <class S>
Var<S> mean(Var<S> a) {
  const S inv = S(1) / static_cast<S>(a.value().size());
  return scale(sum(a), inv);
}

/// Broadcast-add a 1 x C row vector to every row (bias add).
template <class S>
Var<S> add_rowvec(Var<S> a, Var<S> b) {
  if (b.value().rows() != 1 || b.value().cols() != a.value().cols())
    throw ConfigError("add_rowvec: bias must be 1 x cols(a)");
  Mat<S> v = a.value();
  v.rowwise() += b.value().row(0);
  return a.tape->apply(std::move(v), {a, b}, [a, b](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    t.accumulate(a.id, g);
    if (t.node(b.id).requires_grad) t.grad_buffer(b.id) += g.colwise().sum();
  });
}

// ---------------------------------------------------------------------------
// Nonlinearities
// ---------------------------------------------------------------------------

template <class S>
Var<S> sigmoid(Var<S> a) {
  Mat<S> v = (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
  return a.tape->apply(std::move(v), {a}, [a](Tape<S>& t, int self) {
    if (!t.node(a.id).requires_grad) return;
    const auto& y = t.node(self).value.array();
    t.grad_buffer(a.id).array() += t.node(self).grad.array() * y * (S(1) - y);
  });
}

template <class S>
Var<S> relu(Var<S> a) {
  return a.tape->apply(a.value().cwiseMax(S(0)), {a}, [a](Tape<S>& t, int self) {
    if (!t.node(a.id).requires_grad) return;
    const auto& x = t.node(a.id).value.array();
    t.grad_buffer(a.id).array() +=
        t.node(self).grad.array() * (x > S(0)).template cast<S>();
  });
}

template <class S>
Var<S> gelu(Var<S> a) {
  const S inv_sqrt2 = S(1) / std::sqrt(S(2));
  Mat<S> v = a.value().unaryExpr(
      [&](S x) { return S(0.5) * x * (S(1) + std::erf(x * inv_sqrt2)); });
  return a.tape->apply(std::move(v), {a}, [a, inv_sqrt2](Tape<S>& t, int self) {
    if (!t.node(a.id).requires_grad) return;
    const S c = std::sqrt(S(2) / S(M_PI)) * S(0.5);
    const auto& x = t.node(a.id).value;
    Mat<S> d = x.unaryExpr([&](S xx) {
      return S(0.5) * (S(1) + std::erf(xx * inv_sqrt2)) + c * xx * std::exp(S(-0.5) * xx * xx);
    });
    t.grad_buffer(a.id) += t.node(self).grad.cwiseProduct(d);
  });
}

template <class S>
Var<S> cwise_log(Var<S> a) {
  return a.tape->apply(a.value().array().log().matrix(), {a}, [a](Tape<S>& t, int self) {
    if (!t.node(a.id).requires_grad) return;
    t.grad_buffer(a.id).array() += t.node(self).grad.array() / t.node(a.id).value.array();
  });
}

template <class S>
Var<S> cwise_exp(Var<S> a) {
  return a.tape->apply(a.value().array().exp().matrix(), {a}, [a](Tape<S>& t, int self) {
    if (!t.node(a.id).requires_grad) return;
    t.grad_buffer(a.id).array() += t.node(self).grad.array() * t.node(self).value.array();
  });
}

/// x^p for x > 0 (or integral p).
template <class S>
Var<S> cwise_pow(Var<S> a, S p) {
  return a.tape->apply(a.value().array().pow(p).matrix(), {a}, [a, p](Tape<S>& t, int self) {
    if (!t.node(a.id).requires_grad) return;
    t.grad_buffer(a.id).array() +=
        t.node(self).grad.array() * p * t.node(a.id).value.array().pow(p - S(1));
  });
}

/// Elementwise sqrt; the subgradient at exactly 0 is taken as 0.
template <class S>
Var<S> cwise_sqrt(Var<S> a) {
  return a.tape->apply(a.value().array().sqrt().matrix(), {a}, [a](Tape<S>& t, int self) {
    if (!t.node(a.id).requires_grad) return;
    const auto& y = t.node(self).value.array();
    t.grad_buffer(a.id).array() +=
        (y > S(0)).template cast<S>() * t.node(self).grad.array() /
        (S(2) * y + (y == S(0)).template cast<S>());
  });
}

/// Row-major flatten of an r x c matrix into 1 x (r*c).
template <class S>
Var<S> flatten_rows(Var<S> a) {
  const Mat<S>& x = a.value();
  Mat<S> v(1, x.rows() * x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) v(0, r * x.cols() + c) = x(r, c);
  return a.tape->apply(std::move(v), {a}, [a](Tape<S>& t, int self) {
    if (!t.node(a.id).requires_grad) return;
    const Mat<S>& g = t.node(self).grad;
    Mat<S>& ga = t.grad_buffer(a.id);
    for (Eigen::Index r = 0; r < ga.rows(); ++r)
      for (Eigen::Index c = 0; c < ga.cols(); ++c) ga(r, c) += g(0, r * ga.cols() + c);
  });
}

/// Clamp to [lo, hi]; gradient passes only strictly inside the interval.
template <class S>
Var<S> clamp(Var<S> a, S lo, S hi) {
  Mat<S> v = a.value().cwiseMax(lo).cwiseMin(hi);
  return a.tape->apply(std::move(v), {a}, [a, lo, hi](Tape<S>& t, int self) {
    if (!t.node(a.id).requires_grad) return;
    const auto& x = t.node(a.id).value.array();
    t.grad_buffer(a.id).array() +=
        t.node(self).grad.array() * ((x > lo) && (x < hi)).template cast<S>();
  });
}

// ---------------------------------------------------------------------------
// Softmax / layer norm
// ---------------------------------------------------------------------------

template <class S>
Var<S> softmax_rows(Var<S> a) {
  Mat<S> v = a.value();
  for (Eigen::Index r = 0; r < v.rows(); ++r) {
    const S m = v.row(r).maxCoeff();
    v.row(r) = (v.row(r).array() - m).exp();
    v.row(r) /= v.row(r).sum();
  }
  return a.tape->apply(std::move(v), {a}, [a](Tape<S>& t, int self) {
    if (!t.node(a.id).requires_grad) return;
    const Mat<S>& y = t.node(self).value;
    const Mat<S>& g = t.node(self).grad;
    Mat<S>& ga = t.grad_buffer(a.id);
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const S dot = g.row(r).dot(y.row(r));
      ga.row(r).array() += (g.row(r).array() - dot) * y.row(r).array();
    }
  });
}

/// Per-row layer normalization with affine parameters gamma, beta (1 x C).
template <class S>
Var<S> layernorm_rows(Var<S> x, Var<S> gamma, Var<S> beta, S eps = S(1e-6)) {
  const Mat<S>& xv = x.value();
  const Eigen::Index n = xv.cols();
  Mat<S> xhat(xv.rows(), n);
  Mat<S> inv_sd(xv.rows(), 1);
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    const S mu = xv.row(r).mean();
    const S var = (xv.row(r).array() - mu).square().sum() / static_cast<S>(n);
    const S is = S(1) / std::sqrt(var + eps);
    inv_sd(r, 0) = is;
    xhat.row(r) = (xv.row(r).array() - mu) * is;
  }
  Mat<S> v = (xhat.array().rowwise() * gamma.value().row(0).array()).matrix();
  v.rowwise() += beta.value().row(0);
  auto xh = std::make_shared<Mat<S>>(std::move(xhat));
  auto isd = std::make_shared<Mat<S>>(std::move(inv_sd));
  return x.tape->apply(std::move(v), {x, gamma, beta},
                       [x, gamma, beta, xh, isd](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    const Eigen::Index n = g.cols();
    if (t.node(gamma.id).requires_grad)
      t.grad_buffer(gamma.id) += (g.cwiseProduct(*xh)).colwise().sum();
    if (t.node(beta.id).requires_grad) t.grad_buffer(beta.id) += g.colwise().sum();
    if (!t.node(x.id).requires_grad) return;
    Mat<S>& gx = t.grad_buffer(x.id);
    const auto& gam = gamma.value().row(0).array();
    for (Eigen::Index r = 0; r < g.rows(); ++r) {
      // d/dx of (x - mu) * inv_sd with population variance
      Eigen::Array<S, 1, Eigen::Dynamic> dxhat = g.row(r).array() * gam;
      const S s1 = dxhat.sum();
      const S s2 = (dxhat * xh->row(r).array()).sum();
      gx.row(r).array() += (*isd)(r, 0) *
          (dxhat - s1 / static_cast<S>(n) - xh->row(r).array() * s2 / static_cast<S>(n));
    }
  });
}

// ---------------------------------------------------------------------------
// Slicing / concatenation
// ---------------------------------------------------------------------------

template <class S>
Var<S> cols(Var<S> a, Eigen::Index start, Eigen::Index n) {
  return a.tape->apply(a.value().middleCols(start, n), {a}, [a, start, n](Tape<S>& t, int self) {
    if (!t.node(a.id).requires_grad) return;
    t.grad_buffer(a.id).middleCols(start, n) += t.node(self).grad;
  });
}

template <class S>
Var<S> rows(Var<S> a, Eigen::Index start, Eigen::Index n) {
  return a.tape->apply(a.value().middleRows(start, n), {a}, [a, start, n](Tape<S>& t, int self) {
    if (!t.node(a.id).requires_grad) return;
    t.grad_buffer(a.id).middleRows(start, n) += t.node(self).grad;
  });
}

template <class S>
Var<S> hconcat(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ConfigError("hconcat: empty");
  Eigen::Index c = 0;
  for (const auto& p : parts) c += p.value().cols();
  Mat<S> v(parts[0].value().rows(), c);
  Eigen::Index at = 0;
  for (const auto& p : parts) {
    v.middleCols(at, p.value().cols()) = p.value();
    at += p.value().cols();
  }
  Tape<S>* tape = parts[0].tape;
  auto ids = std::make_shared<std::vector<Var<S>>>(parts);
  return tape->apply_list(std::move(v), parts, [ids](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    Eigen::Index at = 0;
    for (const auto& p : *ids) {
      const Eigen::Index n = p.value().cols();
      if (t.node(p.id).requires_grad) t.grad_buffer(p.id) += g.middleCols(at, n);
      at += n;
    }
  });
}

// ---------------------------------------------------------------------------
// Row gathers and sparse linear resampling (convolutions, pooling, interp)
// ---------------------------------------------------------------------------

using GatherPlan = std::shared_ptr<const std::vector<int>>;  // src row per out row; -1 = zero

template <class S>
Var<S> gather_rows(Var<S> a, GatherPlan plan) {
  const Mat<S>& x = a.value();
  Mat<S> v = Mat<S>::Zero(static_cast<Eigen::Index>(plan->size()), x.cols());
  for (size_t r = 0; r < plan->size(); ++r) {
    const int src = (*plan)[r];
    if (src >= 0) v.row(static_cast<Eigen::Index>(r)) = x.row(src);
  }
  return a.tape->apply(std::move(v), {a}, [a, plan](Tape<S>& t, int self) {
    if (!t.node(a.id).requires_grad) return;
    const Mat<S>& g = t.node(self).grad;
    Mat<S>& ga = t.grad_buffer(a.id);
    for (size_t r = 0; r < plan->size(); ++r) {
      const int src = (*plan)[r];
      if (src >= 0) ga.row(src) += g.row(static_cast<Eigen::Index>(r));
    }
  });
}

/// Sparse row-space linear map: out.row(r) = sum_k w_k * in.row(idx_k).
struct InterpPlan {
  int out_height = 0, out_width = 0;
  int in_height = 0, in_width = 0;
  std::vector<int> offsets;                     // out_rows + 1
  std::vector<std::pair<int, double>> taps;     // (src_row, weight)

  Eigen::Index out_rows() const { return static_cast<Eigen::Index>(offsets.size()) - 1; }
};

using InterpPlanPtr = std::shared_ptr<const InterpPlan>;

template <class S>
Var<S> apply_interp(Var<S> a, InterpPlanPtr plan) {
  const Mat<S>& x = a.value();
  if (x.rows() != static_cast<Eigen::Index>(plan->in_height) * plan->in_width)
    throw ConfigError("apply_interp: input rows do not match plan");
  Mat<S> v = Mat<S>::Zero(plan->out_rows(), x.cols());
  for (Eigen::Index r = 0; r < plan->out_rows(); ++r)
    for (int k = plan->offsets[static_cast<size_t>(r)]; k < plan->offsets[static_cast<size_t>(r) + 1]; ++k)
      v.row(r) += static_cast<S>(plan->taps[static_cast<size_t>(k)].second) *
                  x.row(plan->taps[static_cast<size_t>(k)].first);
  return a.tape->apply(std::move(v), {a}, [a, plan](Tape<S>& t, int self) {
    if (!t.node(a.id).requires_grad) return;
    const Mat<S>& g = t.node(self).grad;
    Mat<S>& ga = t.grad_buffer(a.id);
    for (Eigen::Index r = 0; r < plan->out_rows(); ++r)
      for (int k = plan->offsets[static_cast<size_t>(r)]; k < plan->offsets[static_cast<size_t>(r) + 1]; ++k)
        ga.row(plan->taps[static_cast<size_t>(k)].first) +=
            static_cast<S>(plan->taps[static_cast<size_t>(k)].second) * g.row(r);
  });
}

/// Plan application to plain values (no tape).
template <class S>
Mat<S> apply_interp_values(const Mat<S>& x, const InterpPlanPtr& plan) {
  Mat<S> v = Mat<S>::Zero(plan->out_rows(), x.cols());
  for (Eigen::Index r = 0; r < plan->out_rows(); ++r)
    for (int k = plan->offsets[static_cast<size_t>(r)]; k < plan->offsets[static_cast<size_t>(r) + 1]; ++k)
      v.row(r) += static_cast<S>(plan->taps[static_cast<size_t>(k)].second) *
                  x.row(plan->taps[static_cast<size_t>(k)].first);
  return v;
}

// --- plan builders -----------------------------------------------------

/// Gather plan for one 3x3 kernel offset with padding 1: output pixel (Y,X)
/// reads input pixel (Y*stride + dy - 1, X*stride + dx - 1).
inline GatherPlan conv3x3_offset_plan(int h, int w, int stride, int dy, int dx) {
  using Key = std::tuple<int, int, int, int, int>;
  static std::map<Key, GatherPlan> cache;
  const Key key{h, w, stride, dy, dx};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  const int oh = (h + 2 - 3) / stride + 1;
  const int ow = (w + 2 - 3) / stride + 1;
  auto plan = std::make_shared<std::vector<int>>();
  plan->reserve(static_cast<size_t>(oh) * ow);
  for (int Y = 0; Y < oh; ++Y)
    for (int X = 0; X < ow; ++X) {
      const int y = Y * stride + dy - 1;
      const int x = X * stride + dx - 1;
      plan->push_back((y >= 0 && y < h && x >= 0 && x < w) ? y * w + x : -1);
    }
  GatherPlan out = plan;
  cache.emplace(key, out);
  return out;
}

inline std::pair<int, int> conv3x3_out_dims(int h, int w, int stride) {
  return {(h + 2 - 3) / stride + 1, (w + 2 - 3) / stride + 1};
}

/// Non-overlapping k x k patch flattening: output row (Y*ow+X) gathers the
/// k*k pixels of its patch; used for linear patch projection.
inline std::vector<GatherPlan> patch_gather_plans(int h, int w, int k) {
  std::vector<GatherPlan> plans;
  const int oh = h / k, ow = w / k;
  for (int dy = 0; dy < k; ++dy)
    for (int dx = 0; dx < k; ++dx) {
      auto plan = std::make_shared<std::vector<int>>();
      plan->reserve(static_cast<size_t>(oh) * ow);
      for (int Y = 0; Y < oh; ++Y)
        for (int X = 0; X < ow; ++X) plan->push_back((Y * k + dy) * w + (X * k + dx));
      plans.push_back(std::move(plan));
    }
  return plans;
}

/// k x k average pooling (non-overlapping).
inline InterpPlanPtr avgpool_plan(int h, int w, int k) {
  using Key = std::tuple<int, int, int>;
  static std::map<Key, InterpPlanPtr> cache;
  const Key key{h, w, k};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  auto plan = std::make_shared<InterpPlan>();
  plan->in_height = h;
  plan->in_width = w;
  plan->out_height = h / k;
  plan->out_width = w / k;
  plan->offsets.push_back(0);
  const double wgt = 1.0 / (k * k);
  for (int Y = 0; Y < plan->out_height; ++Y)
    for (int X = 0; X < plan->out_width; ++X) {
      for (int dy = 0; dy < k; ++dy)
        for (int dx = 0; dx < k; ++dx)
          plan->taps.emplace_back((Y * k + dy) * w + (X * k + dx), wgt);
      plan->offsets.push_back(static_cast<int>(plan->taps.size()));
    }
  InterpPlanPtr out = plan;
  cache.emplace(key, out);
  return out;
}

/// Bilinear resize with half-pixel centers; also covers 2x upsampling.
inline InterpPlanPtr resize_plan(int h, int w, int oh, int ow) {
  using Key = std::tuple<int, int, int, int>;
  static std::map<Key, InterpPlanPtr> cache;
  const Key key{h, w, oh, ow};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  auto plan = std::make_shared<InterpPlan>();
  plan->in_height = h;
  plan->in_width = w;
  plan->out_height = oh;
  plan->out_width = ow;
  plan->offsets.push_back(0);
  const double sy = static_cast<double>(h) / oh;
  const double sx = static_cast<double>(w) / ow;
  for (int Y = 0; Y < oh; ++Y) {
    double fy = (Y + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, h - 1);
    const double ty = fy - y0;
    for (int X = 0; X < ow; ++X) {
      double fx = (X + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(w - 1));
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, w - 1);
      const double tx = fx - x0;
      plan->taps.emplace_back(y0 * w + x0, (1 - ty) * (1 - tx));
      if (x1 != x0) plan->taps.emplace_back(y0 * w + x1, (1 - ty) * tx);
      if (y1 != y0) plan->taps.emplace_back(y1 * w + x0, ty * (1 - tx));
      if (y1 != y0 && x1 != x0) plan->taps.emplace_back(y1 * w + x1, ty * tx);
      plan->offsets.push_back(static_cast<int>(plan->taps.size()));
    }
  }
  InterpPlanPtr out = plan;
  cache.emplace(key, out);
  return out;
}

// ---------------------------------------------------------------------------
// Pixelwise max over four maps with argmax gradient routing
// ---------------------------------------------------------------------------

/// Elementwise max of four same-shaped inputs. Gradient routes to the argmax;
/// ties break toward the earliest input (fixed cause order).
template <class S>
Var<S> max4(Var<S> a, Var<S> b, Var<S> c, Var<S> d) {
  const std::array<Var<S>, 4> in{a, b, c, d};
  for (int i = 1; i < 4; ++i) {
    const Mat<S>& x = in[static_cast<size_t>(i)].value();
    if (x.rows() != a.value().rows() || x.cols() != a.value().cols())
      throw ConfigError("max4: shape mismatch");
  }
  Mat<S> v = a.value();
  auto arg = std::make_shared<Eigen::Matrix<int8_t, Eigen::Dynamic, Eigen::Dynamic>>(
      Eigen::Matrix<int8_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(v.rows(), v.cols()));
  for (int i = 1; i < 4; ++i) {
    const Mat<S>& x = in[static_cast<size_t>(i)].value();
    for (Eigen::Index r = 0; r < v.rows(); ++r)
      for (Eigen::Index col = 0; col < v.cols(); ++col)
        if (x(r, col) > v(r, col)) {
          v(r, col) = x(r, col);
          (*arg)(r, col) = static_cast<int8_t>(i);
        }
  }
  return a.tape->apply(std::move(v), {a, b, c, d}, [in, arg](Tape<S>& t, int self) {
    const Mat<S>& g = t.node(self).grad;
    for (int i = 0; i < 4; ++i) {
      if (!t.node(in[static_cast<size_t>(i)].id).requires_grad) continue;
      Mat<S>& gi = t.grad_buffer(in[static_cast<size_t>(i)].id);
      for (Eigen::Index r = 0; r < g.rows(); ++r)
        for (Eigen::Index col = 0; col < g.cols(); ++col)
          if ((*arg)(r, col) == i) gi(r, col) += g(r, col);
    }
  });
}

// Operator sugar for readability in model code.
template <class S>
Var<S> operator+(Var<S> a, Var<S> b) { return add(a, b); }
template <class S>
Var<S> operator-(Var<S> a, Var<S> b) { return sub(a, b); }
template <class S>
Var<S> operator*(S c, Var<S> a) { return scale(a, c); }

}  // namespace ect::ad

#endif  // ECT_OPS_HPP
