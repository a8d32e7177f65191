#ifndef ECT_NN_HPP
#define ECT_NN_HPP

#include <string>
#include <vector>

#include "ect/ops.hpp"
#include "ect/params.hpp"
#include "ect/types.hpp"

namespace ect::nn {

using ad::Var;
using VarR = ad::Var<Real>;

/// Linear layer y = x W + b with parameters owned by the store under `prefix`.
inline VarR linear(Bound& p, const std::string& prefix, VarR x, Eigen::Index out_dim,
                   Init w_init = Init::Xavier) {
  VarR w = p(prefix + ".w", x.cols(), out_dim, w_init);
  VarR b = p(prefix + ".b", 1, out_dim, Init::Zero);
  return ad::add_rowvec(ad::matmul(x, w), b);
}

inline VarR layer_norm(Bound& p, const std::string& prefix, VarR x) {
  VarR g = p(prefix + ".g", 1, x.cols(), Init::One);
  VarR b = p(prefix + ".b", 1, x.cols(), Init::Zero);
  return ad::layernorm_rows(x, g, b);
}

/// Multi-head attention; queries from q_in, keys/values from kv_in.
/// If attn_avg is non-null it receives the head-averaged attention weights
/// (Tq x Tkv), detached from the graph.
inline VarR multihead_attention(Bound& p, const std::string& prefix, VarR q_in, VarR kv_in,
                                int heads, MatX* attn_avg = nullptr) {
  const Eigen::Index d = q_in.cols();
  if (d % heads != 0) throw ConfigError("attention: embed dim not divisible by heads");
  const Eigen::Index dh = d / heads;
  VarR q = linear(p, prefix + ".q", q_in, d);
  VarR k = linear(p, prefix + ".k", kv_in, d);
  VarR v = linear(p, prefix + ".v", kv_in, d);
  if (attn_avg) *attn_avg = MatX::Zero(q_in.rows(), kv_in.rows());
  std::vector<VarR> head_out;
  const Real inv_sqrt_dh = Real(1) / std::sqrt(static_cast<Real>(dh));
  for (int h = 0; h < heads; ++h) {
    VarR qh = ad::cols(q, h * dh, dh);
    VarR kh = ad::cols(k, h * dh, dh);
    VarR vh = ad::cols(v, h * dh, dh);
    VarR logits = ad::scale(ad::matmul_nt(qh, kh), inv_sqrt_dh);
    VarR attn = ad::softmax_rows(logits);
    if (attn_avg) *attn_avg += attn.value() / static_cast<Real>(heads);
    head_out.push_back(ad::matmul(attn, vh));
  }
  VarR cat = heads == 1 ? head_out[0] : ad::hconcat(head_out);
  return linear(p, prefix + ".o", cat, d, Init::Xavier);
}

inline VarR attn_branch(Bound& p, const std::string& prefix, VarR x, int heads) {
  VarR n1 = layer_norm(p, prefix + ".ln1", x);
  return multihead_attention(p, prefix + ".attn", n1, n1, heads);
}

/// Pre-norm transformer encoder layer: x + Attn(LN(x)), then x + MLP(LN(x)).
/// Residual-branch output projections zero-init make the layer an exact
/// identity, which the tests rely on.
inline VarR encoder_layer(Bound& p, const std::string& prefix, VarR x, int heads,
                          int mlp_ratio = 4) {
  VarR h = ad::add(x, attn_branch(p, prefix, x, heads));
  VarR n2 = layer_norm(p, prefix + ".ln2", h);
  VarR m = linear(p, prefix + ".mlp1", n2, h.cols() * mlp_ratio);
  m = ad::gelu(m);
  m = linear(p, prefix + ".mlp2", m, h.cols());
  return ad::add(h, m);
}

/// 3x3 convolution on a row-major (h*w) x Cin grid, padding 1.
/// Kernel is stored as a (9*Cin) x Cout matrix, one Cin-row block per offset.
inline VarR conv3x3(Bound& p, const std::string& prefix, VarR x, int h, int w, Eigen::Index cout,
                    int stride = 1, Init w_init = Init::Xavier) {
  const Eigen::Index cin = x.cols();
  VarR kernel = p(prefix + ".k", 9 * cin, cout, w_init);
  VarR bias = p(prefix + ".b", 1, cout, Init::Zero);
  VarR acc;
  for (int dy = 0; dy < 3; ++dy)
    for (int dx = 0; dx < 3; ++dx) {
      const int o = dy * 3 + dx;
      VarR g = ad::gather_rows(x, ad::conv3x3_offset_plan(h, w, stride, dy, dx));
      VarR term = ad::matmul(g, ad::rows(kernel, o * cin, cin));
      acc = o == 0 ? term : ad::add(acc, term);
    }
  return ad::add_rowvec(acc, bias);
}

/// Residual convolutional unit: x + conv(relu(conv(relu(x)))), 3x3, C -> C.
inline VarR rcu(Bound& p, const std::string& prefix, VarR x, int h, int w) {
  VarR b = conv3x3(p, prefix + ".c1", ad::relu(x), h, w, x.cols());
  b = conv3x3(p, prefix + ".c2", ad::relu(b), h, w, x.cols());
  return ad::add(x, b);
}

/// 2x upsampling unit: conv(bilinear2x(RCU(x))). The trailing convolution
/// makes the whole unit vanish under zero init (residual-free output path).
inline VarR up_block(Bound& p, const std::string& prefix, VarR x, int h, int w,
                     Init out_init = Init::Xavier) {
  VarR r = rcu(p, prefix + ".rcu", x, h, w);
  VarR u = ad::apply_interp(r, ad::resize_plan(h, w, 2 * h, 2 * w));
  return conv3x3(p, prefix + ".out", u, 2 * h, 2 * w, x.cols(), 1, out_init);
}

/// Fixed 2D sinusoidal position embedding, (h*w) x d. First half of the
/// channels encodes x, second half y, alternating sin/cos.
inline MatX sinusoidal_embedding_2d(int h, int w, int d) {
  if (d % 4 != 0) throw ConfigError("sinusoidal embedding: dim must be divisible by 4");
  MatX out(static_cast<Eigen::Index>(h) * w, d);
  const int half = d / 2;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const Eigen::Index r = static_cast<Eigen::Index>(y) * w + x;
      for (int i = 0; i < half; i += 2) {
        const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
        out(r, i) = std::sin(x * freq);
        out(r, i + 1) = std::cos(x * freq);
        out(r, half + i) = std::sin(y * freq);
        out(r, half + i + 1) = std::cos(y * freq);
      }
    }
  return out;
}

}  // namespace ect::nn

#endif  // ECT_NN_HPP
