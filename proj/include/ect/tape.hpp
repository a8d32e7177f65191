#ifndef ECT_TAPE_HPP
#define ECT_TAPE_HPP

#include <functional>
#include <utility>
#include <vector>

#include "ect/common.hpp"

namespace ect::ad {

using ect::Mat;

template <class Scalar>
class Tape;

/// Cheap handle into a Tape. Vars are only valid for the tape that made them.
template <class Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Mat<Scalar>& value() const;
  const Mat<Scalar>& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
};

/// Reverse-mode tape. Nodes hold dense values; each non-leaf node carries a
/// closure that scatters its output gradient into its parents.
template <class Scalar>
class Tape {
 public:
  struct Node {
    Mat<Scalar> value;
    Mat<Scalar> grad;
    std::function<void(Tape&, int)> back;
    bool requires_grad = false;
    bool grad_ready = false;
  };

  Var<Scalar> leaf(Mat<Scalar> v, bool requires_grad) {
    nodes_.push_back(Node{std::move(v), {}, {}, requires_grad, false});
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

  Var<Scalar> constant(Mat<Scalar> v) { return leaf(std::move(v), false); }
  Var<Scalar> param(Mat<Scalar> v) { return leaf(std::move(v), true); }

  /// Record an op. `parents` decide whether the result needs a gradient;
  /// `back` is only invoked for nodes on a differentiable path.
  template <class Fn>
  Var<Scalar> apply(Mat<Scalar> value, std::initializer_list<Var<Scalar>> parents, Fn&& back) {
    bool rg = false;
    for (const auto& p : parents) rg = rg || node(p.id).requires_grad;
    return record(std::move(value), rg, std::forward<Fn>(back));
  }

  template <class Fn>
  Var<Scalar> apply_list(Mat<Scalar> value, const std::vector<Var<Scalar>>& parents, Fn&& back) {
    bool rg = false;
    for (const auto& p : parents) rg = rg || node(p.id).requires_grad;
    return record(std::move(value), rg, std::forward<Fn>(back));
  }

  template <class Fn>
  Var<Scalar> record(Mat<Scalar> value, bool requires_grad, Fn&& back) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad) n.back = std::forward<Fn>(back);
    nodes_.push_back(std::move(n));
    return Var<Scalar>{this, static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(int id) { return nodes_[static_cast<size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<size_t>(id)]; }

  /// Accumulate into a parent's gradient buffer, allocating it on first use.
  void accumulate(int id, const Mat<Scalar>& g) {
    Node& n = node(id);
    if (!n.requires_grad) return;
    if (!n.grad_ready) {
      n.grad = Mat<Scalar>::Zero(n.value.rows(), n.value.cols());
      n.grad_ready = true;
    }
    n.grad += g;
  }

  Mat<Scalar>& grad_buffer(int id) {
    Node& n = node(id);
    if (!n.grad_ready) {
      n.grad = Mat<Scalar>::Zero(n.value.rows(), n.value.cols());
      n.grad_ready = true;
    }
    return n.grad;
  }

  /// Reverse sweep from a 1x1 root. Gradients of leaves with requires_grad
  /// are available through Var::grad() afterwards.
  void backward(Var<Scalar> root) {
    if (root.tape != this) throw ConfigError("backward: var from another tape");
    Node& r = node(root.id);
    if (r.value.rows() != 1 || r.value.cols() != 1)
      throw ConfigError("backward: root must be a scalar (1x1)");
    if (!r.requires_grad) return;
    grad_buffer(root.id).setConstant(Scalar(1));
    for (int i = root.id; i >= 0; --i) {
      Node& n = node(i);
      if (n.requires_grad && n.grad_ready && n.back) n.back(*this, i);
    }
  }

  size_t size() const { return nodes_.size(); }

 private:
  std::vector<Node> nodes_;
};

template <class Scalar>
const Mat<Scalar>& Var<Scalar>::value() const {
  return tape->node(id).value;
}

template <class Scalar>
const Mat<Scalar>& Var<Scalar>::grad() const {
  const auto& n = tape->node(id);
  if (!n.grad_ready) throw ConfigError("Var::grad: no gradient computed for this node");
  return n.grad;
}

}  // namespace ect::ad

#endif  // ECT_TAPE_HPP
