#ifndef ECT_LOSSES_HPP
#define ECT_LOSSES_HPP

#include <array>
#include <map>
#include <string>

#include "ect/ops.hpp"
#include "ect/types.hpp"

namespace ect {

/// Supervision tasks: the generic edge map plus the four cause maps.
enum class Task { Edge = 0, Reflectance = 1, Illumination = 2, Normal = 3, Depth = 4 };
constexpr std::array<Task, 5> kTasks = {Task::Edge, Task::Reflectance, Task::Illumination,
                                        Task::Normal, Task::Depth};

inline const char* task_letter(Task t) {
  switch (t) {
    case Task::Edge: return "e";
    case Task::Reflectance: return "r";
    case Task::Illumination: return "i";
    case Task::Normal: return "n";
    case Task::Depth: return "d";
  }
  return "?";
}

template <class Scalar>
struct GroundTruthEdgeMap {
  Mat<Scalar> data;  // strictly {0,1}
  long edge_count = 0;
  long nonedge_count = 0;

  static GroundTruthEdgeMap from(Mat<Scalar> m) {
    GroundTruthEdgeMap g;
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        const Scalar v = m(i, j);
        if (v == Scalar(0))
          ++g.nonedge_count;
        else if (v == Scalar(1))
          ++g.edge_count;
        else
          throw ConfigError("GroundTruthEdgeMap: non-binary value");
      }
    g.data = std::move(m);
    return g;
  }

  /// alpha = |Y-| / |Y|, the non-edge fraction.
  Scalar alpha() const {
    return static_cast<Scalar>(nonedge_count) / static_cast<Scalar>(edge_count + nonedge_count);
  }
};

struct TaskWeights {
  double lambda = 1.0;
  double beta = 4.0;
  double gamma = 0.5;
};

struct LossConfig {
  std::array<TaskWeights, 5> task;  // indexed by Task
  double lambda_a = 0.1;
  double eps = 1e-6;
  bool normalize_by_pixels = false;  // off: plain sum over pixels
  bool use_bce = false;              // ablation: plain balanced cross entropy

  TaskWeights& for_task(Task t) { return task[static_cast<size_t>(t)]; }
  const TaskWeights& for_task(Task t) const { return task[static_cast<size_t>(t)]; }

  void validate() const {
    for (const auto& w : task) {
      if (w.lambda < 0) throw ConfigError("loss: lambda must be >= 0");
      if (w.beta <= 0) throw ConfigError("loss: beta must be > 0");
      if (w.gamma <= 0) throw ConfigError("loss: gamma must be > 0");
    }
    if (lambda_a < 0) throw ConfigError("loss: lambda_a must be >= 0");
    if (!(eps > 0 && eps < 0.5)) throw ConfigError("loss: eps must be in (0, 0.5)");
  }
};

// ---------------------------------------------------------------------------
// Attention loss:
//   l(Y,E) = -sum_ij [ Y * alpha * beta^((1-E)^gamma) * log E
//                    + (1-Y) * (1-alpha) * beta^(E^gamma) * log(1-E) ]
// with E clamped to [eps, 1-eps] before the logs and alpha = |Y-|/|Y|.
// ---------------------------------------------------------------------------

/// Graph-building form; Y enters as a constant, E as a live node.
template <class S>
ad::Var<S> attention_loss_node(ad::Var<S> E, const GroundTruthEdgeMap<S>& Y, S beta, S gamma,
                               S eps, bool normalize_by_pixels = false) {
  if (beta <= S(0) || gamma <= S(0)) throw ConfigError("attention_loss: beta, gamma must be > 0");
  require_same_shape(E.value(), Y.data, "attention_loss");
  ad::Tape<S>& tape = *E.tape;
  const S alpha = Y.alpha();
  const S log_beta = std::log(beta);

  ad::Var<S> y = tape.constant(Y.data);
  ad::Var<S> one_minus_y = tape.constant((S(1) - Y.data.array()).matrix());
  ad::Var<S> e = ad::clamp(E, eps, S(1) - eps);
  ad::Var<S> one_minus_e = ad::rsub_const(S(1), e);

  // beta^(x^gamma) = exp(log(beta) * x^gamma)
  ad::Var<S> wpos = ad::cwise_exp(ad::scale(ad::cwise_pow(one_minus_e, gamma), log_beta));
  ad::Var<S> wneg = ad::cwise_exp(ad::scale(ad::cwise_pow(e, gamma), log_beta));

  ad::Var<S> pos = ad::cwise_mul(y, ad::cwise_mul(wpos, ad::cwise_log(e)));
  ad::Var<S> neg = ad::cwise_mul(one_minus_y, ad::cwise_mul(wneg, ad::cwise_log(one_minus_e)));
  ad::Var<S> total =
      ad::add(ad::scale(pos, alpha), ad::scale(neg, S(1) - alpha));
  ad::Var<S> loss = ad::scale(ad::sum(total), S(-1));
  if (normalize_by_pixels) loss = ad::scale(loss, S(1) / static_cast<S>(Y.data.size()));
  return loss;
}

/// Balanced binary cross entropy (ablation path).
template <class S>
ad::Var<S> bce_loss_node(ad::Var<S> E, const GroundTruthEdgeMap<S>& Y, S eps,
                         bool normalize_by_pixels = false) {
  require_same_shape(E.value(), Y.data, "bce_loss");
  ad::Tape<S>& tape = *E.tape;
  const S alpha = Y.alpha();
  ad::Var<S> y = tape.constant(Y.data);
  ad::Var<S> one_minus_y = tape.constant((S(1) - Y.data.array()).matrix());
  ad::Var<S> e = ad::clamp(E, eps, S(1) - eps);
  ad::Var<S> pos = ad::cwise_mul(y, ad::cwise_log(e));
  ad::Var<S> neg = ad::cwise_mul(one_minus_y, ad::cwise_log(ad::rsub_const(S(1), e)));
  ad::Var<S> loss = ad::scale(
      ad::sum(ad::add(ad::scale(pos, alpha), ad::scale(neg, S(1) - alpha))), S(-1));
  if (normalize_by_pixels) loss = ad::scale(loss, S(1) / static_cast<S>(Y.data.size()));
  return loss;
}

/// Value-level evaluation (single forward pass of the same graph).
template <class S>
S attention_loss(const GroundTruthEdgeMap<S>& Y, const Mat<S>& E, S beta, S gamma,
                 S eps = S(1e-6), bool normalize_by_pixels = false) {
  ad::Tape<S> tape;
  ad::Var<S> e = tape.constant(E);
  return attention_loss_node(e, Y, beta, gamma, eps, normalize_by_pixels).value()(0, 0);
}

/// Weighted sum over the five tasks e, r, i, n, d (Eq. 5 outer sum).
template <class S>
ad::Var<S> erind_loss_node(const std::map<Task, ad::Var<S>>& preds,
                           const std::map<Task, GroundTruthEdgeMap<S>>& gts,
                           const LossConfig& cfg) {
  cfg.validate();
  ad::Var<S> total;
  bool first = true;
  for (Task t : kTasks) {
    auto pit = preds.find(t);
    auto git = gts.find(t);
    if (pit == preds.end() || git == gts.end())
      throw ConfigError(std::string("erind_loss: missing task ") + task_letter(t));
    const TaskWeights& w = cfg.for_task(t);
    ad::Var<S> l =
        cfg.use_bce
            ? bce_loss_node(pit->second, git->second, static_cast<S>(cfg.eps),
                            cfg.normalize_by_pixels)
            : attention_loss_node(pit->second, git->second, static_cast<S>(w.beta),
                                  static_cast<S>(w.gamma), static_cast<S>(cfg.eps),
                                  cfg.normalize_by_pixels);
    ad::Var<S> weighted = ad::scale(l, static_cast<S>(w.lambda));
    total = first ? weighted : ad::add(total, weighted);
    first = false;
  }
  return total;
}

template <class S>
S erind_loss(const std::map<Task, GroundTruthEdgeMap<S>>& gts,
             const std::map<Task, Mat<S>>& preds, const LossConfig& cfg) {
  ad::Tape<S> tape;
  std::map<Task, ad::Var<S>> pred_vars;
  for (const auto& [t, m] : preds) pred_vars.emplace(t, tape.constant(m));
  return erind_loss_node(pred_vars, gts, cfg).value()(0, 0);
}

/// Eq. 6: total = erind + lambda_a * alignment.
template <class S>
S total_loss(S erind, S alignment, S lambda_a) {
  if (!std::isfinite(erind) || !std::isfinite(alignment))
    throw ConfigError("total_loss: non-finite inputs");
  return erind + lambda_a * alignment;
}

}  // namespace ect

#endif  // ECT_LOSSES_HPP
