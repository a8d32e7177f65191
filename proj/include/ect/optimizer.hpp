#ifndef ECT_OPTIMIZER_HPP
#define ECT_OPTIMIZER_HPP

#include <map>
#include <string>

#include "ect/params.hpp"

namespace ect {

/// Cosine step-size decay from lr0 down to lr0 * min_ratio over total steps.
inline double cosine_lr(double lr0, double min_ratio, int step, int total_steps) {
  if (total_steps <= 1) return lr0;
  const double t = static_cast<double>(std::min(step, total_steps - 1)) / (total_steps - 1);
  const double lo = lr0 * min_ratio;
  return lo + 0.5 * (lr0 - lo) * (1.0 + std::cos(M_PI * t));
}

/// Plain gradient descent with momentum. Velocity buffers are keyed like the
/// store and serialize with checkpoints so training can resume exactly.
class SgdMomentum {
 public:
  explicit SgdMomentum(double momentum = 0.9) : momentum_(momentum) {}

  void step(ParamStore& store, const std::map<std::string, MatX>& grads, double lr) {
    for (const auto& [name, g] : grads) {
      MatX& p = store.at(name);
      auto it = velocity_.find(name);
      if (it == velocity_.end())
        it = velocity_.emplace(name, MatX::Zero(p.rows(), p.cols())).first;
      it->second = momentum_ * it->second - lr * g;
      p += it->second;
    }
  }

  std::map<std::string, MatX>& velocity() { return velocity_; }
  const std::map<std::string, MatX>& velocity() const { return velocity_; }
  double momentum() const { return momentum_; }

 private:
  double momentum_;
  std::map<std::string, MatX> velocity_;
};

}  // namespace ect

#endif  // ECT_OPTIMIZER_HPP
