#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ect/losses.hpp"
#include "oracles.hpp"

using namespace ect;

namespace {

GroundTruthEdgeMap<Real> gt_from(std::initializer_list<std::initializer_list<double>> rows) {
  MatX m(static_cast<long>(rows.size()), static_cast<long>(rows.begin()->size()));
  long r = 0;
  for (const auto& row : rows) {
    long c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return GroundTruthEdgeMap<Real>::from(m);
}

MatX mat_from(std::initializer_list<std::initializer_list<double>> rows) {
  MatX m(static_cast<long>(rows.size()), static_cast<long>(rows.begin()->size()));
  long r = 0;
  for (const auto& row : rows) {
    long c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

MatX random_probs(Rng& rng, int r, int c, double lo = 0.05, double hi = 0.95) {
  MatX m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.uniform(lo, hi);
  return m;
}

MatX random_binary(Rng& rng, int r, int c) {
  MatX m(r, c);
  for (int j = 0; j < c; ++j)
    for (int i = 0; i < r; ++i) m(i, j) = rng.uniform() < 0.5 ? 1.0 : 0.0;
  return m;
}

}  // namespace

TEST_CASE("all-zero ground truth gives zero loss for any prediction") {
  auto y = gt_from({{0, 0}, {0, 0}});
  Rng rng(3);
  for (int k = 0; k < 5; ++k) {
    MatX e = random_probs(rng, 2, 2);
    CHECK(attention_loss(y, e, 4.0, 0.5) == 0.0);
  }
  // all-ones behaves symmetrically (alpha = 0)
  auto y1 = gt_from({{1, 1}, {1, 1}});
  CHECK(attention_loss(y1, random_probs(rng, 2, 2), 4.0, 0.5) == 0.0);
}

TEST_CASE("perfect prediction drives the loss to ~0") {
  const double eps = 1e-6;
  auto y = gt_from({{1, 0}});
  MatX e = mat_from({{1.0 - eps, eps}});
  CHECK(attention_loss(y, e, 4.0, 0.5, eps) <= 1e-4);
}

TEST_CASE("frozen small-instance value matches the independent oracle") {
  auto y = gt_from({{1, 0}});
  MatX e = mat_from({{0.8, 0.2}});
  const double v = attention_loss(y, e, 4.0, 0.5);
  // Value computed with the scalar-by-scalar evaluator ahead of the build.
  CHECK(v == doctest::Approx(0.414795230459988).epsilon(1e-12));
  CHECK(std::abs(v - oracles::attention_loss(y.data, e, 4.0, 0.5)) < 1e-14);
}

TEST_CASE("25 random small instances match the oracle within 1e-10") {
  Rng rng(2024);
  for (int k = 0; k < 25; ++k) {
    const int r = 1 + static_cast<int>(rng.below(4));
    const int c = 1 + static_cast<int>(rng.below(4));
    MatX y = random_binary(rng, r, c);
    MatX e = random_probs(rng, r, c);
    const double beta = rng.uniform(1.5, 6.0);
    const double gamma = rng.uniform(0.25, 2.0);
    auto gt = GroundTruthEdgeMap<Real>::from(y);
    const double got = attention_loss(gt, e, beta, gamma);
    const double want = oracles::attention_loss(y, e, beta, gamma);
    CHECK(std::abs(got - want) <= 1e-10 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("invalid hyperparameters and shapes are rejected") {
  auto y = gt_from({{1, 0}});
  MatX e = mat_from({{0.5, 0.5}});
  CHECK_THROWS_AS(attention_loss(y, e, -1.0, 0.5), ConfigError);
  CHECK_THROWS_AS(attention_loss(y, e, 4.0, 0.0), ConfigError);
  MatX wrong = mat_from({{0.5}});
  CHECK_THROWS_AS(attention_loss(y, wrong, 4.0, 0.5), ConfigError);
  CHECK_THROWS(GroundTruthEdgeMap<Real>::from(mat_from({{0.25}})));
}

TEST_CASE("class-balance identity: alpha + |Y+|/|Y| = 1 exactly") {
  Rng rng(5);
  for (int k = 0; k < 20; ++k) {
    auto gt = GroundTruthEdgeMap<Real>::from(random_binary(rng, 6, 7));
    const double alpha = gt.alpha();
    const double pos_frac =
        static_cast<double>(gt.edge_count) / static_cast<double>(gt.edge_count + gt.nonedge_count);
    CHECK(alpha + pos_frac == 1.0);
  }
}

TEST_CASE("nonnegativity over random instances") {
  Rng rng(6);
  for (int k = 0; k < 50; ++k) {
    auto gt = GroundTruthEdgeMap<Real>::from(random_binary(rng, 5, 5));
    CHECK(attention_loss(gt, random_probs(rng, 5, 5), rng.uniform(1.1, 8.0),
                         rng.uniform(0.2, 3.0)) >= 0.0);
  }
}

TEST_CASE("monotone penalty: lowering E at an edge pixel never lowers the loss") {
  Rng rng(8);
  for (int k = 0; k < 20; ++k) {
    MatX y = random_binary(rng, 4, 4);
    y(1, 1) = 1.0;
    auto gt = GroundTruthEdgeMap<Real>::from(y);
    MatX e = random_probs(rng, 4, 4, 0.2, 0.9);
    const double before = attention_loss(gt, e, 4.0, 0.5);
    e(1, 1) -= 0.1;
    const double after = attention_loss(gt, e, 4.0, 0.5);
    CHECK(after >= before - 1e-12);
  }
}

TEST_CASE("analytic gradient matches central differences at 50 interior points") {
  Rng rng(77);
  MatX y = random_binary(rng, 8, 8);
  MatX e = random_probs(rng, 8, 8, 0.1, 0.9);
  auto gt = GroundTruthEdgeMap<Real>::from(y);

  ad::Tape<Real> tape;
  ad::Var<Real> ev = tape.param(e);
  tape.backward(attention_loss_node(ev, gt, 4.0, 0.5, 1e-6));
  const MatX analytic = ev.grad();

  auto f = [&](const MatX& m) { return oracles::attention_loss(y, m, 4.0, 0.5); };
  for (int k = 0; k < 50; ++k) {
    const long i = static_cast<long>(rng.below(8));
    const long j = static_cast<long>(rng.below(8));
    const double fd = oracles::fd_gradient(f, e, i, j, 1e-5);
    CHECK(oracles::rel_err(analytic(i, j), fd) < 1e-4);
  }
}

TEST_CASE("erind loss: weighting and composition") {
  Rng rng(12);
  std::map<Task, GroundTruthEdgeMap<Real>> gts;
  std::map<Task, MatX> preds;
  for (Task t : kTasks) {
    gts.emplace(t, GroundTruthEdgeMap<Real>::from(random_binary(rng, 2, 2)));
    preds.emplace(t, random_probs(rng, 2, 2));
  }
  LossConfig cfg;

  SUBCASE("all lambda zero gives zero") {
    for (auto& w : cfg.task) w.lambda = 0;
    CHECK(erind_loss(gts, preds, cfg) == 0.0);
  }
  SUBCASE("single nonzero lambda scales one task") {
    for (auto& w : cfg.task) w.lambda = 0;
    cfg.for_task(Task::Normal).lambda = 2.5;
    const auto& w = cfg.for_task(Task::Normal);
    const double solo = attention_loss(gts.at(Task::Normal), preds.at(Task::Normal), w.beta,
                                       w.gamma, cfg.eps);
    CHECK(erind_loss(gts, preds, cfg) == doctest::Approx(2.5 * solo).epsilon(1e-12));
  }
  SUBCASE("five tasks sum to the sum of oracle values") {
    double want = 0;
    for (Task t : kTasks) {
      const auto& w = cfg.for_task(t);
      want += w.lambda * oracles::attention_loss(gts.at(t).data, preds.at(t), w.beta, w.gamma);
    }
    CHECK(erind_loss(gts, preds, cfg) == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("missing task is rejected") {
    preds.erase(Task::Depth);
    CHECK_THROWS_AS(erind_loss(gts, preds, cfg), ConfigError);
  }
}

TEST_CASE("total loss arithmetic") {
  CHECK(total_loss(1.0, 2.0, 0.0) == 1.0);
  CHECK(total_loss(1.0, 2.0, 0.5) == 2.0);
  CHECK(total_loss(0.0, 3.25, 1.0) == 3.25);
}

TEST_CASE("pixel normalization switch divides by the pixel count") {
  Rng rng(9);
  auto gt = GroundTruthEdgeMap<Real>::from(random_binary(rng, 4, 4));
  MatX e = random_probs(rng, 4, 4);
  const double plain = attention_loss(gt, e, 4.0, 0.5, 1e-6, false);
  const double normed = attention_loss(gt, e, 4.0, 0.5, 1e-6, true);
  CHECK(normed == doctest::Approx(plain / 16.0).epsilon(1e-12));
}

TEST_CASE("bce ablation path is finite and nonnegative") {
  Rng rng(10);
  std::map<Task, GroundTruthEdgeMap<Real>> gts;
  std::map<Task, MatX> preds;
  for (Task t : kTasks) {
    gts.emplace(t, GroundTruthEdgeMap<Real>::from(random_binary(rng, 3, 3)));
    preds.emplace(t, random_probs(rng, 3, 3));
  }
  LossConfig cfg;
  cfg.use_bce = true;
  const double v = erind_loss(gts, preds, cfg);
  CHECK(std::isfinite(v));
  CHECK(v >= 0.0);
}
