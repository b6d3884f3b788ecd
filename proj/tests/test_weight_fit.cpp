#include <catch2/catch_amalgamated.hpp>

#include "moe/objective.hpp"
#include "moe/rng.hpp"
#include "moe/weight_fit.hpp"

using namespace moe;

namespace {

Dataset random_dataset(Rng& rng, Index T, Index n_x) {
  Matrix x(T, n_x);
  Vector y(T);
  for (Index t = 0; t < T; ++t) {
    for (Index j = 0; j < n_x; ++j) x(t, j) = rng.next_normal();
    y[t] = rng.next_normal();
  }
  return Dataset(std::move(x), std::move(y));
}

std::vector<Expert> random_experts(Rng& rng, Index n_x, int m) {
  std::vector<Expert> out;
  for (int i = 0; i < m; ++i) {
    Vector th(n_x);
    for (Index j = 0; j < n_x; ++j) th[j] = rng.next_normal();
    out.push_back(Expert::make_linear(n_x).with_params(th));
  }
  return out;
}

// brute-force minimizer of ||w - v||^2 over a grid of the simplex
Vector grid_project(const Vector& v, double res) {
  const Index m = v.size();
  Vector best;
  double best_val = std::numeric_limits<double>::infinity();
  const int n = static_cast<int>(std::lround(1.0 / res));
  if (m == 2) {
    for (int a = 0; a <= n; ++a) {
      Vector w(2);
      w << a * res, 1.0 - a * res;
      const double val = (w - v).squaredNorm();
      if (val < best_val) {
        best_val = val;
        best = w;
      }
    }
  } else {
    for (int a = 0; a <= n; ++a) {
      for (int b = 0; a + b <= n; ++b) {
        Vector w(3);
        w << a * res, b * res, 1.0 - (a + b) * res;
        const double val = (w - v).squaredNorm();
        if (val < best_val) {
          best_val = val;
          best = w;
        }
      }
    }
  }
  return best;
}

}  // namespace

TEST_CASE("simplex projection examples") {
  const Vector feasible = (Vector(2) << 0.5, 0.5).finished();
  CHECK((project_simplex(feasible) - feasible).norm() == 0.0);

  const Vector vertex = project_simplex((Vector(2) << 2.0, 0.0).finished());
  CHECK(vertex[0] == Catch::Approx(1.0));
  CHECK(vertex[1] == Catch::Approx(0.0));

  const Vector shifted = project_simplex((Vector(3) << 0.2, 0.4, 0.1).finished());
  CHECK(shifted[0] == Catch::Approx(0.3).margin(1e-12));
  CHECK(shifted[1] == Catch::Approx(0.5).margin(1e-12));
  CHECK(shifted[2] == Catch::Approx(0.2).margin(1e-12));

  CHECK_THROWS_AS(project_simplex(Vector()), validation_error);
}

TEST_CASE("simplex projection is idempotent and matches the grid oracle") {
  Rng rng(17);
  for (int rep = 0; rep < 200; ++rep) {
    const Index m = 2 + static_cast<Index>(rng.next_u64() % 2);
    Vector v(m);
    for (Index j = 0; j < m; ++j) v[j] = 4.0 * rng.next_normal();
    const Vector p = project_simplex(v);
    CHECK(p.minCoeff() >= 0.0);
    CHECK(p.sum() == Catch::Approx(1.0).margin(1e-12));
    CHECK((project_simplex(p) - p).norm() < 1e-12);
    const Vector g = grid_project(v, 1e-3);
    CHECK((p - g).cwiseAbs().maxCoeff() < 2e-3);
  }
}

TEST_CASE("window plan covers the horizon with single-step overlaps") {
  const WindowPlan plan = make_window_plan(10, 4);
  CHECK(plan.starts == std::vector<Index>{0, 3, 6, 9});
  const WindowPlan one = make_window_plan(5, 10);
  CHECK(one.starts == std::vector<Index>{0});
  for (Index T : {7, 20, 100, 101}) {
    for (int w : {2, 3, 10}) {
      const WindowPlan p = make_window_plan(T, w);
      CHECK(p.starts.front() == 0);
      for (size_t k = 1; k < p.starts.size(); ++k) {
        CHECK(p.starts[k] - p.starts[k - 1] == w - 1);  // shared step
      }
      CHECK(p.starts.back() + w >= T);
    }
  }
}

TEST_CASE("pointwise weights go one-hot on the exact expert") {
  // expert 1 reproduces y exactly, expert 2 is far off; beta = 0
  Matrix x(5, 1);
  x << 1, 2, 3, 4, 5;
  const Vector y = 2.0 * x.col(0);
  auto good = Expert::make_linear(1).with_params((Vector(1) << 2.0).finished());
  auto bad = Expert::make_linear(1).with_params((Vector(1) << -5.0).finished());
  HyperParams h;
  h.beta = 0.0;
  const WeightSequence w = solve_weights_pointwise(Dataset(x, y), {good, bad}, h);
  for (Index t = 0; t < 5; ++t) {
    CHECK(w.matrix()(t, 0) == Catch::Approx(1.0).margin(1e-6));
  }
}

TEST_CASE("pointwise weights return uniform under a flat objective") {
  auto e = Expert::make_linear(1).with_params((Vector(1) << 1.5).finished());
  Matrix x(3, 1);
  x << 1, 2, 3;
  Vector y(3);
  y << 0.5, 1.0, -2.0;
  HyperParams h;
  const WeightSequence w = solve_weights_pointwise(Dataset(x, y), {e, e}, h);
  for (Index t = 0; t < 3; ++t) {
    CHECK(w.matrix()(t, 0) == Catch::Approx(0.5).margin(1e-12));
  }
}

TEST_CASE("pointwise weights match a one-dimensional scan for M = 2") {
  Rng rng(21);
  const Dataset data = random_dataset(rng, 25, 2);
  const auto experts = random_experts(rng, 2, 2);
  HyperParams h;
  h.beta = 0.05;
  const WeightSequence w = solve_weights_pointwise(data, experts, h);
  const Matrix f = prediction_matrix(data, experts);
  std::vector<double> cl{h.c_i(0), h.c_i(1)};
  for (Index t = 0; t < data.size(); ++t) {
    auto value = [&](double w1) {
      const Vector om = (Vector(2) << w1, 1.0 - w1).finished();
      return mix_loss(data.outputs()[t], om, f.row(t).transpose(), h.c) +
             h.beta * local_loss(data.regressors().row(t).transpose(), data.outputs()[t], experts,
                                 om, cl);
    };
    double best = std::numeric_limits<double>::infinity();
    for (int a = 0; a <= 1000; ++a) best = std::min(best, value(a / 1000.0));
    CHECK(value(w.matrix()(t, 0)) <= best + 1e-3);
  }
}

TEST_CASE("window solve collapses to pointwise when eta = 0") {
  Rng rng(22);
  const Dataset data = random_dataset(rng, 12, 2);
  const auto experts = random_experts(rng, 2, 2);
  HyperParams h;
  h.eta = 0.0;
  h.beta = 0.1;
  const WeightSequence pw = solve_weights_pointwise(data, experts, h);
  const Matrix init = Matrix::Constant(12, 2, 0.5);
  const WindowResult res = solve_weights_window(data, 0, 12, experts, init, nullptr, nullptr, h);
  CHECK((res.rows - pw.matrix()).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("window solve pins all rows to the anchor under a huge eta") {
  Rng rng(23);
  const Dataset data = random_dataset(rng, 6, 2);
  const auto experts = random_experts(rng, 2, 2);
  HyperParams h;
  h.eta = 1e12;
  const Vector anchor = (Vector(2) << 0.25, 0.75).finished();
  const Matrix init = Matrix::Constant(6, 2, 0.5);
  const WindowResult res = solve_weights_window(data, 0, 6, experts, init, &anchor, nullptr, h);
  for (Index t = 0; t < 6; ++t) {
    CHECK(std::abs(res.rows(t, 0) - 0.25) < 1e-4);
  }
}

TEST_CASE("window solve never increases its objective") {
  Rng rng(24);
  for (int rep = 0; rep < 10; ++rep) {
    const Dataset data = random_dataset(rng, 9, 2);
    const auto experts = random_experts(rng, 2, 3);
    HyperParams h;
    h.experts = 3;
    h.eta = 3.0;
    h.beta = 0.2;
    Matrix init(9, 3);
    for (Index t = 0; t < 9; ++t) init.row(t) = rng.next_simplex(3).transpose();
    const Vector anchor = rng.next_simplex(3);
    const Matrix f = prediction_matrix(data, experts);
    detail::WeightBlockProblem prob(f, data.outputs(), h, h.eta);
    prob.anchor_prev = &anchor;
    const double before = prob.value(init);
    const WindowResult res = solve_weights_window(data, 0, 9, experts, init, &anchor, nullptr, h);
    CHECK(prob.value(res.rows) <= before + 1e-12);
  }
}

TEST_CASE("windowed fitting with a single window equals the direct solve") {
  Rng rng(25);
  const Dataset data = random_dataset(rng, 8, 2);
  const auto experts = random_experts(rng, 2, 2);
  HyperParams h;
  h.window = 50;  // larger than T
  h.eta = 2.0;
  const WeightSequence prev = WeightSequence::uniform(8, 2);
  const WeightSequence full = fit_weights_windowed(data, experts, prev, h);
  const WindowResult direct =
      solve_weights_window(data, 0, 8, experts, prev.matrix(), nullptr, nullptr, h);
  CHECK((full.matrix() - direct.rows).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("windowed fitting is window-size independent when eta = 0") {
  Rng rng(26);
  const Dataset data = random_dataset(rng, 30, 2);
  const auto experts = random_experts(rng, 2, 2);
  HyperParams h;
  h.eta = 0.0;
  h.beta = 0.05;
  const WeightSequence prev = WeightSequence::uniform(30, 2);
  const WeightSequence pw = solve_weights_pointwise(data, experts, h);
  for (int w : {2, 10, 30}) {
    HyperParams hw = h;
    hw.window = w;
    const WeightSequence out = fit_weights_windowed(data, experts, prev, hw);
    CHECK((out.matrix() - pw.matrix()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("windowed fitting never increases the total objective") {
  Rng rng(27);
  for (int rep = 0; rep < 10; ++rep) {
    const Index T = 20 + static_cast<Index>(rng.next_u64() % 30);
    const Dataset data = random_dataset(rng, T, 2);
    const auto experts = random_experts(rng, 2, 2);
    HyperParams h;
    h.eta = 5.0 * rng.next_unit();
    h.beta = 0.2 * rng.next_unit();
    h.window = 2 + static_cast<int>(rng.next_u64() % 10);
    Matrix init(T, 2);
    for (Index t = 0; t < T; ++t) init.row(t) = rng.next_simplex(2).transpose();
    const WeightSequence prev{init};
    const WeightSequence out = fit_weights_windowed(data, experts, prev, h);
    const double before = total_cost(data, experts, prev, h).total;
    const double after = total_cost(data, experts, out, h).total;
    CHECK(after <= before * (1.0 + 1e-9) + 1e-12);
    CHECK(validate_weights(out).ok);
  }
}
