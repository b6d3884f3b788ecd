#include <catch2/catch_amalgamated.hpp>

#include "moe/objective.hpp"
#include "moe/rng.hpp"

using namespace moe;

namespace {

std::vector<Expert> random_experts(Rng& rng, Index n_x, int m) {
  std::vector<Expert> out;
  for (int i = 0; i < m; ++i) {
    Expert e = Expert::make_linear(n_x);
    Vector th(n_x);
    for (Index j = 0; j < n_x; ++j) th[j] = rng.next_normal();
    out.push_back(e.with_params(th));
  }
  return out;
}

Dataset random_dataset(Rng& rng, Index T, Index n_x) {
  Matrix x(T, n_x);
  Vector y(T);
  for (Index t = 0; t < T; ++t) {
    for (Index j = 0; j < n_x; ++j) x(t, j) = rng.next_normal();
    y[t] = rng.next_normal();
  }
  return Dataset(std::move(x), std::move(y));
}

WeightSequence random_weights(Rng& rng, Index T, Index m) {
  Matrix w(T, m);
  for (Index t = 0; t < T; ++t) w.row(t) = rng.next_simplex(m).transpose();
  return WeightSequence(std::move(w));
}

}  // namespace

TEST_CASE("mixture loss examples") {
  const Vector w = (Vector(2) << 0.5, 0.5).finished();
  const Vector f = (Vector(2) << 1.0, -1.0).finished();
  CHECK(mix_loss(0.0, w, f, 1.0) == 0.0);
  CHECK(mix_loss(1.0, w, f, 1.0) == Catch::Approx(1.0));
  CHECK(mix_loss(1.0, w, f, 2.0) == Catch::Approx(2.0));
  CHECK_THROWS_AS(mix_loss(1.0, w, (Vector(3) << 1, 2, 3).finished(), 1.0), validation_error);
}

TEST_CASE("local loss examples") {
  auto e1 = Expert::make_linear(1).with_params((Vector(1) << 1.0).finished());
  auto e2 = Expert::make_linear(1).with_params((Vector(1) << 2.0).finished());
  const Vector x = (Vector(1) << 1.0).finished();
  const std::vector<double> c{1.0, 1.0};

  CHECK(local_loss(x, 1.0, {e1}, (Vector(1) << 1.0).finished(), {1.0}) == 0.0);
  // vertex masking: expert 2 is irrelevant under omega = [1, 0]
  CHECK(local_loss(x, 3.0, {e1, e2}, (Vector(2) << 1.0, 0.0).finished(), c) ==
        Catch::Approx(1.0 * (3 - 1) * (3 - 1)));
  CHECK(local_loss(x, 0.0, {e1, e2}, (Vector(2) << 0.5, 0.5).finished(), c) ==
        Catch::Approx(0.5 * 1.0 + 0.5 * 4.0));
}

TEST_CASE("step loss collapses to its parts") {
  auto e1 = Expert::make_linear(1).with_params((Vector(1) << 1.0).finished());
  auto e2 = Expert::make_linear(1).with_params((Vector(1) << -1.0).finished());
  const std::vector<Expert> experts{e1, e2};
  const Vector x = (Vector(1) << 1.0).finished();
  const Vector w = (Vector(2) << 0.5, 0.5).finished();

  HyperParams h;
  h.c = 1.0;
  h.beta = 0.0;
  CHECK(step_loss(x, 1.0, w, experts, h) == Catch::Approx(1.0));  // mix only

  h.c = 0.0;
  h.beta = 2.0;
  const double local = 0.5 * (1 - 1) * (1 - 1) + 0.5 * (1 + 1) * (1 + 1);
  CHECK(step_loss(x, 1.0, w, experts, h) == Catch::Approx(2.0 * local));

  h.c = 1.0;
  h.beta = 1e-6;
  CHECK(step_loss(x, 1.0, w, experts, h) == Catch::Approx(1.0 + 1e-6 * local));
}

TEST_CASE("shaper examples") {
  Matrix flat(3, 2);
  flat << 0.4, 0.6, 0.4, 0.6, 0.4, 0.6;
  CHECK(shaper(WeightSequence(flat), 50.0) == 0.0);

  Matrix flip(2, 2);
  flip << 1, 0, 0, 1;
  CHECK(shaper(WeightSequence(flip), 50.0) == Catch::Approx(100.0));
  CHECK(shaper(WeightSequence(flip), 0.0) == 0.0);

  Matrix single(1, 2);
  single << 0.5, 0.5;
  CHECK(shaper(WeightSequence(single), 50.0) == 0.0);
}

TEST_CASE("regularizer examples") {
  auto e0 = Expert::make_linear(2);  // zero parameters
  CHECK(regularizer({e0}, 1.0) == 0.0);
  auto e = Expert::make_linear(2).with_params((Vector(2) << 3.0, 4.0).finished());
  CHECK(regularizer({e}, 1.0) == Catch::Approx(25.0));
  CHECK(regularizer({e}, 0.0) == 0.0);
}

TEST_CASE("total cost decomposition identity and base cases") {
  Rng rng(11);
  const Dataset data = random_dataset(rng, 17, 3);
  const auto experts = random_experts(rng, 3, 2);
  const WeightSequence w = random_weights(rng, 17, 2);
  HyperParams h;
  h.beta = 0.37;
  h.lambda_theta = 0.11;
  h.eta = 2.5;
  h.c_local = {1.3, 0.7};
  const LossBreakdown bd = total_cost(data, experts, w, h);
  const double recomposed = bd.mix_term + h.beta * bd.local_term + bd.regularizer_term + bd.shaper_term;
  CHECK(bd.total == Catch::Approx(recomposed).epsilon(1e-12));
  CHECK(bd.total >= 0.0);

  // perfect-fit experts, constant weights, no penalties -> zero
  auto e = Expert::make_linear(1).with_params((Vector(1) << 2.0).finished());
  Matrix x(4, 1);
  x << 1, 2, 3, 4;
  Vector y = 2.0 * x.col(0);
  HyperParams h0;
  h0.lambda_theta = 0.0;
  h0.eta = 0.0;
  h0.experts = 1;
  const LossBreakdown zero =
      total_cost(Dataset(x, y), {e}, WeightSequence::uniform(4, 1), h0);
  CHECK(zero.total == Catch::Approx(0.0).margin(1e-18));

  // single sample: shaper contributes nothing
  const LossBreakdown one =
      total_cost(Dataset(x.topRows(1), y.head(1)), {e}, WeightSequence::uniform(1, 1), h);
  CHECK(one.shaper_term == 0.0);
}

TEST_CASE("jump cost equals total cost at one-hot weights (reduction oracle)") {
  Rng rng(23);
  for (int rep = 0; rep < 100; ++rep) {
    const Index T = 2 + static_cast<Index>(rng.next_u64() % 19);
    const int m = 2 + static_cast<int>(rng.next_u64() % 2);
    const Index n_x = 1 + static_cast<Index>(rng.next_u64() % 3);
    const Dataset data = random_dataset(rng, T, n_x);
    const auto experts = random_experts(rng, n_x, m);
    std::vector<int> modes(static_cast<size_t>(T));
    for (auto& s : modes) s = static_cast<int>(rng.next_u64() % static_cast<unsigned>(m));
    HyperParams h;
    h.experts = m;
    h.beta = rng.next_unit();
    h.eta = 10.0 * rng.next_unit();
    h.lambda_theta = rng.next_unit();
    h.c = rng.next_unit();
    h.c_local.assign(static_cast<size_t>(m), 0.0);
    for (auto& ci : h.c_local) ci = 0.5 + rng.next_unit();

    const double jc = jump_cost(data, experts, modes, h);
    const double tc = total_cost(data, experts, WeightSequence::one_hot(modes, m), h).total;
    REQUIRE(jc == Catch::Approx(tc).epsilon(1e-12).margin(1e-12));
  }
}

TEST_CASE("jump cost trivial cases") {
  Rng rng(5);
  const Dataset data = random_dataset(rng, 6, 2);
  const auto experts = random_experts(rng, 2, 1);
  HyperParams h;
  h.experts = 1;
  const std::vector<int> modes(6, 0);
  CHECK(jump_cost(data, experts, modes, h) ==
        Catch::Approx(total_cost(data, experts, WeightSequence::uniform(6, 1), h).total));
  CHECK_THROWS_AS(jump_cost(data, experts, std::vector<int>(6, 3), h), validation_error);
}

TEST_CASE("constant mode sequences have no shaper contribution") {
  Rng rng(6);
  const Dataset data = random_dataset(rng, 8, 2);
  const auto experts = random_experts(rng, 2, 2);
  HyperParams h;
  h.eta = 100.0;
  HyperParams h0 = h;
  h0.eta = 0.0;
  const std::vector<int> modes(8, 1);
  CHECK(jump_cost(data, experts, modes, h) == Catch::Approx(jump_cost(data, experts, modes, h0)));
}

TEST_CASE("objective is convex in each block (midpoint inequality)") {
  Rng rng(31);
  for (int rep = 0; rep < 10; ++rep) {
    const Index T = 5 + static_cast<Index>(rng.next_u64() % 10);
    const Dataset data = random_dataset(rng, T, 2);
    HyperParams h;
    h.beta = 0.2;
    h.lambda_theta = 0.05;
    h.eta = 1.0;

    // convex in Theta for fixed Omega
    const WeightSequence w = random_weights(rng, T, 2);
    const auto ea = random_experts(rng, 2, 2);
    const auto eb = random_experts(rng, 2, 2);
    std::vector<Expert> mid;
    for (size_t i = 0; i < ea.size(); ++i) {
      mid.push_back(ea[i].with_params(0.5 * (ea[i].params() + eb[i].params())));
    }
    const double ja = total_cost(data, ea, w, h).total;
    const double jb = total_cost(data, eb, w, h).total;
    const double jm = total_cost(data, mid, w, h).total;
    CHECK(jm <= 0.5 * (ja + jb) + 1e-9);

    // convex in Omega for fixed Theta
    const WeightSequence wa = random_weights(rng, T, 2);
    const WeightSequence wb = random_weights(rng, T, 2);
    const WeightSequence wm{0.5 * (wa.matrix() + wb.matrix())};
    const double ka = total_cost(data, ea, wa, h).total;
    const double kb = total_cost(data, ea, wb, h).total;
    const double km = total_cost(data, ea, wm, h).total;
    CHECK(km <= 0.5 * (ka + kb) + 1e-9);
  }
}
