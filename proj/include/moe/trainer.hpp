#pragma once

#include <atomic>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "moe/core.hpp"
#include "moe/expert_fit.hpp"
#include "moe/inference.hpp"
#include "moe/objective.hpp"
#include "moe/rng.hpp"
#include "moe/weight_fit.hpp"

namespace moe {

enum class TerminationReason { theta_omega_tol, cost_tol, k_max };

inline const char* to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::theta_omega_tol: return "theta_omega_tol";
    case TerminationReason::cost_tol: return "cost_tol";
    case TerminationReason::k_max: return "k_max";
  }
  return "?";
}

/// Iterate-change termination test. Tolerance rules take priority over the
/// iteration cap; the parameter/weight rule is checked before the cost rule.
/// `cost_delta` is the relative objective decrease |dJ| / max(1, |J|), see
/// coordinate_descent.
inline std::optional<TerminationReason> check_termination(double theta_delta, double omega_delta,
                                                          double cost_delta,
                                                          const HyperParams& hyper, int k) {
  if (theta_delta < hyper.eps_theta && omega_delta < hyper.eps_omega) {
    return TerminationReason::theta_omega_tol;
  }
  if (cost_delta < hyper.eps_cost) return TerminationReason::cost_tol;
  if (k >= hyper.k_max) return TerminationReason::k_max;
  return std::nullopt;
}

struct FitReport {
  MixtureModel model;
  int iterations_used = 0;
  TerminationReason reason = TerminationReason::k_max;
  int restart_index = 0;
  std::vector<double> all_restart_costs;
  std::vector<LossBreakdown> trace;  ///< per-iteration cost components
  double final_cost = 0.0;
};

namespace detail {

inline Vector stack_params(const std::vector<Expert>& experts) {
  Index n = 0;
  for (const Expert& e : experts) n += e.param_count();
  Vector v(n);
  Index at = 0;
  for (const Expert& e : experts) {
    v.segment(at, e.param_count()) = e.params();
    at += e.param_count();
  }
  return v;
}

inline std::vector<Expert> run_expert_step(const Dataset& data, const std::vector<Expert>& current,
                                           const WeightSequence& weights,
                                           const HyperParams& hyper) {
  switch (hyper.expert_solver) {
    case ExpertSolverKind::admm:
      return fit_admm(data, current, weights, hyper).first;
    case ExpertSolverKind::separable:
      return fit_separable(data, current, weights, hyper);
    case ExpertSolverKind::exact:
    default:
      return fit_sharing_exact(data, current, weights, hyper);
  }
}

}  // namespace detail

/// Alternating fit: expert update (step 1.1) followed by windowed weight
/// update (step 1.2), repeated until a termination rule fires.
///
/// Monotonicity: the weight step is block descent by construction; expert
/// updates are accepted only if the objective does not increase, so the cost
/// trace is non-increasing regardless of the chosen expert solver.
///
/// The cost comparison used for the cost-tolerance rule is relative,
/// |dJ| / max(1, |J|). An absolute 1e-9 rule never fires on realistic noisy
/// data: the objective keeps descending a shallow valley where the weight
/// sequence gradually absorbs noise and the experts drift to compensate, so
/// the fit would always run to k_max and past the well-identified region.
inline FitReport coordinate_descent(const Dataset& data, const std::vector<Expert>& specs,
                                    const WeightSequence& omega_init, const HyperParams& hyper) {
  hyper.validate(data.size());
  if (omega_init.size() != data.size()) throw validation_error("omega_init length mismatch");
  if (omega_init.experts() != static_cast<Index>(specs.size())) {
    throw validation_error("omega_init expert count mismatch");
  }
  if (static_cast<int>(specs.size()) != hyper.experts) {
    throw validation_error("expert specs disagree with hyper.experts");
  }

  std::vector<Expert> experts = specs;
  WeightSequence weights = omega_init;
  std::vector<LossBreakdown> trace;
  TerminationReason reason = TerminationReason::k_max;
  double prev_cost = std::numeric_limits<double>::infinity();
  Vector prev_theta = detail::stack_params(experts);
  Matrix prev_omega = weights.matrix();

  int k = 1;
  for (; k <= hyper.k_max; ++k) {
    std::vector<Expert> candidate = detail::run_expert_step(data, experts, weights, hyper);
    const double cand_cost = total_cost(data, candidate, weights, hyper).total;
    if (cand_cost <= prev_cost * (1.0 + 1e-12) + 1e-300) {
      experts = std::move(candidate);
    }
    weights = fit_weights_windowed(data, experts, weights, hyper);

    const LossBreakdown bd = total_cost(data, experts, weights, hyper);
    trace.push_back(bd);

    const Vector theta = detail::stack_params(experts);
    const double theta_delta = (theta - prev_theta).norm();
    const double omega_delta = (weights.matrix() - prev_omega).norm();
    const double cost_delta = std::isfinite(prev_cost)
                                  ? std::abs(prev_cost - bd.total) / std::max(1.0, std::abs(prev_cost))
                                  : std::numeric_limits<double>::infinity();
    prev_theta = theta;
    prev_omega = weights.matrix();
    prev_cost = bd.total;

    if (auto fired = check_termination(theta_delta, omega_delta, cost_delta, hyper, k)) {
      reason = *fired;
      break;
    }
  }

  std::vector<double> cost_trace;
  cost_trace.reserve(trace.size());
  for (const LossBreakdown& bd : trace) cost_trace.push_back(bd.total);
  GatingModel gating = train_gating(
      data.regressors(), weights, std::min<int>(hyper.gating_k, static_cast<int>(data.size())));

  FitReport report{
      MixtureModel{std::move(experts), std::move(weights), std::move(gating), hyper,
                   std::move(cost_trace)},
      std::min(k, hyper.k_max),
      reason,
      0,
      {prev_cost},
      std::move(trace),
      prev_cost};
  return report;
}

/// Runs coordinate_descent from `n_restarts` initial weight sequences: the
/// user prior first when supplied, the rest drawn row-wise uniformly on the
/// simplex from seeds split off hyper.seed. Returns the minimal-cost report;
/// ties break toward the lower restart index. Restarts are independent, so
/// `jobs > 1` runs them on threads without affecting the result.
inline FitReport multistart_fit(const Dataset& data, const std::vector<Expert>& specs,
                                const HyperParams& hyper,
                                const std::optional<WeightSequence>& prior = std::nullopt,
                                int jobs = 1) {
  hyper.validate(data.size());
  const int n = hyper.n_restarts;
  std::vector<WeightSequence> inits;
  inits.reserve(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) {
    if (r == 0 && prior) {
      inits.push_back(*prior);
      continue;
    }
    Rng rng(Rng::derive(hyper.seed, 0x5743 + static_cast<std::uint64_t>(r)));
    Matrix w(data.size(), hyper.experts);
    for (Index t = 0; t < data.size(); ++t) {
      w.row(t) = rng.next_simplex(hyper.experts).transpose();
    }
    inits.emplace_back(std::move(w));
  }

  std::vector<std::optional<FitReport>> reports(static_cast<size_t>(n));
  std::vector<std::string> errors(static_cast<size_t>(n));
  auto run_one = [&](int r) {
    try {
      reports[static_cast<size_t>(r)] = coordinate_descent(data, specs, inits[static_cast<size_t>(r)], hyper);
    } catch (const std::exception& e) {
      errors[static_cast<size_t>(r)] = e.what();
    }
  };

  if (jobs <= 1 || n == 1) {
    for (int r = 0; r < n; ++r) run_one(r);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int workers = std::min(jobs, n);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (int r = next.fetch_add(1); r < n; r = next.fetch_add(1)) run_one(r);
      });
    }
    for (auto& th : pool) th.join();
  }

  int best = -1;
  std::vector<double> costs(static_cast<size_t>(n));
  for (int r = 0; r < n; ++r) {
    if (!reports[static_cast<size_t>(r)]) {
      throw numeric_error("restart " + std::to_string(r) + " failed: " + errors[static_cast<size_t>(r)]);
    }
    costs[static_cast<size_t>(r)] = reports[static_cast<size_t>(r)]->final_cost;
    if (best < 0 || costs[static_cast<size_t>(r)] < costs[static_cast<size_t>(best)]) best = r;
  }
  FitReport out = std::move(*reports[static_cast<size_t>(best)]);
  out.restart_index = best;
  out.all_restart_costs = std::move(costs);
  return out;
}

}  // namespace moe
