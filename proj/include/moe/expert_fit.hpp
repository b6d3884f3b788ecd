#pragma once

#include <array>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "moe/core.hpp"
#include "moe/objective.hpp"

namespace moe {

/// State of the averaged-consensus ADMM: the averaged auxiliary sequence
/// zbar(t), the averaged scaled multipliers ubar(t), and the residuals of the
/// last completed iteration. `trace` records (iteration, primal, dual) rows.
struct AdmmState {
  Vector zbar;
  Vector ubar;
  double primal_residual = std::numeric_limits<double>::infinity();
  double dual_residual = std::numeric_limits<double>::infinity();
  int iteration = 0;
  std::vector<std::array<double, 3>> trace;
};

namespace detail {

inline Matrix feature_matrix(const Dataset& data, const Expert& expert) {
  Matrix phi(data.size(), expert.param_count());
  for (Index t = 0; t < data.size(); ++t) {
    phi.row(t) = expert.features(data.regressors().row(t).transpose()).transpose();
  }
  return phi;
}

/// Solves A theta = b for an SPD-up-to-regularization system. When the ridge
/// term is absent a rank check is performed first so unidentifiable
/// configurations surface as errors instead of silent pseudo-inverses.
inline Vector solve_normal_equations(const Matrix& a, const Vector& b, double ridge,
                                     const char* what) {
  if (ridge == 0.0) {
    Eigen::FullPivLU<Matrix> lu(a);
    if (lu.rank() < a.rows()) {
      throw numeric_error(std::string(what) +
                          ": normal matrix is rank-deficient and lambda_theta is zero");
    }
  }
  return Eigen::LDLT<Matrix>(a).solve(b);
}

}  // namespace detail

/// Per-expert weighted ridge fit of the local loss (the separable case):
/// minimizes sum_t omega_i(t) c_i (y(t) - phi_i(x(t)) . theta_i)^2
///           + lambda_theta ||theta_i||^2
/// independently for each expert.
inline std::vector<Expert> fit_separable(const Dataset& data, const std::vector<Expert>& specs,
                                         const WeightSequence& weights, const HyperParams& hyper) {
  if (weights.size() != data.size()) throw validation_error("weight sequence length mismatch");
  if (weights.experts() != static_cast<Index>(specs.size())) {
    throw validation_error("weight sequence expert count mismatch");
  }
  std::vector<Expert> out;
  out.reserve(specs.size());
  const Matrix& om = weights.matrix();
  for (size_t i = 0; i < specs.size(); ++i) {
    const Matrix phi = detail::feature_matrix(data, specs[i]);
    const Index p = phi.cols();
    const double ci = hyper.c_i(static_cast<Index>(i));
    Matrix a = hyper.lambda_theta * Matrix::Identity(p, p);
    Vector b = Vector::Zero(p);
    for (Index t = 0; t < data.size(); ++t) {
      const double w = om(t, static_cast<Index>(i)) * ci;
      if (w == 0.0) continue;
      a.noalias() += w * phi.row(t).transpose() * phi.row(t);
      b.noalias() += w * data.outputs()[t] * phi.row(t).transpose();
    }
    out.push_back(specs[i].with_params(
        detail::solve_normal_equations(a, b, hyper.lambda_theta, "fit_separable")));
  }
  return out;
}

/// Closed-form joint solve of step 1.1: minimizes the blended loss plus the
/// regularizer over all experts' parameters at once,
///   sum_t [ c (y - Omega(t) . f(x;Theta))^2
///           + beta sum_i omega_i(t) c_i (y - f_i(x))^2 ] + lambda ||Theta||^2.
/// Available whenever the experts are linear in their parameters, which this
/// library guarantees; the mixture term couples experts through the stacked
/// regressor kappa(t) = [omega_1 phi_1; ...; omega_M phi_M].
inline std::vector<Expert> fit_sharing_exact(const Dataset& data,
                                             const std::vector<Expert>& specs,
                                             const WeightSequence& weights,
                                             const HyperParams& hyper) {
  if (weights.size() != data.size()) throw validation_error("weight sequence length mismatch");
  const auto m = static_cast<Index>(specs.size());
  if (weights.experts() != m) throw validation_error("weight sequence expert count mismatch");
  std::vector<Matrix> phis;
  std::vector<Index> offsets;
  Index n = 0;
  for (const Expert& e : specs) {
    phis.push_back(detail::feature_matrix(data, e));
    offsets.push_back(n);
    n += e.param_count();
  }
  Matrix a = hyper.lambda_theta * Matrix::Identity(n, n);
  Vector b = Vector::Zero(n);
  const Matrix& om = weights.matrix();
  Vector kappa(n);
  for (Index t = 0; t < data.size(); ++t) {
    const double y = data.outputs()[t];
    for (Index i = 0; i < m; ++i) {
      kappa.segment(offsets[static_cast<size_t>(i)], phis[static_cast<size_t>(i)].cols()) =
          om(t, i) * phis[static_cast<size_t>(i)].row(t).transpose();
    }
    if (hyper.c != 0.0) {
      a.noalias() += hyper.c * kappa * kappa.transpose();
      b.noalias() += hyper.c * y * kappa;
    }
    for (Index i = 0; i < m; ++i) {
      const double w = hyper.beta * hyper.c_i(i) * om(t, i);
      if (w == 0.0) continue;
      const auto& phi = phis[static_cast<size_t>(i)];
      auto block = a.block(offsets[static_cast<size_t>(i)], offsets[static_cast<size_t>(i)],
                           phi.cols(), phi.cols());
      block.noalias() += w * phi.row(t).transpose() * phi.row(t);
      b.segment(offsets[static_cast<size_t>(i)], phi.cols()).noalias() +=
          w * y * phi.row(t).transpose();
    }
  }
  const Vector theta =
      detail::solve_normal_equations(a, b, hyper.lambda_theta, "fit_sharing_exact");
  std::vector<Expert> out;
  out.reserve(specs.size());
  for (Index i = 0; i < m; ++i) {
    out.push_back(specs[static_cast<size_t>(i)].with_params(
        theta.segment(offsets[static_cast<size_t>(i)], specs[static_cast<size_t>(i)].param_count())));
  }
  return out;
}

namespace detail {

/// Mixture predictions Omega(t) . f(x(t); Theta) over the horizon.
inline Vector mixture_prediction_vector(const Matrix& preds, const Matrix& om) {
  return (preds.array() * om.array()).rowwise().sum();
}

/// One theta update of the averaged ADMM given the consensus pressure
/// q(t) = Omega(t).f(x(t);Theta^j)/M - zbar(t) + ubar(t). The subproblem
///   h_i(theta) + (rho/2) sum_t (omega_i(t) (phi.theta - phi.theta^j) + q(t))^2
/// is a weighted ridge problem because the consensus deviation is affine in
/// theta_i.
inline Vector admm_theta_update(const Dataset& data, const Matrix& phi, const Vector& theta_prev,
                                const Eigen::Ref<const Vector>& omega_col, double ci,
                                const Vector& q, const HyperParams& hyper) {
  const Index p = phi.cols();
  Matrix a = hyper.lambda_theta * Matrix::Identity(p, p);
  Vector b = Vector::Zero(p);
  const double half_rho = 0.5 * hyper.rho;
  for (Index t = 0; t < data.size(); ++t) {
    const double w = omega_col[t];
    const double data_w = hyper.beta * ci * w;
    const auto phi_t = phi.row(t);
    if (data_w != 0.0) {
      a.noalias() += data_w * phi_t.transpose() * phi_t;
      b.noalias() += data_w * data.outputs()[t] * phi_t.transpose();
    }
    if (half_rho != 0.0 && w != 0.0) {
      a.noalias() += half_rho * w * w * phi_t.transpose() * phi_t;
      b.noalias() += half_rho * w * (w * phi_t.dot(theta_prev) - q[t]) * phi_t.transpose();
    }
  }
  return solve_normal_equations(a, b, hyper.lambda_theta, "admm_theta_step");
}

}  // namespace detail

/// Single theta step of the averaged ADMM for expert `i`, with all experts'
/// previous parameters supplied through `experts_prev`.
inline Vector admm_theta_step(const Dataset& data, size_t i,
                              const std::vector<Expert>& experts_prev,
                              const WeightSequence& weights, const AdmmState& state,
                              const HyperParams& hyper) {
  if (state.zbar.size() != data.size() || state.ubar.size() != data.size()) {
    throw validation_error("ADMM state sequences must have dataset length");
  }
  const Matrix preds = prediction_matrix(data, experts_prev);
  const double m = static_cast<double>(experts_prev.size());
  const Vector mixpred = detail::mixture_prediction_vector(preds, weights.matrix());
  const Vector q = mixpred / m - state.zbar + state.ubar;
  const Matrix phi = detail::feature_matrix(data, experts_prev[i]);
  return detail::admm_theta_update(data, phi, experts_prev[i].params(),
                                   weights.matrix().col(static_cast<Index>(i)),
                                   hyper.c_i(static_cast<Index>(i)), q, hyper);
}

/// Averaged auxiliary update. Each zbar(t) minimizes
///   c (y(t) - M zbar)^2 + (rho M / 2)(zbar - abar(t))^2,
/// with abar(t) = Omega(t).f(x(t);Theta^{j+1})/M + ubar(t), giving the closed
/// form zbar = (2 c y + rho abar) / (2 c M + rho).
inline Vector admm_zbar_step(const Dataset& data, const std::vector<Expert>& experts,
                             const WeightSequence& weights, const AdmmState& state,
                             const HyperParams& hyper) {
  const Matrix preds = prediction_matrix(data, experts);
  const double m = static_cast<double>(experts.size());
  const Vector abar = detail::mixture_prediction_vector(preds, weights.matrix()) / m + state.ubar;
  return (2.0 * hyper.c * data.outputs() + hyper.rho * abar) / (2.0 * hyper.c * m + hyper.rho);
}

/// Dual update: ubar(t) += Omega(t).f/M - zbar(t). Records the primal
/// residual max_t |Omega(t).f/M - zbar(t)| on the state.
inline void admm_dual_step(const Dataset& data, const std::vector<Expert>& experts,
                           const WeightSequence& weights, AdmmState& state) {
  const Matrix preds = prediction_matrix(data, experts);
  const double m = static_cast<double>(experts.size());
  const Vector consensus = detail::mixture_prediction_vector(preds, weights.matrix()) / m;
  const Vector residual = consensus - state.zbar;
  state.ubar += residual;
  state.primal_residual = residual.cwiseAbs().maxCoeff();
}

/// Full averaged-consensus ADMM for the sharing problem. Initialization is
/// consensus-feasible: Theta^0 is the separable fit, zbar^0 the corresponding
/// averaged mixture prediction, ubar^0 = 0. Iterates theta steps (computed
/// from a common snapshot, so expert order is immaterial), the zbar step and
/// the dual step until j_max or until both residuals fall below admm_tol.
inline std::pair<std::vector<Expert>, AdmmState> fit_admm(const Dataset& data,
                                                          const std::vector<Expert>& specs,
                                                          const WeightSequence& weights,
                                                          const HyperParams& hyper) {
  const auto m_count = specs.size();
  const double m = static_cast<double>(m_count);
  std::vector<Expert> experts = fit_separable(data, specs, weights, hyper);
  std::vector<Matrix> phis;
  phis.reserve(m_count);
  for (const Expert& e : experts) phis.push_back(detail::feature_matrix(data, e));

  AdmmState state;
  state.ubar = Vector::Zero(data.size());
  {
    const Matrix preds = prediction_matrix(data, experts);
    state.zbar = detail::mixture_prediction_vector(preds, weights.matrix()) / m;
  }

  const Matrix& om = weights.matrix();
  for (int j = 1; j <= hyper.j_max; ++j) {
    Matrix preds(data.size(), static_cast<Index>(m_count));
    for (size_t i = 0; i < m_count; ++i) {
      preds.col(static_cast<Index>(i)) = phis[i] * experts[i].params();
    }
    const Vector q = detail::mixture_prediction_vector(preds, om) / m - state.zbar + state.ubar;

    // theta steps all read the Theta^j snapshot; they are order-independent.
    std::vector<Vector> new_params(m_count);
    for (size_t i = 0; i < m_count; ++i) {
      new_params[i] =
          detail::admm_theta_update(data, phis[i], experts[i].params(),
                                    om.col(static_cast<Index>(i)),
                                    hyper.c_i(static_cast<Index>(i)), q, hyper);
    }
    for (size_t i = 0; i < m_count; ++i) experts[i].set_params(std::move(new_params[i]));

    const Vector zbar_next = admm_zbar_step(data, experts, weights, state, hyper);
    state.dual_residual = hyper.rho * (zbar_next - state.zbar).cwiseAbs().maxCoeff();
    state.zbar = zbar_next;
    admm_dual_step(data, experts, weights, state);
    state.iteration = j;
    state.trace.push_back({static_cast<double>(j), state.primal_residual, state.dual_residual});
    if (state.primal_residual <= hyper.admm_tol && state.dual_residual <= hyper.admm_tol) break;
  }
  return {std::move(experts), std::move(state)};
}

}  // namespace moe
