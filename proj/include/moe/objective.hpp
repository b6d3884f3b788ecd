#pragma once

#include <vector>

#include "moe/core.hpp"

namespace moe {

/// Additive decomposition of the fitting objective
///   J = mix + beta * local + regularizer + shaper.
/// `local_term` is stored unscaled; `total` applies beta.
struct LossBreakdown {
  double mix_term = 0.0;
  double local_term = 0.0;
  double regularizer_term = 0.0;
  double shaper_term = 0.0;
  double total = 0.0;
};

/// c * (y - omega . preds)^2 for one time step.
inline double mix_loss(double y, const Eigen::Ref<const Vector>& omega,
                       const Eigen::Ref<const Vector>& preds, double c) {
  if (omega.size() != preds.size()) throw validation_error("omega/prediction length mismatch");
  const double r = y - omega.dot(preds);
  return c * r * r;
}

/// Sum_i omega_i * c_i * (y - f_i(x))^2 for one time step.
inline double local_loss(const Eigen::Ref<const Vector>& x, double y,
                         const std::vector<Expert>& experts,
                         const Eigen::Ref<const Vector>& omega,
                         const std::vector<double>& c_list) {
  const auto m = static_cast<Index>(experts.size());
  if (omega.size() != m || static_cast<Index>(c_list.size()) != m) {
    throw validation_error("omega, experts, c_list must have equal length");
  }
  double acc = 0.0;
  for (Index i = 0; i < m; ++i) {
    const double r = y - experts[static_cast<size_t>(i)].predict(x);
    acc += omega[i] * c_list[static_cast<size_t>(i)] * r * r;
  }
  return acc;
}

/// Blended per-step loss: mixture fidelity plus beta-weighted local fidelity.
inline double step_loss(const Eigen::Ref<const Vector>& x, double y,
                        const Eigen::Ref<const Vector>& omega,
                        const std::vector<Expert>& experts, const HyperParams& hyper) {
  const Vector f = expert_predictions(experts, x);
  std::vector<double> cl(experts.size());
  for (size_t i = 0; i < experts.size(); ++i) cl[i] = hyper.c_i(static_cast<Index>(i));
  return mix_loss(y, omega, f, hyper.c) + hyper.beta * local_loss(x, y, experts, omega, cl);
}

/// eta * sum_{t>=2} ||Omega(t) - Omega(t-1)||^2; zero for a single row.
inline double shaper(const WeightSequence& w, double eta) {
  double acc = 0.0;
  const Matrix& m = w.matrix();
  for (Index t = 1; t < m.rows(); ++t) {
    acc += (m.row(t) - m.row(t - 1)).squaredNorm();
  }
  return eta * acc;
}

/// lambda * sum_i ||theta_i||^2.
inline double regularizer(const std::vector<Expert>& experts, double lambda_theta) {
  double acc = 0.0;
  for (const Expert& e : experts) acc += e.params().squaredNorm();
  return lambda_theta * acc;
}

/// Full objective over a dataset, with the components reported separately.
inline LossBreakdown total_cost(const Dataset& data, const std::vector<Expert>& experts,
                                const WeightSequence& w, const HyperParams& hyper) {
  if (w.size() != data.size()) throw validation_error("weight sequence length mismatch");
  if (w.experts() != static_cast<Index>(experts.size())) {
    throw validation_error("weight sequence expert count mismatch");
  }
  LossBreakdown out;
  const Matrix f = prediction_matrix(data, experts);
  const Matrix& om = w.matrix();
  for (Index t = 0; t < data.size(); ++t) {
    const double y = data.outputs()[t];
    const double rm = y - om.row(t).dot(f.row(t));
    out.mix_term += hyper.c * rm * rm;
    for (Index i = 0; i < f.cols(); ++i) {
      const double rl = y - f(t, i);
      out.local_term += om(t, i) * hyper.c_i(i) * rl * rl;
    }
  }
  out.regularizer_term = regularizer(experts, hyper.lambda_theta);
  out.shaper_term = shaper(w, hyper.eta);
  out.total = out.mix_term + hyper.beta * out.local_term + out.regularizer_term + out.shaper_term;
  return out;
}

/// Objective of the degenerate jump model where mode s(t) selects the active
/// expert. Computed directly from the mode sequence (per-step losses through
/// the selected expert, switch count times 2 for the shaper) rather than by
/// materializing one-hot weights, so it can serve as an independent check of
/// the one-hot reduction.
inline double jump_cost(const Dataset& data, const std::vector<Expert>& experts,
                        const std::vector<int>& modes, const HyperParams& hyper) {
  if (static_cast<Index>(modes.size()) != data.size()) {
    throw validation_error("mode sequence length mismatch");
  }
  const auto m = static_cast<int>(experts.size());
  double acc = 0.0;
  for (Index t = 0; t < data.size(); ++t) {
    const int s = modes[static_cast<size_t>(t)];
    if (s < 0 || s >= m) throw validation_error("mode out of range");
    const double y = data.outputs()[t];
    const double f = experts[static_cast<size_t>(s)].predict(data.regressors().row(t).transpose());
    const double r = y - f;
    acc += hyper.c * r * r + hyper.beta * hyper.c_i(s) * r * r;
    if (t > 0 && modes[static_cast<size_t>(t - 1)] != s) acc += 2.0 * hyper.eta;
  }
  return acc + regularizer(experts, hyper.lambda_theta);
}

}  // namespace moe
