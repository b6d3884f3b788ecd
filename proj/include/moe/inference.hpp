#pragma once

#include <algorithm>
#include <numeric>
#include <utility>
#include <vector>

#include "moe/core.hpp"
#include "moe/weight_fit.hpp"

namespace moe {

/// Fits the k-NN gating model: stores the training pairs verbatim.
inline GatingModel train_gating(const Matrix& train_x, const WeightSequence& omega_star, int k) {
  if (train_x.rows() != omega_star.size()) throw validation_error("gating inputs misaligned");
  if (k < 1 || k > train_x.rows()) {
    throw validation_error("gating k must lie in [1, training size]");
  }
  GatingModel model;
  model.k = k;
  model.train_x = train_x;
  model.train_w = omega_star.matrix();
  return model;
}

/// Inverse-distance weighted average of the k nearest stored rows, projected
/// onto the simplex. Distance ties break toward the lowest stored index; an
/// exact feature match returns the stored row.
inline Vector gate_predict(const GatingModel& model, const Eigen::Ref<const Vector>& x) {
  if (model.train_x.rows() < 1) throw validation_error("gating model is empty");
  if (x.size() != model.train_x.cols()) throw validation_error("regressor dimension mismatch");
  const Index n = model.train_x.rows();
  std::vector<Index> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Vector dist(n);
  for (Index i = 0; i < n; ++i) dist[i] = (model.train_x.row(i).transpose() - x).norm();
  const Index k = std::min<Index>(model.k, n);
  std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](Index a, Index b) {
    if (dist[a] != dist[b]) return dist[a] < dist[b];
    return a < b;
  });
  if (dist[order[0]] < 1e-300) {
    return project_simplex(model.train_w.row(order[0]).transpose());
  }
  Vector acc = Vector::Zero(model.train_w.cols());
  double wsum = 0.0;
  for (Index j = 0; j < k; ++j) {
    const double w = 1.0 / dist[order[static_cast<size_t>(j)]];
    acc += w * model.train_w.row(order[static_cast<size_t>(j)]).transpose();
    wsum += w;
  }
  return project_simplex(acc / wsum);
}

struct RecursivePrediction {
  double y_hat = 0.0;
  Vector omega_hat;
  bool converged = true;
};

namespace detail {

/// Stationary point of the blended per-step loss in y for fixed weights:
/// y* = (c omega.f + beta sum_i omega_i c_i f_i) / (c + beta sum_i omega_i c_i).
inline double optimal_output(const Vector& f, const Vector& omega, const HyperParams& hyper) {
  double num = hyper.c * omega.dot(f);
  double den = hyper.c;
  for (Index i = 0; i < f.size(); ++i) {
    const double w = hyper.beta * omega[i] * hyper.c_i(i);
    num += w * f[i];
    den += w;
  }
  if (den <= 1e-300) return omega.dot(f);
  return num / den;
}

/// Projected-gradient solve of the single-row weight problem
///   c (y - w.f)^2 + beta sum_i w_i c_i (y - f_i)^2 + eta ||w - prev||^2
/// for fixed y, starting from `omega`.
inline Vector solve_step_weights(const Vector& f, double y, const Vector& omega_prev,
                                 Vector omega, const HyperParams& hyper, double eta) {
  Vector d(f.size());
  for (Index i = 0; i < f.size(); ++i) {
    const double r = y - f[i];
    d[i] = hyper.beta * hyper.c_i(i) * r * r;
  }
  auto value = [&](const Vector& w) {
    const double r = y - w.dot(f);
    return hyper.c * r * r + w.dot(d) + eta * (w - omega_prev).squaredNorm();
  };
  auto grad = [&](const Vector& w) -> Vector {
    const double r = y - w.dot(f);
    return Vector(-2.0 * hyper.c * r * f + d + 2.0 * eta * (w - omega_prev));
  };
  double v = value(omega);
  double step = 1.0;
  for (int it = 0; it < hyper.pg_max_iter; ++it) {
    const Vector g = grad(omega);
    const Vector mapped = project_simplex(omega - g);
    if ((mapped - omega).norm() <= hyper.pg_tol) break;
    bool accepted = false;
    while (step >= 1e-18) {
      const Vector cand = (step == 1.0) ? mapped : project_simplex(omega - step * g);
      const double vc = value(cand);
      if (vc <= v - (1e-4 / step) * (cand - omega).squaredNorm()) {
        omega = cand;
        v = vc;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
    step = std::min(step * 2.0, 1e8);
  }
  return omega;
}

}  // namespace detail

/// One-step-ahead recursive weight prediction: jointly minimizes over the
/// unknown output and the current weights
///   c (y - w.f)^2 + beta sum_i w_i c_i (y - f_i)^2 + eta ||w - omega_prev||^2
/// by alternating the closed-form y update with a projected-gradient weight
/// update. Both half-steps are exact, so the objective never increases.
inline RecursivePrediction predict_recursive(const Eigen::Ref<const Vector>& x_new,
                                             const Eigen::Ref<const Vector>& omega_prev,
                                             const std::vector<Expert>& experts,
                                             const HyperParams& hyper) {
  Matrix row(1, omega_prev.size());
  row.row(0) = omega_prev.transpose();
  if (!validate_weight_matrix(row).ok) throw validation_error("omega_prev is not feasible");
  const Vector f = expert_predictions(experts, x_new);
  RecursivePrediction out;
  Vector omega = omega_prev;
  double y = detail::optimal_output(f, omega, hyper);
  out.converged = false;
  for (int it = 0; it < hyper.pg_max_iter; ++it) {
    omega = detail::solve_step_weights(f, y, omega_prev, omega, hyper, hyper.eta);
    const double y_next = detail::optimal_output(f, omega, hyper);
    const bool y_done = std::abs(y_next - y) <= 1e-8 * std::max(1.0, std::abs(y));
    y = y_next;
    if (y_done) {
      out.converged = true;
      break;
    }
  }
  out.y_hat = y;
  out.omega_hat = omega;
  return out;
}

struct FilteredPrediction {
  Vector y_hat;
  Matrix omega;
  bool converged = true;
};

/// One-step-ahead filtered prediction: at each t the smoothness-coupled
/// weight problem is re-solved over the whole history up to t (capped at
/// hyper.filter_horizon rows), with the unknown current output handled by the
/// same closed-form alternation as predict_recursive. Observed outputs must
/// cover at least the first T-1 steps.
inline FilteredPrediction predict_filtered(const Matrix& x_seq, const Vector& y_observed,
                                           const std::vector<Expert>& experts,
                                           const HyperParams& hyper) {
  const Index horizon = x_seq.rows();
  if (horizon < 1) throw validation_error("empty regressor sequence");
  if (y_observed.size() < horizon - 1) {
    throw validation_error("filtered prediction needs outputs for all but the current step");
  }
  const auto m = static_cast<Index>(experts.size());
  Matrix f(horizon, m);
  for (Index t = 0; t < horizon; ++t) {
    f.row(t) = expert_predictions(experts, x_seq.row(t).transpose()).transpose();
  }

  FilteredPrediction out;
  out.y_hat.resize(horizon);
  out.omega.resize(horizon, m);
  Matrix refined = Matrix::Constant(horizon, m, 1.0 / static_cast<double>(m));

  for (Index t = 0; t < horizon; ++t) {
    const Index begin = std::max<Index>(0, t - hyper.filter_horizon + 1);
    const Index len = t - begin + 1;
    Vector anchor;
    const bool has_anchor = begin > 0;
    if (has_anchor) anchor = refined.row(begin - 1).transpose();

    Vector y_block(len);
    for (Index r = 0; r < len - 1; ++r) y_block[r] = y_observed[begin + r];
    const Vector f_t = f.row(t).transpose();
    double y_t = detail::optimal_output(f_t, refined.row(t).transpose(), hyper);

    bool step_converged = false;
    for (int it = 0; it < hyper.pg_max_iter; ++it) {
      y_block[len - 1] = y_t;
      detail::WeightBlockProblem prob(f.middleRows(begin, len), y_block, hyper, hyper.eta);
      if (has_anchor) prob.anchor_prev = &anchor;
      refined.middleRows(begin, len) =
          detail::solve_block(prob, refined.middleRows(begin, len), hyper).rows;
      const double y_next = detail::optimal_output(f_t, refined.row(t).transpose(), hyper);
      const bool done = std::abs(y_next - y_t) <= 1e-8 * std::max(1.0, std::abs(y_t));
      y_t = y_next;
      if (done) {
        step_converged = true;
        break;
      }
    }
    out.converged = out.converged && step_converged;
    out.y_hat[t] = y_t;
    out.omega.row(t) = refined.row(t);
  }
  return out;
}

}  // namespace moe
