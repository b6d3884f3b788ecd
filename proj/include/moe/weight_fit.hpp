#pragma once

#include <algorithm>
#include <optional>
#include <vector>

#include "moe/core.hpp"
#include "moe/objective.hpp"

namespace moe {

/// Euclidean projection onto the probability simplex via sort-and-threshold.
inline Vector project_simplex(const Eigen::Ref<const Vector>& v) {
  const Index m = v.size();
  if (m < 1) throw validation_error("cannot project an empty vector");
  std::vector<double> u(v.data(), v.data() + m);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumsum = 0.0;
  double tau = 0.0;
  Index support = 0;
  for (Index j = 0; j < m; ++j) {
    cumsum += u[static_cast<size_t>(j)];
    const double cand = (cumsum - 1.0) / static_cast<double>(j + 1);
    if (u[static_cast<size_t>(j)] - cand > 0.0) {
      tau = cand;
      support = j + 1;
    }
  }
  (void)support;
  Vector out(m);
  for (Index j = 0; j < m; ++j) out[j] = std::max(v[j] - tau, 0.0);
  return out;
}

/// Successive weight-fitting windows with a single shared step; union covers
/// the whole horizon.
struct WindowPlan {
  std::vector<Index> starts;
  int window = 2;
};

inline WindowPlan make_window_plan(Index T, int window) {
  if (T < 1) throw validation_error("empty horizon");
  if (window < 2) throw validation_error("window length must be at least 2");
  WindowPlan plan;
  plan.window = window;
  Index s = 0;
  while (true) {
    plan.starts.push_back(s);
    if (s + window >= T) break;
    s += window - 1;
  }
  return plan;
}

struct WindowResult {
  Matrix rows;
  bool converged = true;
  int iterations = 0;
};

namespace detail {

/// Quadratic weight subproblem over a block of rows: mixture residuals,
/// beta-weighted local terms (linear in the weights), and eta-weighted
/// transitions, optionally tied to fixed neighbouring rows on either side.
struct WeightBlockProblem {
  const Matrix& preds;   // block rows of f(x(t); Theta), w x M
  const Vector& outputs; // w
  Matrix local_coeff;    // w x M, entries beta * c_i * (y - f_i)^2
  double c = 1.0;
  double eta = 0.0;
  const Vector* anchor_prev = nullptr;
  const Vector* anchor_next = nullptr;

  WeightBlockProblem(const Matrix& f, const Vector& y, const HyperParams& hyper, double eta_in)
      : preds(f), outputs(y), c(hyper.c), eta(eta_in) {
    local_coeff.resize(f.rows(), f.cols());
    for (Index t = 0; t < f.rows(); ++t) {
      for (Index i = 0; i < f.cols(); ++i) {
        const double r = y[t] - f(t, i);
        local_coeff(t, i) = hyper.beta * hyper.c_i(i) * r * r;
      }
    }
  }

  double value(const Matrix& om) const {
    double acc = 0.0;
    for (Index t = 0; t < om.rows(); ++t) {
      const double r = outputs[t] - om.row(t).dot(preds.row(t));
      acc += c * r * r + om.row(t).dot(local_coeff.row(t));
    }
    for (Index t = 1; t < om.rows(); ++t) acc += eta * (om.row(t) - om.row(t - 1)).squaredNorm();
    if (anchor_prev) acc += eta * (om.row(0).transpose() - *anchor_prev).squaredNorm();
    if (anchor_next) acc += eta * (*anchor_next - om.row(om.rows() - 1).transpose()).squaredNorm();
    return acc;
  }

  void gradient(const Matrix& om, Matrix& g) const {
    g.resize(om.rows(), om.cols());
    for (Index t = 0; t < om.rows(); ++t) {
      const double r = outputs[t] - om.row(t).dot(preds.row(t));
      g.row(t) = -2.0 * c * r * preds.row(t) + local_coeff.row(t);
    }
    for (Index t = 1; t < om.rows(); ++t) {
      const auto d = (2.0 * eta) * (om.row(t) - om.row(t - 1));
      g.row(t) += d;
      g.row(t - 1) -= d;
    }
    if (anchor_prev) g.row(0) += (2.0 * eta) * (om.row(0) - anchor_prev->transpose());
    if (anchor_next) g.row(om.rows() - 1) -= (2.0 * eta) * (anchor_next->transpose() - om.row(om.rows() - 1));
  }

  /// Quadratic form d^T H d of the objective Hessian; the local term is
  /// linear and drops out.
  double curvature_along(const Matrix& d) const {
    double acc = 0.0;
    for (Index t = 0; t < d.rows(); ++t) {
      const double fd = d.row(t).dot(preds.row(t));
      acc += 2.0 * c * fd * fd;
    }
    for (Index t = 1; t < d.rows(); ++t) acc += 2.0 * eta * (d.row(t) - d.row(t - 1)).squaredNorm();
    if (anchor_prev) acc += 2.0 * eta * d.row(0).squaredNorm();
    if (anchor_next) acc += 2.0 * eta * d.row(d.rows() - 1).squaredNorm();
    return acc;
  }
};

inline Matrix project_rows(Matrix v) {
  for (Index t = 0; t < v.rows(); ++t) {
    v.row(t) = project_simplex(v.row(t).transpose()).transpose();
  }
  return v;
}

/// Projected gradient with Armijo backtracking. Starts from `om`, which must
/// be row-wise feasible; only descent steps are accepted, so the returned
/// block never has a larger objective than the input.
inline WindowResult solve_block(const WeightBlockProblem& prob, Matrix om, const HyperParams& hyper) {
  WindowResult res;
  double value = prob.value(om);
  double step = 1.0;
  Matrix grad, cand;
  int it = 0;
  for (; it < hyper.pg_max_iter; ++it) {
    prob.gradient(om, grad);
    const Matrix mapped = project_rows(om - grad);
    if ((mapped - om).norm() <= hyper.pg_tol) break;
    bool accepted = false;
    while (step >= 1e-18) {
      cand = (step == 1.0) ? mapped : project_rows(om - step * grad);
      const double v = prob.value(cand);
      if (v <= value - (1e-4 / step) * (cand - om).squaredNorm()) {
        om = cand;
        value = v;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // step floor reached; treat as stationary
    step = std::min(step * 2.0, 1e8);
  }
  res.rows = std::move(om);
  res.converged = it < hyper.pg_max_iter;
  res.iterations = it;
  return res;
}

}  // namespace detail

/// Per-step weight optimization with the transition penalty ignored; each row
/// is solved independently from a uniform start (which doubles as the
/// tie-break under a flat objective).
inline WeightSequence solve_weights_pointwise(const Dataset& data,
                                              const std::vector<Expert>& experts,
                                              const HyperParams& hyper) {
  const Matrix f = prediction_matrix(data, experts);
  const auto m = static_cast<Index>(experts.size());
  Matrix om(data.size(), m);
  for (Index t = 0; t < data.size(); ++t) {
    const Matrix fblock = f.middleRows(t, 1);
    const Vector yblock = data.outputs().segment(t, 1);
    detail::WeightBlockProblem prob(fblock, yblock, hyper, 0.0);
    Matrix init = Matrix::Constant(1, m, 1.0 / static_cast<double>(m));
    om.row(t) = detail::solve_block(prob, std::move(init), hyper).rows.row(0);
  }
  return WeightSequence(std::move(om));
}

/// Solves the weight subproblem over one slice [begin, begin+len) of the
/// dataset. `anchor_prev` (the accepted row preceding the slice) and
/// `anchor_next` (the current row following it) enter the transition penalty
/// as fixed rows, keeping each window solve a true block-descent step on the
/// full-horizon objective.
inline WindowResult solve_weights_window(const Dataset& data, Index begin, Index len,
                                         const std::vector<Expert>& experts,
                                         const Matrix& omega_init,
                                         const Vector* anchor_prev, const Vector* anchor_next,
                                         const HyperParams& hyper) {
  if (omega_init.rows() != len) throw validation_error("omega_init must cover the slice");
  const Dataset slice = data.slice(begin, len);
  const Matrix f = prediction_matrix(slice, experts);
  const Vector y = slice.outputs();
  detail::WeightBlockProblem prob(f, y, hyper, hyper.eta);
  prob.anchor_prev = anchor_prev;
  prob.anchor_next = anchor_next;
  return detail::solve_block(prob, detail::project_rows(omega_init), hyper);
}

/// Windowed weight fitting over the full horizon. Windows overlap by one
/// step; the shared row is re-solved by the later window (its value from the
/// earlier window is overwritten). Never increases the full objective
/// relative to `omega_prev` when the experts are held fixed.
inline WeightSequence fit_weights_windowed(const Dataset& data, const std::vector<Expert>& experts,
                                           const WeightSequence& omega_prev,
                                           const HyperParams& hyper) {
  if (omega_prev.size() != data.size()) throw validation_error("weight sequence length mismatch");
  const Index T = data.size();
  const int window = static_cast<int>(std::min<Index>(hyper.window, T));
  const Matrix f = prediction_matrix(data, experts);
  Matrix om = omega_prev.matrix();
  const WindowPlan plan = make_window_plan(T, std::max(window, 2));
  for (const Index s : plan.starts) {
    const Index len = std::min<Index>(plan.window, T - s);
    const Matrix fblock = f.middleRows(s, len);
    const Vector yblock = data.outputs().segment(s, len);
    detail::WeightBlockProblem prob(fblock, yblock, hyper, hyper.eta);
    Vector prev, next;
    if (s > 0) {
      prev = om.row(s - 1).transpose();
      prob.anchor_prev = &prev;
    }
    if (s + len < T) {
      next = om.row(s + len).transpose();
      prob.anchor_next = &next;
    }
    om.middleRows(s, len) = detail::solve_block(prob, om.middleRows(s, len), hyper).rows;
  }
  return WeightSequence(std::move(om));
}

}  // namespace moe
