#pragma once

#include <algorithm>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace moe {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Index = Eigen::Index;

/// Raised when inputs violate a documented precondition (bad dimensions,
/// infeasible weights, malformed files).
struct validation_error : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Raised when a numerically well-posed call cannot be completed
/// (rank-deficient normal equations, unstable simulation).
struct numeric_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Absolute tolerance separating floating-point drift from logic errors in
/// simplex constraints: entries within this tolerance are clamped, anything
/// beyond is rejected.
inline constexpr double kSimplexTol = 1e-9;

// ---------------------------------------------------------------------------
// Expert
// ---------------------------------------------------------------------------

enum class ExpertKind { linear, polynomial };

/// A local model that is linear in its parameters: f(x; theta) = phi(x) . theta.
///
/// Two feature maps are supported:
///  - linear:      phi(x) = x
///  - polynomial:  phi(x) = all monomials of total degree <= d, ordered by the
///                 lexicographic order of their exponent tuples (the constant
///                 term, exponent tuple (0,...,0), comes first).
///
/// The feature order is part of the serialized form, so a round-tripped expert
/// reproduces identical predictions.
class Expert {
 public:
  static Expert make_linear(Index n_inputs) {
    Expert e;
    e.kind_ = ExpertKind::linear;
    e.n_inputs_ = n_inputs;
    e.degree_ = 1;
    e.theta_ = Vector::Zero(n_inputs);
    return e;
  }

  static Expert make_polynomial(Index n_inputs, int degree) {
    if (n_inputs < 1 || degree < 0) {
      throw validation_error("polynomial expert needs n_inputs >= 1 and degree >= 0");
    }
    Expert e;
    e.kind_ = ExpertKind::polynomial;
    e.n_inputs_ = n_inputs;
    e.degree_ = degree;
    e.exponents_ = monomial_exponents(n_inputs, degree);
    e.theta_ = Vector::Zero(static_cast<Index>(e.exponents_.size()));
    return e;
  }

  ExpertKind kind() const { return kind_; }
  int degree() const { return degree_; }
  Index input_dim() const { return n_inputs_; }
  Index param_count() const { return theta_.size(); }
  const Vector& params() const { return theta_; }

  void set_params(Vector theta) {
    if (theta.size() != param_count()) {
      throw validation_error("parameter vector has wrong dimension");
    }
    theta_ = std::move(theta);
  }

  Expert with_params(Vector theta) const {
    Expert e = *this;
    e.set_params(std::move(theta));
    return e;
  }

  /// Exponent tuples of the polynomial features, in emission order.
  /// Empty for linear experts.
  const std::vector<std::vector<int>>& exponents() const { return exponents_; }

  Vector features(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != n_inputs_) {
      throw validation_error("regressor dimension does not match expert feature map");
    }
    if (kind_ == ExpertKind::linear) {
      return x;
    }
    Vector phi(static_cast<Index>(exponents_.size()));
    for (size_t k = 0; k < exponents_.size(); ++k) {
      double v = 1.0;
      for (Index j = 0; j < n_inputs_; ++j) {
        for (int p = 0; p < exponents_[k][static_cast<size_t>(j)]; ++p) v *= x[j];
      }
      phi[static_cast<Index>(k)] = v;
    }
    return phi;
  }

  double predict(const Eigen::Ref<const Vector>& x) const { return features(x).dot(theta_); }

  /// All exponent tuples with total degree <= degree over n inputs, sorted
  /// lexicographically; (0,...,0) is first.
  static std::vector<std::vector<int>> monomial_exponents(Index n_inputs, int degree) {
    std::vector<std::vector<int>> out;
    std::vector<int> tuple(static_cast<size_t>(n_inputs), 0);
    while (true) {
      int total = 0;
      for (int e : tuple) total += e;
      if (total <= degree) out.push_back(tuple);
      // lexicographic successor within the box [0, degree]^n
      int j = static_cast<int>(n_inputs) - 1;
      while (j >= 0) {
        if (tuple[static_cast<size_t>(j)] < degree) {
          ++tuple[static_cast<size_t>(j)];
          std::fill(tuple.begin() + j + 1, tuple.end(), 0);
          break;
        }
        --j;
      }
      if (j < 0) break;
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  Expert() = default;

  ExpertKind kind_ = ExpertKind::linear;
  Index n_inputs_ = 0;
  int degree_ = 1;
  std::vector<std::vector<int>> exponents_;
  Vector theta_;
};

// ---------------------------------------------------------------------------
// Weight sequences
// ---------------------------------------------------------------------------

/// Outcome of checking a weight matrix against the simplex constraints.
struct WeightReport {
  bool ok = true;
  Index t = -1;        ///< first offending row (0-based)
  Index i = -1;        ///< offending column for bound violations, -1 for row sums
  double magnitude = 0.0;
  std::string detail;
};

/// Reports the first entry outside [0,1] or row failing to sum to 1, beyond
/// the shared simplex tolerance.
inline WeightReport validate_weight_matrix(const Matrix& w) {
  WeightReport rep;
  for (Index t = 0; t < w.rows(); ++t) {
    for (Index i = 0; i < w.cols(); ++i) {
      const double v = w(t, i);
      if (!(v >= -kSimplexTol && v <= 1.0 + kSimplexTol)) {
        rep.ok = false;
        rep.t = t;
        rep.i = i;
        rep.magnitude = (v < 0.0) ? -v : v - 1.0;
        std::ostringstream os;
        os << "weight bound violation at (t=" << t << ", i=" << i << "): value " << v;
        rep.detail = os.str();
        return rep;
      }
    }
    const double sum = w.row(t).sum();
    if (std::abs(sum - 1.0) > kSimplexTol * static_cast<double>(w.cols())) {
      rep.ok = false;
      rep.t = t;
      rep.magnitude = std::abs(sum - 1.0);
      std::ostringstream os;
      os << "weight row " << t << " sums to " << sum << " (violation " << rep.magnitude << ")";
      rep.detail = os.str();
      return rep;
    }
  }
  return rep;
}

/// Per-time-step simplex weights over M experts, one row per sample.
/// Construction clamps floating-point drift within the simplex tolerance and
/// rejects anything worse.
class WeightSequence {
 public:
  explicit WeightSequence(Matrix w) : w_(std::move(w)) {
    if (w_.rows() < 1 || w_.cols() < 1) {
      throw validation_error("weight sequence must be non-empty");
    }
    const WeightReport rep = validate_weight_matrix(w_);
    if (!rep.ok) throw validation_error(rep.detail);
    for (Index t = 0; t < w_.rows(); ++t) {
      for (Index i = 0; i < w_.cols(); ++i) {
        w_(t, i) = std::clamp(w_(t, i), 0.0, 1.0);
      }
      w_.row(t) /= w_.row(t).sum();
    }
  }

  static WeightSequence uniform(Index T, Index M) {
    return WeightSequence(Matrix::Constant(T, M, 1.0 / static_cast<double>(M)));
  }

  /// One-hot sequence induced by a mode sequence s(t) in {0,...,M-1}.
  static WeightSequence one_hot(const std::vector<int>& modes, Index M) {
    Matrix w = Matrix::Zero(static_cast<Index>(modes.size()), M);
    for (size_t t = 0; t < modes.size(); ++t) {
      if (modes[t] < 0 || modes[t] >= M) throw validation_error("mode out of range");
      w(static_cast<Index>(t), modes[t]) = 1.0;
    }
    return WeightSequence(std::move(w));
  }

  Index size() const { return w_.rows(); }
  Index experts() const { return w_.cols(); }
  const Matrix& matrix() const { return w_; }
  Vector row(Index t) const { return w_.row(t).transpose(); }

 private:
  Matrix w_;
};

inline WeightReport validate_weights(const WeightSequence& w) {
  return validate_weight_matrix(w.matrix());
}

// ---------------------------------------------------------------------------
// Dataset
// ---------------------------------------------------------------------------

/// Time-ordered regressor/output pairs, optionally carrying benchmark
/// ground-truth weights. Immutable after construction.
class Dataset {
 public:
  Dataset(Matrix regressors, Vector outputs, std::optional<Matrix> true_weights = std::nullopt)
      : x_(std::move(regressors)), y_(std::move(outputs)), true_w_(std::move(true_weights)) {
    if (x_.rows() != y_.size()) {
      throw validation_error("regressors and outputs must have equal length");
    }
    if (x_.rows() < 1) throw validation_error("dataset must contain at least one sample");
    if (true_w_) {
      if (true_w_->rows() != x_.rows()) {
        throw validation_error("true weights must have one row per sample");
      }
      const WeightReport rep = validate_weight_matrix(*true_w_);
      if (!rep.ok) throw validation_error("true weights infeasible: " + rep.detail);
    }
  }

  Index size() const { return x_.rows(); }
  Index dim() const { return x_.cols(); }
  const Matrix& regressors() const { return x_; }
  const Vector& outputs() const { return y_; }
  const std::optional<Matrix>& true_weights() const { return true_w_; }

  Dataset slice(Index begin, Index len) const {
    if (begin < 0 || len < 1 || begin + len > size()) {
      throw validation_error("dataset slice out of range");
    }
    std::optional<Matrix> tw;
    if (true_w_) tw = true_w_->middleRows(begin, len);
    return Dataset(x_.middleRows(begin, len), y_.segment(begin, len), std::move(tw));
  }

  /// Concatenates rows outside [hold_begin, hold_begin+hold_len); used by
  /// cross-validation harnesses.
  Dataset drop_block(Index hold_begin, Index hold_len) const {
    const Index T = size();
    if (hold_begin < 0 || hold_len < 1 || hold_begin + hold_len > T || hold_len == T) {
      throw validation_error("invalid hold-out block");
    }
    const Index keep = T - hold_len;
    Matrix x(keep, dim());
    Vector y(keep);
    std::optional<Matrix> tw;
    if (true_w_) tw = Matrix(keep, true_w_->cols());
    Index r = 0;
    for (Index t = 0; t < T; ++t) {
      if (t >= hold_begin && t < hold_begin + hold_len) continue;
      x.row(r) = x_.row(t);
      y[r] = y_[t];
      if (tw) tw->row(r) = true_w_->row(t);
      ++r;
    }
    return Dataset(std::move(x), std::move(y), std::move(tw));
  }

 private:
  Matrix x_;
  Vector y_;
  std::optional<Matrix> true_w_;
};

/// Builds lagged ARX regressors x(t) = [y(t-1)...y(t-ny), u(t-1)...u(t-nu)].
/// The first max(ny, nu) samples lack history and are dropped.
inline Dataset build_arx_regressors(const std::vector<double>& outputs,
                                    const std::vector<double>& inputs, int ny, int nu) {
  if (outputs.empty() || inputs.empty()) throw validation_error("empty sequences");
  if (outputs.size() != inputs.size()) throw validation_error("mismatched sequence lengths");
  if (ny < 0 || nu < 0 || ny + nu < 1) throw validation_error("need ny, nu >= 0 and ny + nu >= 1");
  const int lag = std::max(ny, nu);
  const auto T = static_cast<Index>(outputs.size());
  if (T <= lag) throw validation_error("sequences shorter than the requested lag");
  Matrix x(T - lag, ny + nu);
  Vector y(T - lag);
  for (Index t = lag; t < T; ++t) {
    const Index r = t - lag;
    for (int k = 1; k <= ny; ++k) x(r, k - 1) = outputs[static_cast<size_t>(t - k)];
    for (int k = 1; k <= nu; ++k) x(r, ny + k - 1) = inputs[static_cast<size_t>(t - k)];
    y[r] = outputs[static_cast<size_t>(t)];
  }
  return Dataset(std::move(x), std::move(y));
}

// ---------------------------------------------------------------------------
// Hyper-parameters
// ---------------------------------------------------------------------------

/// Which solver carries out the expert update (step 1.1 of the alternation).
///  - exact: closed-form joint solve of the blended objective over all
///    parameters; available because experts are linear in their parameters.
///  - admm: the averaged consensus ADMM; exposes rho / j_max sensitivity.
///  - separable: per-expert weighted ridge on the local loss only (the
///    separable special case; ignores the mixture term).
enum class ExpertSolverKind { exact, admm, separable };

/// All tunables of the alternating fit and its inner solvers.
struct HyperParams {
  int experts = 2;                  ///< M
  double beta = 1e-6;               ///< local-vs-mixture trade-off
  double lambda_theta = 5e-3;       ///< parameter regularization
  double eta = 50.0;                ///< weight-transition penalty
  double rho = 1e-9;                ///< ADMM penalty parameter
  double c = 1.0;                   ///< mixture-loss coefficient
  std::vector<double> c_local = {}; ///< per-expert local-loss coefficients; empty = all 1
  int window = 100;                 ///< W, length of weight-fitting windows
  double eps_theta = 1e-6;
  double eps_omega = 1e-6;
  double eps_cost = 1e-9;           ///< epsilon_J
  int k_max = 70;                   ///< outer iteration cap
  int j_max = 120;                  ///< ADMM iteration cap
  int n_restarts = 5;
  std::uint64_t seed = 0;
  ExpertSolverKind expert_solver = ExpertSolverKind::exact;
  double admm_tol = 1e-8;           ///< residual-based early stop
  double pg_tol = 1e-12;            ///< projected-gradient stationarity tolerance
  int pg_max_iter = 5000;
  int gating_k = 5;                 ///< k-NN neighbours for the gating model
  int filter_horizon = 500;         ///< history cap for filtered inference

  double c_i(Index i) const {
    if (c_local.empty()) return 1.0;
    return c_local.at(static_cast<size_t>(i));
  }

  void validate(Index dataset_size = -1) const {
    if (experts < 1) throw validation_error("need at least one expert");
    if (beta < 0 || lambda_theta < 0 || eta < 0) {
      throw validation_error("beta, lambda_theta, eta must be non-negative");
    }
    if (rho <= 0) throw validation_error("rho must be positive");
    if (c < 0) throw validation_error("c must be non-negative");
    for (double ci : c_local) {
      if (ci <= 0) throw validation_error("per-expert coefficients must be positive");
    }
    if (!c_local.empty() && static_cast<int>(c_local.size()) != experts) {
      throw validation_error("c_local must have one entry per expert");
    }
    if (window < 2) throw validation_error("window length must be at least 2");
    if (eps_theta < 0 || eps_omega < 0 || eps_cost < 0) {
      throw validation_error("tolerances must be non-negative");
    }
    if (k_max < 1 || j_max < 1) throw validation_error("iteration caps must be positive");
    if (n_restarts < 1) throw validation_error("need at least one restart");
    if (gating_k < 1) throw validation_error("gating_k must be positive");
    if (dataset_size > 0 && window > dataset_size) {
      throw validation_error("window length exceeds dataset length");
    }
  }
};

// ---------------------------------------------------------------------------
// Gating model data (operations live in inference.hpp)
// ---------------------------------------------------------------------------

/// k-nearest-neighbour regressor from features to simplex weights. Stores the
/// training pairs verbatim; predictions are inverse-distance weighted averages
/// of the k nearest rows, projected back onto the simplex.
struct GatingModel {
  int k = 5;
  Matrix train_x;  ///< N x n_x stored regressors
  Matrix train_w;  ///< N x M stored weight rows
};

// ---------------------------------------------------------------------------
// Fitted model
// ---------------------------------------------------------------------------

/// A fitted convex combination of experts, ready for prediction.
struct MixtureModel {
  std::vector<Expert> experts;
  WeightSequence train_weights;
  std::optional<GatingModel> gating;
  HyperParams hyper;
  std::vector<double> cost_trace;  ///< J after each outer iteration
};

/// Prediction of the convex combination at a single regressor.
inline double mixture_predict(const std::vector<Expert>& experts,
                              const Eigen::Ref<const Vector>& omega,
                              const Eigen::Ref<const Vector>& x) {
  if (experts.empty()) throw validation_error("mixture needs at least one expert");
  if (omega.size() != static_cast<Index>(experts.size())) {
    throw validation_error("weight vector length must match expert count");
  }
  Matrix row(1, omega.size());
  row.row(0) = omega.transpose();
  const WeightReport rep = validate_weight_matrix(row);
  if (!rep.ok) throw validation_error("invalid simplex vector: " + rep.detail);
  double out = 0.0;
  for (size_t i = 0; i < experts.size(); ++i) {
    out += omega[static_cast<Index>(i)] * experts[i].predict(x);
  }
  return out;
}

/// Stacked expert predictions f(x; Theta) at one regressor.
inline Vector expert_predictions(const std::vector<Expert>& experts,
                                 const Eigen::Ref<const Vector>& x) {
  Vector f(static_cast<Index>(experts.size()));
  for (size_t i = 0; i < experts.size(); ++i) f[static_cast<Index>(i)] = experts[i].predict(x);
  return f;
}

/// T x M matrix of expert predictions over a dataset.
inline Matrix prediction_matrix(const Dataset& data, const std::vector<Expert>& experts) {
  Matrix f(data.size(), static_cast<Index>(experts.size()));
  for (Index t = 0; t < data.size(); ++t) {
    for (size_t i = 0; i < experts.size(); ++i) {
      f(t, static_cast<Index>(i)) = experts[i].predict(data.regressors().row(t).transpose());
    }
  }
  return f;
}

}  // namespace moe
