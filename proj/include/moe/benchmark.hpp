#pragma once

#include <atomic>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "moe/core.hpp"
#include "moe/inference.hpp"
#include "moe/rng.hpp"
#include "moe/trainer.hpp"

namespace moe::bench {

/// Reference second-order ARX coefficients of the two local models used by
/// the synthetic study: x(t) = [y(t-1), y(t-2), u(t-1), u(t-2)].
inline Matrix reference_parameters() {
  Matrix th(2, 4);
  th << 0.50, -0.30, 0.90, -0.80,
        0.10,  0.40, -0.60, -0.50;
  return th;
}

/// Configuration of the synthetic two-regime benchmark.
///
/// The true weight profile keeps model 1 active for the first `plateau_end`
/// samples, blends the two models with a half-cosine ramp until `ramp_end`,
/// and keeps model 2 active afterwards.
///
/// The PRBS amplitude defaults to 2: with unit amplitude the realized
/// signal-to-noise ratio at the nominal noise level is about 13 dB, far below
/// the ~20 dB operating point this benchmark targets; amplitude 2 lands it
/// there.
struct BenchmarkSpec {
  Index horizon = 6000;
  Matrix theta_true = reference_parameters();  ///< M x 4
  double noise_var = 4e-2;
  Index plateau_end = 1000;
  Index ramp_end = 5000;
  std::optional<Matrix> custom_profile;  ///< overrides the plateau/ramp shape
  double prbs_amplitude = 2.0;
  int prbs_hold = 1;
  std::uint64_t seed = 0;

  void validate() const {
    if (horizon < 1) throw validation_error("horizon must be positive");
    if (noise_var < 0) throw validation_error("noise variance must be non-negative");
    if (prbs_hold < 1) throw validation_error("hold must be at least 1");
    if (theta_true.rows() < 1 || theta_true.cols() != 4) {
      throw validation_error("theta_true must be M x 4");
    }
    if (custom_profile) {
      if (custom_profile->rows() != horizon || custom_profile->cols() != theta_true.rows()) {
        throw validation_error("custom profile must be horizon x M");
      }
      const WeightReport rep = validate_weight_matrix(*custom_profile);
      if (!rep.ok) throw validation_error("custom profile infeasible: " + rep.detail);
    } else if (theta_true.rows() != 2) {
      throw validation_error("the plateau/ramp profile is defined for M = 2; pass custom_profile");
    }
  }
};

/// Two-level pseudo-random binary signal in {-a, +a}, held for `hold` steps.
inline std::vector<double> gen_prbs(Index T, double amplitude, int hold, std::uint64_t seed) {
  if (T < 1) throw validation_error("need T >= 1");
  if (hold < 1) throw validation_error("need hold >= 1");
  Rng rng(Rng::derive(seed, 0x7062));
  std::vector<double> u(static_cast<size_t>(T));
  double level = 0.0;
  for (Index t = 0; t < T; ++t) {
    if (t % hold == 0) level = rng.next_u64() & 1u ? amplitude : -amplitude;
    u[static_cast<size_t>(t)] = level;
  }
  return u;
}

/// True weight matrix of the plateau/ramp profile (seed-independent).
inline Matrix weight_profile(const BenchmarkSpec& spec) {
  if (spec.custom_profile) return *spec.custom_profile;
  Matrix w(spec.horizon, 2);
  for (Index t = 1; t <= spec.horizon; ++t) {
    double w1 = 0.0;
    if (t <= spec.plateau_end) {
      w1 = 1.0;
    } else if (t <= spec.ramp_end) {
      const double phase = static_cast<double>(t - spec.plateau_end) /
                           static_cast<double>(spec.ramp_end - spec.plateau_end);
      w1 = 0.5 * (1.0 + std::cos(M_PI * phase));
    }
    w(t - 1, 0) = w1;
    w(t - 1, 1) = 1.0 - w1;
  }
  return w;
}

struct SimulationResult {
  Dataset dataset;
  double realized_snr_db = std::numeric_limits<double>::infinity();
  Vector clean;  ///< noise-free mixture output
};

namespace detail {

inline double variance(const Vector& v) {
  const double mean = v.mean();
  return (v.array() - mean).square().sum() / static_cast<double>(v.size());
}

}  // namespace detail

/// Simulates the switched-ARX mixture: x(t) = [y(t-1), y(t-2), u(t-1), u(t-2)]
/// with zero initial conditions, y(t) = sum_i w_i(t) x(t).theta_i + e(t).
/// Changing the seed changes u and e but never the weight profile.
inline SimulationResult simulate_mixture_full(const BenchmarkSpec& spec) {
  spec.validate();
  const Index T = spec.horizon;
  const std::vector<double> u = gen_prbs(T, spec.prbs_amplitude, spec.prbs_hold, spec.seed);
  const Matrix profile = weight_profile(spec);
  Rng noise(Rng::derive(spec.seed, 0x6e6f));
  const double sigma = std::sqrt(spec.noise_var);

  Matrix x(T, 4);
  Vector y(T), clean(T), e(T);
  double y1 = 0.0, y2 = 0.0;  // y(t-1), y(t-2)
  double u1 = 0.0, u2 = 0.0;
  for (Index t = 0; t < T; ++t) {
    x(t, 0) = y1;
    x(t, 1) = y2;
    x(t, 2) = u1;
    x(t, 3) = u2;
    double f = 0.0;
    for (Index i = 0; i < spec.theta_true.rows(); ++i) {
      f += profile(t, i) * spec.theta_true.row(i).dot(x.row(t));
    }
    clean[t] = f;
    e[t] = sigma * noise.next_normal();
    y[t] = f + e[t];
    if (!(std::abs(y[t]) <= 1e9)) {
      throw numeric_error("unstable simulation: |y(" + std::to_string(t + 1) + ")| exceeds 1e9");
    }
    y2 = y1;
    y1 = y[t];
    u2 = u1;
    u1 = u[static_cast<size_t>(t)];
  }
  SimulationResult res{Dataset(std::move(x), y, profile), 0.0, clean};
  const double noise_var = detail::variance(e);
  res.realized_snr_db = noise_var > 0.0
                            ? 10.0 * std::log10(detail::variance(clean) / noise_var)
                            : std::numeric_limits<double>::infinity();
  return res;
}

inline Dataset simulate_mixture(const BenchmarkSpec& spec) {
  return simulate_mixture_full(spec).dataset;
}

inline double mae(const Vector& y_true, const Vector& y_pred) {
  if (y_true.size() != y_pred.size()) throw validation_error("length mismatch");
  if (y_true.size() < 1) throw validation_error("empty sequences");
  return (y_true - y_pred).cwiseAbs().mean();
}

/// Clamped goodness of fit: max{1 - SSE/SST, 0} with SST around the sample
/// mean of the reference signal.
inline double gof(const Vector& y_true, const Vector& y_pred) {
  if (y_true.size() != y_pred.size()) throw validation_error("length mismatch");
  if (y_true.size() < 2) throw validation_error("need at least two samples");
  const double mean = y_true.mean();
  const double sst = (y_true.array() - mean).square().sum();
  if (sst == 0.0) throw validation_error("reference signal is constant");
  const double sse = (y_true - y_pred).squaredNorm();
  return std::max(1.0 - sse / sst, 0.0);
}

inline double snr_db(double signal_var, double noise_var) {
  if (signal_var <= 0.0 || noise_var <= 0.0) throw validation_error("variances must be positive");
  return 10.0 * std::log10(signal_var / noise_var);
}

enum class SweepParam { lambda_theta, eta, rho, noise_var };

inline const char* to_string(SweepParam p) {
  switch (p) {
    case SweepParam::lambda_theta: return "lambda_theta";
    case SweepParam::eta: return "eta";
    case SweepParam::rho: return "rho";
    case SweepParam::noise_var: return "noise_var";
  }
  return "?";
}

inline SweepParam parse_sweep_param(const std::string& s) {
  if (s == "lambda_theta" || s == "lambda-theta") return SweepParam::lambda_theta;
  if (s == "eta") return SweepParam::eta;
  if (s == "rho") return SweepParam::rho;
  if (s == "noise_var" || s == "noise-var") return SweepParam::noise_var;
  throw validation_error("unknown sweep parameter: " + s);
}

struct SweepRow {
  std::string param;
  double value = 0.0;
  int fold = 0;
  double mae = std::numeric_limits<double>::quiet_NaN();
  double gof = std::numeric_limits<double>::quiet_NaN();
  double snr_db = 0.0;
  double final_cost = std::numeric_limits<double>::quiet_NaN();
  std::string error;  ///< non-empty when the cell's fit failed
};

/// One-at-a-time sensitivity sweep with contiguous-block cross-validation.
///
/// For each value the benchmark is simulated once (hyper-parameter sweeps
/// share the same realization; a noise sweep re-scales the same noise
/// stream), each fold holds out one contiguous block, the model is fitted on
/// the remainder with multistart restarts, and validation outputs are
/// predicted through the gating model.
///
/// Sweeps over lambda_theta, eta and rho run the expert step through the
/// ADMM path (rho has no effect anywhere else), and raise the local-loss
/// coefficients to c_i = 30 when the caller left them at 1 so that the
/// per-expert data term is comparable to the swept penalty range; a
/// noise-variance sweep uses the solver configured in `base`.
inline std::vector<SweepRow> sweep(SweepParam param, const std::vector<double>& values,
                                   const BenchmarkSpec& base_spec, const HyperParams& base,
                                   int folds, int jobs = 1) {
  if (values.empty()) throw validation_error("empty sweep value list");
  if (folds < 2) throw validation_error("need at least two folds");
  std::vector<SweepRow> rows(values.size() * static_cast<size_t>(folds));

  auto run_cell = [&](size_t vi, int fold) {
    SweepRow& row = rows[vi * static_cast<size_t>(folds) + static_cast<size_t>(fold)];
    row.param = to_string(param);
    row.value = values[vi];
    row.fold = fold;
    try {
      BenchmarkSpec spec = base_spec;
      HyperParams hyper = base;
      switch (param) {
        case SweepParam::lambda_theta: hyper.lambda_theta = values[vi]; break;
        case SweepParam::eta: hyper.eta = values[vi]; break;
        case SweepParam::rho: hyper.rho = values[vi]; break;
        case SweepParam::noise_var: spec.noise_var = values[vi]; break;
      }
      if (param != SweepParam::noise_var) {
        hyper.expert_solver = ExpertSolverKind::admm;
        if (hyper.c_local.empty()) {
          hyper.c_local.assign(static_cast<size_t>(hyper.experts), 30.0);
        }
      }
      const SimulationResult sim = simulate_mixture_full(spec);
      row.snr_db = sim.realized_snr_db;

      const Index T = sim.dataset.size();
      const Index block = T / folds;
      const Index begin = static_cast<Index>(fold) * block;
      const Index len = (fold == folds - 1) ? T - begin : block;
      const Dataset train = sim.dataset.drop_block(begin, len);
      const Dataset val = sim.dataset.slice(begin, len);

      hyper.seed = Rng::derive(base.seed, 0xF01D + 1000 * vi + static_cast<std::uint64_t>(fold));
      std::vector<Expert> specs(static_cast<size_t>(hyper.experts),
                                Expert::make_linear(sim.dataset.dim()));
      const FitReport report = multistart_fit(train, specs, hyper);

      Vector y_hat(val.size());
      for (Index t = 0; t < val.size(); ++t) {
        const Vector x = val.regressors().row(t).transpose();
        const Vector w = gate_predict(*report.model.gating, x);
        y_hat[t] = mixture_predict(report.model.experts, w, x);
      }
      row.mae = mae(val.outputs(), y_hat);
      row.gof = gof(val.outputs(), y_hat);
      row.final_cost = report.final_cost;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  };

  std::vector<std::pair<size_t, int>> cells;
  for (size_t vi = 0; vi < values.size(); ++vi) {
    for (int f = 0; f < folds; ++f) cells.emplace_back(vi, f);
  }
  if (jobs <= 1) {
    for (const auto& [vi, f] : cells) run_cell(vi, f);
  } else {
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    const size_t workers = std::min<size_t>(static_cast<size_t>(jobs), cells.size());
    for (size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
          run_cell(cells[i].first, cells[i].second);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  return rows;
}

}  // namespace moe::bench
