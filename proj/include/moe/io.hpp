#pragma once

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "moe/benchmark.hpp"
#include "moe/core.hpp"
#include "moe/expert_fit.hpp"
#include "moe/trainer.hpp"

namespace moe::io {

inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace detail {

inline double parse_double(const std::string& s) {
  double v = 0.0;
  const auto* begin = s.data();
  const auto* end = s.data() + s.size();
  while (begin != end && (*begin == ' ' || *begin == '\t')) ++begin;
  const auto res = std::from_chars(begin, end, v);
  if (res.ec != std::errc{}) throw validation_error("cannot parse number: '" + s + "'");
  return v;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  return out;
}

inline std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw validation_error("cannot open for writing: " + path);
  return os;
}

inline std::ifstream open_in(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw validation_error("cannot open for reading: " + path);
  return is;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dataset CSV: header `t,y,x1,...,xn[,omega1,...,omegaM]`
// ---------------------------------------------------------------------------

inline void write_dataset_csv(const std::string& path, const Dataset& data) {
  std::ofstream os = detail::open_out(path);
  os << "t,y";
  for (Index j = 0; j < data.dim(); ++j) os << ",x" << (j + 1);
  if (data.true_weights()) {
    for (Index j = 0; j < data.true_weights()->cols(); ++j) os << ",omega" << (j + 1);
  }
  os << "\n";
  for (Index t = 0; t < data.size(); ++t) {
    os << (t + 1) << ',' << fmt17(data.outputs()[t]);
    for (Index j = 0; j < data.dim(); ++j) os << ',' << fmt17(data.regressors()(t, j));
    if (data.true_weights()) {
      for (Index j = 0; j < data.true_weights()->cols(); ++j) {
        os << ',' << fmt17((*data.true_weights())(t, j));
      }
    }
    os << "\n";
  }
}

inline Dataset read_dataset_csv(const std::string& path) {
  std::ifstream is = detail::open_in(path);
  std::string line;
  if (!std::getline(is, line)) throw validation_error("empty dataset file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const std::vector<std::string> header = detail::split_csv(line);
  if (header.size() < 3 || header[0] != "t" || header[1] != "y") {
    throw validation_error("dataset header must start with t,y,x1,...");
  }
  Index n_x = 0, n_w = 0;
  for (size_t j = 2; j < header.size(); ++j) {
    if (header[j].rfind("x", 0) == 0 && n_w == 0) {
      ++n_x;
    } else if (header[j].rfind("omega", 0) == 0) {
      ++n_w;
    } else {
      throw validation_error("unexpected dataset column: " + header[j]);
    }
  }
  if (n_x < 1) throw validation_error("dataset needs at least one regressor column");
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = detail::split_csv(line);
    if (fields.size() != header.size()) {
      throw validation_error("dataset row has wrong field count: " + line);
    }
    std::vector<double> row;
    row.reserve(fields.size() - 1);
    for (size_t j = 1; j < fields.size(); ++j) row.push_back(detail::parse_double(fields[j]));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw validation_error("dataset has no samples");
  const auto T = static_cast<Index>(rows.size());
  Matrix x(T, n_x);
  Vector y(T);
  std::optional<Matrix> w;
  if (n_w > 0) w = Matrix(T, n_w);
  for (Index t = 0; t < T; ++t) {
    const auto& row = rows[static_cast<size_t>(t)];
    y[t] = row[0];
    for (Index j = 0; j < n_x; ++j) x(t, j) = row[static_cast<size_t>(1 + j)];
    for (Index j = 0; j < n_w; ++j) (*w)(t, j) = row[static_cast<size_t>(1 + n_x + j)];
  }
  return Dataset(std::move(x), std::move(y), std::move(w));
}

// ---------------------------------------------------------------------------
// Model file: line-oriented text with parameters at 17 significant digits
// ---------------------------------------------------------------------------

inline void write_expert(std::ostream& os, const Expert& e) {
  os << "kind " << (e.kind() == ExpertKind::linear ? "linear" : "polynomial") << "\n";
  os << "inputs " << e.input_dim() << "\n";
  os << "degree " << e.degree() << "\n";
  if (e.kind() == ExpertKind::polynomial) {
    os << "features " << e.exponents().size() << "\n";
    for (const auto& tuple : e.exponents()) {
      os << "feat";
      for (int p : tuple) os << ' ' << p;
      os << "\n";
    }
  }
  os << "theta";
  for (Index j = 0; j < e.param_count(); ++j) os << ' ' << fmt17(e.params()[j]);
  os << "\n";
}

inline void write_model(const std::string& path, const MixtureModel& model) {
  std::ofstream os = detail::open_out(path);
  os << "moe-model v1\n";
  const HyperParams& h = model.hyper;
  os << "experts " << model.experts.size() << "\n";
  os << "hyper beta " << fmt17(h.beta) << "\n";
  os << "hyper lambda_theta " << fmt17(h.lambda_theta) << "\n";
  os << "hyper eta " << fmt17(h.eta) << "\n";
  os << "hyper rho " << fmt17(h.rho) << "\n";
  os << "hyper c " << fmt17(h.c) << "\n";
  os << "hyper window " << h.window << "\n";
  os << "hyper gating_k " << h.gating_k << "\n";
  os << "hyper filter_horizon " << h.filter_horizon << "\n";
  os << "hyper c_local";
  for (size_t i = 0; i < model.experts.size(); ++i) os << ' ' << fmt17(h.c_i(static_cast<Index>(i)));
  os << "\n";
  for (size_t i = 0; i < model.experts.size(); ++i) {
    os << "expert " << i << "\n";
    write_expert(os, model.experts[i]);
  }
  const Matrix& w = model.train_weights.matrix();
  os << "train_weights " << w.rows() << ' ' << w.cols() << "\n";
  for (Index t = 0; t < w.rows(); ++t) {
    for (Index j = 0; j < w.cols(); ++j) os << (j ? " " : "") << fmt17(w(t, j));
    os << "\n";
  }
  if (model.gating) {
    const GatingModel& g = *model.gating;
    os << "gating " << g.k << ' ' << g.train_x.rows() << ' ' << g.train_x.cols() << ' '
       << g.train_w.cols() << "\n";
    for (Index t = 0; t < g.train_x.rows(); ++t) {
      for (Index j = 0; j < g.train_x.cols(); ++j) os << (j ? " " : "") << fmt17(g.train_x(t, j));
      for (Index j = 0; j < g.train_w.cols(); ++j) os << ' ' << fmt17(g.train_w(t, j));
      os << "\n";
    }
  }
  os << "cost_trace " << model.cost_trace.size() << "\n";
  for (double v : model.cost_trace) os << fmt17(v) << "\n";
  os << "end\n";
}

inline MixtureModel read_model(const std::string& path) {
  std::ifstream is = detail::open_in(path);
  std::string line;
  auto next_line = [&]() -> std::string {
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) return line;
    }
    throw validation_error("truncated model file: " + path);
  };
  if (next_line() != "moe-model v1") throw validation_error("not a moe model file: " + path);

  size_t n_experts = 0;
  HyperParams hyper;
  std::vector<Expert> experts;
  std::optional<Matrix> weights;
  std::optional<GatingModel> gating;
  std::vector<double> trace;

  while (true) {
    const std::string l = next_line();
    std::istringstream ls(l);
    std::string tag;
    ls >> tag;
    if (tag == "end") break;
    if (tag == "experts") {
      ls >> n_experts;
    } else if (tag == "hyper") {
      std::string key;
      ls >> key;
      if (key == "beta") ls >> hyper.beta;
      else if (key == "lambda_theta") ls >> hyper.lambda_theta;
      else if (key == "eta") ls >> hyper.eta;
      else if (key == "rho") ls >> hyper.rho;
      else if (key == "c") ls >> hyper.c;
      else if (key == "window") ls >> hyper.window;
      else if (key == "gating_k") ls >> hyper.gating_k;
      else if (key == "filter_horizon") ls >> hyper.filter_horizon;
      else if (key == "c_local") {
        hyper.c_local.clear();
        double v;
        while (ls >> v) hyper.c_local.push_back(v);
      }
    } else if (tag == "expert") {
      std::string kind;
      Index inputs = 0;
      int degree = 1;
      {
        std::istringstream s(next_line());
        std::string t2;
        s >> t2 >> kind;
      }
      {
        std::istringstream s(next_line());
        std::string t2;
        s >> t2 >> inputs;
      }
      {
        std::istringstream s(next_line());
        std::string t2;
        s >> t2 >> degree;
      }
      Expert e = Expert::make_linear(inputs);
      if (kind == "polynomial") {
        e = Expert::make_polynomial(inputs, degree);
        std::istringstream s(next_line());
        std::string t2;
        size_t n_feat = 0;
        s >> t2 >> n_feat;
        if (n_feat != e.exponents().size()) {
          throw validation_error("stored feature count disagrees with reconstructed order");
        }
        for (size_t f = 0; f < n_feat; ++f) {
          std::istringstream fs(next_line());
          std::string t3;
          fs >> t3;
          for (Index j = 0; j < inputs; ++j) {
            int p = 0;
            fs >> p;
            if (p != e.exponents()[f][static_cast<size_t>(j)]) {
              throw validation_error("stored feature order disagrees with reconstructed order");
            }
          }
        }
      } else if (kind != "linear") {
        throw validation_error("unknown expert kind: " + kind);
      }
      std::istringstream ts(next_line());
      std::string t2;
      ts >> t2;
      Vector theta(e.param_count());
      for (Index j = 0; j < theta.size(); ++j) {
        std::string num;
        ts >> num;
        theta[j] = detail::parse_double(num);
      }
      e.set_params(std::move(theta));
      experts.push_back(std::move(e));
    } else if (tag == "train_weights") {
      Index rows = 0, cols = 0;
      ls >> rows >> cols;
      Matrix w(rows, cols);
      for (Index t = 0; t < rows; ++t) {
        std::istringstream rs(next_line());
        std::string num;
        for (Index j = 0; j < cols; ++j) {
          rs >> num;
          w(t, j) = detail::parse_double(num);
        }
      }
      weights = std::move(w);
    } else if (tag == "gating") {
      GatingModel g;
      Index rows = 0, nx = 0, m = 0;
      ls >> g.k >> rows >> nx >> m;
      g.train_x.resize(rows, nx);
      g.train_w.resize(rows, m);
      for (Index t = 0; t < rows; ++t) {
        std::istringstream rs(next_line());
        std::string num;
        for (Index j = 0; j < nx; ++j) {
          rs >> num;
          g.train_x(t, j) = detail::parse_double(num);
        }
        for (Index j = 0; j < m; ++j) {
          rs >> num;
          g.train_w(t, j) = detail::parse_double(num);
        }
      }
      gating = std::move(g);
    } else if (tag == "cost_trace") {
      size_t n = 0;
      ls >> n;
      for (size_t i = 0; i < n; ++i) trace.push_back(detail::parse_double(next_line()));
    } else {
      throw validation_error("unknown model file tag: " + tag);
    }
  }
  if (experts.size() != n_experts || !weights) throw validation_error("incomplete model file");
  hyper.experts = static_cast<int>(n_experts);
  MixtureModel model{std::move(experts), WeightSequence(std::move(*weights)), std::move(gating),
                     hyper, std::move(trace)};
  return model;
}

// ---------------------------------------------------------------------------
// Auxiliary CSV outputs
// ---------------------------------------------------------------------------

inline void write_cost_trace_csv(const std::string& path, const std::vector<LossBreakdown>& trace) {
  std::ofstream os = detail::open_out(path);
  os << "k,J,mix,local,reg,shaper\n";
  for (size_t k = 0; k < trace.size(); ++k) {
    os << (k + 1) << ',' << fmt17(trace[k].total) << ',' << fmt17(trace[k].mix_term) << ','
       << fmt17(trace[k].local_term) << ',' << fmt17(trace[k].regularizer_term) << ','
       << fmt17(trace[k].shaper_term) << "\n";
  }
}

inline void write_residual_trace_csv(const std::string& path, const AdmmState& state) {
  std::ofstream os = detail::open_out(path);
  os << "j,primal,dual\n";
  for (const auto& row : state.trace) {
    os << static_cast<long>(row[0]) << ',' << fmt17(row[1]) << ',' << fmt17(row[2]) << "\n";
  }
}

inline void write_predictions_csv(const std::string& path, const Vector& y_hat, const Matrix& omega) {
  if (y_hat.size() != omega.rows()) throw validation_error("prediction lengths disagree");
  std::ofstream os = detail::open_out(path);
  os << "t,y_hat";
  for (Index j = 0; j < omega.cols(); ++j) os << ",omega" << (j + 1);
  os << "\n";
  for (Index t = 0; t < y_hat.size(); ++t) {
    os << (t + 1) << ',' << fmt17(y_hat[t]);
    for (Index j = 0; j < omega.cols(); ++j) os << ',' << fmt17(omega(t, j));
    os << "\n";
  }
}

struct Predictions {
  Vector y_hat;
  Matrix omega;
};

inline Predictions read_predictions_csv(const std::string& path) {
  std::ifstream is = detail::open_in(path);
  std::string line;
  if (!std::getline(is, line)) throw validation_error("empty predictions file: " + path);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  const auto header = detail::split_csv(line);
  if (header.size() < 2 || header[0] != "t" || header[1] != "y_hat") {
    throw validation_error("predictions header must start with t,y_hat");
  }
  const Index m = static_cast<Index>(header.size()) - 2;
  std::vector<std::vector<double>> rows;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto fields = detail::split_csv(line);
    if (fields.size() != header.size()) throw validation_error("bad predictions row: " + line);
    std::vector<double> row;
    for (size_t j = 1; j < fields.size(); ++j) row.push_back(detail::parse_double(fields[j]));
    rows.push_back(std::move(row));
  }
  Predictions out;
  out.y_hat.resize(static_cast<Index>(rows.size()));
  out.omega.resize(static_cast<Index>(rows.size()), m);
  for (size_t t = 0; t < rows.size(); ++t) {
    out.y_hat[static_cast<Index>(t)] = rows[t][0];
    for (Index j = 0; j < m; ++j) out.omega(static_cast<Index>(t), j) = rows[t][static_cast<size_t>(j) + 1];
  }
  return out;
}

inline void write_sweep_csv(const std::string& path, const std::vector<bench::SweepRow>& rows) {
  std::ofstream os = detail::open_out(path);
  os << "param,value,fold,mae,gof,snr_db,final_cost\n";
  for (const auto& r : rows) {
    os << r.param << ',' << fmt17(r.value) << ',' << r.fold << ',';
    if (r.error.empty()) {
      os << fmt17(r.mae) << ',' << fmt17(r.gof) << ',' << fmt17(r.snr_db) << ','
         << fmt17(r.final_cost);
    } else {
      os << "nan,nan," << fmt17(r.snr_db) << ",nan";
    }
    os << "\n";
  }
}

}  // namespace moe::io
