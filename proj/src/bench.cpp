#include "bilevel_lb/bench.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "bilevel_lb/hyper_objective.hpp"
#include "bilevel_lb/report_io.hpp"

namespace bilevel_lb {

const char* to_string(Algorithm a) {
  switch (a) {
    case Algorithm::greedy_prober:
      return "greedy_prober";
    case Algorithm::penalty_gd:
      return "penalty_gd";
    case Algorithm::f2sa_style:
      return "f2sa_style";
    case Algorithm::alt_sgd:
      return "alt_sgd";
    case Algorithm::exact_hypergrad_diag:
      return "exact_hypergrad_diag";
  }
  return "unknown";
}

const std::vector<Algorithm>& all_algorithms() {
  static const std::vector<Algorithm> all = {Algorithm::greedy_prober, Algorithm::penalty_gd,
                                             Algorithm::f2sa_style, Algorithm::alt_sgd,
                                             Algorithm::exact_hypergrad_diag};
  return all;
}

Algorithm parse_algorithm(const std::string& name) {
  for (Algorithm a : all_algorithms()) {
    if (name == to_string(a)) return a;
  }
  throw std::invalid_argument("unknown algorithm: " + name);
}

AlgorithmSpec AlgorithmSpec::defaults(Algorithm a) {
  AlgorithmSpec s;
  s.name = a;
  if (a == Algorithm::alt_sgd) {
    s.penalty0 = 10.0;
    s.penalty_growth = 0.0;
  }
  return s;
}

const char* to_string(ScalingAxis axis) { return axis == ScalingAxis::kappa ? "kappa" : "eps"; }

namespace {

struct BudgetExhausted {};

void axpy(std::vector<double>& y, double a, const std::vector<double>& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += a * x[i];
}

void clamp_all(std::vector<double>& v, double r) {
  for (double& e : v) e = std::clamp(e, -r, r);
}

class Runner {
 public:
  Runner(const AlgorithmSpec& spec, const DerivedInstanceParams& params, std::uint64_t seed,
         std::size_t budget, const RunOptions& options)
      : spec_(spec),
        P_(params),
        options_(options),
        session_(params, seed, spec.zero_respecting()),
        budget_(budget),
        cur_(BilevelPoint::zeros(params)) {
    trace_.algorithm = to_string(spec.name);
    trace_.fc = params.fc;
    trace_.mode = params.mode;
    trace_.seed = seed;
    trace_.zero_respecting = spec.zero_respecting();
    trace_.n = params.n;
    trace_.T = params.T;
    sample_every_ = options.sample_every == 0 ? params.n : options.sample_every;
  }

  RunTrace run() {
    trace_.initial_stationarity = stationarity(P_, cur_.x, P_.mode);
    record(trace_.initial_stationarity, true);
    if (trace_.initial_stationarity < P_.fc.eps) trace_.reached_eps_at = 0;
    try {
      if (!trace_.reached_eps_at) {
        switch (spec_.name) {
          case Algorithm::greedy_prober:
            greedy();
            break;
          case Algorithm::penalty_gd:
            penalty_gd();
            break;
          case Algorithm::f2sa_style:
            f2sa();
            break;
          case Algorithm::alt_sgd:
            alt_sgd();
            break;
          case Algorithm::exact_hypergrad_diag:
            exact_hypergrad();
            break;
        }
      }
    } catch (const BudgetExhausted&) {
    } catch (const ZeroRespectingViolation& e) {
      trace_.failed = true;
      trace_.failure = e.what();
    } catch (const ProtocolViolation& e) {
      trace_.failed = true;
      trace_.failure = e.what();
    }
    trace_.oracle_calls = session_.calls();
    if (options_.keep_activations) trace_.activations = session_.events();
    const auto& series = trace_.stationarity_series;
    if (series.empty() || series.back().t != trace_.oracle_calls) {
      record(stationarity(P_, cur_.x, P_.mode), true);
    }
    trace_.final_stationarity = trace_.stationarity_series.back().value;
    return std::move(trace_);
  }

 private:
  bool stopped() const { return trace_.reached_eps_at.has_value() || trace_.failed; }

  const OracleReply& query(const BilevelPoint& pt) {
    if (session_.calls() >= budget_) throw BudgetExhausted{};
    return session_.query(pt);
  }

  void record(double value, bool force) {
    const std::size_t t = session_.calls();
    if (force || t % sample_every_ == 0) trace_.stationarity_series.push_back({t, value});
  }

  // Runs after the algorithm has processed the reply of each query.
  void observe() {
    const std::size_t t = session_.calls();
    if (P_.mode == Mode::stochastic) {
      clamp_all(cur_.x, P_.x_radius());
      clamp_all(cur_.y, P_.y_radius());
    }
    session_.propose(cur_);
    const double s = stationarity(P_, cur_.x, P_.mode);
    record(s, false);
    if (!trace_.x_T_active_at && cur_.x.back() != 0.0) trace_.x_T_active_at = t;
    if (options_.observer) {
      IterateView view{t, &cur_, &session_.support(), s};
      options_.observer(view);
    }
    if (s < P_.fc.eps) {
      trace_.reached_eps_at = t;
      if (P_.mode == Mode::deterministic && spec_.zero_respecting() && t < P_.chain_length()) {
        trace_.failed = true;
        trace_.failure = "chain floor violated: reached eps after " + std::to_string(t) + " < T n = " +
                         std::to_string(P_.chain_length()) + " calls";
      }
    } else if (!std::isfinite(s) || s > 1e6 * std::max(trace_.initial_stationarity, P_.fc.eps)) {
      trace_.failed = true;
      trace_.failure = "diverged: stationarity " + std::to_string(s) + " after " + std::to_string(t) + " calls";
    }
  }

  void greedy() {
    const double target =
        P_.mode == Mode::stochastic ? P_.x_radius() : spec_.target_level * P_.x_threshold();
    const std::size_t n = P_.n;
    while (!stopped()) {
      query(cur_);
      const SupportState& s = session_.support();
      for (std::size_t k = 0; k < cur_.y.size(); ++k) {
        if (!s.y_active(k)) continue;
        const double drive = k < n ? P_.x0 : target;
        cur_.y[k] = spec_.step_scale == 0.0 ? cur_.y[k] : drive * P_.m_column[k % n];
      }
      for (std::size_t i = 0; i < cur_.x.size(); ++i) {
        if (s.x_active(i) && spec_.step_scale != 0.0) cur_.x[i] = target;
      }
      observe();
    }
  }

  void penalty_gd() {
    const double Lf = P_.fc.L_f;
    const double Lg = P_.fc.L_g;
    std::size_t K = spec_.inner_steps;
    if (K == 0) {
      K = static_cast<std::size_t>(std::ceil(P_.fc.kappa() * std::log(1.0 / std::min(P_.fc.eps, 0.5))));
    }
    K = std::max<std::size_t>(K, 1);
    std::vector<double> z(cur_.y.size(), 0.0);
    for (std::size_t t = 0; !stopped(); ++t) {
      std::vector<double> gx_z(cur_.x.size(), 0.0);
      for (std::size_t k = 0; k < K && !stopped(); ++k) {
        const OracleReply& r = query({cur_.x, z});
        gx_z = r.gg_x;
        axpy(z, -spec_.step_scale / Lg, r.gg_y);
        if (P_.mode == Mode::stochastic) clamp_all(z, P_.y_radius());
        session_.propose({cur_.x, z});
        observe();
      }
      if (stopped()) break;
      const double sig = std::min(spec_.penalty_max, spec_.penalty0 + spec_.penalty_growth * static_cast<double>(t));
      const OracleReply& r = query(cur_);
      const double a = spec_.step_scale / (Lf + sig * Lg);
      for (std::size_t k = 0; k < cur_.y.size(); ++k) cur_.y[k] -= a * (r.gf_y[k] + sig * r.gg_y[k]);
      for (std::size_t i = 0; i < cur_.x.size(); ++i) {
        cur_.x[i] -= a * (r.gf_x[i] + sig * (r.gg_x[i] - gx_z[i]));
      }
      observe();
    }
  }

  void f2sa() {
    const double Lf = P_.fc.L_f;
    const double Lg = P_.fc.L_g;
    std::vector<double> z(cur_.y.size(), 0.0);
    for (std::size_t t = 0; !stopped(); ++t) {
      const double lam = std::min(spec_.penalty_max, spec_.penalty0 + spec_.penalty_growth * static_cast<double>(t));
      const OracleReply ry = query(cur_);
      observe();
      if (stopped()) break;
      const OracleReply& rz = query({cur_.x, z});
      const double a = spec_.step_scale / Lg;
      const double c = spec_.step_scale / (lam * Lf);
      for (std::size_t k = 0; k < cur_.y.size(); ++k) {
        cur_.y[k] -= a * (ry.gf_y[k] / lam + ry.gg_y[k]);
        z[k] -= a * rz.gg_y[k];
      }
      for (std::size_t i = 0; i < cur_.x.size(); ++i) {
        cur_.x[i] -= c * (ry.gf_x[i] + lam * (ry.gg_x[i] - rz.gg_x[i]));
      }
      if (P_.mode == Mode::stochastic) clamp_all(z, P_.y_radius());
      session_.propose({cur_.x, z});
      observe();
    }
  }

  void alt_sgd() {
    const double Lf = P_.fc.L_f;
    const double Lg = P_.fc.L_g;
    const double nu = spec_.penalty0;
    std::vector<double> w(cur_.y.size(), 0.0);
    for (std::size_t t = 1; !stopped(); ++t) {
      const OracleReply ry = query(cur_);
      axpy(cur_.y, -spec_.step_scale / (2.0 * Lg), ry.gg_y);
      observe();
      if (stopped()) break;
      const OracleReply& rw = query({cur_.x, w});
      for (std::size_t k = 0; k < w.size(); ++k) {
        w[k] -= spec_.step_scale / (2.0 * Lg) * (rw.gg_y[k] + rw.gf_y[k] / nu);
      }
      const double eta = spec_.step_scale / (2.0 * Lf * std::sqrt(static_cast<double>(t)));
      for (std::size_t i = 0; i < cur_.x.size(); ++i) {
        cur_.x[i] -= eta * (rw.gf_x[i] + nu * (rw.gg_x[i] - ry.gg_x[i]));
      }
      if (P_.mode == Mode::stochastic) clamp_all(w, P_.y_radius());
      session_.propose({cur_.x, w});
      observe();
    }
  }

  void exact_hypergrad() {
    while (!stopped()) {
      cur_.y = lower_level_solution(P_, cur_.x);
      query(cur_);
      const auto g = hyper_gradient(P_, cur_.x);
      axpy(cur_.x, -spec_.step_scale / P_.L_h, g);
      cur_.y = lower_level_solution(P_, cur_.x);
      observe();
    }
  }

  AlgorithmSpec spec_;
  const DerivedInstanceParams& P_;
  RunOptions options_;
  OracleSession session_;
  std::size_t budget_;
  std::size_t sample_every_ = 1;
  BilevelPoint cur_;
  RunTrace trace_;
};

}  // namespace

RunTrace run_algorithm(const AlgorithmSpec& spec, const DerivedInstanceParams& params, std::uint64_t seed,
                       std::size_t budget, const RunOptions& options) {
  Runner runner(spec, params, seed, budget, options);
  return runner.run();
}

RunTrace run_algorithm(const AlgorithmSpec& spec, const FunctionClassParams& fc, Mode mode,
                       std::uint64_t seed, std::size_t budget, const RunOptions& options) {
  const DerivedInstanceParams params = derive_params(fc, mode);
  return run_algorithm(spec, params, seed, budget, options);
}

ScalingFitResult fit_scaling(ScalingAxis axis, const std::vector<ScalingPoint>& points) {
  ScalingFitResult fit;
  fit.axis = axis;
  for (const auto& pt : points) {
    if (!pt.reached) {
      fit.warnings.push_back("dropped unreached point at " + std::string(to_string(axis)) + " = " +
                             std::to_string(pt.value));
      continue;
    }
    if (!(pt.value > 0.0) || !(pt.oracle_calls > 0.0)) {
      throw std::invalid_argument("fit_scaling: values and oracle calls must be positive");
    }
    fit.points.push_back(pt);
  }
  if (fit.points.size() < 4) {
    throw std::invalid_argument("fit_scaling: need at least 4 reached points, have " +
                                std::to_string(fit.points.size()));
  }
  const double m = static_cast<double>(fit.points.size());
  double sx = 0.0, sy = 0.0;
  for (const auto& pt : fit.points) {
    sx += std::log(pt.value);
    sy += std::log(pt.oracle_calls);
  }
  const double mx = sx / m;
  const double my = sy / m;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (const auto& pt : fit.points) {
    const double dx = std::log(pt.value) - mx;
    const double dy = std::log(pt.oracle_calls) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx == 0.0) throw std::invalid_argument("fit_scaling: all axis values are equal");
  fit.exponent = sxy / sxx;
  fit.intercept = my - fit.exponent * mx;
  fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

BenchRow bench_row(const RunTrace& trace) {
  BenchRow row;
  row.algorithm = trace.algorithm;
  row.kappa = trace.fc.kappa();
  row.eps = trace.fc.eps;
  row.sigma = trace.fc.sigma;
  row.seed = trace.seed;
  row.oracle_calls = trace.oracle_calls;
  row.reached = trace.reached_eps_at.has_value();
  const double floor = static_cast<double>(trace.chain_length());
  row.ratio_to_lower_bound = floor > 0.0 ? static_cast<double>(trace.oracle_calls) / floor : 0.0;
  return row;
}

namespace {

std::string csv_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

BenchReport report(const std::vector<RunTrace>& traces, const std::vector<ScalingFitResult>& fits) {
  BenchReport out;
  std::ostringstream csv;
  csv << "algorithm,kappa,eps,sigma,seed,oracle_calls,reached,ratio_to_lower_bound\n";
  nlohmann::json cells = nlohmann::json::array();
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& tr : traces) {
    const BenchRow row = bench_row(tr);
    csv << row.algorithm << ',' << csv_number(row.kappa) << ',' << csv_number(row.eps) << ','
        << csv_number(row.sigma) << ',' << row.seed << ',' << row.oracle_calls << ','
        << (row.reached ? "true" : "false") << ',' << csv_number(row.ratio_to_lower_bound) << '\n';
    cells.push_back({{"algorithm", row.algorithm},
                     {"mode", to_string(tr.mode)},
                     {"kappa", row.kappa},
                     {"eps", row.eps},
                     {"sigma", row.sigma},
                     {"seed", row.seed},
                     {"n", tr.n},
                     {"T", tr.T},
                     {"oracle_calls", row.oracle_calls},
                     {"reached", row.reached},
                     {"ratio_to_lower_bound", row.ratio_to_lower_bound},
                     {"final_stationarity", tr.final_stationarity},
                     {"zero_respecting", tr.zero_respecting}});
    if (tr.failed) {
      failures.push_back({{"algorithm", row.algorithm}, {"kappa", row.kappa}, {"eps", row.eps},
                          {"seed", row.seed}, {"reason", tr.failure}});
    }
  }
  nlohmann::json jfits = nlohmann::json::array();
  for (const auto& f : fits) {
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : f.points) pts.push_back({{"value", p.value}, {"oracle_calls", p.oracle_calls}});
    jfits.push_back({{"axis", to_string(f.axis)},
                     {"exponent", f.exponent},
                     {"intercept", f.intercept},
                     {"r_squared", f.r_squared},
                     {"points", pts},
                     {"warnings", f.warnings}});
  }
  out.csv = csv.str();
  out.json = dump({{"fits", jfits}, {"cells", traces.size()}, {"failures", failures}, {"rows", cells}});
  return out;
}

}  // namespace bilevel_lb
