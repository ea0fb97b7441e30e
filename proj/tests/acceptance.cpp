// Acceptance suite: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bilevel_lb/bench.hpp"
#include "bilevel_lb/cli.hpp"
#include "bilevel_lb/hyper_objective.hpp"
#include "bilevel_lb/oracles.hpp"
#include "bilevel_lb/parallel.hpp"
#include "bilevel_lb/tridiag.hpp"
#include "bilevel_lb/verifier.hpp"
#include "test_support.hpp"

using namespace bilevel_lb;

namespace {

// Tolerances.
constexpr double kThirdDiffTol = 1e-8;
constexpr double kHyperRelTol = 1e-6;
constexpr double kSlopeKappa = 1.5;
constexpr double kSlopeEps = -2.0;
constexpr double kSlopeTol = 0.1;
constexpr double kVarianceInflation = 1.05;
constexpr double kVarianceSe = 4.0;
constexpr double kMeanSe = 4.0;
constexpr double kRateSe = 3.0;
constexpr double kDelta = 0.5;
constexpr double kDelaySlack = 0.1;
constexpr std::size_t kVarianceDraws = 100000;
constexpr std::size_t kRateDraws = 10000;
constexpr std::size_t kDelaySeeds = 200;
constexpr std::size_t kHyperPoints = 100;
constexpr std::size_t kDomainPoints = 1000;

// The grid criteria run at Delta = 10: at Delta = 1 the (kappa 25, eps 0.2)
// cell has an empty chain.
constexpr double kGridDelta = 10.0;
const std::vector<double> kGridKappa = {25.0, 100.0, 400.0};
const std::vector<double> kGridEps = {0.2, 0.1, 0.05};
const std::vector<double> kGridSigma = {0.5, 1.0};

// Criteria that fail on this construction; see the decisions ledger.
const std::set<int> kKnownFailures = {5};

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Criterion {
  int id;
  const char* title;
  double limit_s;
  std::function<Outcome()> run;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

FunctionClassParams grid_fc(double kappa, double eps, double sigma) {
  FunctionClassParams fc;
  fc.L_g = kappa;
  fc.eps = eps;
  fc.sigma = sigma;
  fc.Delta = kGridDelta;
  return fc;
}

std::vector<DerivedInstanceParams> det_grid() {
  std::vector<DerivedInstanceParams> out;
  for (double k : kGridKappa)
    for (double e : kGridEps) out.push_back(derive_params(grid_fc(k, e, 0.0), Mode::deterministic));
  return out;
}

std::vector<DerivedInstanceParams> stoc_grid() {
  std::vector<DerivedInstanceParams> out;
  for (double k : kGridKappa)
    for (double e : kGridEps)
      for (double s : kGridSigma) out.push_back(derive_params(grid_fc(k, e, s), Mode::stochastic));
  return out;
}

std::string cell(const DerivedInstanceParams& p) {
  return "(kappa " + fmt(p.fc.kappa()) + ", eps " + fmt(p.fc.eps) + ", " + to_string(p.mode) + ")";
}

// 1 -------------------------------------------------------------------------

Outcome resolvent_bounds() {
  const double pi2 = std::acos(-1.0) * std::acos(-1.0);
  double min_margin = INFINITY;
  for (std::size_t n = 1; n <= 512; ++n) {
    const ResolventColumn r = resolvent_last_column(n);
    const double dn = double(n);
    min_margin = std::min({min_margin, r.first() - (1 - pi2 / 12) * dn, (1 + pi2 / 12) * dn - r.last()});
    for (std::size_t i = 0; i + 1 < n; ++i) {
      if (r.values[i + 1] < r.values[i]) return {false, "column not monotone at n = " + std::to_string(n)};
    }
    if (r.first() > r.values.front() || r.last() < r.values.back()) return {false, "endpoint mismatch"};
  }
  return {min_margin > 0.0, "n = 1..512, min margin " + fmt(min_margin)};
}

// 2 -------------------------------------------------------------------------

Outcome function_class() {
  const std::vector<std::string> ids = {"01.", "02.", "03.", "04.", "06."};
  std::size_t cells = 0;
  double worst_third = 0.0;
  for (const auto& p : det_grid()) {
    ++cells;
    const double nd = double(p.n);
    const double lam_min = p.g_coeff() * (spectral_basis(p.n).eigenvalue(0) + 1.0 / (nd * nd));
    const double closed = p.fc.L_g / (4 * nd * nd + 1);
    if (std::abs(lam_min - closed) > 1e-12 * closed) return {false, "lambda_min mismatch " + cell(p)};
    if (!(closed >= p.fc.mu)) return {false, "strong convexity below mu " + cell(p)};
    for (const auto& r : run_checks(p, 0, ids)) {
      if (r.status != CheckStatus::pass) return {false, r.check_id + " failed on " + cell(p) + ": " + r.details};
    }
    // independent third difference of g along a random ray
    std::mt19937_64 gen(cells);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    BilevelPoint a = BilevelPoint::zeros(p), d = BilevelPoint::zeros(p);
    for (auto& v : a.x) v = u(gen) * p.lambda;
    for (auto& v : a.y) v = u(gen) * p.lambda;
    for (auto& v : d.x) v = u(gen) * p.lambda;
    for (auto& v : d.y) v = u(gen) * p.lambda;
    auto at = [&](double s) {
      BilevelPoint q = a;
      for (std::size_t i = 0; i < q.x.size(); ++i) q.x[i] += s * d.x[i];
      for (std::size_t i = 0; i < q.y.size(); ++i) q.y[i] += s * d.y[i];
      return eval_g(p, q);
    };
    const double g0 = at(0), g1 = at(1), g2 = at(2), g3 = at(3);
    const double rel = std::abs(g3 - 3 * g2 + 3 * g1 - g0) / std::max({std::abs(g0), std::abs(g3), 1e-300});
    worst_third = std::max(worst_third, rel);
  }
  if (worst_third > kThirdDiffTol) return {false, "third difference " + fmt(worst_third)};
  return {true, std::to_string(cells) + " deterministic cells, worst third difference " + fmt(worst_third)};
}

// 3 -------------------------------------------------------------------------

double composed(const DerivedInstanceParams& p, const std::vector<double>& x) {
  BilevelPoint pt = BilevelPoint::zeros(p);
  pt.x = x;
  pt.y = lower_level_solution(p, x);
  return eval_f(p, pt);
}

Outcome hypergradient() {
  double worst = 0.0;
  std::string where;
  std::size_t points = 0;
  for (const auto& p : det_grid()) {
    std::mt19937_64 gen(p.T * 31 + p.n);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    // every coordinate when T is small, 32 random ones otherwise
    const std::size_t coords = std::min<std::size_t>(p.T, 32);
    for (std::size_t k = 0; k < kHyperPoints; ++k) {
      std::vector<double> x(p.T);
      for (auto& v : x) v = u(gen) * p.x_threshold();
      const std::vector<double> g = hyper_gradient(p, x);
      std::vector<std::size_t> idx(p.T);
      for (std::size_t i = 0; i < p.T; ++i) idx[i] = i;
      std::shuffle(idx.begin(), idx.end(), gen);
      idx.resize(coords);
      const double h = 1e-5 * p.x_threshold();
      double err = 0.0, scale = 0.0;
      for (std::size_t i : idx) {
        std::vector<double> a = x, b = x;
        a[i] += h;
        b[i] -= h;
        const double fd = (composed(p, a) - composed(p, b)) / (2 * h);
        err = std::max(err, std::abs(fd - g[i]));
        scale = std::max(scale, std::abs(g[i]));
      }
      const double rel = err / scale;
      if (rel > worst) {
        worst = rel;
        where = cell(p);
      }
      ++points;
    }
  }
  return {worst <= kHyperRelTol,
          std::to_string(points) + " points, worst relative error " + fmt(worst) + " at " + where};
}

// 4 -------------------------------------------------------------------------

Outcome chain_exactness() {
  FunctionClassParams fc;
  fc.L_g = 100.0;
  fc.eps = 0.2;
  fc.Delta = 1.0;
  fc.L_f = 1.0;
  const auto p = derive_params(fc, Mode::deterministic);
  const double lam = fc.eps * p.L_const / (fc.L_f * p.C_tilde * double(p.n));
  const auto T = std::size_t(std::floor(fc.Delta * p.L_const / (12.0 * lam * lam * fc.L_f)));
  if (lam != p.lambda || T != p.T) return {false, "closed-form lambda/T mismatch"};
  const std::size_t tn = T * p.n;

  std::ostringstream os;
  os << "n " << p.n << ", T " << T << ", Tn " << tn << ";";
  for (Algorithm a : all_algorithms()) {
    const AlgorithmSpec spec = AlgorithmSpec::defaults(a);
    if (!spec.zero_respecting()) continue;
    std::size_t bad = 0;
    double min_stat = INFINITY;
    RunOptions opts;
    opts.observer = [&](const IterateView& v) {
      if (v.t >= tn) return;
      if (v.point->x[T - 1] != 0.0) ++bad;
      if (!(v.stationarity >= fc.eps)) ++bad;
      min_stat = std::min(min_stat, v.stationarity);
    };
    const RunTrace tr = run_algorithm(spec, p, 0, 20 * tn, opts);
    if (tr.failed && tr.failure.find("zero-respecting") != std::string::npos)
      return {false, std::string(to_string(a)) + ": " + tr.failure};
    if (bad) return {false, std::string(to_string(a)) + " left the chain before Tn"};
    if (tr.reached_eps_at && *tr.reached_eps_at < tn) return {false, std::string(to_string(a)) + " reached eps early"};
    os << ' ' << to_string(a) << " min |grad H| " << fmt(min_stat);
  }
  return {true, os.str()};
}

// 5 -------------------------------------------------------------------------

double greedy_calls(double kappa, double eps) {
  FunctionClassParams fc;
  fc.L_g = kappa;
  fc.eps = eps;
  fc.Delta = kGridDelta;
  const auto p = derive_params(fc, Mode::deterministic);
  const RunTrace t = run_algorithm(AlgorithmSpec::defaults(Algorithm::greedy_prober), p, 0, 4 * p.chain_length() + 16);
  if (!t.reached_eps_at) throw std::runtime_error("greedy prober did not reach eps");
  return double(*t.reached_eps_at);
}

// Plain least-squares slope of log y on log x.
double loglog_slope(const std::vector<ScalingPoint>& pts) {
  double mx = 0, my = 0;
  for (const auto& p : pts) {
    mx += std::log(p.value);
    my += std::log(p.oracle_calls);
  }
  mx /= double(pts.size());
  my /= double(pts.size());
  double sxy = 0, sxx = 0;
  for (const auto& p : pts) {
    sxy += (std::log(p.value) - mx) * (std::log(p.oracle_calls) - my);
    sxx += (std::log(p.value) - mx) * (std::log(p.value) - mx);
  }
  return sxy / sxx;
}

Outcome scaling_exponents() {
  std::vector<ScalingPoint> kp, ep;
  for (double k : {16.0, 36.0, 64.0, 100.0, 144.0}) kp.push_back({k, greedy_calls(k, 0.2), true});
  // a fourth point is needed for the fit
  for (double e : {0.2, 0.1, 0.05, 0.025}) ep.push_back({e, greedy_calls(100.0, e), true});
  const ScalingFitResult fk = fit_scaling(ScalingAxis::kappa, kp);
  const ScalingFitResult fe = fit_scaling(ScalingAxis::eps, ep);
  const bool ok_k = std::abs(fk.exponent - kSlopeKappa) <= kSlopeTol;
  const double e3 = loglog_slope({ep.begin(), ep.begin() + 3});
  const bool ok_e = std::abs(fe.exponent - kSlopeEps) <= kSlopeTol && std::abs(e3 - kSlopeEps) <= kSlopeTol;
  return {ok_k && ok_e, "kappa slope " + fmt(fk.exponent) + (ok_k ? " ok" : " out of band") + ", eps slope " +
                            fmt(fe.exponent) + " (3-point " + fmt(e3) + ")" + (ok_e ? " ok" : " out of band")};
}

// 6 -------------------------------------------------------------------------

Outcome oracle_statistics() {
  const auto fc = test_support::stochastic_fc(50.0, 4.5, 0.25);
  const auto p = derive_params(fc, Mode::stochastic);
  if (p.n != 3 || p.T != 4) return {false, "instance is not n = 3, T = 4"};

  std::map<std::size_t, std::pair<BilevelPoint, SupportState>> states;
  RunOptions opts;
  opts.observer = [&](const IterateView& v) {
    const auto f = v.support->frontier();
    if (f && !states.count(*f)) states.emplace(*f, std::make_pair(*v.point, *v.support));
  };
  run_algorithm(AlgorithmSpec::defaults(Algorithm::greedy_prober), p, 1, 4000, opts);

  SplitRng rng(6);
  const double sigma2 = fc.sigma * fc.sigma;
  double worst_var = -INFINITY, worst_mean = 0.0, worst_rate = -INFINITY;
  std::size_t metered = 0;
  for (const auto& [frontier, st] : states) {
    const auto& [pt, support] = st;
    const VarianceEstimate ve = variance_estimate(p, pt, support, kVarianceDraws, rng);
    worst_var = std::max(worst_var, ve.variance - (kVarianceInflation * sigma2 + kVarianceSe * ve.stderr_));

    const OracleReply exact = deterministic_query(p, pt);
    double sum = 0.0, sumsq = 0.0, truth = 0.0;
    bool perturbed = false;
    for (std::size_t k = 0; k < kVarianceDraws; ++k) {
      const OracleReply r = stochastic_query(p, pt, support, rng);
      if (r.gf_y != exact.gf_y) return {false, "f gradient perturbed"};
      if (!r.perturbation) {
        if (r.gg_y != exact.gg_y || r.gg_x != exact.gg_x) return {false, "unperturbed reply differs"};
        continue;
      }
      perturbed = true;
      const auto& pr = *r.perturbation;
      const double v = pr.variable == Variable::x ? r.gg_x[pr.index0] : r.gg_y[pr.index0];
      truth = pr.variable == Variable::x ? exact.gg_x[pr.index0] : exact.gg_y[pr.index0];
      sum += v;
      sumsq += v * v;
    }
    if (perturbed) {
      const double N = double(kVarianceDraws);
      const double mean = sum / N;
      const double var = std::max(0.0, (sumsq - N * mean * mean) / (N - 1));
      const double se = std::sqrt(var / N);
      const double z = se > 0 ? std::abs(mean - truth) / se : (mean == truth ? 0.0 : INFINITY);
      worst_mean = std::max(worst_mean, z);
    }

    if (frontier % p.n == 1) continue;  // block boundary: not metered
    ++metered;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < kRateDraws; ++k) {
      SupportState s = support;
      const OracleReply r = stochastic_query(p, pt, s, rng);
      bool new_chain = false;
      for (const auto& e : absorb_reply(s, r, 1)) {
        if (e.variable != Variable::y || e.flat_index <= p.n) continue;
        if (e.flat_index != frontier) return {false, "revealed a coordinate other than the frontier"};
        new_chain = true;
      }
      hits += new_chain;
    }
    const double rate = double(hits) / double(kRateDraws);
    const double se = std::sqrt(p.p * (1 - p.p) / double(kRateDraws));
    worst_rate = std::max(worst_rate, rate - (p.p + kRateSe * se));
  }
  const bool ok = worst_var <= 0.0 && worst_mean <= kMeanSe && worst_rate <= 0.0 && metered > 0;
  return {ok, "p " + fmt(p.p) + ", " + std::to_string(states.size()) + " states (" + std::to_string(metered) +
                  " metered); variance slack " + fmt(-worst_var) + ", max mean z " + fmt(worst_mean) +
                  ", rate slack " + fmt(-worst_rate)};
}

// 7 -------------------------------------------------------------------------

Outcome chain_delay() {
  const auto fc = test_support::stochastic_fc(50.0, 8.5, 0.25);
  const auto p = derive_params(fc, Mode::stochastic);
  if (p.n != 3 || p.T != 8) return {false, "instance is not n = 3, T = 8"};
  const double n = double(p.n), T = double(p.T);
  const auto horizon = std::size_t(std::floor(((n - 1) * T - 1 - std::log(1 / kDelta)) / (2 * p.p)));
  std::vector<int> dark(kDelaySeeds, 0);
  parallel_for(kDelaySeeds, [&](std::size_t s) {
    const RunTrace t = run_algorithm(AlgorithmSpec::defaults(Algorithm::greedy_prober), p, 1000 + s, horizon);
    dark[s] = !t.x_T_active_at.has_value() || *t.x_T_active_at > horizon;
  });
  double frac = 0.0;
  for (int d : dark) frac += d;
  frac /= double(kDelaySeeds);
  const double need = 1 - kDelta - kDelaySlack;
  return {frac >= need, "p " + fmt(p.p) + ", t* " + std::to_string(horizon) + ", fraction with x_T = 0: " +
                            fmt(frac) + " (need " + fmt(need) + ")"};
}

// 8 -------------------------------------------------------------------------

Outcome stationarity_floor() {
  auto instances = stoc_grid();
  instances.push_back(derive_params(test_support::stochastic_fc(50.0, 8.5, 0.25), Mode::stochastic));
  std::size_t probed = 0, failures = 0;
  double worst = INFINITY;
  for (const auto& p : instances) {
    const double floor = p.c2 * p.fc.L_f * double(p.n) * p.lambda / p.L_const;
    auto probe = [&](const IterateView& v) {
      if (v.point->x[p.T - 1] != 0.0) return;
      ++probed;
      const double s = stationarity(p, v.point->x, Mode::stochastic);
      worst = std::min(worst, s / floor);
      if (!(s >= floor)) ++failures;
    };
    RunOptions opts;
    opts.observer = probe;
    opts.keep_activations = false;
    const std::size_t budget = std::size_t(std::ceil(4.0 / p.p)) * (p.chain_length() + 2 * p.n + 4);
    for (Algorithm a : all_algorithms()) {
      const AlgorithmSpec spec = AlgorithmSpec::defaults(a);
      if (!spec.zero_respecting()) continue;
      run_algorithm(spec, p, 8, a == Algorithm::greedy_prober ? budget : std::min<std::size_t>(budget, 2000), opts);
    }
    // random domain points with x_T = 0
    std::mt19937_64 gen(p.T);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 200; ++k) {
      BilevelPoint pt = BilevelPoint::zeros(p);
      const std::size_t reach = std::size_t(gen() % p.T);
      for (std::size_t i = 0; i < reach; ++i) pt.x[i] = u(gen) * p.x_radius();
      probe({0, &pt, nullptr, 0.0});
    }
  }
  return {failures == 0, std::to_string(instances.size()) + " instances, " + std::to_string(probed) +
                             " probes, failures " + std::to_string(failures) + ", min ratio to floor " + fmt(worst)};
}

// 9 -------------------------------------------------------------------------

Outcome domain_containment() {
  auto instances = stoc_grid();
  instances.push_back(derive_params(test_support::stochastic_fc(50.0, 8.5, 0.25), Mode::stochastic));
  double worst = 0.0;
  std::size_t corners = 0;
  for (const auto& p : instances) {
    const double r = p.x_radius();
    auto ratio = [&](const std::vector<double>& x) {
      double m = 0.0;
      for (double v : lower_level_solution(p, x)) m = std::max(m, std::abs(v));
      return m / p.y_radius();
    };
    if (p.T <= 12) {
      for (std::size_t mask = 0; mask < (std::size_t(1) << p.T); ++mask) {
        std::vector<double> x(p.T);
        for (std::size_t i = 0; i < p.T; ++i) x[i] = (mask >> i) & 1 ? r : -r;
        worst = std::max(worst, ratio(x));
        ++corners;
      }
    } else {
      // block i of the solution depends on x_i alone, so these corners
      // realize every block value attained at any corner
      for (int pattern = 0; pattern < 4; ++pattern) {
        std::vector<double> x(p.T);
        for (std::size_t i = 0; i < p.T; ++i) x[i] = (pattern < 2 ? pattern == 0 : (i + pattern) % 2 == 0) ? r : -r;
        worst = std::max(worst, ratio(x));
        ++corners;
      }
    }
    std::mt19937_64 gen(p.T + 9);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (std::size_t k = 0; k < kDomainPoints; ++k) {
      std::vector<double> x(p.T);
      for (auto& v : x) v = u(gen) * r;
      worst = std::max(worst, ratio(x));
    }
  }
  return {worst < 1.0, std::to_string(instances.size()) + " instances, " + std::to_string(corners) +
                           " corners, max |y*|_inf / (r_y lambda) = " + fmt(worst)};
}

// 10 ------------------------------------------------------------------------

std::string cli_output(const std::vector<std::string>& args, int& code) {
  std::vector<const char*> argv = {"bilevel-lb"};
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  code = run_cli(int(argv.size()), argv.data(), out, err);
  return out.str();
}

Outcome reproducibility() {
  const std::vector<std::vector<std::string>> cmds = {
      {"params", "--Lg", "400", "--eps", "0.05", "--mode", "stoc", "--sigma", "0.5", "--Delta", "10"},
      {"verify", "--Lg", "50", "--eps", "0.18", "--mode", "stoc", "--sigma", "6000", "--Delta", "10", "--seed", "3"},
      {"trace", "--Lg", "50", "--eps", "0.13", "--mode", "stoc", "--sigma", "4500", "--Delta", "10", "--seed", "9"},
      {"bench", "--alg", "all", "--mode", "stoc", "--sigma", "4500", "--Delta", "10", "--Lg", "50", "--grid",
       "eps=0.13,0.18", "--seeds", "3"},
      {"bench", "--alg", "greedy_prober", "--grid", "kappa=16,36,64,100", "--eps", "0.2", "--Delta", "10",
       "--format", "csv"}};
  std::size_t bytes = 0;
  for (const auto& c : cmds) {
    int c1 = 0, c2 = 0;
    const std::string a = cli_output(c, c1);
    const std::string b = cli_output(c, c2);
    if (c1 != kExitOk || c2 != kExitOk) return {false, c[0] + " exited " + std::to_string(c1)};
    if (a != b || a.empty()) return {false, c[0] + " output differs between runs"};
    bytes += a.size();
  }
  return {true, std::to_string(cmds.size()) + " invocations twice each, " + std::to_string(bytes) + " identical bytes"};
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "resolvent bounds", 5, resolvent_bounds},
      {2, "function-class membership", 60, function_class},
      {3, "hypergradient correctness", 30, hypergradient},
      {4, "deterministic chain exactness", 120, chain_exactness},
      {5, "scaling exponents", 300, scaling_exponents},
      {6, "stochastic oracle statistics", 60, oracle_statistics},
      {7, "stochastic chain delay", 180, chain_delay},
      {8, "stochastic stationarity floor", 60, stationarity_floor},
      {9, "domain containment", 10, domain_containment},
      {10, "reproducibility", 60, reproducibility},
  };
  int unexpected = 0;
  int passed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& ex) {
      o = {false, std::string("exception: ") + ex.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.limit_s;
    const bool pass = o.pass && in_time;
    const bool known = kKnownFailures.count(c.id) > 0;
    std::string tag = pass ? "PASS" : "FAIL";
    if (!pass && known) tag = "FAIL (known)";
    if (pass && known) tag = "PASS (unexpected)";
    if (pass != !known) ++unexpected;
    passed += pass;
    std::printf("criterion %2d %-30s %-17s %s [%.2f s, limit %.0f s%s]\n", c.id, c.title, tag.c_str(),
                o.detail.c_str(), secs, c.limit_s, in_time ? "" : ", over time");
    std::fflush(stdout);
  }
  std::printf("%d/%zu criteria pass, %d unexpected\n", passed, criteria.size(), unexpected);
  return unexpected == 0 ? 0 : 1;
}
