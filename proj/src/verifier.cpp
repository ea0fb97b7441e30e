#include "bilevel_lb/verifier.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "bilevel_lb/hyper_objective.hpp"
#include "bilevel_lb/oracles.hpp"
#include "bilevel_lb/parallel.hpp"
#include "bilevel_lb/report_io.hpp"
#include "bilevel_lb/rng.hpp"
#include "bilevel_lb/tridiag.hpp"

namespace bilevel_lb {

const char* to_string(CheckStatus s) {
  switch (s) {
    case CheckStatus::pass:
      return "pass";
    case CheckStatus::fail:
      return "fail";
    case CheckStatus::skipped:
      return "skipped";
  }
  return "unknown";
}

namespace {

constexpr double kIdentityTol = 1e-12;

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

double norm_inf(const std::vector<double>& v) {
  double m = 0.0;
  for (double e : v) m = std::max(m, std::abs(e));
  return m;
}

// Caps per-point work at roughly 2e8 scalar operations per check.
std::size_t point_budget(std::size_t wanted, std::size_t cost_per_point, std::size_t floor_count = 100) {
  const std::size_t cap = std::max<std::size_t>(floor_count, 200'000'000 / std::max<std::size_t>(cost_per_point, 1));
  return std::min(wanted, cap);
}

struct Ctx {
  const DerivedInstanceParams& P;
  std::uint64_t seed;
  std::string digest;

  CheckResult result(const std::string& id, double margin, std::string details) const {
    CheckResult r;
    r.check_id = id;
    r.digest = digest;
    r.margin = margin;
    r.status = margin > 0.0 ? CheckStatus::pass : CheckStatus::fail;
    r.details = std::move(details);
    return r;
  }

  SplitRng rng(std::uint64_t stream) const { return SplitRng(seed, stream); }

  std::vector<double> random_x(SplitRng& rng, double half_width) const {
    std::vector<double> x(P.T);
    for (double& v : x) v = rng.uniform(-half_width, half_width);
    return x;
  }

  // Uniform point of the hypercube domain (also used as the sampling box in
  // deterministic mode).
  BilevelPoint random_domain_point(SplitRng& rng) const {
    BilevelPoint pt;
    pt.x = random_x(rng, P.x_radius());
    pt.y.resize(P.y_dim());
    for (double& v : pt.y) v = rng.uniform(-P.y_radius(), P.y_radius());
    return pt;
  }
};

// mu-strong convexity of g in y.
CheckResult check_strong_convexity(const Ctx& c) {
  const auto& P = c.P;
  const double nd = static_cast<double>(P.n);
  const SpectralBasis basis(P.n);
  const double lam_min = P.g_coeff() * (1.0 / (nd * nd) + basis.eigenvalue(0));
  const double closed = P.fc.L_g / (4.0 * nd * nd + 1.0);
  const double margin = lam_min - P.fc.mu * (1.0 - kIdentityTol);
  return c.result("01.fc.g_strong_convexity", margin,
                  "lambda_min = " + fmt(lam_min) + " (L_g/(4n^2+1) = " + fmt(closed) + "), mu = " + fmt(P.fc.mu));
}

// L_g-smoothness of g, lower-level block.
CheckResult check_g_smoothness(const Ctx& c) {
  const auto& P = c.P;
  const double nd = static_cast<double>(P.n);
  const SpectralBasis basis(P.n);
  const double lam_max = P.g_coeff() * (1.0 / (nd * nd) + basis.eigenvalue(P.n - 1));
  return c.result("02.fc.g_smoothness", P.fc.L_g - lam_max,
                  "||hess_yy g||_2 = " + fmt(lam_max) + " <= L_g = " + fmt(P.fc.L_g));
}

// Cross block d^2 g / dx dy.
CheckResult check_g_cross_block(const Ctx& c) {
  const auto& P = c.P;
  // grad_x g is linear in y: J v = grad_x g(0, v).
  auto apply_J = [&](const std::vector<double>& v) {
    BilevelPoint pt = BilevelPoint::zeros(P);
    pt.y = v;
    return grad_g(P, pt).x;
  };
  std::vector<double> ends(P.y_dim(), 0.0);
  for (std::size_t i = 1; i <= P.T; ++i) ends[y_index(P.n, i, P.n)] = 1.0;
  const double value = norm2(apply_J(ends)) / norm2(ends);
  SplitRng rng = c.rng(3);
  const std::size_t samples = point_budget(100, P.y_dim(), 10);
  double worst_ratio = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    std::vector<double> v(P.y_dim());
    for (double& e : v) e = rng.uniform(-1.0, 1.0);
    worst_ratio = std::max(worst_ratio, norm2(apply_J(v)) / norm2(v));
  }
  const double L_g = P.fc.L_g;
  const double margin = std::min(kIdentityTol * L_g - std::abs(value - L_g), value * (1.0 + kIdentityTol) - worst_ratio);
  return c.result("03.fc.g_cross_block", margin,
                  "||hess_xy g||_2 = " + fmt(value) + " (L_g = " + fmt(L_g) + "); max |Jv|/|v| over " +
                      std::to_string(samples) + " random v = " + fmt(worst_ratio));
}

// L_f-smoothness of f: Gershgorin on hess_yy f.
CheckResult check_f_smoothness(const Ctx& c) {
  const auto& P = c.P;
  const SupTable& s = P.sups;
  const double cl = P.C_l;
  const double cr = P.C_r;
  double rowmax = 0.0;
  if (P.n == 1) {
    rowmax = cl * cl * s.psi2 * s.phi + cr * cr * s.psi * s.phi2 + 2.0 * cl * cr * s.psi1 * s.phi1;
  } else {
    rowmax = std::max(cl * cl * s.psi2 * s.phi + cl * cr * s.psi1 * s.phi1,
                      cr * cr * s.psi * s.phi2 + cl * cr * s.psi1 * s.phi1);
  }
  const double certificate = P.fc.L_f / P.L_const * rowmax;

  SplitRng rng = c.rng(4);
  const std::size_t samples = point_budget(1000, P.y_dim());
  double sampled = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    sampled = std::max(sampled, f_hessian_row_sum_max(P, c.random_domain_point(rng)));
  }
  const double limit = P.fc.L_f * (1.0 + kIdentityTol);
  const double margin = std::min(limit - certificate, limit - sampled);
  return c.result("04.fc.f_smoothness", margin,
                  "Gershgorin certificate " + fmt(certificate) + ", sampled max row sum " + fmt(sampled) + " over " +
                      std::to_string(samples) + " points, L_f = " + fmt(P.fc.L_f));
}

// Gradient-norm budget of f.
CheckResult check_grad_budget(const Ctx& c) {
  const auto& P = c.P;
  const double c0p = std::sqrt(2.0) * P.c1;
  const double lam_sqrt_T = P.lambda * std::sqrt(static_cast<double>(P.T));
  const double bound = c0p * P.fc.L_f / P.L_const * lam_sqrt_T;
  const double cap = std::sqrt(P.fc.Delta * P.L_const / (12.0 * P.fc.L_f));

  SplitRng rng = c.rng(5);
  const std::size_t samples = point_budget(10'000, 4 * P.y_dim());
  double worst = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    worst = std::max(worst, norm2(grad_f(P, c.random_domain_point(rng)).y));
  }
  const double margin = std::min(1.0 - worst / bound, 1.0 + kIdentityTol - lam_sqrt_T / cap);
  return c.result("05.fc.grad_budget", margin,
                  "max |grad_y f|_2 = " + fmt(worst) + " over " + std::to_string(samples) +
                      " points <= (C0' L_f / L) lambda sqrt(T) = " + fmt(bound) + " with C0' = " + fmt(c0p) +
                      "; lambda sqrt(T) = " + fmt(lam_sqrt_T) + " <= sqrt(Delta L / (12 L_f)) = " + fmt(cap));
}

// g is quadratic, so third differences vanish.
CheckResult check_g_third_difference(const Ctx& c) {
  const auto& P = c.P;
  SplitRng rng = c.rng(6);
  double worst = 0.0;
  const std::size_t samples = point_budget(20, 8 * P.y_dim(), 5);
  for (std::size_t k = 0; k < samples; ++k) {
    const BilevelPoint base = c.random_domain_point(rng);
    const BilevelPoint dir = c.random_domain_point(rng);
    auto at = [&](double s) {
      BilevelPoint q = base;
      for (std::size_t i = 0; i < q.x.size(); ++i) q.x[i] += s * dir.x[i];
      for (std::size_t i = 0; i < q.y.size(); ++i) q.y[i] += s * dir.y[i];
      return eval_g(P, q);
    };
    const double g0 = at(0.0), g1 = at(1.0), g2 = at(2.0), g3 = at(3.0);
    const double d3 = g3 - 3.0 * g2 + 3.0 * g1 - g0;
    const double scale = std::max({std::abs(g0), std::abs(g1), std::abs(g2), std::abs(g3),
                                   std::numeric_limits<double>::min()});
    worst = std::max(worst, std::abs(d3) / scale);
  }
  return c.result("06.fc.g_third_difference", 1e-8 - worst,
                  "max relative third difference " + fmt(worst) + " over " + std::to_string(samples) +
                      " lines (rho = 0 to 1e-8)");
}

// Initial gap, via the analytic floor of H.
CheckResult check_gap(const Ctx& c) {
  const auto& P = c.P;
  const GapBoundResult g = gap_bound(P, c.seed);
  const double gap = g.H0 - g.analytic_floor;
  const double margin = std::min(P.fc.Delta - gap, g.inf_estimate - g.analytic_floor);
  return c.result("07.fc.gap", margin,
                  "H(0) - inf H <= H(0) - floor = " + fmt(gap) + " <= Delta = " + fmt(P.fc.Delta) +
                      "; multi-start inf estimate " + fmt(g.inf_estimate) + " >= floor " + fmt(g.analytic_floor));
}

CheckResult check_resolvent(const Ctx& c) {
  const std::size_t n = c.P.n;
  const double nd = static_cast<double>(n);
  const ResolventColumn col = resolvent_last_column(n);
  const double k = std::numbers::pi * std::numbers::pi / 12.0;
  double margin = std::min(col.first() - (1.0 - k) * nd, (1.0 + k) * nd - col.last());
  double min_diff = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i + 1 < n; ++i) min_diff = std::min(min_diff, col.values[i + 1] - col.values[i]);
  if (n > 1) margin = std::min(margin, min_diff);
  return c.result("08.resolvent.bounds", margin,
                  "n = " + std::to_string(n) + ": S_1n = " + fmt(col.first()) + ", S_nn = " + fmt(col.last()) +
                      ", bounds [" + fmt((1.0 - k) * nd) + ", " + fmt((1.0 + k) * nd) + "]" +
                      (n > 1 ? ", min forward difference " + fmt(min_diff) : std::string()));
}

CheckResult check_coupling_identity(const Ctx& c) {
  const auto& P = c.P;
  const double nd = static_cast<double>(P.n);
  const double e1 = std::abs(P.C_l * P.M_nn / nd - P.C_tilde) / P.C_tilde;
  const double e2 = std::abs(P.C_r * P.M_1n / nd - P.C_tilde) / P.C_tilde;
  const double e3 = std::abs(P.x0 - P.x_threshold()) / P.x_threshold();
  const double worst = std::max({e1, e2, e3});
  return c.result("09.coupling.identity", kIdentityTol - worst,
                  "relative errors C_l M_nn / n: " + fmt(e1) + ", C_r M_1n / n: " + fmt(e2) +
                      ", x0 vs lambda/(C_tilde n): " + fmt(e3));
}

CheckResult check_grad_lower_bound(const Ctx& c) {
  const auto& P = c.P;
  const double thr = P.x_threshold();
  std::vector<std::vector<double>> probes;
  probes.emplace_back(P.T, 0.0);
  for (std::size_t k = 1; k <= 3 && k < P.T; ++k) {
    std::vector<double> x(P.T, 0.0);
    for (std::size_t i = 0; i < k; ++i) x[i] = 2.0 * thr;
    probes.push_back(std::move(x));
  }
  SplitRng rng = c.rng(10);
  while (probes.size() < 10) {
    std::vector<double> x = c.random_x(rng, 3.0 * thr);
    const std::size_t k = static_cast<std::size_t>(rng.next() % P.T);
    for (std::size_t i = 0; i < k; ++i) {
      x[i] = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(1.0, 3.0) * thr;
    }
    x[k] = rng.uniform(-0.999, 0.999) * thr;
    probes.push_back(std::move(x));
  }
  double margin = std::numeric_limits<double>::infinity();
  std::string details;
  for (std::size_t k = 0; k < probes.size(); ++k) {
    const auto r = lemma_grad_lower_bound(P, probes[k]);
    if (!r) return c.result("10.hyper.grad_lower_bound", -1.0, "probe " + std::to_string(k) + ": all coordinates large");
    margin = std::min(margin, r->margin / r->bound);
    if (k < 4) details += "probe " + std::to_string(k) + " witness j = " + std::to_string(r->witness) + "; ";
  }
  details += "min (|grad H| - bound) / bound = " + fmt(margin) + " over " + std::to_string(probes.size()) +
             " probes, bound lambda L_f C_tilde n / L = " +
             fmt(P.lambda * P.fc.L_f * P.C_tilde * static_cast<double>(P.n) / P.L_const);
  return c.result("10.hyper.grad_lower_bound", margin, details);
}

CheckResult check_gap_floor(const Ctx& c) {
  const GapBoundResult g = gap_bound(c.P, c.seed);
  const double margin = std::min({-g.H0, g.analytic_floor - g.lower, g.bound - (g.H0 - g.analytic_floor),
                                  g.bound - (g.H0 - g.inf_estimate)}) /
                        g.bound;
  return c.result("11.hyper.gap", margin,
                  "H0 = " + fmt(g.H0) + ", floor = " + fmt(g.analytic_floor) + ", inf estimate = " +
                      fmt(g.inf_estimate) + ", 12 lambda^2 L_f T / L = " + fmt(g.bound));
}

std::size_t chain_budget(const DerivedInstanceParams& P) {
  const double base = static_cast<double>(P.chain_length() + 2 * P.n + 4);
  return static_cast<std::size_t>(std::min(5e6, base * std::ceil(4.0 / P.p)));
}

CheckResult check_chain(const Ctx& c) {
  const auto& P = c.P;
  const ChainTrace ct = chain_trace(P, c.seed, chain_budget(P));
  if (ct.violation) return c.result("12.chain.subspaces", -1.0, *ct.violation);
  std::string details = "relations hold for " + std::to_string(ct.trace.oracle_calls) + " queries";
  double margin = 1.0;
  if (!ct.xT_active_at) {
    margin = -1.0;
    details += "; x_T never activated within budget";
  } else {
    details += "; x_T revealed at query " + std::to_string(*ct.xT_active_at) + " (T n = " +
               std::to_string(P.chain_length()) + ")";
    if (*ct.xT_active_at < P.chain_length()) margin = -1.0;
  }
  if (P.mode == Mode::deterministic) {
    if (!ct.x1_active_at || !ct.y_2n_active_at || *ct.x1_active_at != *ct.y_2n_active_at + 1) {
      margin = -1.0;
      details += "; x_1 not revealed on the query after flat index 2n";
    }
  }
  return c.result("12.chain.subspaces", margin, details);
}

CheckResult check_hyper_consistency(const Ctx& c) {
  const auto& P = c.P;
  SplitRng rng = c.rng(13);
  const std::size_t samples = point_budget(1000, 4 * P.y_dim());
  double worst = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const auto x = c.random_x(rng, 3.0 * P.x_threshold());
    const double H = hyper_value(P, x);
    const double F = eval_f(P, {x, lower_level_solution(P, x)});
    worst = std::max(worst, std::abs(H - F) / std::max(std::abs(H), P.f_scale()));
  }
  return c.result("13.hyper.consistency", 1e-10 - worst,
                  "max relative |H - f(x, y*(x))| = " + fmt(worst) + " over " + std::to_string(samples) + " points");
}

CheckResult check_hyper_gradient(const Ctx& c) {
  const auto& P = c.P;
  SplitRng rng = c.rng(14);
  const std::size_t samples = point_budget(100, 32 * P.y_dim(), 10);
  const double h = 1e-4 * P.x_threshold();
  double worst = 0.0;
  auto F = [&](const std::vector<double>& x) { return eval_f(P, {x, lower_level_solution(P, x)}); };
  for (std::size_t k = 0; k < samples; ++k) {
    const auto x = c.random_x(rng, 3.0 * P.x_threshold());
    const auto g = hyper_gradient(P, x);
    const double gn = norm2(g);
    std::vector<std::vector<double>> dirs;
    dirs.emplace_back(P.T, 0.0);
    dirs.back()[0] = 1.0;
    dirs.emplace_back(P.T, 0.0);
    dirs.back()[P.T - 1] = 1.0;
    for (int r = 0; r < 2; ++r) {
      std::vector<double> d = c.random_x(rng, 1.0);
      const double dn = norm2(d);
      for (double& e : d) e /= dn;
      dirs.push_back(std::move(d));
    }
    for (const auto& d : dirs) {
      std::vector<double> xp = x, xm = x;
      for (std::size_t i = 0; i < P.T; ++i) {
        xp[i] += h * d[i];
        xm[i] -= h * d[i];
      }
      const double fd = (F(xp) - F(xm)) / (2.0 * h);
      double an = 0.0;
      for (std::size_t i = 0; i < P.T; ++i) an += g[i] * d[i];
      worst = std::max(worst, std::abs(fd - an) / std::max(gn, std::numeric_limits<double>::min()));
    }
  }
  return c.result("14.hyper.gradient_fd", 1e-6 - worst,
                  "max |fd - grad H . d| / |grad H| = " + fmt(worst) + " over " + std::to_string(samples) +
                      " points x 4 directions");
}

CheckResult check_hyper_smoothness(const Ctx& c) {
  const auto& P = c.P;
  SplitRng rng = c.rng(15);
  const std::size_t samples = point_budget(100, 100 * P.T, 10);
  double worst = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const auto x = c.random_x(rng, 3.0 * P.x_threshold());
    worst = std::max(worst, hessian_norm_estimate(P, x));
  }
  return c.result("15.hyper.smoothness", 1.0 - worst / P.L_h,
                  "max power-iteration |hess H|_2 = " + fmt(worst) + " over " + std::to_string(samples) +
                      " points <= L_h = " + fmt(P.L_h));
}

CheckResult check_domain(const Ctx& c) {
  const auto& P = c.P;
  const double r = P.x_radius();
  SplitRng rng = c.rng(20);
  const std::size_t samples = point_budget(1000, 2 * P.y_dim());
  double worst = 0.0;
  auto probe = [&](const std::vector<double>& x) { worst = std::max(worst, norm_inf(lower_level_solution(P, x))); };
  probe(std::vector<double>(P.T, r));
  probe(std::vector<double>(P.T, -r));
  for (std::size_t k = 0; k < samples; ++k) {
    std::vector<double> x(P.T);
    for (double& v : x) v = (rng.next() & 1) ? r : -r;
    probe(x);
  }
  for (std::size_t k = 0; k < samples; ++k) probe(c.random_x(rng, r));
  const double limit = P.y_radius();
  const double envelope = 5.0 * (1.0 + std::numbers::pi * std::numbers::pi / 12.0) * P.r_x * P.lambda;
  const double margin = std::min(1.0 - worst / limit, 1.0 - worst / envelope);
  return c.result("20.domain.containment", margin,
                  "max |y*(x)|_inf = " + fmt(worst) + " over 2 + " + std::to_string(2 * samples) +
                      " corners/points; 5(1 + pi^2/12) r_x lambda = " + fmt(envelope) + " < r_y lambda = " + fmt(limit));
}

CheckResult check_inf_norms(const Ctx& c) {
  const auto& P = c.P;
  SplitRng rng = c.rng(21);
  const std::size_t samples = point_budget(10'000, 6 * P.y_dim());
  double fy = 0.0, gy = 0.0, gx = 0.0;
  for (std::size_t k = 0; k < samples; ++k) {
    const BilevelPoint pt = c.random_domain_point(rng);
    fy = std::max(fy, norm_inf(grad_f(P, pt).y));
    const PartialGradients g = grad_g(P, pt);
    gy = std::max(gy, norm_inf(g.y));
    gx = std::max(gx, norm_inf(g.x));
  }
  const double bf = P.c1 * P.lambda * P.fc.L_f / P.L_const;
  const double bgy = 2.0 * P.fc.L_g * P.y_radius();
  const double bgx = P.fc.L_g * P.y_radius();
  const double margin = std::min({1.0 - fy / bf, 1.0 - gy / bgy, 1.0 - gx / bgx});
  return c.result("21.grad.inf_norms", margin,
                  "over " + std::to_string(samples) + " points: |grad_y f|_inf " + fmt(fy) + " <= " + fmt(bf) +
                      ", |grad_y g|_inf " + fmt(gy) + " <= " + fmt(bgy) + ", |grad_x g|_inf " + fmt(gx) +
                      " <= " + fmt(bgx));
}

double stationarity_floor(const DerivedInstanceParams& P) {
  return P.c2 * P.fc.L_f * static_cast<double>(P.n) * P.lambda / P.L_const;
}

CheckResult check_stationarity_floor(const Ctx& c) {
  const auto& P = c.P;
  const double bound = stationarity_floor(P);
  const double thr = P.x_threshold();
  SplitRng rng = c.rng(22);
  double worst = std::numeric_limits<double>::infinity();
  std::size_t probes = 0;
  auto probe = [&](const std::vector<double>& x) {
    worst = std::min(worst, stationarity(P, x, Mode::stochastic));
    ++probes;
  };
  probe(std::vector<double>(P.T, 0.0));
  const std::size_t samples = point_budget(100, 8 * P.T);
  for (std::size_t k = 0; k < samples; ++k) {
    std::vector<double> x = c.random_x(rng, P.x_radius());
    x[rng.next() % P.T] = rng.uniform(-0.999, 0.999) * thr;
    probe(x);
  }
  // Iterates of the greedy prober before x_T crosses the threshold.
  RunOptions opt;
  opt.keep_activations = false;
  opt.observer = [&](const IterateView& v) {
    if (std::abs(v.point->x.back()) < thr) {
      worst = std::min(worst, v.stationarity);
      ++probes;
    }
  };
  run_algorithm(AlgorithmSpec::defaults(Algorithm::greedy_prober), P, c.seed, chain_budget(P), opt);
  return c.result("22.stationarity.floor", worst / bound - 1.0,
                  "min projected stationarity " + fmt(worst) + " over " + std::to_string(probes) +
                      " pre-chain-end probes >= c2 L_f n lambda / L = " + fmt(bound));
}

// Support state and point with frontier i_star (1-based, > n): every y flat
// index below i_star active, x_j active whenever y_n^(j) is, and the point
// set to the greedy prober's values on the active coordinates.
struct FrontierState {
  SupportState support;
  BilevelPoint point;
};

FrontierState frontier_state(const DerivedInstanceParams& P, std::size_t i_star, double y_sign_pattern) {
  FrontierState s{SupportState(P), BilevelPoint::zeros(P)};
  const std::size_t n = P.n;
  const double target = P.x_radius();
  for (std::size_t k = 0; k + 1 < i_star; ++k) {
    s.support.activate_y(k);
    if (y_sign_pattern != 0.0) {
      s.point.y[k] = (k % 2 == 0 ? 1.0 : -1.0) * y_sign_pattern * P.y_radius();
    } else {
      s.point.y[k] = (k < n ? P.x0 : target) * P.m_column[k % n];
    }
  }
  // x_j couples to y_n^(j), flat index (j + 1) n.
  for (std::size_t j = 1; j <= P.T; ++j) {
    if ((j + 1) * n + 1 <= i_star) {
      s.support.activate_x(j - 1);
      s.point.x[j - 1] = y_sign_pattern != 0.0 ? P.x_radius() : target;
    }
  }
  return s;
}

std::vector<std::size_t> frontier_indices(const DerivedInstanceParams& P, std::size_t cap) {
  const std::size_t first = P.n + 1;
  const std::size_t last = P.y_dim();
  const std::size_t count = last - first + 1;
  std::vector<std::size_t> out;
  if (count <= cap) {
    for (std::size_t i = first; i <= last; ++i) out.push_back(i);
  } else {
    for (std::size_t k = 0; k < cap; ++k) out.push_back(first + k * (count - 1) / (cap - 1));
  }
  return out;
}

CheckResult check_variance(const Ctx& c) {
  const auto& P = c.P;
  const double sigma2 = P.fc.sigma * P.fc.sigma;
  double margin = std::numeric_limits<double>::infinity();
  double worst_est = 0.0;
  double worst_closed_z = 0.0;
  std::size_t states = 0;
  SplitRng rng = c.rng(23);
  for (std::size_t i_star : frontier_indices(P, 16)) {
    for (double pattern : {0.0, 1.0}) {
      const FrontierState st = frontier_state(P, i_star, pattern);
      const VarianceEstimate est = variance_estimate(P, st.point, st.support, 100'000, rng);
      margin = std::min(margin, (1.05 * sigma2 + 4.0 * est.stderr_ - est.variance) / sigma2);
      worst_est = std::max(worst_est, est.variance);
      const OracleReply exact = deterministic_query(P, st.point);
      if (const auto pert = perturbation_target(P, st.support, exact); pert && est.stderr_ > 0.0) {
        const double closed = pert->true_value * pert->true_value * (1.0 - P.p) / P.p;
        worst_closed_z = std::max(worst_closed_z, std::abs(est.variance - closed) / est.stderr_);
      }
      ++states;
    }
  }
  margin = std::min(margin, (4.0 - worst_closed_z) / 4.0);
  return c.result("23.oracle.variance", margin,
                  "max variance estimate " + fmt(worst_est) + " over " + std::to_string(states) +
                      " frontier states (1e5 draws each), sigma^2 = " + fmt(sigma2) + ", p = " + fmt(P.p) +
                      "; max |estimate - v^2 (1-p)/p| / stderr = " + fmt(worst_closed_z));
}

CheckResult check_unbiased(const Ctx& c) {
  const auto& P = c.P;
  SplitRng rng = c.rng(24);
  constexpr std::size_t kDraws = 100'000;
  double worst_z = 0.0;
  std::size_t states = 0;
  for (std::size_t i_star : frontier_indices(P, 4)) {
    const FrontierState st = frontier_state(P, i_star, 0.0);
    const OracleReply exact = deterministic_query(P, st.point);
    // Full replies: everything except the perturbed coordinate is exact.
    for (int d = 0; d < 20; ++d) {
      const OracleReply r = stochastic_query(P, st.point, st.support, rng);
      std::size_t diffs = 0;
      for (std::size_t k = 0; k < r.gg_y.size(); ++k) diffs += r.gg_y[k] != exact.gg_y[k];
      for (std::size_t k = 0; k < r.gg_x.size(); ++k) diffs += r.gg_x[k] != exact.gg_x[k];
      const bool f_exact = r.gf_y == exact.gf_y && r.gf_x == exact.gf_x;
      if (diffs > 1 || !f_exact) {
        return c.result("24.oracle.unbiased", -1.0,
                        "frontier " + std::to_string(i_star) + ": reply differs from the exact gradients in " +
                            std::to_string(diffs) + " g coordinates" + (f_exact ? "" : " and in grad f"));
      }
    }
    // Welford running moments.
    double mean = 0.0, m2 = 0.0;
    double truth = 0.0;
    std::size_t count = 0;
    for (std::size_t d = 0; d < kDraws; ++d) {
      const auto pert = draw_perturbation(P, st.support, exact, rng);
      if (!pert) break;
      truth = pert->true_value;
      const double v = realized_value(P, *pert);
      ++count;
      const double delta = v - mean;
      mean += delta / static_cast<double>(count);
      m2 += delta * (v - mean);
    }
    if (count < 2) continue;
    const double nd = static_cast<double>(count);
    const double se = std::sqrt(m2 / (nd - 1.0) / nd);
    const double diff = std::abs(mean - truth);
    // Identical draws (p = 1): only rounding separates mean and truth.
    const double z = diff <= 1e-12 * std::abs(truth) ? 0.0 : (se > 0.0 ? diff / se : 1e300);
    worst_z = std::max(worst_z, z);
    ++states;
  }
  return c.result("24.oracle.unbiased", (4.0 - worst_z) / 4.0,
                  "max |mean - true| / stderr = " + fmt(worst_z) + " on the perturbed coordinate over " +
                      std::to_string(states) + " states x 1e5 draws; all other coordinates exact");
}

struct ActivationStats {
  double rate = 0.0;
  double stderr_ = 0.0;
  bool only_next = true;
};

// Empirical probability that one stochastic reply at the frontier state
// reveals a coordinate outside the support.
ActivationStats activation_rate(const DerivedInstanceParams& P, const FrontierState& st, std::size_t i_star,
                                std::size_t draws, SplitRng& rng) {
  const OracleReply exact = deterministic_query(P, st.point);
  const auto target = perturbation_target(P, st.support, exact);
  // Coordinates revealed with certainty (not the perturbed one).
  bool certain = false;
  bool only_next = true;
  auto outside = [&](Variable v, std::size_t k) {
    return v == Variable::y ? !st.support.y_active(k) : !st.support.x_active(k);
  };
  auto note = [&](Variable v, std::size_t k) {
    if (target && target->variable == v && target->index0 == k) return;
    certain = true;
    if (!(v == Variable::y && k + 1 == i_star)) only_next = false;
  };
  for (std::size_t k = 0; k < exact.gg_y.size(); ++k) {
    if ((exact.gg_y[k] != 0.0 || exact.gf_y[k] != 0.0) && outside(Variable::y, k)) note(Variable::y, k);
  }
  for (std::size_t k = 0; k < exact.gg_x.size(); ++k) {
    if (exact.gg_x[k] != 0.0 && outside(Variable::x, k)) note(Variable::x, k);
  }
  // The f gradient at the perturbed y coordinate is never perturbed.
  if (target && target->variable == Variable::y && exact.gf_y[target->index0] != 0.0 &&
      outside(Variable::y, target->index0)) {
    certain = true;
  }
  std::size_t hits = 0;
  for (std::size_t d = 0; d < draws; ++d) {
    bool revealed = certain;
    if (const auto pert = draw_perturbation(P, st.support, exact, rng)) {
      if (realized_value(P, *pert) != 0.0 && outside(pert->variable, pert->index0)) {
        revealed = true;
        if (!(pert->variable == Variable::y && pert->index0 + 1 == i_star)) only_next = false;
      }
    }
    hits += revealed;
  }
  ActivationStats s;
  const double nd = static_cast<double>(draws);
  s.rate = static_cast<double>(hits) / nd;
  s.stderr_ = std::sqrt(s.rate * (1.0 - s.rate) / nd);
  s.only_next = only_next;
  return s;
}

bool metered(const DerivedInstanceParams& P, std::size_t i_star) { return P.n == 1 || i_star % P.n != 1; }

CheckResult check_activation_rate(const Ctx& c) {
  const auto& P = c.P;
  SplitRng rng = c.rng(25);
  double margin = std::numeric_limits<double>::infinity();
  double worst_rate = 0.0;
  std::size_t states = 0;
  for (std::size_t i_star : frontier_indices(P, 200)) {
    if (!metered(P, i_star)) continue;
    const FrontierState st = frontier_state(P, i_star, 0.0);
    const ActivationStats s = activation_rate(P, st, i_star, 10'000, rng);
    if (!s.only_next) {
      return c.result("25.oracle.activation_rate", -1.0,
                      "frontier " + std::to_string(i_star) + ": a coordinate other than the next one was revealed");
    }
    margin = std::min(margin, P.p + 3.0 * s.stderr_ + kIdentityTol - s.rate);
    worst_rate = std::max(worst_rate, s.rate);
    ++states;
  }
  if (states == 0) margin = 1.0;
  return c.result("25.oracle.activation_rate", margin,
                  "max activation rate " + fmt(worst_rate) + " over " + std::to_string(states) +
                      " within-block frontier states (1e4 draws each), p = " + fmt(P.p));
}

CheckResult check_boundary_stats(const Ctx& c) {
  const auto& P = c.P;
  SplitRng rng = c.rng(26);
  double sum = 0.0;
  double lo = 1.0, hi = 0.0;
  std::size_t states = 0;
  for (std::size_t i_star : frontier_indices(P, 200)) {
    if (metered(P, i_star)) continue;
    const FrontierState st = frontier_state(P, i_star, 0.0);
    const ActivationStats s = activation_rate(P, st, i_star, 10'000, rng);
    sum += s.rate;
    lo = std::min(lo, s.rate);
    hi = std::max(hi, s.rate);
    ++states;
  }
  std::string details = "block-boundary frontier states (reported, not asserted): " + std::to_string(states);
  if (states > 0) {
    details += ", activation rate mean " + fmt(sum / static_cast<double>(states)) + ", min " + fmt(lo) + ", max " +
               fmt(hi) + ", p = " + fmt(P.p);
  }
  return c.result("26.oracle.boundary_stats", 1.0, details);
}

using CheckFn = CheckResult (*)(const Ctx&);

struct CheckEntry {
  const char* id;
  CheckFn fn;
  bool stochastic_only;
};

const std::vector<CheckEntry>& registry() {
  static const std::vector<CheckEntry> entries = {
      {"01.fc.g_strong_convexity", check_strong_convexity, false},
      {"02.fc.g_smoothness", check_g_smoothness, false},
      {"03.fc.g_cross_block", check_g_cross_block, false},
      {"04.fc.f_smoothness", check_f_smoothness, false},
      {"05.fc.grad_budget", check_grad_budget, false},
      {"06.fc.g_third_difference", check_g_third_difference, false},
      {"07.fc.gap", check_gap, false},
      {"08.resolvent.bounds", check_resolvent, false},
      {"09.coupling.identity", check_coupling_identity, false},
      {"10.hyper.grad_lower_bound", check_grad_lower_bound, false},
      {"11.hyper.gap", check_gap_floor, false},
      {"12.chain.subspaces", check_chain, false},
      {"13.hyper.consistency", check_hyper_consistency, false},
      {"14.hyper.gradient_fd", check_hyper_gradient, false},
      {"15.hyper.smoothness", check_hyper_smoothness, false},
      {"20.domain.containment", check_domain, true},
      {"21.grad.inf_norms", check_inf_norms, true},
      {"22.stationarity.floor", check_stationarity_floor, true},
      {"23.oracle.variance", check_variance, true},
      {"24.oracle.unbiased", check_unbiased, true},
      {"25.oracle.activation_rate", check_activation_rate, true},
      {"26.oracle.boundary_stats", check_boundary_stats, true},
  };
  return entries;
}

}  // namespace

std::vector<CheckResult> run_checks(const DerivedInstanceParams& params, std::uint64_t seed,
                                    const std::vector<std::string>& only) {
  const Ctx ctx{params, seed, params_digest(params)};
  auto wanted = [&](const std::string& id) {
    if (only.empty()) return true;
    return std::any_of(only.begin(), only.end(), [&](const std::string& p) { return id.rfind(p, 0) == 0; });
  };
  std::vector<const CheckEntry*> selected;
  for (const auto& e : registry()) {
    if ((!e.stochastic_only || params.mode == Mode::stochastic) && wanted(e.id)) selected.push_back(&e);
  }
  std::vector<CheckResult> results(selected.size());
  parallel_for(selected.size(), [&](std::size_t i) {
    try {
      results[i] = selected[i]->fn(ctx);
    } catch (const std::exception& ex) {
      results[i] = ctx.result(selected[i]->id, -1.0, std::string("internal error: ") + ex.what());
    }
  });
  std::sort(results.begin(), results.end(),
            [](const CheckResult& a, const CheckResult& b) { return a.check_id < b.check_id; });
  return results;
}

std::vector<CheckResult> run_suite(const FunctionClassParams& fc, Mode mode, std::uint64_t seed) {
  DerivedInstanceParams params;
  try {
    params = derive_params(fc, mode);
  } catch (const std::exception& ex) {
    CheckResult r;
    r.check_id = "00.derive";
    r.status = CheckStatus::fail;
    r.margin = -1.0;
    r.details = ex.what();
    return {r};
  }
  return run_checks(params, seed);
}

bool all_pass(const std::vector<CheckResult>& results) {
  return !results.empty() && std::all_of(results.begin(), results.end(),
                                         [](const CheckResult& r) { return r.status == CheckStatus::pass; });
}

std::string suite_report_json(const FunctionClassParams& fc, Mode mode, const std::vector<CheckResult>& results) {
  nlohmann::json derived = nullptr;
  try {
    derived = to_json(derive_params(fc, mode));
  } catch (const std::exception&) {
  }
  nlohmann::json jr = nlohmann::json::array();
  for (const auto& r : results) {
    jr.push_back({{"check_id", r.check_id},
                  {"instance_params", r.digest},
                  {"status", to_string(r.status)},
                  {"margin", r.margin},
                  {"details", r.details}});
  }
  return dump({{"suite_version", kSuiteVersion}, {"fc", to_json(fc)}, {"derived", derived}, {"results", jr}});
}

ChainTrace chain_trace(const DerivedInstanceParams& params, std::uint64_t seed, std::size_t budget) {
  if (budget == 0) throw std::invalid_argument("chain_trace: budget must be at least 1");
  ChainTrace out;
  const std::size_t n = params.n;
  std::size_t prev_chain = 0;
  std::size_t prev_x = 0;
  std::size_t last_t = 0;
  auto chain_count = [&](const SupportState& s) {
    std::size_t block0 = 0;
    for (std::size_t k = 0; k < n; ++k) block0 += s.y_active(k);
    return s.y_active_count() - block0;
  };
  RunOptions opt;
  opt.sample_every = n;
  opt.observer = [&](const IterateView& v) {
    if (out.violation || v.t == last_t) return;
    last_t = v.t;
    const SupportState& s = *v.support;
    if (auto bad = subspace_violation(params, s, v.t)) {
      out.violation = "step " + std::to_string(v.t) + ": " + *bad;
      return;
    }
    const std::size_t chain = chain_count(s);
    const std::size_t xs = s.x_active_count();
    if (chain > prev_chain + 1 || xs > prev_x + 1) {
      out.violation = "step " + std::to_string(v.t) + ": more than one new chain coordinate in one query";
      return;
    }
    prev_chain = chain;
    prev_x = xs;
  };
  AlgorithmSpec spec = AlgorithmSpec::defaults(Algorithm::greedy_prober);
  out.trace = run_algorithm(spec, params, seed, budget, opt);
  if (out.trace.failed && !out.violation) out.violation = out.trace.failure;

  std::size_t prev_q = 0;
  for (const auto& e : out.trace.activations) {
    if (e.variable == Variable::x) {
      if (e.flat_index == 1 && !out.x1_active_at) out.x1_active_at = e.query_index;
      if (e.flat_index == params.T && !out.xT_active_at) out.xT_active_at = e.query_index;
      continue;
    }
    if (e.flat_index == 2 * n && !out.y_2n_active_at) out.y_2n_active_at = e.query_index;
    if (e.flat_index > n) {
      out.delays.push_back({e.flat_index, e.query_index, e.query_index - prev_q});
      prev_q = e.query_index;
    }
  }
  return out;
}

ChainTrace chain_trace(const FunctionClassParams& fc, Mode mode, std::uint64_t seed, std::size_t budget) {
  return chain_trace(derive_params(fc, mode), seed, budget);
}

}  // namespace bilevel_lb
