#include "bilevel_lb/hyper_objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "bilevel_lb/rng.hpp"
#include "bilevel_lb/scalar_hardness.hpp"

namespace bilevel_lb {

namespace {

void check_x(const DerivedInstanceParams& params, std::span<const double> x) {
  if (x.size() != params.T) throw DimensionError("x must have length T");
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double e : v) s += e * e;
  return std::sqrt(s);
}

// Slopes of the chain arguments: a_i = alpha x_{i-1}, b_i = beta x_i.
struct ChainSlopes {
  double alpha;
  double beta;
};

ChainSlopes slopes(const DerivedInstanceParams& params) {
  return {params.C_l * params.M_nn / params.lambda, params.C_r * params.M_1n / params.lambda};
}

double x_at(const DerivedInstanceParams& params, std::span<const double> x, std::size_t i) {
  return i == 0 ? params.x0 : x[i - 1];
}

double chain_term(double a, double b) {
  const double pm = psi(-a);
  const double pp = psi(a);
  if (pm == 0.0 && pp == 0.0) return 0.0;
  return pm * phi(-b) - pp * phi(b);
}

}  // namespace

std::vector<double> lower_level_solution(const DerivedInstanceParams& params, std::span<const double> x) {
  check_x(params, x);
  const std::size_t n = params.n;
  std::vector<double> y(params.y_dim(), 0.0);
  for (std::size_t block = 0; block <= params.T; ++block) {
    const double drive = x_at(params, x, block);
    if (drive == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) y[block * n + j] = drive * params.m_column[j];
  }
  return y;
}

double hyper_value(const DerivedInstanceParams& params, std::span<const double> x) {
  check_x(params, x);
  const ChainSlopes s = slopes(params);
  double total = 0.0;
  for (std::size_t i = 1; i <= params.T; ++i) {
    total += chain_term(s.alpha * x_at(params, x, i - 1), s.beta * x[i - 1]);
  }
  return params.f_scale() * total;
}

std::vector<double> hyper_gradient(const DerivedInstanceParams& params, std::span<const double> x) {
  check_x(params, x);
  const ChainSlopes s = slopes(params);
  const double scale = params.f_scale();
  std::vector<double> grad(params.T, 0.0);
  for (std::size_t i = 1; i <= params.T; ++i) {
    const double a = s.alpha * x_at(params, x, i - 1);
    const double b = s.beta * x[i - 1];
    const double pm = psi(-a);
    const double pp = psi(a);
    if (pm == 0.0 && pp == 0.0) continue;
    // d/db of the term lands on x_i, d/da on x_{i-1} (x0 is a constant).
    grad[i - 1] += scale * s.beta * (-pm * phi_d(-b, 1) - pp * phi_d(b, 1));
    if (i >= 2) {
      grad[i - 2] += scale * s.alpha * (-psi_d(-a, 1) * phi(-b) - psi_d(a, 1) * phi(b));
    }
  }
  return grad;
}

double projected_stationarity(const DerivedInstanceParams& params, std::span<const double> x,
                              std::span<const double> grad) {
  const double r = params.x_radius();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double stepped = std::clamp(x[i] - grad[i] / params.L_h, -r, r);
    const double d = stepped - x[i];
    s += d * d;
  }
  return params.L_h * std::sqrt(s);
}

HyperEval hyper_eval(const DerivedInstanceParams& params, std::span<const double> x) {
  HyperEval ev;
  ev.H = hyper_value(params, x);
  ev.gradH = hyper_gradient(params, x);
  ev.stationarity_det = norm2(ev.gradH);
  ev.stationarity_proj = projected_stationarity(params, x, ev.gradH);
  return ev;
}

double stationarity(const DerivedInstanceParams& params, std::span<const double> x, Mode mode) {
  const auto grad = hyper_gradient(params, x);
  return mode == Mode::deterministic ? norm2(grad) : projected_stationarity(params, x, grad);
}

std::optional<GradBoundResult> lemma_grad_lower_bound(const DerivedInstanceParams& params,
                                                      std::span<const double> x) {
  check_x(params, x);
  const double threshold = params.x_threshold();
  // x0 = lambda / (C_l M_nn) sits on the threshold up to rounding.
  std::size_t witness = 0;
  for (std::size_t j = 1; j <= params.T; ++j) {
    const double prev = j == 1 ? threshold : std::abs(x[j - 2]);
    if (prev >= threshold && std::abs(x[j - 1]) < threshold) {
      witness = j;
      break;
    }
  }
  if (witness == 0) return std::nullopt;
  GradBoundResult r;
  r.witness = witness;
  r.grad_norm = norm2(hyper_gradient(params, x));
  r.bound = params.lambda * params.fc.L_f * params.C_tilde * static_cast<double>(params.n) / params.L_const;
  r.margin = r.grad_norm - r.bound;
  r.holds = r.margin >= 0.0;
  return r;
}

namespace {

// Terms touching x_i (1-based): term i and term i + 1.
double local_objective(const DerivedInstanceParams& params, const ChainSlopes& s, std::vector<double>& x,
                       std::size_t i, double value) {
  x[i - 1] = value;
  double total = chain_term(s.alpha * x_at(params, x, i - 1), s.beta * x[i - 1]);
  if (i < params.T) total += chain_term(s.alpha * x[i - 1], s.beta * x[i]);
  return total;
}

double coordinate_descent(const DerivedInstanceParams& params, std::vector<double> x) {
  const ChainSlopes s = slopes(params);
  const double unit = params.x_threshold();
  constexpr int kSweeps = 3;
  constexpr int kGrid = 48;
  constexpr double kSpan = 6.0;
  const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
  for (int sweep = 0; sweep < kSweeps; ++sweep) {
    for (std::size_t i = 1; i <= params.T; ++i) {
      double best_v = x[i - 1];
      double best = local_objective(params, s, x, i, best_v);
      const double h = 2.0 * kSpan * unit / kGrid;
      for (int k = 0; k <= kGrid; ++k) {
        const double v = -kSpan * unit + k * h;
        const double val = local_objective(params, s, x, i, v);
        if (val < best) {
          best = val;
          best_v = v;
        }
      }
      double lo = best_v - h;
      double hi = best_v + h;
      for (int it = 0; it < 30; ++it) {
        const double m1 = hi - gr * (hi - lo);
        const double m2 = lo + gr * (hi - lo);
        if (local_objective(params, s, x, i, m1) < local_objective(params, s, x, i, m2)) {
          hi = m2;
        } else {
          lo = m1;
        }
      }
      const double mid = 0.5 * (lo + hi);
      if (local_objective(params, s, x, i, mid) < best) best_v = mid;
      x[i - 1] = best_v;
    }
  }
  return hyper_value(params, x);
}

}  // namespace

GapBoundResult gap_bound(const DerivedInstanceParams& params, std::uint64_t seed) {
  GapBoundResult r;
  const std::vector<double> zero(params.T, 0.0);
  r.H0 = hyper_value(params, zero);
  const double scale = params.f_scale();
  const double T = static_cast<double>(params.T);
  r.bound = 12.0 * scale * T;
  r.lower = -r.bound;
  r.analytic_floor = -scale * T * envelope::psi() * envelope::phi();

  constexpr int kStarts = 32;
  SplitRng rng(seed, 0x6A9);
  double best = std::numeric_limits<double>::infinity();
  for (int start = 0; start < kStarts; ++start) {
    std::vector<double> x(params.T);
    for (double& v : x) v = rng.uniform(-3.0, 3.0) * params.x_threshold();
    best = std::min(best, coordinate_descent(params, std::move(x)));
  }
  r.inf_estimate = best;
  r.holds = r.H0 <= 0.0 && r.analytic_floor >= r.lower && r.H0 - r.analytic_floor <= r.bound &&
            r.H0 - r.inf_estimate <= r.bound;
  return r;
}

double hessian_norm_estimate(const DerivedInstanceParams& params, std::span<const double> x,
                             std::size_t iterations, double rel_step) {
  check_x(params, x);
  const std::size_t T = params.T;
  double x_scale = params.x_threshold();
  for (double v : x) x_scale = std::max(x_scale, std::abs(v));
  const double h = rel_step * x_scale;

  SplitRng rng(0x4E55, T);
  std::vector<double> v(T);
  for (double& e : v) e = rng.uniform(-1.0, 1.0);
  double nv = norm2(v);
  for (double& e : v) e /= nv;

  std::vector<double> xp(x.begin(), x.end());
  std::vector<double> xm(x.begin(), x.end());
  double estimate = 0.0;
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < T; ++i) {
      xp[i] = x[i] + h * v[i];
      xm[i] = x[i] - h * v[i];
    }
    const auto gp = hyper_gradient(params, xp);
    const auto gm = hyper_gradient(params, xm);
    std::vector<double> hv(T);
    for (std::size_t i = 0; i < T; ++i) hv[i] = (gp[i] - gm[i]) / (2.0 * h);
    estimate = norm2(hv);
    if (estimate == 0.0) break;
    for (std::size_t i = 0; i < T; ++i) v[i] = hv[i] / estimate;
  }
  return estimate;
}

}  // namespace bilevel_lb
