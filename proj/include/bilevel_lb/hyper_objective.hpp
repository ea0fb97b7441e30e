#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "bilevel_lb/instance.hpp"

namespace bilevel_lb {

// Exact minimizer of g(x, .): block i is x_i * M e_n (x0 for block 0).
std::vector<double> lower_level_solution(const DerivedInstanceParams& params, std::span<const double> x);

// H(x) = f(x, y*(x)) through the explicit one-dimensional chain
//   H(x) = (lambda^2 L_f / L) sum_i [psi(-a_i) phi(-b_i) - psi(a_i) phi(b_i)],
//   a_i = (C_l M_nn / lambda) x_{i-1},  b_i = (C_r M_1n / lambda) x_i.
double hyper_value(const DerivedInstanceParams& params, std::span<const double> x);
std::vector<double> hyper_gradient(const DerivedInstanceParams& params, std::span<const double> x);

// Projected-gradient stationarity L_h |P_X[x - grad / L_h] - x|_2 on the
// hypercube of radius r_x lambda / n.
double projected_stationarity(const DerivedInstanceParams& params, std::span<const double> x,
                              std::span<const double> grad);

struct HyperEval {
  double H = 0.0;
  std::vector<double> gradH;
  double stationarity_det = 0.0;   // |grad H|_2
  double stationarity_proj = 0.0;  // L_h |P_X[x - grad H / L_h] - x|_2
};

HyperEval hyper_eval(const DerivedInstanceParams& params, std::span<const double> x);

// |grad H|_2 in deterministic mode, the projected measure in stochastic mode.
double stationarity(const DerivedInstanceParams& params, std::span<const double> x, Mode mode);

struct GradBoundResult {
  bool holds = false;
  std::size_t witness = 0;  // 1-based j with |x_{j-1}| >= threshold > |x_j|
  double grad_norm = 0.0;
  double bound = 0.0;  // lambda L_f C_tilde n / L
  double margin = 0.0;
};

// Lower bound on |grad H| while some coordinate is below the activation
// threshold lambda / (C_tilde n). Returns nullopt when every |x_i| is at or
// above the threshold (the precondition fails).
std::optional<GradBoundResult> lemma_grad_lower_bound(const DerivedInstanceParams& params,
                                                      std::span<const double> x);

struct GapBoundResult {
  double H0 = 0.0;
  double analytic_floor = 0.0;  // -(lambda^2 L_f / L) * sup psi * sup phi * T
  double inf_estimate = 0.0;    // best of multi-start coordinate descent
  double lower = 0.0;           // -12 lambda^2 L_f T / L
  double bound = 0.0;           // 12 lambda^2 L_f T / L
  bool holds = false;           // H0 - max(floor, lower) <= bound and H0 - inf_estimate <= bound
};

// Runs 32 seeded coordinate-descent starts for the infimum estimate.
GapBoundResult gap_bound(const DerivedInstanceParams& params, std::uint64_t seed = 0);

// Power iteration on finite-difference Hessian-vector products of grad H;
// estimates |hess H(x)|_2.
double hessian_norm_estimate(const DerivedInstanceParams& params, std::span<const double> x,
                             std::size_t iterations = 50, double rel_step = 1e-5);

}  // namespace bilevel_lb
