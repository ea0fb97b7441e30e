#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bilevel_lb/instance.hpp"
#include "bilevel_lb/oracles.hpp"

namespace bilevel_lb {

enum class Algorithm { greedy_prober, penalty_gd, f2sa_style, alt_sgd, exact_hypergrad_diag };

const char* to_string(Algorithm a);
Algorithm parse_algorithm(const std::string& name);
const std::vector<Algorithm>& all_algorithms();

// Reference baselines. Step sizes follow the documented defaults scaled by
// step_scale (0 freezes x and y).
//
//   greedy_prober   sets every revealed coordinate to the lower-level solution
//                   of x = target_level * lambda / (C_tilde n) (stochastic:
//                   the hypercube face r_x lambda / n) and queries it.
//   penalty_gd      gradient descent on f + sigma_t (g(x, y) - g(x, z)), z
//                   tracking argmin g(x, .) with K_inner = ceil(kappa log(1/eps))
//                   steps of size 1/L_g per outer iteration.
//   f2sa_style      single loop: y <- y - a (grad_y f / lam_t + grad_y g),
//                   z <- z - b grad_y g(x, z), x <- x - c lam_t (grad_x g(x, y) -
//                   grad_x g(x, z)) with (a, b, c) = (1/L_g, 1/L_g, 1/(lam_t L_f))
//                   and lam_t = penalty0 + penalty_growth t.
//   alt_sgd         alternating steps 1/(2 L_g) on y (tracks y*) and w (tracks
//                   the nu-penalized solution), then x with 1/(2 L_f sqrt(t)).
//   exact_hypergrad_diag
//                   (projected) descent on the analytic grad H with step 1/L_h.
//                   Not zero-respecting; diagnostic only.
struct AlgorithmSpec {
  Algorithm name = Algorithm::greedy_prober;
  double step_scale = 1.0;
  double penalty0 = 1.0;
  double penalty_growth = 0.05;
  double penalty_max = 1e4;
  std::size_t inner_steps = 0;  // 0: ceil(kappa log(1/eps))
  double target_level = 50.0;   // greedy_prober, deterministic mode

  bool zero_respecting() const { return name != Algorithm::exact_hypergrad_diag; }
  static AlgorithmSpec defaults(Algorithm a);
};

struct StationaritySample {
  std::size_t t = 0;
  double value = 0.0;
};

// State handed to observers after every oracle call (t = calls so far) and
// once before the first call (t = 0).
struct IterateView {
  std::size_t t = 0;
  const BilevelPoint* point = nullptr;  // main iterate (x, y)
  const SupportState* support = nullptr;
  double stationarity = 0.0;
};

struct RunOptions {
  // Stationarity sampling period in oracle calls; 0 means n.
  std::size_t sample_every = 0;
  // Called after every oracle call with the current iterate.
  std::function<void(const IterateView&)> observer;
  // Keep activation events in the trace.
  bool keep_activations = true;
};

struct RunTrace {
  std::string algorithm;
  FunctionClassParams fc;
  Mode mode = Mode::deterministic;
  std::uint64_t seed = 0;
  bool zero_respecting = true;

  std::size_t n = 0;
  std::size_t T = 0;
  std::size_t oracle_calls = 0;
  std::optional<std::size_t> reached_eps_at;
  std::optional<std::size_t> x_T_active_at;  // first t with x_T != 0 in the iterate
  double initial_stationarity = 0.0;
  double final_stationarity = 0.0;
  std::vector<StationaritySample> stationarity_series;
  std::vector<ActivationEvent> activations;

  bool failed = false;
  std::string failure;  // zero-respecting violation, divergence, ...

  std::size_t chain_length() const { return T * n; }
};

// Runs spec against a freshly derived instance until the stationarity
// measure of the mode falls below eps or budget oracle calls are spent.
// Protocol violations and divergence (stationarity above 1e6 times its
// initial value) end the run with failed = true.
RunTrace run_algorithm(const AlgorithmSpec& spec, const FunctionClassParams& fc, Mode mode,
                       std::uint64_t seed, std::size_t budget, const RunOptions& options = {});

// Same, on already derived parameters.
RunTrace run_algorithm(const AlgorithmSpec& spec, const DerivedInstanceParams& params, std::uint64_t seed,
                       std::size_t budget, const RunOptions& options = {});

enum class ScalingAxis { kappa, eps };
const char* to_string(ScalingAxis axis);

struct ScalingPoint {
  double value = 0.0;
  double oracle_calls = 0.0;
  bool reached = true;
};

struct ScalingFitResult {
  ScalingAxis axis = ScalingAxis::kappa;
  double exponent = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::vector<ScalingPoint> points;  // the points used in the fit
  std::vector<std::string> warnings;
};

// Least-squares slope of log(oracle_calls) against log(value). Unreached
// points are dropped with a warning; fewer than 4 remaining points throws
// std::invalid_argument.
ScalingFitResult fit_scaling(ScalingAxis axis, const std::vector<ScalingPoint>& points);

struct BenchRow {
  std::string algorithm;
  double kappa = 0.0;
  double eps = 0.0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::size_t oracle_calls = 0;
  bool reached = false;
  double ratio_to_lower_bound = 0.0;  // oracle_calls / (T n)
};

BenchRow bench_row(const RunTrace& trace);

struct BenchReport {
  std::string csv;
  std::string json;
};

BenchReport report(const std::vector<RunTrace>& traces, const std::vector<ScalingFitResult>& fits);

}  // namespace bilevel_lb
