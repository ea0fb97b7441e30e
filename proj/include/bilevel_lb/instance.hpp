#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "bilevel_lb/scalar_hardness.hpp"

namespace bilevel_lb {

enum class Mode { deterministic, stochastic };

const char* to_string(Mode mode);
Mode parse_mode(const std::string& text);  // "det" / "deterministic" / "stoc" / "stochastic"

class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// User-facing constants of the nonconvex / strongly-convex bilevel class.
struct FunctionClassParams {
  double L_f = 1.0;
  double L_g = 0.0;
  double mu = 1.0;
  double Delta = 1.0;
  double sigma = 0.0;
  double eps = 0.1;

  double kappa() const { return L_g / mu; }
};

inline constexpr double kMinKappa = 5.0;
inline constexpr double kMaxDeltaOverLf = 10.0;
inline constexpr std::size_t kMaxLowerDim = 20'000'000;

// Everything the hard instance needs, derived once from FunctionClassParams.
// Immutable after derive_params; the only mutation is deliberate tampering in
// mutation tests.
struct DerivedInstanceParams {
  FunctionClassParams fc;
  Mode mode = Mode::deterministic;

  std::size_t n = 0;  // block length of the lower variable
  std::size_t T = 0;  // chain length in x

  double lambda = 0.0;
  double L_const = 0.0;  // L, sized so that ||hess_y f||_2 <= L_f
  double C_tilde = 1.0;
  double C_l = 0.0;
  double C_r = 0.0;
  double x0 = 0.0;  // fixed coupling value of block 0, not an optimization variable
  double M_1n = 0.0;
  double M_nn = 0.0;
  double r_x = 2.0;
  double r_y = 20.0;
  double p = 1.0;
  double L_h = 0.0;
  double c0 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  double c3 = 0.0;
  SupTable sups;

  // Last column of M = ((4n^2 + 1)/n^2) (A + n^-2 I)^-1; length n.
  std::vector<double> m_column;

  std::size_t y_dim() const { return n * (T + 1); }
  // Coefficient of the quadratic term of g: L_g n^2 / (4 n^2 + 1).
  double g_coeff() const;
  // Hypercube radii of the stochastic construction.
  double x_radius() const { return r_x * lambda / static_cast<double>(n); }
  double y_radius() const { return r_y * lambda; }
  // lambda / (C_tilde n): the activation threshold for x coordinates.
  double x_threshold() const { return lambda / (C_tilde * static_cast<double>(n)); }
  // Scale of f: lambda^2 L_f / L.
  double f_scale() const { return lambda * lambda * fc.L_f / L_const; }
  // Number of oracle calls in the deterministic chain-length floor: T n.
  std::size_t chain_length() const { return T * n; }
};

// Throws ParameterError on invalid constants, kappa < 5, an empty chain
// (T < 1), or an instance whose lower variable exceeds kMaxLowerDim.
DerivedInstanceParams derive_params(const FunctionClassParams& fc, Mode mode);

// Short stable fingerprint of the derived parameters (hex FNV-1a).
std::string params_digest(const DerivedInstanceParams& params);

// x in R^T; y is the lower variable flattened block by block, block i
// (0..T) occupying storage [i n, (i + 1) n). The 1-based flat index used in
// logs for coordinate j of block i is i n + j.
struct BilevelPoint {
  std::vector<double> x;
  std::vector<double> y;

  static BilevelPoint zeros(const DerivedInstanceParams& params);
};

// Storage offset of coordinate j (1-based) of block i.
inline std::size_t y_index(std::size_t n, std::size_t block, std::size_t j) {
  return block * n + j - 1;
}

struct PartialGradients {
  std::vector<double> x;
  std::vector<double> y;
};

double eval_g(const DerivedInstanceParams& params, const BilevelPoint& pt);
double eval_f(const DerivedInstanceParams& params, const BilevelPoint& pt);
PartialGradients grad_g(const DerivedInstanceParams& params, const BilevelPoint& pt);
PartialGradients grad_f(const DerivedInstanceParams& params, const BilevelPoint& pt);

// Largest absolute row sum of hess_y f at pt (f depends on y only).
double f_hessian_row_sum_max(const DerivedInstanceParams& params, const BilevelPoint& pt);

// Clamps x to the radius r_x lambda / n and y to r_y lambda. In
// deterministic mode there is no domain: returns pt unchanged and warns.
BilevelPoint project_domain(const DerivedInstanceParams& params, const BilevelPoint& pt);

bool in_domain(const DerivedInstanceParams& params, const BilevelPoint& pt);

void check_dimensions(const DerivedInstanceParams& params, const BilevelPoint& pt);

}  // namespace bilevel_lb
