#include "bilevel_lb/instance.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <iostream>
#include <mutex>
#include <sstream>

#include "bilevel_lb/tridiag.hpp"

namespace bilevel_lb {

const char* to_string(Mode mode) {
  return mode == Mode::deterministic ? "deterministic" : "stochastic";
}

Mode parse_mode(const std::string& text) {
  if (text == "det" || text == "deterministic") return Mode::deterministic;
  if (text == "stoc" || text == "stochastic") return Mode::stochastic;
  throw ParameterError("unknown mode '" + text + "' (expected det or stoc)");
}

double DerivedInstanceParams::g_coeff() const {
  const double n2 = static_cast<double>(n) * static_cast<double>(n);
  return fc.L_g * n2 / (4.0 * n2 + 1.0);
}

namespace {

void validate(const FunctionClassParams& fc, Mode mode) {
  auto finite_positive = [](double v) { return std::isfinite(v) && v > 0.0; };
  if (!finite_positive(fc.L_f)) throw ParameterError("L_f must be positive");
  if (!finite_positive(fc.mu)) throw ParameterError("mu must be positive");
  if (!finite_positive(fc.L_g) || fc.L_g < fc.mu) throw ParameterError("L_g must satisfy L_g >= mu > 0");
  if (!finite_positive(fc.Delta)) throw ParameterError("Delta must be positive");
  if (!finite_positive(fc.eps)) throw ParameterError("eps must be positive");
  if (!std::isfinite(fc.sigma) || fc.sigma < 0.0) throw ParameterError("sigma must be nonnegative");
  if (fc.kappa() < kMinKappa) throw ParameterError("condition number too small for n >= 1 (need kappa >= 5)");
  if (fc.Delta / fc.L_f > kMaxDeltaOverLf) throw ParameterError("Delta / L_f must not exceed 10");
  if (mode == Mode::stochastic && !(fc.sigma > 0.0)) {
    throw ParameterError("stochastic mode requires sigma > 0");
  }
}

// Bracket shared by the Gershgorin bounds on hess_y f and hess H: every row
// touches at most one psi''*phi, one psi*phi'' and two psi'*phi' products.
double hessian_bracket(const SupTable& s) {
  return s.psi2 * s.phi + s.psi * s.phi2 + 2.0 * s.psi1 * s.phi1;
}

}  // namespace

DerivedInstanceParams derive_params(const FunctionClassParams& fc, Mode mode) {
  validate(fc, mode);

  DerivedInstanceParams p;
  p.fc = fc;
  p.mode = mode;
  p.n = static_cast<std::size_t>(std::floor(std::sqrt((fc.L_g - fc.mu) / (4.0 * fc.mu))));
  if (p.n < 1) throw ParameterError("condition number too small for n >= 1");

  const double nd = static_cast<double>(p.n);
  const double scale = (4.0 * nd * nd + 1.0) / (nd * nd);
  const ResolventColumn col = resolvent_last_column(p.n);
  p.m_column.resize(p.n);
  for (std::size_t i = 0; i < p.n; ++i) p.m_column[i] = scale * col.values[i];
  p.M_1n = p.m_column.front();
  p.M_nn = p.m_column.back();

  p.C_tilde = 1.0;
  p.C_l = p.C_tilde * nd / p.M_nn;
  p.C_r = p.C_tilde * nd / p.M_1n;

  p.sups = default_sup_table();
  const double c_max = std::max(p.C_l, p.C_r);
  const double bracket = hessian_bracket(p.sups);
  p.L_const = c_max * c_max * bracket;
  p.c0 = p.C_tilde * p.C_tilde * bracket;
  p.c1 = c_max * (p.sups.psi1 * p.sups.phi + p.sups.psi * p.sups.phi1);
  p.r_x = 2.0;
  p.r_y = 20.0;
  p.c2 = p.C_tilde * std::min(1.0, p.c0 * (p.r_x - 1.0 / p.C_tilde));
  p.c3 = 4.0 * p.r_y * p.r_y;

  if (mode == Mode::deterministic) {
    p.lambda = fc.eps * p.L_const / (fc.L_f * p.C_tilde * nd);
  } else {
    p.lambda = 2.0 * p.L_const * fc.eps / (p.c2 * fc.L_f * nd);
  }

  const double t_real = fc.Delta * p.L_const / (12.0 * p.lambda * p.lambda * fc.L_f);
  if (!(t_real >= 1.0)) throw ParameterError("accuracy/gap combination yields empty chain (T < 1)");
  if ((t_real + 1.0) * nd > static_cast<double>(kMaxLowerDim)) {
    throw ParameterError("instance too large: lower variable would exceed 2e7 coordinates");
  }
  p.T = static_cast<std::size_t>(std::floor(t_real));

  p.x0 = p.lambda / (p.C_l * p.M_nn);
  p.L_h = p.c0 * nd * nd * fc.L_f / p.L_const;
  if (mode == Mode::stochastic) {
    p.p = std::min(1.0, p.c3 * fc.L_g * fc.L_g * p.lambda * p.lambda / (fc.sigma * fc.sigma));
    if (!(p.r_x > 1.0 / p.C_tilde) || !(p.r_y >= 10.0 * p.r_x)) {
      throw std::logic_error("derive_params: hypercube radii violate r_y >= 10 r_x > 10 / C_tilde");
    }
  } else {
    p.p = 1.0;
  }
  return p;
}

std::string params_digest(const DerivedInstanceParams& params) {
  std::ostringstream os;
  os.precision(17);
  os << to_string(params.mode) << ' ' << params.fc.L_f << ' ' << params.fc.L_g << ' ' << params.fc.mu
     << ' ' << params.fc.Delta << ' ' << params.fc.sigma << ' ' << params.fc.eps << ' ' << params.n << ' '
     << params.T << ' ' << params.lambda << ' ' << params.L_const << ' ' << params.p;
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : os.str()) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

BilevelPoint BilevelPoint::zeros(const DerivedInstanceParams& params) {
  return BilevelPoint{std::vector<double>(params.T, 0.0), std::vector<double>(params.y_dim(), 0.0)};
}

void check_dimensions(const DerivedInstanceParams& params, const BilevelPoint& pt) {
  if (pt.x.size() != params.T || pt.y.size() != params.y_dim()) {
    throw DimensionError("point dimensions (" + std::to_string(pt.x.size()) + ", " +
                         std::to_string(pt.y.size()) + ") do not match instance (" +
                         std::to_string(params.T) + ", " + std::to_string(params.y_dim()) + ")");
  }
}

namespace {

// Linear coefficient of block i: x0 for block 0, x_i otherwise.
double block_drive(const DerivedInstanceParams& params, const BilevelPoint& pt, std::size_t block) {
  return block == 0 ? params.x0 : pt.x[block - 1];
}

}  // namespace

double eval_g(const DerivedInstanceParams& params, const BilevelPoint& pt) {
  check_dimensions(params, pt);
  const std::size_t n = params.n;
  const double nd = static_cast<double>(n);
  const double shift = 1.0 / (nd * nd);
  const double half_coeff = 0.5 * params.g_coeff();
  const double L_g = params.fc.L_g;
  double total = 0.0;
  for (std::size_t block = 0; block <= params.T; ++block) {
    const double* y = pt.y.data() + block * n;
    // y' (n^-2 I + A) y = n^-2 |y|^2 + sum_j (y_{j+1} - y_j)^2 for the Neumann Laplacian.
    double quad = 0.0;
    for (std::size_t j = 0; j < n; ++j) quad += shift * y[j] * y[j];
    for (std::size_t j = 0; j + 1 < n; ++j) {
      const double d = y[j + 1] - y[j];
      quad += d * d;
    }
    total += half_coeff * quad - L_g * block_drive(params, pt, block) * y[n - 1];
  }
  return total;
}

PartialGradients grad_g(const DerivedInstanceParams& params, const BilevelPoint& pt) {
  check_dimensions(params, pt);
  const std::size_t n = params.n;
  const double nd = static_cast<double>(n);
  const double shift = 1.0 / (nd * nd);
  const double coeff = params.g_coeff();
  const double L_g = params.fc.L_g;
  PartialGradients g{std::vector<double>(params.T, 0.0), std::vector<double>(params.y_dim(), 0.0)};
  for (std::size_t block = 0; block <= params.T; ++block) {
    const double* y = pt.y.data() + block * n;
    double* out = g.y.data() + block * n;
    for (std::size_t j = 0; j < n; ++j) {
      double ay = 0.0;
      if (j > 0) ay += y[j] - y[j - 1];
      if (j + 1 < n) ay += y[j] - y[j + 1];
      out[j] = coeff * (shift * y[j] + ay);
    }
    out[n - 1] -= L_g * block_drive(params, pt, block);
    if (block > 0) g.x[block - 1] = -L_g * y[n - 1];
  }
  return g;
}

namespace {

// Arguments of chain term i (1..T): a from y_n^{(i-1)}, b from y_1^{(i)}.
struct TermArgs {
  std::size_t ia;
  std::size_t ib;
  double a;
  double b;
};

TermArgs term_args(const DerivedInstanceParams& params, const BilevelPoint& pt, std::size_t i) {
  const std::size_t n = params.n;
  TermArgs t{};
  t.ia = y_index(n, i - 1, n);
  t.ib = y_index(n, i, 1);
  t.a = params.C_l / params.lambda * pt.y[t.ia];
  t.b = params.C_r / params.lambda * pt.y[t.ib];
  return t;
}

}  // namespace

double eval_f(const DerivedInstanceParams& params, const BilevelPoint& pt) {
  check_dimensions(params, pt);
  double total = 0.0;
  for (std::size_t i = 1; i <= params.T; ++i) {
    const TermArgs t = term_args(params, pt, i);
    const double pm = psi(-t.a);
    const double pp = psi(t.a);
    if (pm == 0.0 && pp == 0.0) continue;
    total += pm * phi(-t.b) - pp * phi(t.b);
  }
  return params.f_scale() * total;
}

PartialGradients grad_f(const DerivedInstanceParams& params, const BilevelPoint& pt) {
  check_dimensions(params, pt);
  PartialGradients g{std::vector<double>(params.T, 0.0), std::vector<double>(params.y_dim(), 0.0)};
  const double scale = params.lambda * params.fc.L_f / params.L_const;
  for (std::size_t i = 1; i <= params.T; ++i) {
    const TermArgs t = term_args(params, pt, i);
    const double pm = psi(-t.a);
    const double pp = psi(t.a);
    // psi vanishes on (-inf, 1/2] together with psi', so the term is inert.
    if (pm == 0.0 && pp == 0.0) continue;
    const double dpm = psi_d(-t.a, 1);
    const double dpp = psi_d(t.a, 1);
    g.y[t.ia] += scale * params.C_l * (-dpm * phi(-t.b) - dpp * phi(t.b));
    g.y[t.ib] += scale * params.C_r * (-pm * phi_d(-t.b, 1) - pp * phi_d(t.b, 1));
  }
  return g;
}

double f_hessian_row_sum_max(const DerivedInstanceParams& params, const BilevelPoint& pt) {
  check_dimensions(params, pt);
  const double scale = params.fc.L_f / params.L_const;
  const double cl = params.C_l;
  const double cr = params.C_r;
  std::vector<double> row(params.y_dim(), 0.0);
  for (std::size_t i = 1; i <= params.T; ++i) {
    const TermArgs t = term_args(params, pt, i);
    const double haa = scale * cl * cl * (psi_d(-t.a, 2) * phi(-t.b) - psi_d(t.a, 2) * phi(t.b));
    const double hbb = scale * cr * cr * (psi(-t.a) * phi_d(-t.b, 2) - psi(t.a) * phi_d(t.b, 2));
    const double hab =
        scale * cl * cr * (psi_d(-t.a, 1) * phi_d(-t.b, 1) - psi_d(t.a, 1) * phi_d(t.b, 1));
    // With n = 1 a coordinate is shared by two terms; summing absolute values
    // only loosens the row bound.
    row[t.ia] += std::abs(haa) + std::abs(hab);
    row[t.ib] += std::abs(hbb) + std::abs(hab);
  }
  return row.empty() ? 0.0 : *std::max_element(row.begin(), row.end());
}

BilevelPoint project_domain(const DerivedInstanceParams& params, const BilevelPoint& pt) {
  check_dimensions(params, pt);
  if (params.mode == Mode::deterministic) {
    static std::once_flag warned;
    std::call_once(warned, [] {
      std::clog << "warning: project_domain called on a deterministic instance; returning point unchanged\n";
    });
    return pt;
  }
  BilevelPoint out = pt;
  const double rx = params.x_radius();
  const double ry = params.y_radius();
  for (double& v : out.x) v = std::clamp(v, -rx, rx);
  for (double& v : out.y) v = std::clamp(v, -ry, ry);
  return out;
}

bool in_domain(const DerivedInstanceParams& params, const BilevelPoint& pt) {
  check_dimensions(params, pt);
  if (params.mode == Mode::deterministic) return true;
  const double rx = params.x_radius();
  const double ry = params.y_radius();
  return std::all_of(pt.x.begin(), pt.x.end(), [rx](double v) { return std::abs(v) <= rx; }) &&
         std::all_of(pt.y.begin(), pt.y.end(), [ry](double v) { return std::abs(v) <= ry; });
}

}  // namespace bilevel_lb
