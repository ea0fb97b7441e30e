#include "bilevel_lb/scalar_hardness.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bilevel_lb {

namespace {

constexpr double kE = std::numbers::e;
constexpr double kPi = std::numbers::pi;

const double kSqrtE = std::sqrt(kE);

}  // namespace

double psi(double x) {
  if (x <= 0.5) return 0.0;
  const double u = 2.0 * x - 1.0;
  return std::exp(1.0 - 1.0 / (u * u));
}

double phi(double x) {
  // int_{-inf}^{x} e^{-t^2/2} dt = sqrt(pi/2) * erfc(-x / sqrt(2))
  return kSqrtE * std::sqrt(kPi / 2.0) * std::erfc(-x / std::numbers::sqrt2);
}

double psi_d(double x, int order) {
  if (order != 1 && order != 2) throw std::invalid_argument("psi_d: order must be 1 or 2");
  if (x <= 0.5) return 0.0;
  const double u = 2.0 * x - 1.0;
  const double u2 = u * u;
  const double base = std::exp(1.0 - 1.0 / u2);
  if (order == 1) return 4.0 * base / (u2 * u);
  // d/dx [4 psi u^-3] = 16 psi u^-6 - 24 psi u^-4
  const double u4 = u2 * u2;
  return base * (16.0 / (u4 * u2) - 24.0 / u4);
}

double phi_d(double x, int order) {
  if (order != 1 && order != 2) throw std::invalid_argument("phi_d: order must be 1 or 2");
  const double d1 = kSqrtE * std::exp(-0.5 * x * x);
  return order == 1 ? d1 : -x * d1;
}

namespace envelope {
double psi() { return kE; }
double psi1() { return std::sqrt(54.0 / kE); }
double psi2() { return std::exp(5.0 * std::log(8.0)); }
double phi() { return std::sqrt(2.0 * kPi * kE); }
double phi1() { return kSqrtE; }
double phi2() { return std::exp(3.0 * std::log(3.0)); }
}  // namespace envelope

SupTable scan_sups(double grid_step) {
  if (!(grid_step > 0.0) || grid_step > 1e-4) {
    throw std::invalid_argument("scan_sups: grid_step must lie in (0, 1e-4]");
  }
  SupTable s;
  // Index-based stepping keeps the grid free of accumulated drift.
  const auto psi_points = static_cast<long>(std::floor((kSupScanMax - 0.5) / grid_step));
  for (long k = 1; k <= psi_points; ++k) {
    const double x = 0.5 + static_cast<double>(k) * grid_step;
    s.psi = std::max(s.psi, psi(x));
    s.psi1 = std::max(s.psi1, std::abs(psi_d(x, 1)));
    s.psi2 = std::max(s.psi2, std::abs(psi_d(x, 2)));
  }
  const auto phi_points = static_cast<long>(std::floor(2.0 * kSupScanMax / grid_step));
  for (long k = 0; k <= phi_points; ++k) {
    const double x = -kSupScanMax + static_cast<double>(k) * grid_step;
    s.phi = std::max(s.phi, phi(x));
    s.phi1 = std::max(s.phi1, std::abs(phi_d(x, 1)));
    s.phi2 = std::max(s.phi2, std::abs(phi_d(x, 2)));
  }
  // Analytic maximizers of |phi'| and |phi''| sit at 0 and +-1; make sure the
  // grid did not step over them.
  s.phi1 = std::max(s.phi1, phi_d(0.0, 1));
  s.phi2 = std::max(s.phi2, std::abs(phi_d(1.0, 2)));
  return s;
}

SupTable certify_sups(double grid_step) {
  const SupTable raw = scan_sups(grid_step);
  auto inflate = [](double v, double cap) { return std::min(kSupSafetyFactor * v, cap); };
  SupTable s;
  s.psi = inflate(raw.psi, envelope::psi());
  s.psi1 = inflate(raw.psi1, envelope::psi1());
  s.psi2 = inflate(raw.psi2, envelope::psi2());
  s.phi = inflate(raw.phi, envelope::phi());
  s.phi1 = inflate(raw.phi1, envelope::phi1());
  s.phi2 = inflate(raw.phi2, envelope::phi2());
  return s;
}

const SupTable& default_sup_table() {
  static const SupTable table = certify_sups(1e-5);
  return table;
}

}  // namespace bilevel_lb
