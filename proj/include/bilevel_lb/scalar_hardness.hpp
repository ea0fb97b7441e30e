#pragma once

// Component functions of the zero-chain hard instance:
//
//   psi(x) = 0                              for x <= 1/2
//          = exp(1 - 1/(2x - 1)^2)          for x >  1/2
//   phi(x) = sqrt(e) * int_{-inf}^{x} exp(-t^2/2) dt
//
// psi and all its derivatives vanish on (-inf, 1/2]; this is what makes the
// instance a zero-chain. phi is evaluated through erfc so the left tail stays
// accurate down to the smallest representable values.

namespace bilevel_lb {

double psi(double x);
double phi(double x);

// order must be 1 or 2; throws std::invalid_argument otherwise.
double psi_d(double x, int order);
double phi_d(double x, int order);

// Upper bounds on sup |psi^(k)|, sup |phi^(k)| for k = 0, 1, 2.
struct SupTable {
  double psi = 0.0;
  double psi1 = 0.0;
  double psi2 = 0.0;
  double phi = 0.0;
  double phi1 = 0.0;
  double phi2 = 0.0;
};

// Closed-form envelopes: 0 < psi < e, 0 < psi' < sqrt(54/e),
// 0 < phi < sqrt(2 pi e), 0 < phi' <= sqrt(e); second derivatives use the
// general k-th order bounds exp(5k/2 log(4k)) and exp(3k/2 log(3k/2)).
namespace envelope {
double psi();
double psi1();
double psi2();
double phi();
double phi1();
double phi2();
}  // namespace envelope

inline constexpr double kSupSafetyFactor = 1.1;
inline constexpr double kSupScanMax = 8.0;

// Raw grid maxima over (1/2, 8] (psi family) and [-8, 8] (phi family).
// Throws std::invalid_argument when grid_step > 1e-4 or not positive.
SupTable scan_sups(double grid_step);

// scan_sups inflated by kSupSafetyFactor and capped by the analytic envelope.
// Every entry is a valid upper bound for the corresponding supremum over R.
SupTable certify_sups(double grid_step);

// certify_sups(1e-5), computed once per process.
const SupTable& default_sup_table();

}  // namespace bilevel_lb
