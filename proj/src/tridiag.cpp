#include "bilevel_lb/tridiag.hpp"

#include <cassert>
#include <cmath>
#include <numbers>
#include <string>

namespace bilevel_lb {

std::vector<double> TridiagSym::apply(std::span<const double> v) const {
  const std::size_t n = size();
  if (v.size() != n) throw std::invalid_argument("TridiagSym::apply: dimension mismatch");
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = diag[i] * v[i];
    if (i > 0) acc += off[i - 1] * v[i - 1];
    if (i + 1 < n) acc += off[i] * v[i + 1];
    out[i] = acc;
  }
  return out;
}

TridiagSym build_laplacian(std::size_t n) {
  if (n == 0) throw std::invalid_argument("build_laplacian: n must be positive");
  TridiagSym a;
  if (n == 1) {
    a.diag = {0.0};
    return a;
  }
  a.diag.assign(n, 2.0);
  a.diag.front() = 1.0;
  a.diag.back() = 1.0;
  a.off.assign(n - 1, -1.0);
  return a;
}

std::vector<double> thomas_solve(const TridiagSym& m, double shift, std::span<const double> b) {
  const std::size_t n = m.size();
  if (b.size() != n) throw std::invalid_argument("thomas_solve: dimension mismatch");
  if (n == 0) return {};

  std::vector<double> c_prime(n, 0.0);
  std::vector<double> d_prime(n, 0.0);
  auto pivot_check = [](double p, std::size_t row) {
    if (std::abs(p) < 1e-14) {
      throw SingularSystemError("thomas_solve: pivot below 1e-14 at row " + std::to_string(row));
    }
  };

  double pivot = m.diag[0] + shift;
  pivot_check(pivot, 0);
  if (n > 1) c_prime[0] = m.off[0] / pivot;
  d_prime[0] = b[0] / pivot;
  for (std::size_t i = 1; i < n; ++i) {
    pivot = m.diag[i] + shift - m.off[i - 1] * c_prime[i - 1];
    pivot_check(pivot, i);
    if (i + 1 < n) c_prime[i] = m.off[i] / pivot;
    d_prime[i] = (b[i] - m.off[i - 1] * d_prime[i - 1]) / pivot;
  }

  std::vector<double> y(n);
  y[n - 1] = d_prime[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) {
    y[i] = d_prime[i] - c_prime[i] * y[i + 1];
  }
  return y;
}

SpectralBasis::SpectralBasis(std::size_t n) : n_(n) {
  if (n == 0) throw std::invalid_argument("spectral_basis: n must be positive");
  eigenvalues_.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    eigenvalues_[k] =
        2.0 * (1.0 - std::cos(static_cast<double>(k) * std::numbers::pi / static_cast<double>(n)));
  }
  eigenvalues_[0] = 0.0;
}

double SpectralBasis::vector(std::size_t k, std::size_t j) const {
  if (k >= n_ || j >= n_) throw std::out_of_range("SpectralBasis::vector: index out of range");
  const double nd = static_cast<double>(n_);
  if (k == 0) return 1.0 / std::sqrt(nd);
  return std::sqrt(2.0 / nd) *
         std::cos(static_cast<double>(k) * (static_cast<double>(j) + 0.5) * std::numbers::pi / nd);
}

std::vector<double> SpectralBasis::eigenvector(std::size_t k) const {
  std::vector<double> q(n_);
  for (std::size_t j = 0; j < n_; ++j) q[j] = vector(k, j);
  return q;
}

ResolventColumn resolvent_last_column(std::size_t n) {
  const TridiagSym a = build_laplacian(n);
  std::vector<double> e_n(n, 0.0);
  e_n.back() = 1.0;
  const double nd = static_cast<double>(n);
  ResolventColumn col{thomas_solve(a, 1.0 / (nd * nd), e_n)};
  assert(col.values.size() == n);
  return col;
}

}  // namespace bilevel_lb
