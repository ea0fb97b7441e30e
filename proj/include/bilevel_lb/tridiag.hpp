#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace bilevel_lb {

class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Symmetric tri-diagonal matrix: diag has n entries, off has n - 1.
struct TridiagSym {
  std::vector<double> diag;
  std::vector<double> off;

  std::size_t size() const { return diag.size(); }
  std::vector<double> apply(std::span<const double> v) const;
};

// 1-D discrete Laplacian with Neumann ends: diag (1, 2, ..., 2, 1), off -1.
// n = 1 gives the 1x1 zero matrix. Throws std::invalid_argument for n = 0.
TridiagSym build_laplacian(std::size_t n);

// Solves (m + shift I) y = b with the Thomas algorithm.
// Throws SingularSystemError if a pivot falls below 1e-14 in magnitude.
std::vector<double> thomas_solve(const TridiagSym& m, double shift, std::span<const double> b);

// Closed-form eigenpairs of build_laplacian(n). Indices are 0-based:
//   eigenvalue(k) = 2 (1 - cos(k pi / n))
//   vector(k, j)  = 1/sqrt(n)                              for k = 0
//                 = sqrt(2/n) cos(k (j + 1/2) pi / n)      for k >= 1
class SpectralBasis {
 public:
  explicit SpectralBasis(std::size_t n);

  std::size_t size() const { return n_; }
  double eigenvalue(std::size_t k) const { return eigenvalues_.at(k); }
  const std::vector<double>& eigenvalues() const { return eigenvalues_; }
  double vector(std::size_t k, std::size_t j) const;
  std::vector<double> eigenvector(std::size_t k) const;

 private:
  std::size_t n_;
  std::vector<double> eigenvalues_;
};

inline SpectralBasis spectral_basis(std::size_t n) { return SpectralBasis(n); }

// Last column of S = (A + n^-2 I)^-1 for the Laplacian A.
struct ResolventColumn {
  std::vector<double> values;

  std::size_t size() const { return values.size(); }
  double first() const { return values.front(); }  // S_{1,n}
  double last() const { return values.back(); }    // S_{n,n}
};

ResolventColumn resolvent_last_column(std::size_t n);

}  // namespace bilevel_lb
