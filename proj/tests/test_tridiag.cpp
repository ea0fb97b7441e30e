#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <random>
#include <vector>

#include "bilevel_lb/tridiag.hpp"

using namespace bilevel_lb;

namespace {

Eigen::MatrixXd dense(const TridiagSym& m) {
  const auto n = static_cast<Eigen::Index>(m.size());
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    d(i, i) = m.diag[i];
    if (i + 1 < n) d(i, i + 1) = d(i + 1, i) = m.off[i];
  }
  return d;
}

Eigen::VectorXd resolvent_oracle(std::size_t n) {
  const auto N = static_cast<Eigen::Index>(n);
  Eigen::MatrixXd s = dense(build_laplacian(n)) + Eigen::MatrixXd::Identity(N, N) / double(n * n);
  return s.inverse().col(N - 1);
}

}  // namespace

TEST_CASE("laplacian structure") {
  const TridiagSym a3 = build_laplacian(3);
  CHECK(a3.diag == std::vector<double>{1, 2, 1});
  CHECK(a3.off == std::vector<double>{-1, -1});
  const TridiagSym a1 = build_laplacian(1);
  CHECK(a1.diag == std::vector<double>{0});
  CHECK(a1.off.empty());
  CHECK_THROWS_AS(build_laplacian(0), std::invalid_argument);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(dense(build_laplacian(2)));
  CHECK(es.eigenvalues()(0) == doctest::Approx(0.0).epsilon(1e-14));
  CHECK(es.eigenvalues()(1) == doctest::Approx(2.0));
}

TEST_CASE("thomas solve") {
  const std::vector<double> x = thomas_solve(build_laplacian(2), 1.0, std::vector<double>{1, 0});
  CHECK(x[0] == doctest::Approx(2.0 / 3));
  CHECK(x[1] == doctest::Approx(1.0 / 3));

  const std::vector<double> z = thomas_solve(build_laplacian(5), 0.3, std::vector<double>(5, 0.0));
  for (double v : z) CHECK(v == 0.0);

  const Eigen::Matrix3d inv3 =
      (dense(build_laplacian(3)) + Eigen::Matrix3d::Identity() / 9.0).inverse();
  const std::vector<double> c = thomas_solve(build_laplacian(3), 1.0 / 9, std::vector<double>{0, 0, 1});
  for (int i = 0; i < 3; ++i) CHECK(std::abs(c[i] - inv3(i, 2)) <= 1e-10);

  std::mt19937_64 gen(7);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + trial % 8;
    TridiagSym m;
    for (std::size_t i = 0; i < n; ++i) m.diag.push_back(3.0 + u(gen));
    for (std::size_t i = 0; i + 1 < n; ++i) m.off.push_back(u(gen));
    const double shift = 0.5 * (u(gen) + 1.0);
    std::vector<double> b(n);
    for (auto& v : b) v = u(gen);
    const auto N = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd d = dense(m) + shift * Eigen::MatrixXd::Identity(N, N);
    const Eigen::VectorXd ref = d.inverse() * Eigen::Map<Eigen::VectorXd>(b.data(), N);
    const std::vector<double> got = thomas_solve(m, shift, b);
    const double err = (Eigen::Map<const Eigen::VectorXd>(got.data(), N) - ref).norm();
    CHECK(err <= 1e-9 * ref.norm());
  }

  CHECK_THROWS_AS(thomas_solve(build_laplacian(3), 0.0, std::vector<double>{1, 0, 0}),
                  SingularSystemError);
  CHECK_THROWS(thomas_solve(build_laplacian(3), 1.0, std::vector<double>{1, 0}));
}

TEST_CASE("spectral basis") {
  const SpectralBasis b3 = spectral_basis(3);
  CHECK(b3.eigenvalue(0) == 0.0);
  CHECK(b3.eigenvalue(1) == doctest::Approx(1.0));
  CHECK(b3.eigenvalue(2) == doctest::Approx(3.0));

  for (std::size_t n : {2u, 5u, 9u, 16u}) {
    const auto N = static_cast<Eigen::Index>(n);
    const Eigen::MatrixXd a = dense(build_laplacian(n));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    const SpectralBasis b = spectral_basis(n);
    for (std::size_t k = 0; k < n; ++k) {
      CHECK(b.eigenvalue(k) == doctest::Approx(es.eigenvalues()(Eigen::Index(k))).epsilon(1e-10).scale(1));
      CHECK(b.eigenvalue(k) < 4.0);
      const std::vector<double> q = b.eigenvector(k);
      const Eigen::Map<const Eigen::VectorXd> qv(q.data(), N);
      CHECK((a * qv - b.eigenvalue(k) * qv).norm() <= 1e-12);
      CHECK(qv.norm() == doctest::Approx(1.0));
    }
  }
}

TEST_CASE("resolvent column") {
  const ResolventColumn r1 = resolvent_last_column(1);
  REQUIRE(r1.size() == 1);
  CHECK(r1.first() == doctest::Approx(1.0));

  const ResolventColumn r2 = resolvent_last_column(2);
  CHECK(r2.values[0] == doctest::Approx(16.0 / 9).epsilon(1e-14));
  CHECK(r2.values[1] == doctest::Approx(20.0 / 9).epsilon(1e-14));

  // eigen-expansion oracle
  for (std::size_t n : {2u, 3u, 7u, 20u}) {
    const SpectralBasis b = spectral_basis(n);
    const ResolventColumn r = resolvent_last_column(n);
    for (std::size_t i = 0; i < n; ++i) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k)
        s += b.vector(k, i) * b.vector(k, n - 1) / (b.eigenvalue(k) + 1.0 / double(n * n));
      CHECK(std::abs(r.values[i] - s) <= 1e-10 * std::abs(s));
    }
    const Eigen::VectorXd dense_col = resolvent_oracle(n);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(r.values[i] == doctest::Approx(dense_col(Eigen::Index(i))).epsilon(1e-10));
  }
}

TEST_CASE("resolvent bounds and monotone column") {
  const double c = 1.0 - std::acos(-1.0) * std::acos(-1.0) / 12;
  const double C = 1.0 + std::acos(-1.0) * std::acos(-1.0) / 12;
  for (std::size_t n = 1; n <= 512; ++n) {
    const ResolventColumn r = resolvent_last_column(n);
    const double dn = double(n);
    CHECK(r.first() >= c * dn);
    CHECK(r.last() <= C * dn);
    for (std::size_t i = 0; i + 1 < n; ++i) CHECK(r.values[i + 1] - r.values[i] >= 0.0);
  }
  CHECK(resolvent_last_column(7).first() >= 1.243);
}

TEST_CASE("laplacian is positive semidefinite") {
  std::mt19937_64 gen(11);
  std::normal_distribution<double> g;
  for (std::size_t n : {2u, 8u, 32u}) {
    const TridiagSym a = build_laplacian(n);
    for (int trial = 0; trial < 10000; ++trial) {
      std::vector<double> z(n);
      for (auto& v : z) v = g(gen);
      const std::vector<double> az = a.apply(z);
      double q = 0.0;
      for (std::size_t i = 0; i < n; ++i) q += z[i] * az[i];
      REQUIRE(q >= -1e-12);
    }
  }
}
