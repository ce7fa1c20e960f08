#include "lqbridge/riccati.hpp"

#include "catch_amalgamated.hpp"

#include <cmath>

using namespace lqbridge;

namespace {

LtvSystem random_system(int n, std::uint64_t salt) {
  // Deterministic pseudo-random stable-ish constant system.
  std::uint64_t s = salt;
  auto next = [&s]() {
    s ^= s << 13;
    s ^= s >> 7;
    s ^= s << 17;
    return static_cast<double>(s % 2000) / 1000.0 - 1.0;
  };
  Matrix A(n, n), B(n, n), Qroot(n, n);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      A(r, c) = 0.5 * next();
      B(r, c) = next();
      Qroot(r, c) = 0.5 * next();
    }
  }
  A -= 0.5 * Matrix::Identity(n, n);
  B += Matrix::Identity(n, n);  // keep (A, B) comfortably controllable
  const Matrix Q = Qroot * Qroot.transpose();
  return make_ltv_system(n, n, MatrixTrajectory::constant(A),
                         MatrixTrajectory::constant(B),
                         MatrixTrajectory::constant(Q), 0.0, 1.0);
}

}  // namespace

TEST_CASE("Riccati: zero cost and terminal condition give the zero solution") {
  const LtvSystem sys = heat_system(2);
  const RiccatiSolution pi = solve_riccati(sys, Matrix::Zero(2, 2), 1.0);
  for (const Matrix& P : pi.values) CHECK(P.norm() == 0.0);
}

TEST_CASE("Riccati: terminal condition is met exactly") {
  const LtvSystem sys = diagonal_system(Vector::Constant(1, 0.25));
  Matrix K1 = Matrix::Constant(1, 1, 0.7);
  const RiccatiSolution pi = solve_riccati(sys, K1, 1.0);
  CHECK((pi.at_time(1.0) - K1).norm() < 1e-14);
}

TEST_CASE("Riccati: scalar quadratic-killing closed form tanh") {
  // A = 0, Bhat = sqrt(2), Q = 0.5 (D = 0.25), K1 = 0:
  // Pi(tau, 0, t) = sqrt(D) tanh(2 sqrt(D)(t - tau)) = 0.5 tanh(t - tau).
  const LtvSystem sys = diagonal_system(Vector::Constant(1, 0.25));
  const RiccatiSolution pi = solve_riccati(sys, Matrix::Zero(1, 1), 1.0);
  CHECK(pi.at_time(0.0)(0, 0) ==
        Catch::Approx(0.5 * std::tanh(1.0)).epsilon(1e-9));
  CHECK(pi.at_time(0.6)(0, 0) ==
        Catch::Approx(0.5 * std::tanh(0.4)).epsilon(1e-6));
}

TEST_CASE("Riccati: constant scalar coefficients vs 10x-resolution reference") {
  Matrix A = Matrix::Constant(1, 1, 0.3);
  Matrix B = Matrix::Constant(1, 1, 0.8);
  Matrix Q = Matrix::Constant(1, 1, 0.6);
  const LtvSystem sys = make_ltv_system(
      1, 1, MatrixTrajectory::constant(A), MatrixTrajectory::constant(B),
      MatrixTrajectory::constant(Q), 0.0, 1.0);
  const Matrix K1 = Matrix::Constant(1, 1, 0.2);
  const RiccatiSolution coarse = solve_riccati(sys, K1, 1.0, 1024);
  const RiccatiSolution fine = solve_riccati(sys, K1, 1.0, 10240);
  const double rel = std::abs(coarse.at_time(0.0)(0, 0) -
                              fine.at_time(0.0)(0, 0)) /
                     std::abs(fine.at_time(0.0)(0, 0));
  CHECK(rel < 1e-8);
}

TEST_CASE("Riccati: stored iterates stay symmetric and PSD") {
  const LtvSystem sys = random_system(3, 12345);
  const RiccatiSolution pi = solve_riccati(sys, Matrix::Zero(3, 3), 1.0);
  for (const Matrix& P : pi.values) {
    CHECK((P - P.transpose()).norm() < 1e-12);
    Eigen::SelfAdjointEigenSolver<Matrix> es(P);
    CHECK(es.eigenvalues().minCoeff() > -1e-9);
  }
}

TEST_CASE("Riccati: finite escape is detected") {
  // Q = -3 I (indefinite, outside A2) blows up backward from K1 = 0 over a
  // long enough horizon.
  const LtvSystem sys = make_ltv_system(
      1, 1, MatrixTrajectory::zero(1, 1), MatrixTrajectory::identity(1),
      MatrixTrajectory::constant(Matrix::Constant(1, 1, -3.0)), 0.0, 4.0);
  CHECK_THROWS_WITH(solve_riccati(sys, Matrix::Zero(1, 1), 4.0),
                    Catch::Matchers::ContainsSubstring("escape"));
}

TEST_CASE("Hamiltonian LFT: tau = t gives K1 back") {
  const LtvSystem sys = random_system(2, 99);
  const Matrix K1 = Matrix::Zero(2, 2);
  CHECK(riccati_via_hamiltonian(sys, K1, 1.0, 1.0).norm() < 1e-14);
}

TEST_CASE("Hamiltonian transition: diagonal case hyperbolic blocks") {
  const LtvSystem sys = diagonal_system(Vector::Constant(1, 0.25));
  const HamiltonianTransition Psi = hamiltonian_transition(sys, 1.0, 0.0);
  CHECK(Psi.P22(0, 0) == Catch::Approx(std::cosh(1.0)).epsilon(1e-9));
  CHECK(Psi.P11(0, 0) == Catch::Approx(std::cosh(1.0)).epsilon(1e-9));
}

TEST_CASE("Hamiltonian flow preserves the symplectic form") {
  const LtvSystem sys = random_system(2, 7);
  const HamiltonianTransition Psi = hamiltonian_transition(sys, 1.0, 0.0);
  Matrix F(4, 4);
  F << Psi.P11, Psi.P12, Psi.P21, Psi.P22;
  Matrix J(4, 4);
  J.setZero();
  J.block(0, 2, 2, 2) = Matrix::Identity(2, 2);
  J.block(2, 0, 2, 2) = -Matrix::Identity(2, 2);
  CHECK((F.transpose() * J * F - J).norm() < 1e-9);
}

TEST_CASE("Riccati cross-method agreement on random systems") {
  for (int n = 1; n <= 4; ++n) {
    for (int k = 0; k < 2; ++k) {
      const LtvSystem sys = random_system(n, 1000 * n + k);
      Matrix R(n, n);
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < n; ++c) R(r, c) = std::sin(1.0 + r + 2 * c + k);
      }
      const Matrix K1 = R * R.transpose();
      const RiccatiSolution pi = solve_riccati(sys, K1, 1.0);
      const Matrix lft = riccati_via_hamiltonian(sys, K1, 1.0, 0.0);
      CHECK((pi.at_time(0.0) - lft).norm() < 1e-7);
    }
  }
}

TEST_CASE("closed loop: zero cost leaves the open-loop system unchanged") {
  const LtvSystem sys = linear_example_system();
  const ClosedLoopSystem cl = closed_loop(sys, 1.0);
  CHECK((cl.Ahat(0.37) - sys.A(0.37)).norm() < 1e-12);
  CHECK((cl.Phihat - state_transition(sys.A, 1.0, 0.0)).norm() < 1e-10);
  CHECK((cl.Gammahat - controllability_gramian(sys, 0.0, 1.0)).norm() < 1e-10);
}

TEST_CASE("closed loop: diagonal case sech / coth values") {
  const LtvSystem sys = diagonal_system(Vector::Constant(1, 0.25));
  const ClosedLoopSystem cl = closed_loop(sys, 1.0);
  CHECK(cl.Phihat(0, 0) == Catch::Approx(1.0 / std::cosh(1.0)).epsilon(1e-8));
  CHECK(1.0 / cl.Gammahat(0, 0) ==
        Catch::Approx(0.5 / std::tanh(1.0)).epsilon(1e-8));
}

TEST_CASE("closed loop: heat case Gramian 2(t - t0) I") {
  const LtvSystem sys = heat_system(2);
  const ClosedLoopSystem cl = closed_loop(sys, 1.0);
  CHECK((cl.Gammahat - 2.0 * Matrix::Identity(2, 2)).norm() < 1e-9);
}
