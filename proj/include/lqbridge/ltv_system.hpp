#pragma once

#include "lqbridge/trajectory.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>

namespace lqbridge {

// Linear time-varying Ito diffusion data on a horizon [t0, t1]:
//
//   dx = A_t x dt + sqrt(2) B_t dw,   killing rate q(t,x) = 1/2 x' Q_t x.
//
// Bhat_t := sqrt(2) B_t is always derived on the fly, never stored.
// Q is symmetrized on ingest; an asymmetric part above tolerance is an error.
struct LtvSystem {
  int n = 0;  // state dimension
  int m = 0;  // input dimension
  MatrixTrajectory A;  // n x n
  MatrixTrajectory B;  // n x m
  MatrixTrajectory Q;  // n x n, symmetric PSD (checked by check_assumptions)
  double t0 = 0.0;
  double t1 = 1.0;
  // Optional structural tag ("heat", "linear_example", "diagonal_case") used
  // by the kernel layer to pick specialized prefactor handling.
  std::string name;

  Matrix Bhat(double tau) const { return std::sqrt(2.0) * B(tau); }
  // Bhat Bhat' = 2 B B'
  Matrix BhatBhatT(double tau) const {
    const Matrix b = B(tau);
    return 2.0 * b * b.transpose();
  }
  Matrix Qsym(double tau) const {
    const Matrix q = Q(tau);
    return 0.5 * (q + q.transpose());
  }
};

struct AssumptionReport {
  double gramian_min_eig = 0.0;          // smallest eigenvalue of Gamma_{t1 t0}
  bool controllable = false;             // A1: gramian_min_eig > tol-scaled zero
  bool q_psd_ok = false;                 // A2 (PSD clause) on the scan grid
  std::optional<double> q_pd_witness;    // A2 strict clause: Q_s > 0 at some s
  double tol = 1e-9;
};

namespace detail {

// Number of RK4 steps for a horizon of length |dt|. Held constant (512) for
// horizons up to 2 time units so integration error varies smoothly with the
// endpoints (important for finite-difference consumers); grows linearly for
// longer horizons.
inline int default_steps(double dt) {
  const double span = std::abs(dt);
  return std::max(512, static_cast<int>(std::ceil(256.0 * span)));
}

inline void check_finite(const Matrix& M, const char* what, int step) {
  if (!M.allFinite()) {
    throw std::runtime_error(std::string("integration failure: non-finite ") +
                             what + " at step " + std::to_string(step));
  }
}

// Fixed-step RK4 for dX/ds = F(s, X) from s0 to s1 (either direction).
template <typename Deriv>
Matrix rk4(const Matrix& X0, double s0, double s1, int steps, Deriv&& F,
           const char* what) {
  Matrix X = X0;
  const double h = (s1 - s0) / steps;
  for (int k = 0; k < steps; ++k) {
    const double s = s0 + k * h;
    const Matrix k1 = F(s, X);
    const Matrix k2 = F(s + 0.5 * h, X + (0.5 * h) * k1);
    const Matrix k3 = F(s + 0.5 * h, X + (0.5 * h) * k2);
    const Matrix k4 = F(s + h, X + h * k3);
    X += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    check_finite(X, what, k);
  }
  return X;
}

}  // namespace detail

// State transition matrix Phi_{t,tau} of dPhi/dt = A_t Phi, Phi_{tau,tau} = I,
// by fixed-step RK4. Works for t >= tau and t < tau alike.
inline Matrix state_transition(const MatrixTrajectory& A, double t, double tau,
                               int steps = 0) {
  const int n = A.rows();
  if (t == tau) return Matrix::Identity(n, n);
  if (steps <= 0) steps = detail::default_steps(t - tau);
  return detail::rk4(
      Matrix::Identity(n, n), tau, t, steps,
      [&](double s, const Matrix& X) -> Matrix { return A(s) * X; },
      "state transition");
}

// Controllability Gramian Gamma_{t,t0} = int_{t0}^{t} Phi_{t,s} Bh_s Bh_s'
// Phi_{t,s}' ds with Bh = sqrt(2) B, computed by integrating the equivalent
// Lyapunov ODE dG/dt = A G + G A' + Bh Bh', G(t0) = 0, jointly with Phi (one
// forward RK4 pass, O(h^4)).
inline Matrix controllability_gramian(const MatrixTrajectory& A,
                                      const MatrixTrajectory& B, double t0,
                                      double t, int steps = 0,
                                      bool* degenerate = nullptr) {
  const int n = A.rows();
  if (degenerate) *degenerate = false;
  if (t == t0) {
    if (degenerate) *degenerate = true;
    return Matrix::Zero(n, n);
  }
  if (steps <= 0) steps = detail::default_steps(t - t0);
  Matrix G = detail::rk4(
      Matrix::Zero(n, n), t0, t, steps,
      [&](double s, const Matrix& X) -> Matrix {
        const Matrix As = A(s);
        const Matrix Bs = B(s);
        return As * X + X * As.transpose() + 2.0 * Bs * Bs.transpose();
      },
      "controllability Gramian");
  return 0.5 * (G + G.transpose());
}

inline Matrix controllability_gramian(const LtvSystem& sys, double t0, double t,
                                      int steps = 0,
                                      bool* degenerate = nullptr) {
  return controllability_gramian(sys.A, sys.B, t0, t, steps, degenerate);
}

// Verifies the standing assumptions over the full horizon:
//   A1: Gamma_{t1 t0} > 0 (finite-horizon controllability),
//   A2: Q_tau PSD everywhere, with an optional strict-PD witness time.
// Failures are report verdicts, never exceptions.
inline AssumptionReport check_assumptions(const LtvSystem& sys,
                                          double tol = 1e-9) {
  AssumptionReport rep;
  rep.tol = tol;

  const Matrix G = controllability_gramian(sys, sys.t0, sys.t1);
  Eigen::SelfAdjointEigenSolver<Matrix> es(G);
  rep.gramian_min_eig = es.eigenvalues().minCoeff();
  const double gscale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  rep.controllable = rep.gramian_min_eig > tol * gscale;

  const int scan = 257;
  rep.q_psd_ok = true;
  for (int k = 0; k < scan; ++k) {
    const double s = sys.t0 + (sys.t1 - sys.t0) * k / (scan - 1);
    const Matrix Qs = sys.Qsym(s);
    Eigen::SelfAdjointEigenSolver<Matrix> eq(Qs);
    const double lo = eq.eigenvalues().minCoeff();
    const double qscale = std::max(1.0, eq.eigenvalues().cwiseAbs().maxCoeff());
    if (lo < -tol * qscale) rep.q_psd_ok = false;
    if (!rep.q_pd_witness && lo > tol * qscale) rep.q_pd_witness = s;
  }
  return rep;
}

// Validated constructor: checks shapes, horizon ordering, tabulated-grid
// coverage, and Q symmetry (relative tolerance 1e-10 on the asymmetric part).
inline LtvSystem make_ltv_system(int n, int m, MatrixTrajectory A,
                                 MatrixTrajectory B, MatrixTrajectory Q,
                                 double t0, double t1, std::string name = "") {
  if (n <= 0 || m <= 0) throw std::invalid_argument("dimensions must be positive");
  if (!(t0 < t1)) throw std::invalid_argument("horizon requires t0 < t1");
  if (A.rows() != n || A.cols() != n) throw std::invalid_argument("A must be n x n");
  if (B.rows() != n || B.cols() != m) throw std::invalid_argument("B must be n x m");
  if (Q.rows() != n || Q.cols() != n) throw std::invalid_argument("Q must be n x n");
  for (const MatrixTrajectory* traj : {&A, &B, &Q}) {
    if (!traj->covers(t0, t1)) {
      throw std::invalid_argument("tabulated trajectory does not cover horizon");
    }
  }
  // Q symmetry audit on a coarse scan; the evaluator symmetrizes on use.
  for (int k = 0; k <= 16; ++k) {
    const double s = t0 + (t1 - t0) * k / 16.0;
    const Matrix q = Q(s);
    const double asym = (q - q.transpose()).norm();
    if (asym > 1e-10 * std::max(1.0, q.norm())) {
      throw std::invalid_argument("Q asymmetric beyond tolerance at tau=" +
                                  std::to_string(s));
    }
  }
  LtvSystem sys;
  sys.n = n;
  sys.m = m;
  sys.A = std::move(A);
  sys.B = std::move(B);
  sys.Q = std::move(Q);
  sys.t0 = t0;
  sys.t1 = t1;
  sys.name = std::move(name);
  return sys;
}

// ---------------------------------------------------------------------------
// Builtin systems
// ---------------------------------------------------------------------------

// Pure diffusion: A = 0, B = I, Q = 0 (kernel is the Euclidean heat kernel).
inline LtvSystem heat_system(int n, double t0 = 0.0, double t1 = 1.0) {
  return make_ltv_system(n, n, MatrixTrajectory::zero(n, n),
                         MatrixTrajectory::identity(n),
                         MatrixTrajectory::zero(n, n), t0, t1, "heat");
}

// A = 0, B = I, Q = 2D with D constant positive diagonal: the classical
// quadratic-killing case with fully explicit hyperbolic-function solution.
inline LtvSystem diagonal_system(const Vector& D_diag, double t0 = 0.0,
                                 double t1 = 1.0) {
  const int n = static_cast<int>(D_diag.size());
  if ((D_diag.array() <= 0.0).any()) {
    throw std::invalid_argument("diagonal_system: D must be positive");
  }
  return make_ltv_system(n, n, MatrixTrajectory::zero(n, n),
                         MatrixTrajectory::identity(n),
                         MatrixTrajectory::constant(
                             (2.0 * D_diag).asDiagonal().toDenseMatrix()),
                         t0, t1, "diagonal_case");
}

// Q = 0 with a genuinely time-varying controllable (A_t, B): the kernel is a
// Gaussian transition density (no killing).
inline LtvSystem linear_example_system(double t0 = 0.0, double t1 = 1.0) {
  auto Afn = [](double s) {
    Matrix A(2, 2);
    A << 0.2, 1.0 + 0.5 * std::sin(s), -1.0, -0.3;
    return A;
  };
  Matrix B(2, 2);
  B << 1.0, 0.0, 0.2, 1.0;
  return make_ltv_system(2, 2, MatrixTrajectory::closed_form(2, 2, Afn),
                         MatrixTrajectory::constant(B),
                         MatrixTrajectory::zero(2, 2), t0, t1,
                         "linear_example");
}

}  // namespace lqbridge
