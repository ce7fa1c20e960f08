#pragma once

#include "lqbridge/ltv_system.hpp"

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <memory>
#include <stdexcept>
#include <vector>

namespace lqbridge {

// Tabulated solution of the backward Riccati matrix ODE
//
//   dK/dtau = -A' K - K A + K Bh Bh' K - Q,   K(t) = K1,
//
// stored on a uniform grid over [t0, t] (grid.front() = t0, grid.back() = t).
struct RiccatiSolution {
  double t0 = 0.0;
  double t = 1.0;
  Matrix K1;
  std::vector<double> grid;    // increasing, uniform
  std::vector<Matrix> values;  // Pi(grid[j], K1, t), symmetric

  const Matrix& at_index(std::size_t j) const { return values[j]; }

  // Linear interpolation between stored nodes (exact at nodes).
  Matrix at_time(double tau) const {
    if (tau <= grid.front()) return values.front();
    if (tau >= grid.back()) return values.back();
    const double h = (grid.back() - grid.front()) / (grid.size() - 1);
    const double u = (tau - grid.front()) / h;
    const std::size_t lo = std::min(static_cast<std::size_t>(u), grid.size() - 2);
    const double s = u - lo;
    return (1.0 - s) * values[lo] + s * values[lo + 1];
  }
};

// 2n x 2n transition blocks of the linear Hamiltonian ODE with coefficient
// H_tau = [[A, -Bh Bh'], [-Q, -A']].
struct HamiltonianTransition {
  Matrix P11, P12, P21, P22;
};

namespace detail {

inline Matrix hamiltonian_coeff(const LtvSystem& sys, double s) {
  const int n = sys.n;
  const Matrix As = sys.A(s);
  Matrix H(2 * n, 2 * n);
  H.topLeftCorner(n, n) = As;
  H.topRightCorner(n, n) = -sys.BhatBhatT(s);
  H.bottomLeftCorner(n, n) = -sys.Qsym(s);
  H.bottomRightCorner(n, n) = -As.transpose();
  return H;
}

inline double condition_estimate(const Matrix& M) {
  Eigen::JacobiSVD<Matrix> svd(M);
  const double smin = svd.singularValues().minCoeff();
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return svd.singularValues().maxCoeff() / smin;
}

}  // namespace detail

// Backward RK4 integration of the Riccati ODE, parameterized by sigma = t - tau
// so the integrator marches forward; the iterate is re-symmetrized after every
// step. Entries exceeding escape_bound abort with the blow-up time (finite
// escape must not happen for K1 PSD under the standing assumptions, but can
// occur numerically for near-boundary data).
inline RiccatiSolution solve_riccati(const LtvSystem& sys, const Matrix& K1,
                                     double t, int steps = 0,
                                     double escape_bound = 1e12) {
  const int n = sys.n;
  if (K1.rows() != n || K1.cols() != n) {
    throw std::invalid_argument("solve_riccati: K1 must be n x n");
  }
  if ((K1 - K1.transpose()).norm() > 1e-10 * std::max(1.0, K1.norm())) {
    throw std::invalid_argument("solve_riccati: K1 must be symmetric");
  }
  if (steps <= 0) steps = 2 * detail::default_steps(t - sys.t0);

  RiccatiSolution sol;
  sol.t0 = sys.t0;
  sol.t = t;
  sol.K1 = K1;
  sol.grid.resize(steps + 1);
  sol.values.resize(steps + 1);
  const double h = (t - sys.t0) / steps;
  for (int j = 0; j <= steps; ++j) sol.grid[j] = sys.t0 + j * h;
  sol.values[steps] = 0.5 * (K1 + K1.transpose());

  // d K / d sigma at tau = t - sigma (forward in sigma).
  auto deriv = [&](double sigma, const Matrix& K) -> Matrix {
    const double tau = t - sigma;
    const Matrix As = sys.A(tau);
    const Matrix BBt = sys.BhatBhatT(tau);
    return As.transpose() * K + K * As - K * BBt * K + sys.Qsym(tau);
  };

  Matrix K = sol.values[steps];
  for (int j = steps; j > 0; --j) {
    const double sigma = t - sol.grid[j];
    const Matrix k1 = deriv(sigma, K);
    const Matrix k2 = deriv(sigma + 0.5 * h, K + (0.5 * h) * k1);
    const Matrix k3 = deriv(sigma + 0.5 * h, K + (0.5 * h) * k2);
    const Matrix k4 = deriv(sigma + h, K + h * k3);
    K += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    K = 0.5 * (K + K.transpose()).eval();
    if (!K.allFinite() || K.cwiseAbs().maxCoeff() > escape_bound) {
      throw std::runtime_error("solve_riccati: finite escape near tau=" +
                               std::to_string(sol.grid[j - 1]));
    }
    sol.values[j - 1] = K;
  }
  return sol;
}

// Transition Psi_{t,tau} := Phi_H(tau, t) of the Hamiltonian ODE, integrated
// backward from the identity at s = t down to s = tau.
inline HamiltonianTransition hamiltonian_transition(const LtvSystem& sys,
                                                    double t, double tau,
                                                    int steps = 0) {
  const int n = sys.n;
  if (steps <= 0) steps = detail::default_steps(t - tau);
  Matrix Psi = Matrix::Identity(2 * n, 2 * n);
  if (tau != t) {
    Psi = detail::rk4(
        Psi, t, tau, steps,
        [&](double s, const Matrix& X) -> Matrix {
          return detail::hamiltonian_coeff(sys, s) * X;
        },
        "Hamiltonian transition");
  }
  HamiltonianTransition out;
  out.P11 = Psi.topLeftCorner(n, n);
  out.P12 = Psi.topRightCorner(n, n);
  out.P21 = Psi.bottomLeftCorner(n, n);
  out.P22 = Psi.bottomRightCorner(n, n);
  return out;
}

// Linear-fractional representation of the Riccati solution:
//   Pi(tau, K1, t) = (Psi21 + Psi22 K1)(Psi11 + Psi12 K1)^{-1}.
// Cross-check path for solve_riccati; fails loudly near conjugate points.
inline Matrix riccati_via_hamiltonian(const LtvSystem& sys, const Matrix& K1,
                                      double t, double tau, int steps = 0) {
  const HamiltonianTransition Psi = hamiltonian_transition(sys, t, tau, steps);
  const Matrix denom = Psi.P11 + Psi.P12 * K1;
  if (detail::condition_estimate(denom) > 1e12) {
    throw std::runtime_error(
        "riccati_via_hamiltonian: near-conjugate-point (ill-conditioned "
        "Psi11 + Psi12 K1)");
  }
  const Matrix num = Psi.P21 + Psi.P22 * K1;
  Matrix Pi = num * denom.colPivHouseholderQr().inverse();
  return 0.5 * (Pi + Pi.transpose());
}

// Closed-loop data for the horizon [t0, t]: the feedback-shifted drift
// Ahat_tau = A_tau - Bh Bh' Pi(tau, 0, t), its transition Phihat_{t,t0}, and
// Gramian Gammahat_{t,t0}. The Riccati solve is stored at twice the base
// resolution so RK4 stage times of downstream integrations land on nodes.
struct ClosedLoopSystem {
  LtvSystem sys;  // the open-loop system (by value; trajectories are cheap)
  double t0 = 0.0;
  double t = 1.0;
  std::shared_ptr<const RiccatiSolution> pi;  // K1 = 0 on [t0, t]
  MatrixTrajectory Ahat;
  Matrix Phihat;    // Phihat_{t,t0}
  Matrix Gammahat;  // Gammahat_{t,t0}, symmetric PD
};

inline ClosedLoopSystem closed_loop(const LtvSystem& sys, double t,
                                    int steps = 0, double tol = 1e-12) {
  ClosedLoopSystem cl;
  cl.sys = sys;
  cl.t0 = sys.t0;
  cl.t = t;
  if (steps <= 0) steps = detail::default_steps(t - sys.t0);

  auto pi = std::make_shared<RiccatiSolution>(
      solve_riccati(sys, Matrix::Zero(sys.n, sys.n), t, 2 * steps));
  cl.pi = pi;

  const MatrixTrajectory A = sys.A;
  const MatrixTrajectory B = sys.B;
  cl.Ahat = MatrixTrajectory::closed_form(
      sys.n, sys.n, [A, B, pi](double s) -> Matrix {
        const Matrix Bs = B(s);
        return A(s) - 2.0 * Bs * Bs.transpose() * pi->at_time(s);
      });

  // Joint forward pass for Phihat and Gammahat (Lyapunov ODE), sharing stage
  // times with the stored Riccati nodes.
  const int n = sys.n;
  Matrix X(n, 2 * n);
  X.leftCols(n) = Matrix::Identity(n, n);
  X.rightCols(n) = Matrix::Zero(n, n);
  X = detail::rk4(
      X, sys.t0, t, steps,
      [&](double s, const Matrix& Y) -> Matrix {
        const Matrix Ah = cl.Ahat(s);
        const Matrix BBt = sys.BhatBhatT(s);
        Matrix D(n, 2 * n);
        D.leftCols(n) = Ah * Y.leftCols(n);
        D.rightCols(n) =
            Ah * Y.rightCols(n) + Y.rightCols(n) * Ah.transpose() + BBt;
        return D;
      },
      "closed-loop transition/Gramian");
  cl.Phihat = X.leftCols(n);
  cl.Gammahat = 0.5 * (X.rightCols(n) + X.rightCols(n).transpose());

  Eigen::SelfAdjointEigenSolver<Matrix> es(cl.Gammahat);
  const double scale = std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  if (es.eigenvalues().minCoeff() <= tol * scale) {
    throw std::runtime_error(
        "closed_loop: Gammahat lost positive definiteness (numerical "
        "breakdown; the closed-loop pair must stay controllable)");
  }
  return cl;
}

}  // namespace lqbridge
