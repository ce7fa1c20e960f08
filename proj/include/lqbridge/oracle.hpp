#pragma once

#include "lqbridge/kernel.hpp"
#include "lqbridge/rng.hpp"

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include <cmath>
#include <functional>
#include <stdexcept>
#include <thread>
#include <vector>

namespace lqbridge {

// ---------------------------------------------------------------------------
// Two-point BVP oracle for the deterministic OCP behind the distance form
// ---------------------------------------------------------------------------

struct OcpSolution {
  double eta = 0.0;                 // optimal cost
  std::vector<Vector> z;            // states on the uniform grid (N+1 nodes)
  std::vector<Vector> u;            // piecewise-constant controls (N)
  double kkt_residual = 0.0;
  int iterations = 1;               // direct solve: one factorization
};

// Direct transcription of
//   min int (1/2 |u|^2 + 1/2 z'Qz) dt,  dz = A z dt + Bh u dt,
//   z(t0) = x, z(t) = y,
// with piecewise-constant u on grid_n intervals and trapezoid dynamics
// constraints. The problem is a linearly constrained convex QP; the KKT
// system is assembled sparse and solved exactly (no iteration), which makes
// this oracle immune to Hamiltonian stiffness.
inline OcpSolution solve_bvp_ocp(const LtvSystem& sys, const Vector& x,
                                 const Vector& y, double t0, double t,
                                 int grid_n = 512) {
  const int n = sys.n;
  const int m = sys.m;
  const int N = grid_n;
  const double h = (t - t0) / N;

  // Variable layout: z_0..z_N (n each), then u_0..u_{N-1} (m each).
  const int nz = (N + 1) * n;
  const int nu = N * m;
  const int nv = nz + nu;
  // Constraints: z_0 = x (n), z_N = y (n), N trapezoid dynamics rows (n each).
  const int nc = 2 * n + N * n;
  const int dim = nv + nc;

  std::vector<Matrix> A_nodes(N + 1), Q_nodes(N + 1), Bh_mid(N);
  for (int k = 0; k <= N; ++k) {
    const double s = t0 + k * h;
    A_nodes[k] = sys.A(s);
    Q_nodes[k] = sys.Qsym(s);
    if (k < N) Bh_mid[k] = sys.Bhat(s + 0.5 * h);
  }

  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(static_cast<std::size_t>(dim) * (2 * n + m));
  auto add = [&](int r, int c, double v) {
    if (v != 0.0) trip.emplace_back(r, c, v);
  };
  auto add_sym = [&](int r, int c, double v) {
    add(r, c, v);
    if (r != c) add(c, r, v);
  };

  // Hessian: trapezoid state-cost weights on z, h I on u.
  for (int k = 0; k <= N; ++k) {
    const double w = h * ((k == 0 || k == N) ? 0.5 : 1.0);
    for (int a = 0; a < n; ++a) {
      for (int b = a; b < n; ++b) add_sym(k * n + a, k * n + b, w * Q_nodes[k](a, b));
    }
  }
  for (int k = 0; k < N; ++k) {
    for (int a = 0; a < m; ++a) add(nz + k * m + a, nz + k * m + a, h);
  }

  // Constraint rows (stored in the KKT off-diagonal blocks).
  auto crow = [&](int r) { return nv + r; };
  Vector rhs = Vector::Zero(dim);
  int r = 0;
  for (int a = 0; a < n; ++a, ++r) {  // z_0 = x
    add_sym(crow(r), a, 1.0);
    rhs[crow(r)] = x[a];
  }
  for (int a = 0; a < n; ++a, ++r) {  // z_N = y
    add_sym(crow(r), N * n + a, 1.0);
    rhs[crow(r)] = y[a];
  }
  for (int k = 0; k < N; ++k) {  // trapezoid dynamics
    for (int a = 0; a < n; ++a, ++r) {
      for (int b = 0; b < n; ++b) {
        const double lo = -((a == b) ? 1.0 : 0.0) - 0.5 * h * A_nodes[k](a, b);
        const double hi = ((a == b) ? 1.0 : 0.0) - 0.5 * h * A_nodes[k + 1](a, b);
        add_sym(crow(r), k * n + b, lo);
        add_sym(crow(r), (k + 1) * n + b, hi);
      }
      for (int b = 0; b < m; ++b) {
        add_sym(crow(r), nz + k * m + b, -h * Bh_mid[k](a, b));
      }
    }
  }

  Eigen::SparseMatrix<double> KKT(dim, dim);
  KKT.setFromTriplets(trip.begin(), trip.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
  lu.analyzePattern(KKT);
  lu.factorize(KKT);
  if (lu.info() != Eigen::Success) {
    throw std::runtime_error(
        "solve_bvp_ocp: KKT factorization failed (rank-deficient constraints; "
        "endpoints may be unreachable)");
  }
  const Vector sol = lu.solve(rhs);
  const Vector kkt_err = KKT * sol - rhs;

  OcpSolution out;
  out.kkt_residual = kkt_err.cwiseAbs().maxCoeff();
  out.z.resize(N + 1);
  out.u.resize(N);
  for (int k = 0; k <= N; ++k) out.z[k] = sol.segment(k * n, n);
  for (int k = 0; k < N; ++k) out.u[k] = sol.segment(nz + k * m, m);
  double cost = 0.0;
  for (int k = 0; k < N; ++k) cost += 0.5 * h * out.u[k].squaredNorm();
  for (int k = 0; k <= N; ++k) {
    const double w = h * ((k == 0 || k == N) ? 0.5 : 1.0);
    cost += 0.5 * w * out.z[k].dot(Q_nodes[k] * out.z[k]);
  }
  out.eta = cost;
  return out;
}

// Pure-control-energy variant on the closed-loop pair (Ahat, Bh); used for
// the cost-relation cross-checks.
inline OcpSolution solve_bvp_min_energy(const ClosedLoopSystem& cl,
                                        const Vector& x, const Vector& y,
                                        int grid_n = 512) {
  LtvSystem sub = cl.sys;
  sub.A = cl.Ahat;
  sub.Q = MatrixTrajectory::zero(cl.sys.n, cl.sys.n);
  sub.name.clear();
  return solve_bvp_ocp(sub, x, y, cl.t0, cl.t, grid_n);
}

// ---------------------------------------------------------------------------
// Finite-difference residual of the forward evolution PDE
// ---------------------------------------------------------------------------

// Residual of
//   d/dt kappa = -<grad_x, kappa A_t x> + <B_t B_t', hess_x kappa>
//                - 1/2 x'Q_t x kappa,
// where x is the evolved (time-t) kernel argument and y the fixed source
// point. Central differences with step h in both t and x; the residual decays
// as O(h^2) when the evaluator is consistent with the PDE.
inline double pde_residual(const KernelEvaluator& Kc, const KernelEvaluator& Kp,
                           const KernelEvaluator& Km, const LtvSystem& sys,
                           double t, const Vector& x, const Vector& y,
                           double h) {
  if (!(t - Kc.t0() >= 10.0 * h)) {
    throw std::invalid_argument("pde_residual: t must be >= t0 + 10 h");
  }
  const int n = sys.n;
  auto eval = [&](const KernelEvaluator& Ke, const Vector& xf) {
    return Ke(y, xf);
  };
  const double dt_term = (eval(Kp, x) - eval(Km, x)) / (2.0 * h);

  const double k0 = eval(Kc, x);
  Vector grad(n);
  Matrix hess(n, n);
  for (int a = 0; a < n; ++a) {
    Vector xp = x, xm = x;
    xp[a] += h;
    xm[a] -= h;
    const double kp = eval(Kc, xp);
    const double km = eval(Kc, xm);
    grad[a] = (kp - km) / (2.0 * h);
    hess(a, a) = (kp - 2.0 * k0 + km) / (h * h);
    for (int b = a + 1; b < n; ++b) {
      Vector xpp = x, xpm = x, xmp = x, xmm = x;
      xpp[a] += h; xpp[b] += h;
      xpm[a] += h; xpm[b] -= h;
      xmp[a] -= h; xmp[b] += h;
      xmm[a] -= h; xmm[b] -= h;
      hess(a, b) = hess(b, a) =
          (eval(Kc, xpp) - eval(Kc, xpm) - eval(Kc, xmp) + eval(Kc, xmm)) /
          (4.0 * h * h);
    }
  }

  const Matrix At = sys.A(t);
  const Matrix Bt = sys.B(t);
  const Matrix Qt = sys.Qsym(t);
  const double advection = -(At.trace() * k0 + grad.dot(At * x));
  const double diffusion = (Bt * Bt.transpose() * hess).trace();
  const double reaction = -0.5 * x.dot(Qt * x) * k0;
  return std::abs(dt_term - (advection + diffusion + reaction));
}

// Convenience form that builds the shifted evaluators internally.
inline double pde_residual(const KernelEvaluator& K, const LtvSystem& sys,
                           double t, const Vector& x, const Vector& y,
                           double h) {
  const double t0 = K.t0();
  if (!(t - t0 >= 10.0 * h)) {
    throw std::invalid_argument("pde_residual: t must be >= t0 + 10 h");
  }
  const KernelEvaluator Kp = make_kernel(sys, t0, t + h);
  const KernelEvaluator Km = make_kernel(sys, t0, t - h);
  if (t == K.t()) return pde_residual(K, Kp, Km, sys, t, x, y, h);
  const KernelEvaluator Kc = make_kernel(sys, t0, t);
  return pde_residual(Kc, Kp, Km, sys, t, x, y, h);
}

// ---------------------------------------------------------------------------
// Killed-diffusion simulation and Feynman-Kac estimator
// ---------------------------------------------------------------------------

struct KilledPath {
  std::vector<double> times;
  std::vector<Vector> states;
  std::vector<double> weights;  // cumulative survival weight, nonincreasing
};

// Euler-Maruyama path of dx = A x dt + Bh dw with multiplicative survival
// weight exp(-1/2 x'Qx dt) accumulated per step. Bit-reproducible by seed.
inline KilledPath simulate_killed_diffusion(const LtvSystem& sys,
                                            const Vector& x0, double t0,
                                            double t1, double dt,
                                            std::uint64_t seed) {
  if (!(dt > 0.0)) throw std::invalid_argument("simulate_killed_diffusion: dt <= 0");
  const double span = t1 - t0;
  const long long steps = std::llround(span / dt);
  if (steps < 1 || std::abs(steps * dt - span) > 1e-9 * std::max(1.0, span)) {
    throw std::invalid_argument("simulate_killed_diffusion: dt must divide t1 - t0");
  }
  SplitMix64 rng(seed);
  const double sdt = std::sqrt(dt);
  KilledPath path;
  path.times.reserve(steps + 1);
  path.states.reserve(steps + 1);
  path.weights.reserve(steps + 1);
  Vector xv = x0;
  double logw = 0.0;
  path.times.push_back(t0);
  path.states.push_back(xv);
  path.weights.push_back(1.0);
  for (long long k = 0; k < steps; ++k) {
    const double s = t0 + k * dt;
    const Matrix As = sys.A(s);
    const Matrix Bh = sys.Bhat(s);
    const Matrix Qs = sys.Qsym(s);
    logw -= 0.5 * xv.dot(Qs * xv) * dt;
    Vector noise(sys.m);
    for (int a = 0; a < sys.m; ++a) noise[a] = rng.normal();
    xv = (xv + dt * (As * xv) + sdt * (Bh * noise)).eval();
    if (!xv.allFinite()) {
      throw std::runtime_error("simulate_killed_diffusion: path blow-up at step " +
                               std::to_string(k) + " (seed " +
                               std::to_string(seed) + ")");
    }
    path.times.push_back(s + dt);
    path.states.push_back(xv);
    path.weights.push_back(std::exp(logw));
  }
  return path;
}

struct FkEstimate {
  double mean = 0.0;
  double std_error = 0.0;
  long long paths = 0;
  double mean_survival = 0.0;
  double min_survival = 1.0;
};

// Monte Carlo estimate of E[phi1(x_{t1}) exp(-int 1/2 x'Qx dtau) | x_t = x]
// (the backward kernel transform). Per-path streams are derived from
// (seed, path index), so the estimate is independent of the thread split.
inline FkEstimate feynman_kac(const LtvSystem& sys,
                              const std::function<double(const Vector&)>& phi1,
                              double t, const Vector& x, double t1,
                              long long paths, double dt, std::uint64_t seed,
                              int threads = 1) {
  const double span = t1 - t;
  const long long steps = std::llround(span / dt);
  if (steps < 1 || std::abs(steps * dt - span) > 1e-9 * std::max(1.0, span)) {
    throw std::invalid_argument("feynman_kac: dt must divide t1 - t");
  }
  // Tabulate coefficients once; the per-path loop must not re-evaluate
  // trajectory callables.
  std::vector<Matrix> A_k(steps), Bh_k(steps), Q_k(steps);
  for (long long k = 0; k < steps; ++k) {
    const double s = t + k * dt;
    A_k[k] = sys.A(s);
    Bh_k[k] = sys.Bhat(s);
    Q_k[k] = sys.Qsym(s);
  }
  const double sdt = std::sqrt(dt);
  const int m = sys.m;

  // Paths are accumulated in fixed-size blocks whose partial sums are merged
  // in block order, so the estimate is bit-identical for any thread count.
  constexpr long long kBlock = 4096;
  const long long nblocks = (paths + kBlock - 1) / kBlock;
  std::vector<double> blk_sum(nblocks), blk_sumsq(nblocks), blk_wsum(nblocks),
      blk_wmin(nblocks, 1.0);

  auto run_range = [&](long long lo, long long hi, double* sum, double* sumsq,
                       double* wsum, double* wmin) {
    double s1 = 0.0, s2 = 0.0, ws = 0.0, wm = 1.0;
    Vector xv(sys.n), noise(m);
    for (long long p = lo; p < hi; ++p) {
      SplitMix64 rng(SplitMix64::substream_seed(seed, static_cast<std::uint64_t>(p)));
      xv = x;
      double logw = 0.0;
      for (long long k = 0; k < steps; ++k) {
        logw -= 0.5 * xv.dot(Q_k[k] * xv) * dt;
        for (int a = 0; a < m; ++a) noise[a] = rng.normal();
        xv = (xv + dt * (A_k[k] * xv) + sdt * (Bh_k[k] * noise)).eval();
      }
      if (!xv.allFinite()) {
        throw std::runtime_error("feynman_kac: path blow-up (seed " +
                                 std::to_string(seed) + ", path " +
                                 std::to_string(p) + ")");
      }
      const double w = std::exp(logw);
      const double v = phi1(xv) * w;
      s1 += v;
      s2 += v * v;
      ws += w;
      wm = std::min(wm, w);
    }
    *sum = s1;
    *sumsq = s2;
    *wsum = ws;
    *wmin = wm;
  };

  auto run_blocks = [&](long long blo, long long bhi) {
    for (long long b = blo; b < bhi; ++b) {
      run_range(b * kBlock, std::min(paths, (b + 1) * kBlock), &blk_sum[b],
                &blk_sumsq[b], &blk_wsum[b], &blk_wmin[b]);
    }
  };
  if (threads <= 1) {
    run_blocks(0, nblocks);
  } else {
    const int T = threads;
    std::vector<std::thread> pool;
    for (int i = 0; i < T; ++i) {
      pool.emplace_back(run_blocks, nblocks * i / T, nblocks * (i + 1) / T);
    }
    for (auto& th : pool) th.join();
  }
  double sum = 0.0, sumsq = 0.0, wsum = 0.0, wmin = 1.0;
  for (long long b = 0; b < nblocks; ++b) {
    sum += blk_sum[b];
    sumsq += blk_sumsq[b];
    wsum += blk_wsum[b];
    wmin = std::min(wmin, blk_wmin[b]);
  }

  FkEstimate est;
  est.paths = paths;
  est.mean = sum / paths;
  const double var = std::max(0.0, sumsq / paths - est.mean * est.mean);
  est.std_error = std::sqrt(var / paths);
  est.mean_survival = wsum / paths;
  est.min_survival = wmin;
  return est;
}

}  // namespace lqbridge
