#pragma once

#include "lqbridge/density.hpp"

#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>
#include <vector>

namespace lqbridge {

namespace detail {

inline double logsumexp(const std::vector<double>& v) {
  double best = -std::numeric_limits<double>::infinity();
  for (double x : v) best = std::max(best, x);
  if (!std::isfinite(best)) return best;
  double acc = 0.0;
  for (double x : v) acc += std::exp(x - best);
  return best + std::log(acc);
}

// Shared worker for the mixture transforms: integrates the quadratic-
// exponential family against one Gaussian slot of the kernel.
//   out(x) = c * sum_i w_i int exp(-1/2 xi'(P_int + P_i) xi
//                                  + (b_i - C x)'xi) dxi * exp(-1/2 x'P_out x)
// where C couples the integrated slot to the output slot.
inline MixturePotential transform_mixture(const Matrix& P_int,
                                          const Matrix& P_out,
                                          const Matrix& C, double log_c,
                                          const MixturePotential& in) {
  const int n = in.dim();
  std::vector<QuadExpTerm> out;
  out.reserve(in.terms().size());
  for (const QuadExpTerm& t : in.terms()) {
    const Matrix Aq = 0.5 * (P_int + t.P + (P_int + t.P).transpose());
    Eigen::LLT<Matrix> llt(Aq);
    if (llt.info() != Eigen::Success) {
      throw std::runtime_error("transform_mixture: integrated block not PD");
    }
    const Matrix S = llt.solve(Matrix::Identity(n, n));
    const double logdet =
        2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    QuadExpTerm o;
    o.P = P_out - C.transpose() * S * C;
    o.P = 0.5 * (o.P + o.P.transpose()).eval();
    o.b = -C.transpose() * S * t.b;
    o.logw = t.logw + log_c + 0.5 * (n * std::log(2.0 * M_PI) - logdet) +
             0.5 * t.b.dot(S * t.b);
    out.push_back(std::move(o));
  }
  return MixturePotential(n, std::move(out));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Kernel integral transforms
// ---------------------------------------------------------------------------

// Forward transform over the kernel horizon [t0, t]: integrates the source
// (t0) slot and returns a function of the evolved (t) variable,
//   (T phi)(x) = int kappa(t0, xi, t, x) phi(xi) dxi.
// Closed under the quadratic-exponential mixture family.
inline MixturePotential transform_forward(const KernelEvaluator& K,
                                          const MixturePotential& phi) {
  return detail::transform_mixture(K.M.M11, K.M.M22, K.M.M12, K.log_c, phi);
}

// Backward transform: integrates the evolved (t) slot and returns a function
// of the source (t0) variable,
//   (T' phi)(x) = int kappa(t0, x, t, xi) phi(xi) dxi.
// This is the expectation of phi at time t given state x at t0, discounted by
// the killing (Feynman-Kac representation).
inline MixturePotential transform_backward(const KernelEvaluator& K,
                                           const MixturePotential& phi) {
  return detail::transform_mixture(K.M.M22, K.M.M11, K.M.M12.transpose(),
                                   K.log_c, phi);
}

namespace detail {

// Grid-quadrature transform core: out(x_r) over out_grid, integrating the
// grid potential `in` with trapezoid weights. `slot` selects which kernel
// argument is integrated (0 = source, 1 = field).
inline GridPotential transform_grid(const KernelEvaluator& K,
                                    const GridPotential& in,
                                    const GridSpec& out_grid, int slot,
                                    bool check_truncation = true) {
  const GridSpec& g = in.grid();
  const int nin = g.total();
  const int nout = out_grid.total();
  std::vector<double> col(nin);
  Vector out_log(nout);
  std::vector<double> in_terms(nin);
  for (int j = 0; j < nin; ++j) {
    col[j] = std::log(g.quad_weight(j)) + in.log_values()[j];
  }
  double peak_interior = -std::numeric_limits<double>::infinity();
  double peak_boundary = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < nout; ++r) {
    const Vector x = out_grid.point(r);
    for (int j = 0; j < nin; ++j) {
      const Vector xi = g.point(j);
      const double lk = (slot == 0) ? K.log_eval(xi, x) : K.log_eval(x, xi);
      in_terms[j] = lk + col[j];
    }
    out_log[r] = logsumexp(in_terms);
    // Track the largest integrand value attained at boundary vs interior
    // nodes of the integration box for the tail/truncation test.
    for (int j = 0; j < nin; ++j) {
      bool boundary = false;
      int f = j;
      for (int a = g.dim() - 1; a >= 0; --a) {
        const int i = f % g.res[a];
        f /= g.res[a];
        if (i == 0 || i == g.res[a] - 1) boundary = true;
      }
      if (boundary) {
        peak_boundary = std::max(peak_boundary, in_terms[j]);
      } else {
        peak_interior = std::max(peak_interior, in_terms[j]);
      }
    }
  }
  if (check_truncation && peak_boundary > peak_interior + std::log(1e-6)) {
    throw std::runtime_error(
        "transform_grid: integration box too small (kernel mass truncated at "
        "the boundary)");
  }
  return GridPotential(out_grid, std::move(out_log));
}

}  // namespace detail

inline GridPotential transform_forward(const KernelEvaluator& K,
                                       const GridPotential& phi,
                                       const GridSpec& out_grid,
                                       bool check_truncation = true) {
  return detail::transform_grid(K, phi, out_grid, 0, check_truncation);
}

inline GridPotential transform_backward(const KernelEvaluator& K,
                                        const GridPotential& phi,
                                        const GridSpec& out_grid,
                                        bool check_truncation = true) {
  return detail::transform_grid(K, phi, out_grid, 1, check_truncation);
}

// ---------------------------------------------------------------------------
// Dynamic Sinkhorn iteration
// ---------------------------------------------------------------------------

struct SinkhornState {
  GridSpec grid0, grid1;
  GridPotential phihat0;  // potential at t0 (hat side)
  GridPotential phi1;     // potential at t1
  int iterations = 0;
  bool converged = false;
  double marginal_residual0 = 0.0;  // sup-norm relative, at t0
  double marginal_residual1 = 0.0;  // sup-norm relative, at t1
  std::vector<double> hilbert_gaps;
  // Per-iteration sup-norm relative marginal residuals (for trace artifacts;
  // computed from quantities already available inside each sweep).
  std::vector<double> residual_trace0, residual_trace1;
  bool gaps_monotone_after_burn_in = true;  // monitored, never fatal
};

// Moment-based default evaluation box: mean +- sigmas * sqrt(var) per axis.
inline GridSpec default_box(const Density& rho, int res_per_axis = 256,
                            double sigmas = 6.0) {
  Vector mean;
  Matrix cov;
  rho.moments(&mean, &cov);
  const int n = rho.dim();
  Vector lo(n), hi(n);
  for (int a = 0; a < n; ++a) {
    const double s = std::sqrt(std::max(cov(a, a), 1e-12));
    lo[a] = mean[a] - sigmas * s;
    hi[a] = mean[a] + sigmas * s;
  }
  return GridSpec::make(lo, hi, std::vector<int>(n, res_per_axis));
}

// Alternating kernel-transform-and-ratio cycle
//   phihat0 -> phihat1 -> phi1 = rho1/phihat1 -> phi0 -> phihat0 = rho0/phi0,
// run in the log domain on quadrature grids until the Hilbert projective gap
// (max - min of the log-ratio of successive phihat0 iterates) drops below tol.
inline SinkhornState sinkhorn_solve(const KernelEvaluator& K,
                                    const Density& rho0, const Density& rho1,
                                    double tol = 1e-9, int max_iter = 500,
                                    int res_per_axis = 256) {
  SinkhornState st;
  st.grid0 = default_box(rho0, res_per_axis);
  st.grid1 = default_box(rho1, res_per_axis);
  const int n0 = st.grid0.total();
  const int n1 = st.grid1.total();
  if (static_cast<long long>(n0) * n1 > (1ll << 24)) {
    throw std::runtime_error("sinkhorn_solve: grid too large for dense kernel");
  }

  // Dense log-kernel matrix with the source-slot quadrature weights folded in
  // columns (forward sweep) and field-slot weights folded in rows (backward).
  Vector lrho0(n0), lrho1(n1), lw0(n0), lw1(n1);
  for (int j = 0; j < n0; ++j) {
    lrho0[j] = std::max(rho0.log_value(st.grid0.point(j)), -690.0);
    lw0[j] = std::log(st.grid0.quad_weight(j));
  }
  for (int i = 0; i < n1; ++i) {
    lrho1[i] = std::max(rho1.log_value(st.grid1.point(i)), -690.0);
    lw1[i] = std::log(st.grid1.quad_weight(i));
  }
  Matrix logK(n1, n0);
  for (int i = 0; i < n1; ++i) {
    const Vector y = st.grid1.point(i);
    for (int j = 0; j < n0; ++j) {
      logK(i, j) = K.log_eval(st.grid0.point(j), y);
    }
  }

  Vector lph0 = Vector::Zero(n0);  // log phihat0
  Vector lph1(n1), lphi0(n0);
  Vector lphi1 = Vector::Zero(n1);  // phi1 == 1 initial guess (for traces)
  const double sup_rho0 = std::exp(lrho0.maxCoeff());
  const double sup_rho1 = std::exp(lrho1.maxCoeff());
  std::vector<double> terms;
  auto sweep_forward = [&](const Vector& src, Vector* dst) {
    terms.resize(n0);
    for (int i = 0; i < n1; ++i) {
      for (int j = 0; j < n0; ++j) terms[j] = logK(i, j) + lw0[j] + src[j];
      (*dst)[i] = detail::logsumexp(terms);
    }
  };
  auto sweep_backward = [&](const Vector& src, Vector* dst) {
    terms.resize(n1);
    for (int j = 0; j < n0; ++j) {
      for (int i = 0; i < n1; ++i) terms[i] = logK(i, j) + lw1[i] + src[i];
      (*dst)[j] = detail::logsumexp(terms);
    }
  };

  for (int it = 1; it <= max_iter; ++it) {
    sweep_forward(lph0, &lph1);
    double r1 = 0.0;  // pre-ratio marginal mismatch at t1
    for (int i = 0; i < n1; ++i) {
      r1 = std::max(r1, std::abs(std::exp(lphi1[i] + lph1[i]) -
                                 std::exp(lrho1[i])));
    }
    st.residual_trace1.push_back(r1 / sup_rho1);
    lphi1 = lrho1 - lph1;
    sweep_backward(lphi1, &lphi0);
    double r0 = 0.0;  // pre-ratio marginal mismatch at t0
    for (int j = 0; j < n0; ++j) {
      r0 = std::max(r0, std::abs(std::exp(lph0[j] + lphi0[j]) -
                                 std::exp(lrho0[j])));
    }
    st.residual_trace0.push_back(r0 / sup_rho0);
    const Vector lph0_next = lrho0 - lphi0;
    const Vector diff = lph0_next - lph0;
    const double gap = diff.maxCoeff() - diff.minCoeff();
    st.hilbert_gaps.push_back(gap);
    lph0 = lph0_next;
    st.iterations = it;
    if (gap < tol) {
      st.converged = true;
      break;
    }
  }

  // Convergence diagnostics: boundary products against the endpoint data.
  // Each product is exact immediately after its own ratio step, so both
  // residuals are evaluated against the *refreshed* other-side potential.
  sweep_forward(lph0, &lph1);
  double sup0 = 0.0, res0 = 0.0, sup1 = 0.0, res1 = 0.0;
  for (int i = 0; i < n1; ++i) {
    const double r = std::exp(lrho1[i]);
    sup1 = std::max(sup1, r);
    res1 = std::max(res1, std::abs(std::exp(lphi1[i] + lph1[i]) - r));
  }
  lphi1 = lrho1 - lph1;
  sweep_backward(lphi1, &lphi0);
  for (int j = 0; j < n0; ++j) {
    const double r = std::exp(lrho0[j]);
    sup0 = std::max(sup0, r);
    res0 = std::max(res0, std::abs(std::exp(lph0[j] + lphi0[j]) - r));
  }
  st.marginal_residual0 = res0 / sup0;
  st.marginal_residual1 = res1 / sup1;

  for (std::size_t k = 4; k < st.hilbert_gaps.size(); ++k) {
    if (st.hilbert_gaps[k] > st.hilbert_gaps[k - 1] * (1.0 + 1e-9)) {
      st.gaps_monotone_after_burn_in = false;  // warning, not failure
    }
  }

  st.phihat0 = GridPotential(st.grid0, lph0);
  st.phi1 = GridPotential(st.grid1, lphi1);
  return st;
}

// ---------------------------------------------------------------------------
// Potential propagation and optimal control
// ---------------------------------------------------------------------------

// Lazily built, cached kernel evaluators for sub-horizons of [t0, t1].
class KernelFamily {
 public:
  KernelFamily(LtvSystem sys, double t0, double t1)
      : sys_(std::move(sys)), t0_(t0), t1_(t1) {}

  double t0() const { return t0_; }
  double t1() const { return t1_; }
  const LtvSystem& system() const { return sys_; }

  // Kernel over [ta, tb] with t0 <= ta < tb <= t1.
  const KernelEvaluator& kernel(double ta, double tb) {
    const auto key = std::make_pair(ta, tb);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    LtvSystem sub = sys_;
    sub.t0 = ta;
    sub.t1 = tb;
    auto res = cache_.emplace(key, make_kernel(sub, ta, tb));
    return res.first->second;
  }

 private:
  LtvSystem sys_;
  double t0_, t1_;
  std::map<std::pair<double, double>, KernelEvaluator> cache_;
};

// Potentials at an intermediate time: phihat(t,.) propagates phihat0 forward
// over [t0, t]; phi(t,.) propagates phi1 backward over [t, t1]. At the
// horizon ends the boundary identities are returned exactly.
inline std::pair<GridPotential, GridPotential> propagate_potentials(
    KernelFamily& family, const SinkhornState& st, double t,
    const Density& rho0, const Density& rho1) {
  const double t0 = family.t0();
  const double t1 = family.t1();
  if (t < t0 || t > t1) {
    throw std::invalid_argument("propagate_potentials: t outside horizon");
  }
  const int n0 = st.grid0.total();
  const int n1 = st.grid1.total();
  if (t == t0) {
    Vector lphi0(n0);
    for (int j = 0; j < n0; ++j) {
      lphi0[j] = std::max(rho0.log_value(st.grid0.point(j)), -690.0) -
                 st.phihat0.log_values()[j];
    }
    return {st.phihat0, GridPotential(st.grid0, lphi0)};
  }
  if (t == t1) {
    Vector lph1(n1);
    for (int i = 0; i < n1; ++i) {
      lph1[i] = std::max(rho1.log_value(st.grid1.point(i)), -690.0) -
                st.phi1.log_values()[i];
    }
    return {GridPotential(st.grid1, lph1), st.phi1};
  }
  // Interior time: evaluate both on the union box of the endpoint grids.
  const int n = st.grid0.dim();
  Vector lo(n), hi(n);
  std::vector<int> res(n);
  for (int a = 0; a < n; ++a) {
    lo[a] = std::min(st.grid0.lo[a], st.grid1.lo[a]);
    hi[a] = std::max(st.grid0.hi[a], st.grid1.hi[a]);
    res[a] = std::max(st.grid0.res[a], st.grid1.res[a]);
  }
  const GridSpec mid = GridSpec::make(lo, hi, res);
  // Converged potentials can decay slower than the kernel, so rows near the
  // box edge integrate genuinely truncated tails. Those rows only matter
  // through the product phihat * phi (the bridge marginal), which is
  // negligible there, so the truncation guard is disabled for this path.
  GridPotential phihat_t =
      transform_forward(family.kernel(t0, t), st.phihat0, mid, false);
  GridPotential phi_t =
      transform_backward(family.kernel(t, t1), st.phi1, mid, false);
  return {phihat_t, phi_t};
}

// Optimal control u(t,x) = B_t' grad_x log phi(t,x).

// Analytic mixture path.
inline Vector optimal_control(const LtvSystem& sys, const MixturePotential& phi,
                              double t, const Vector& x) {
  return sys.B(t).transpose() * phi.grad_log(x);
}

// Central-difference path for arbitrary log-potential evaluators
// (step 1e-5 scaled by the local coordinate magnitude).
inline Vector optimal_control(
    const LtvSystem& sys, const std::function<double(const Vector&)>& log_phi,
    double t, const Vector& x) {
  const int n = static_cast<int>(x.size());
  const double lphi = log_phi(x);
  if (!std::isfinite(lphi)) {
    throw std::runtime_error("optimal_control: potential vanished at x");
  }
  Vector g(n);
  for (int a = 0; a < n; ++a) {
    const double h = 1e-5 * std::max(1.0, std::abs(x[a]));
    Vector xp = x, xm = x;
    xp[a] += h;
    xm[a] -= h;
    g[a] = (log_phi(xp) - log_phi(xm)) / (2.0 * h);
  }
  return sys.B(t).transpose() * g;
}

// Converged-bridge path: phi(t, z) is evaluated by quadrature of the backward
// transform over the t1 grid, pointwise at the stencil points.
inline Vector optimal_control(KernelFamily& family, const SinkhornState& st,
                              double t, const Vector& x) {
  const KernelEvaluator& K = family.kernel(t, family.t1());
  const int n1 = st.grid1.total();
  auto log_phi = [&](const Vector& z) {
    std::vector<double> terms(n1);
    for (int i = 0; i < n1; ++i) {
      terms[i] = K.log_eval(z, st.grid1.point(i)) +
                 std::log(st.grid1.quad_weight(i)) + st.phi1.log_values()[i];
    }
    return detail::logsumexp(terms);
  };
  return optimal_control(family.system(),
                         std::function<double(const Vector&)>(log_phi), t, x);
}

}  // namespace lqbridge
