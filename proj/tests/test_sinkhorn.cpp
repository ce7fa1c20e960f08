#include "lqbridge/sinkhorn.hpp"

#include "catch_amalgamated.hpp"

#include <cmath>

using namespace lqbridge;

namespace {

Density std_normal_1d() {
  GaussianComponent g;
  g.w = 1.0;
  g.m = Vector::Zero(1);
  g.Sigma = Matrix::Identity(1, 1);
  return Density::mixture({g});
}

Density bimodal(double center, double spread) {
  GaussianComponent a, b;
  a.w = 0.5;
  a.m = Vector::Constant(1, center - spread);
  a.Sigma = Matrix::Constant(1, 1, 0.2);
  b.w = 0.5;
  b.m = Vector::Constant(1, center + spread);
  b.Sigma = Matrix::Constant(1, 1, 0.2);
  return Density::mixture({a, b});
}

}  // namespace

TEST_CASE("forward transform: heat kernel preserves constants") {
  const LtvSystem sys = heat_system(1);
  const KernelEvaluator K = make_kernel(sys, 0.0, 1.0);
  const MixturePotential one = MixturePotential::constant(1, 1.0);
  const MixturePotential img = transform_forward(K, one);
  for (double v : {-2.0, 0.0, 1.5}) {
    CHECK(std::exp(img.log_value(Vector::Constant(1, v))) ==
          Catch::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("forward transform: Gaussian convolution variance adds 2 dt") {
  const LtvSystem sys = heat_system(1);
  const KernelEvaluator K = make_kernel(sys, 0.0, 1.0);
  const MixturePotential gauss(
      1, {MixturePotential::gaussian_pdf(1.0, Vector::Zero(1),
                                         Matrix::Identity(1, 1))});
  const MixturePotential img = transform_forward(K, gauss);
  CHECK(std::exp(img.log_value(Vector::Zero(1))) ==
        Catch::Approx(1.0 / std::sqrt(2.0 * M_PI * 3.0)).epsilon(1e-9));
}

TEST_CASE("mixture transform matches grid quadrature under the diagonal kernel") {
  const LtvSystem sys = diagonal_system(Vector::Constant(1, 0.25));
  const KernelEvaluator K = make_kernel(sys, 0.0, 1.0);
  MixturePotential mix(
      1, {MixturePotential::conic_gaussian(0.7, Vector::Constant(1, -0.8),
                                           Matrix::Constant(1, 1, 0.5)),
          MixturePotential::conic_gaussian(0.3, Vector::Constant(1, 1.1),
                                           Matrix::Constant(1, 1, 0.8))});
  const MixturePotential img = transform_forward(K, mix);

  const GridSpec in_grid = GridSpec::make(Vector::Constant(1, -10.0),
                                          Vector::Constant(1, 10.0), {2001});
  Vector logs(in_grid.total());
  for (int j = 0; j < in_grid.total(); ++j) {
    logs[j] = mix.log_value(in_grid.point(j));
  }
  const GridSpec out_grid = GridSpec::make(Vector::Constant(1, -2.0),
                                           Vector::Constant(1, 2.0), {9});
  const GridPotential grid_img =
      transform_forward(K, GridPotential(in_grid, logs), out_grid);
  for (int r = 0; r < out_grid.total(); ++r) {
    const Vector x = out_grid.point(r);
    const double a = std::exp(img.log_value(x));
    const double b = std::exp(grid_img.log_values()[r]);
    CHECK(std::abs(a - b) < 1e-6 * std::max(1.0, a));
  }
}

TEST_CASE("backward transform: heat kernel preserves constants") {
  const LtvSystem sys = heat_system(1);
  const KernelEvaluator K = make_kernel(sys, 0.0, 1.0);
  const MixturePotential one = MixturePotential::constant(1, 1.0);
  const MixturePotential img = transform_backward(K, one);
  CHECK(std::exp(img.log_value(Vector::Constant(1, 0.7))) ==
        Catch::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("diagonal-case symmetry makes forward and backward transforms equal") {
  const LtvSystem sys = diagonal_system(Vector::Constant(1, 0.25));
  const KernelEvaluator K = make_kernel(sys, 0.0, 1.0);
  const MixturePotential mix(
      1, {MixturePotential::conic_gaussian(1.0, Vector::Constant(1, 0.4),
                                           Matrix::Constant(1, 1, 0.6))});
  const MixturePotential f = transform_forward(K, mix);
  const MixturePotential b = transform_backward(K, mix);
  for (double v : {-1.0, 0.0, 0.8}) {
    const Vector x = Vector::Constant(1, v);
    CHECK(f.log_value(x) == Catch::Approx(b.log_value(x)).margin(1e-10));
  }
}

TEST_CASE("grid transform detects a truncated integration box") {
  const LtvSystem sys = heat_system(1);
  const KernelEvaluator K = make_kernel(sys, 0.0, 1.0);
  const GridSpec tiny = GridSpec::make(Vector::Constant(1, -0.1),
                                       Vector::Constant(1, 0.1), {16});
  Vector logs = Vector::Zero(tiny.total());
  const GridSpec out = GridSpec::make(Vector::Constant(1, 5.0),
                                      Vector::Constant(1, 6.0), {4});
  CHECK_THROWS_WITH(transform_forward(K, GridPotential(tiny, logs), out),
                    Catch::Matchers::ContainsSubstring("box"));
}

TEST_CASE("Sinkhorn: identical Gaussian endpoints under the heat kernel") {
  const LtvSystem sys = heat_system(1);
  const KernelEvaluator K = make_kernel(sys, 0.0, 1.0);
  const Density rho = std_normal_1d();
  const SinkhornState st = sinkhorn_solve(K, rho, rho, 1e-11, 500, 192);
  CHECK(st.converged);
  CHECK(st.marginal_residual0 < 1e-8);
  CHECK(st.marginal_residual1 < 1e-8);
  CHECK(st.residual_trace0.size() == st.hilbert_gaps.size());
}

TEST_CASE("Sinkhorn: bimodal-to-bimodal diagonal-case bridge") {
  const LtvSystem sys = diagonal_system(Vector::Constant(1, 0.25));
  const KernelEvaluator K = make_kernel(sys, 0.0, 1.0);
  const Density rho0 = bimodal(0.0, 1.0);
  const Density rho1 = bimodal(0.5, 1.2);
  const SinkhornState st = sinkhorn_solve(K, rho0, rho1, 1e-9, 500, 256);
  CHECK(st.converged);
  CHECK(st.iterations <= 500);
  CHECK(st.marginal_residual0 < 1e-6);
  CHECK(st.marginal_residual1 < 1e-6);
  // Geometric gap decay after burn-in.
  CHECK(st.gaps_monotone_after_burn_in);
}

TEST_CASE("propagate_potentials: boundary identities and mass consistency") {
  const LtvSystem sys = diagonal_system(Vector::Constant(1, 0.25));
  const KernelEvaluator K = make_kernel(sys, 0.0, 1.0);
  const Density rho0 = bimodal(0.0, 0.8);
  const Density rho1 = std_normal_1d();
  const SinkhornState st = sinkhorn_solve(K, rho0, rho1, 1e-10, 500, 192);
  REQUIRE(st.converged);
  KernelFamily family(sys, 0.0, 1.0);

  {
    // The boundary identity phihat * phi = rho0 holds exactly at grid nodes
    // (between nodes only up to the potentials' interpolation error).
    const auto [ph, phi] = propagate_potentials(family, st, 0.0, rho0, rho1);
    const Vector x = st.grid0.point(st.grid0.total() / 3);
    CHECK(ph.log_value(x) + phi.log_value(x) ==
          Catch::Approx(rho0.log_value(x)).margin(1e-9));
  }
  {
    const auto [ph, phi] = propagate_potentials(family, st, 1.0, rho0, rho1);
    const Vector x = st.grid1.point(st.grid1.total() / 4);
    CHECK(ph.log_value(x) + phi.log_value(x) ==
          Catch::Approx(rho1.log_value(x)).margin(1e-9));
  }
  for (double t : {0.25, 0.5, 0.75}) {
    const auto [ph, phi] = propagate_potentials(family, st, t, rho0, rho1);
    const GridSpec& g = ph.grid();
    double mass = 0.0;
    for (int i = 0; i < g.total(); ++i) {
      mass += g.quad_weight(i) *
              std::exp(ph.log_values()[i] + phi.log_values()[i]);
    }
    CHECK(mass == Catch::Approx(1.0).epsilon(2e-5));
  }
}

TEST_CASE("optimal control: single Gaussian potential is exactly linear") {
  const LtvSystem sys = heat_system(1);
  const Matrix Sigma = Matrix::Constant(1, 1, 0.5);
  const Vector m = Vector::Constant(1, 0.3);
  const MixturePotential phi(
      1, {MixturePotential::conic_gaussian(2.0, m, Sigma)});
  const Vector x = Vector::Constant(1, -0.9);
  const Vector u = optimal_control(sys, phi, 0.5, x);
  const Vector expect = Sigma.ldlt().solve(m - x);
  CHECK((u - expect).norm() < 1e-12);
}

TEST_CASE("optimal control: analytic vs central-difference gradients") {
  const LtvSystem sys = diagonal_system(Vector::Constant(2, 0.25));
  MixturePotential phi(
      2, {MixturePotential::conic_gaussian(
              0.6, (Vector(2) << -0.5, 0.2).finished(),
              (Matrix(2, 2) << 0.8, 0.2, 0.2, 0.5).finished()),
          MixturePotential::conic_gaussian(
              0.4, (Vector(2) << 0.7, -0.1).finished(),
              (Matrix(2, 2) << 0.4, -0.1, -0.1, 0.9).finished())});
  auto log_phi = [&](const Vector& v) { return phi.log_value(v); };
  for (double v : {-1.0, 0.0, 0.6}) {
    const Vector x = (Vector(2) << v, -0.3 * v + 0.1).finished();
    const Vector ua = optimal_control(sys, phi, 0.5, x);
    const Vector un = optimal_control(
        sys, std::function<double(const Vector&)>(log_phi), 0.5, x);
    CHECK((ua - un).norm() < 1e-6 * std::max(1.0, ua.norm()));
  }
}

TEST_CASE("optimal control: stationary Gaussian heat bridge closed form") {
  const LtvSystem sys = heat_system(1);
  const KernelEvaluator K = make_kernel(sys, 0.0, 1.0);
  const Density rho = std_normal_1d();
  const SinkhornState st = sinkhorn_solve(K, rho, rho, 1e-11, 500, 192);
  REQUIRE(st.converged);
  KernelFamily family(sys, 0.0, 1.0);
  // N(0,1) -> N(0,1) under the sqrt(2)-diffusion prior: the symmetric
  // Gaussian potentials solve a + a/(1 - 4a) = -1/2, so phi1 ~ exp(a y^2)
  // with a = -1/(2 sqrt(2)). Propagated to t = 1/2 (increment variance 1),
  // phi(1/2, x) ~ exp(a x^2 / (1 - 2a)) and the feedback law is linear:
  //   u(1/2, x) = d/dx log phi = 2a/(1 - 2a) x = -(sqrt(2) - 1) x.
  const double slope = -(std::sqrt(2.0) - 1.0);
  for (double v : {-0.5, 0.0, 0.4}) {
    const Vector u =
        optimal_control(family, st, 0.5, Vector::Constant(1, v));
    CHECK(u[0] == Catch::Approx(slope * v).margin(1e-7));
  }
}

TEST_CASE("scale gauge: rescaled potentials leave the bridge unchanged") {
  const LtvSystem sys = diagonal_system(Vector::Constant(1, 0.25));
  const KernelEvaluator K = make_kernel(sys, 0.0, 1.0);
  const Density rho0 = bimodal(0.0, 0.8);
  const Density rho1 = std_normal_1d();
  SinkhornState st = sinkhorn_solve(K, rho0, rho1, 1e-10, 500, 128);
  REQUIRE(st.converged);
  SinkhornState st2 = st;
  const double log_c = std::log(10.0);
  st2.phihat0 = GridPotential(
      st.grid0, st.phihat0.log_values() +
                    log_c * Vector::Ones(st.grid0.total()));
  st2.phi1 = GridPotential(
      st.grid1, st.phi1.log_values() -
                    log_c * Vector::Ones(st.grid1.total()));
  KernelFamily family(sys, 0.0, 1.0);
  const auto [ph_a, phi_a] = propagate_potentials(family, st, 0.5, rho0, rho1);
  const auto [ph_b, phi_b] = propagate_potentials(family, st2, 0.5, rho0, rho1);
  const GridSpec& g = ph_a.grid();
  for (int i = 0; i < g.total(); i += 7) {
    const double a = ph_a.log_values()[i] + phi_a.log_values()[i];
    const double b = ph_b.log_values()[i] + phi_b.log_values()[i];
    CHECK(std::abs(a - b) < 1e-12);
  }
}
