#pragma once

#include "lqbridge/kernel.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace lqbridge {

// ---------------------------------------------------------------------------
// Conic quadratic-exponential mixtures
// ---------------------------------------------------------------------------

// One term w * exp(-1/2 x'P x + b'x) with w > 0 and P symmetric PSD.
// P = 0, b = 0 represents a positive constant. Gaussian-mixture components
// map to P = Sigma^{-1}, b = Sigma^{-1} m with the normalizer folded into w.
// This family is closed under the kernel integral transforms, which is what
// makes analytic potential propagation and control gradients possible.
struct QuadExpTerm {
  Matrix P;
  Vector b;
  double logw = 0.0;
};

class MixturePotential {
 public:
  MixturePotential() = default;
  MixturePotential(int n, std::vector<QuadExpTerm> terms)
      : n_(n), terms_(std::move(terms)) {
    for (const QuadExpTerm& t : terms_) {
      if (t.P.rows() != n_ || t.P.cols() != n_ || t.b.size() != n_) {
        throw std::invalid_argument("MixturePotential: term dimension mismatch");
      }
    }
  }

  static MixturePotential constant(int n, double value) {
    if (!(value > 0.0)) {
      throw std::invalid_argument("MixturePotential: constant must be positive");
    }
    QuadExpTerm t;
    t.P = Matrix::Zero(n, n);
    t.b = Vector::Zero(n);
    t.logw = std::log(value);
    return MixturePotential(n, {t});
  }

  // Conic Gaussian term w * exp(-1/2 (x-m)'Sigma^{-1}(x-m)) (unnormalized).
  static QuadExpTerm conic_gaussian(double w, const Vector& m,
                                    const Matrix& Sigma) {
    Eigen::LLT<Matrix> llt(0.5 * (Sigma + Sigma.transpose()));
    if (!(w > 0.0) || llt.info() != Eigen::Success) {
      throw std::invalid_argument("conic_gaussian: need w > 0 and Sigma PD");
    }
    QuadExpTerm t;
    t.P = llt.solve(Matrix::Identity(m.size(), m.size()));
    t.P = 0.5 * (t.P + t.P.transpose()).eval();
    t.b = t.P * m;
    t.logw = std::log(w) - 0.5 * m.dot(t.b);
    return t;
  }

  // Normalized Gaussian pdf term w * N(x; m, Sigma).
  static QuadExpTerm gaussian_pdf(double w, const Vector& m,
                                  const Matrix& Sigma) {
    QuadExpTerm t = conic_gaussian(w, m, Sigma);
    const int n = static_cast<int>(m.size());
    t.logw += -0.5 * n * std::log(2.0 * M_PI) -
              0.5 * detail::logdet_pd(0.5 * (Sigma + Sigma.transpose()),
                                      "gaussian_pdf");
    return t;
  }

  int dim() const { return n_; }
  const std::vector<QuadExpTerm>& terms() const { return terms_; }

  double log_value(const Vector& x) const {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> logs(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      logs[i] = terms_[i].logw - 0.5 * x.dot(terms_[i].P * x) +
                terms_[i].b.dot(x);
      best = std::max(best, logs[i]);
    }
    double acc = 0.0;
    for (double l : logs) acc += std::exp(l - best);
    return best + std::log(acc);
  }

  double operator()(const Vector& x) const { return std::exp(log_value(x)); }

  // Analytic gradient of log(value): a softmax-weighted combination of the
  // per-term gradients -P x + b.
  Vector grad_log(const Vector& x) const {
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> logs(terms_.size());
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      logs[i] = terms_[i].logw - 0.5 * x.dot(terms_[i].P * x) +
                terms_[i].b.dot(x);
      best = std::max(best, logs[i]);
    }
    Vector g = Vector::Zero(n_);
    double mass = 0.0;
    for (std::size_t i = 0; i < terms_.size(); ++i) {
      const double w = std::exp(logs[i] - best);
      mass += w;
      g += w * (-terms_[i].P * x + terms_[i].b);
    }
    return g / mass;
  }

 private:
  int n_ = 0;
  std::vector<QuadExpTerm> terms_;
};

// ---------------------------------------------------------------------------
// Axis-aligned evaluation grids (n <= 2)
// ---------------------------------------------------------------------------

struct GridSpec {
  Vector lo, hi;
  std::vector<int> res;  // points per axis, >= 2

  int dim() const { return static_cast<int>(res.size()); }
  int total() const {
    int p = 1;
    for (int r : res) p *= r;
    return p;
  }
  double step(int axis) const { return (hi[axis] - lo[axis]) / (res[axis] - 1); }

  Vector point(int flat) const {
    const int n = dim();
    Vector x(n);
    for (int a = n - 1; a >= 0; --a) {
      const int i = flat % res[a];
      flat /= res[a];
      x[a] = lo[a] + i * step(a);
    }
    return x;
  }

  // Composite trapezoid quadrature weight of a node (product over axes).
  double quad_weight(int flat) const {
    const int n = dim();
    double w = 1.0;
    for (int a = n - 1; a >= 0; --a) {
      const int i = flat % res[a];
      flat /= res[a];
      w *= step(a) * ((i == 0 || i == res[a] - 1) ? 0.5 : 1.0);
    }
    return w;
  }

  static GridSpec make(const Vector& lo, const Vector& hi,
                       const std::vector<int>& res) {
    if (lo.size() != hi.size() ||
        static_cast<std::size_t>(lo.size()) != res.size()) {
      throw std::invalid_argument("GridSpec: dimension mismatch");
    }
    if (res.size() > 2) {
      throw std::invalid_argument("GridSpec: grids restricted to n <= 2");
    }
    for (std::size_t a = 0; a < res.size(); ++a) {
      if (res[a] < 2 || !(hi[a] > lo[a])) {
        throw std::invalid_argument("GridSpec: need res >= 2 and hi > lo");
      }
    }
    GridSpec g;
    g.lo = lo;
    g.hi = hi;
    g.res = res;
    return g;
  }
};

// Strictly positive function sampled on a grid, stored in the log domain
// (grid potentials routinely span hundreds of orders of magnitude across a
// +-6 sigma box). Multilinear interpolation of the log values.
class GridPotential {
 public:
  GridPotential() = default;
  GridPotential(GridSpec grid, Vector log_values)
      : grid_(std::move(grid)), log_values_(std::move(log_values)) {
    if (log_values_.size() != grid_.total()) {
      throw std::invalid_argument("GridPotential: value count mismatch");
    }
  }

  const GridSpec& grid() const { return grid_; }
  const Vector& log_values() const { return log_values_; }
  Vector& log_values() { return log_values_; }

  double log_value(const Vector& x) const {
    const int n = grid_.dim();
    if (n == 1) {
      double f;
      int i = locate(0, x[0], &f);
      return (1 - f) * log_values_[i] + f * log_values_[i + 1];
    }
    double f0, f1;
    const int i0 = locate(0, x[0], &f0);
    const int i1 = locate(1, x[1], &f1);
    const int r1 = grid_.res[1];
    const double v00 = log_values_[i0 * r1 + i1];
    const double v01 = log_values_[i0 * r1 + i1 + 1];
    const double v10 = log_values_[(i0 + 1) * r1 + i1];
    const double v11 = log_values_[(i0 + 1) * r1 + i1 + 1];
    return (1 - f0) * ((1 - f1) * v00 + f1 * v01) +
           f0 * ((1 - f1) * v10 + f1 * v11);
  }

  double operator()(const Vector& x) const { return std::exp(log_value(x)); }

 private:
  int locate(int axis, double v, double* frac) const {
    const double h = grid_.step(axis);
    double u = (v - grid_.lo[axis]) / h;
    u = std::min(std::max(u, 0.0), static_cast<double>(grid_.res[axis] - 1));
    int i = std::min(static_cast<int>(u), grid_.res[axis] - 2);
    *frac = u - i;
    return i;
  }

  GridSpec grid_;
  Vector log_values_;
};

// ---------------------------------------------------------------------------
// Densities (endpoint and intermediate distributions)
// ---------------------------------------------------------------------------

enum class DensityKind { GaussianMixture, Grid };

struct GaussianComponent {
  double w = 1.0;
  Vector m;
  Matrix Sigma;
};

// Probability density as a normalized Gaussian mixture or nonnegative grid
// values. Both representations have finite second moments by construction.
class Density {
 public:
  static Density mixture(std::vector<GaussianComponent> comps) {
    if (comps.empty()) throw std::invalid_argument("Density: empty mixture");
    double total = 0.0;
    for (const GaussianComponent& c : comps) {
      if (!(c.w > 0.0)) throw std::invalid_argument("Density: weights must be > 0");
      Eigen::LLT<Matrix> llt(0.5 * (c.Sigma + c.Sigma.transpose()));
      if (llt.info() != Eigen::Success) {
        throw std::invalid_argument("Density: covariance not PD");
      }
      total += c.w;
    }
    Density d;
    d.kind_ = DensityKind::GaussianMixture;
    d.comps_ = std::move(comps);
    for (GaussianComponent& c : d.comps_) c.w /= total;
    d.n_ = static_cast<int>(d.comps_.front().m.size());
    return d;
  }

  static Density grid(GridSpec spec, Vector values) {
    if (values.size() != spec.total()) {
      throw std::invalid_argument("Density: grid value count mismatch");
    }
    if ((values.array() < 0.0).any()) {
      throw std::invalid_argument("Density: grid values must be nonnegative");
    }
    Density d;
    d.kind_ = DensityKind::Grid;
    d.n_ = spec.dim();
    double mass = 0.0;
    for (int i = 0; i < spec.total(); ++i) mass += spec.quad_weight(i) * values[i];
    if (!(mass > 0.0) || !std::isfinite(mass)) {
      throw std::invalid_argument("Density: grid mass must be finite positive");
    }
    d.grid_values_ = GridPotential(
        spec, (values.array().max(1e-300)).log().matrix() - std::log(mass) * Vector::Ones(values.size()));
    return d;
  }

  DensityKind kind() const { return kind_; }
  int dim() const { return n_; }
  const std::vector<GaussianComponent>& components() const { return comps_; }
  const GridPotential& grid_values() const { return grid_values_; }

  double log_value(const Vector& x) const {
    if (kind_ == DensityKind::Grid) return grid_values_.log_value(x);
    return as_potential().log_value(x);
  }
  double operator()(const Vector& x) const { return std::exp(log_value(x)); }

  MixturePotential as_potential() const {
    if (kind_ != DensityKind::GaussianMixture) {
      throw std::logic_error("Density: not a mixture");
    }
    std::vector<QuadExpTerm> terms;
    terms.reserve(comps_.size());
    for (const GaussianComponent& c : comps_) {
      terms.push_back(MixturePotential::gaussian_pdf(c.w, c.m, c.Sigma));
    }
    return MixturePotential(n_, std::move(terms));
  }

  // First two moments (exact for mixtures, quadrature for grids); used to
  // choose Sinkhorn evaluation boxes.
  void moments(Vector* mean, Matrix* cov) const {
    if (kind_ == DensityKind::GaussianMixture) {
      Vector mu = Vector::Zero(n_);
      for (const GaussianComponent& c : comps_) mu += c.w * c.m;
      Matrix C = Matrix::Zero(n_, n_);
      for (const GaussianComponent& c : comps_) {
        C += c.w * (c.Sigma + (c.m - mu) * (c.m - mu).transpose());
      }
      *mean = mu;
      *cov = C;
      return;
    }
    const GridSpec& g = grid_values_.grid();
    Vector mu = Vector::Zero(n_);
    Matrix C = Matrix::Zero(n_, n_);
    double mass = 0.0;
    for (int i = 0; i < g.total(); ++i) {
      const Vector x = g.point(i);
      const double w = g.quad_weight(i) * std::exp(grid_values_.log_values()[i]);
      mass += w;
      mu += w * x;
      C += w * x * x.transpose();
    }
    mu /= mass;
    *mean = mu;
    *cov = C / mass - mu * mu.transpose();
  }

 private:
  DensityKind kind_ = DensityKind::GaussianMixture;
  int n_ = 0;
  std::vector<GaussianComponent> comps_;
  GridPotential grid_values_;
};

}  // namespace lqbridge
