#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace lqbridge {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class TrajectoryKind { Constant, Tabulated, ClosedForm };
enum class Interpolation { Linear, Cubic };

// Time-indexed matrix-valued coefficient tau |-> M(tau).
//
// Three storage kinds:
//   - Constant:   a single matrix, returned for every tau
//   - Tabulated:  samples on a strictly increasing grid, interpolated
//                 entrywise (linear, or cubic Hermite with central-difference
//                 slopes); evaluation clamps to the grid range
//   - ClosedForm: an arbitrary callable (used for builtin systems and for
//                 derived closed-loop drifts)
//
// Instances are immutable after construction and safe to share across
// threads; evaluation is a pure function of tau.
class MatrixTrajectory {
 public:
  MatrixTrajectory() = default;

  static MatrixTrajectory constant(Matrix value) {
    MatrixTrajectory traj;
    traj.kind_ = TrajectoryKind::Constant;
    traj.rows_ = static_cast<int>(value.rows());
    traj.cols_ = static_cast<int>(value.cols());
    traj.constant_ = std::move(value);
    return traj;
  }

  static MatrixTrajectory tabulated(std::vector<double> times,
                                    std::vector<Matrix> values,
                                    Interpolation interp = Interpolation::Linear) {
    if (times.size() < 2 || times.size() != values.size()) {
      throw std::invalid_argument(
          "MatrixTrajectory::tabulated: need >= 2 samples and matching sizes");
    }
    for (std::size_t i = 1; i < times.size(); ++i) {
      if (!(times[i] > times[i - 1])) {
        throw std::invalid_argument(
            "MatrixTrajectory::tabulated: grid must be strictly increasing");
      }
    }
    const auto rows = values.front().rows();
    const auto cols = values.front().cols();
    for (const Matrix& v : values) {
      if (v.rows() != rows || v.cols() != cols) {
        throw std::invalid_argument(
            "MatrixTrajectory::tabulated: inconsistent sample dimensions");
      }
      if (!v.allFinite()) {
        throw std::invalid_argument(
            "MatrixTrajectory::tabulated: non-finite sample");
      }
    }
    MatrixTrajectory traj;
    traj.kind_ = TrajectoryKind::Tabulated;
    traj.rows_ = static_cast<int>(rows);
    traj.cols_ = static_cast<int>(cols);
    traj.times_ = std::move(times);
    traj.values_ = std::move(values);
    traj.interp_ = interp;
    if (interp == Interpolation::Cubic) traj.build_slopes();
    return traj;
  }

  static MatrixTrajectory closed_form(int rows, int cols,
                                      std::function<Matrix(double)> fn) {
    MatrixTrajectory traj;
    traj.kind_ = TrajectoryKind::ClosedForm;
    traj.rows_ = rows;
    traj.cols_ = cols;
    traj.fn_ = std::move(fn);
    return traj;
  }

  static MatrixTrajectory zero(int rows, int cols) {
    return constant(Matrix::Zero(rows, cols));
  }

  static MatrixTrajectory identity(int n) {
    return constant(Matrix::Identity(n, n));
  }

  TrajectoryKind kind() const { return kind_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  Interpolation interpolation() const { return interp_; }

  // Grid coverage check used on system ingest: [t0, t1] must lie within the
  // tabulated range (up to roundoff slack).
  bool covers(double t0, double t1) const {
    if (kind_ != TrajectoryKind::Tabulated) return true;
    const double slack = 1e-12 * (1.0 + std::abs(t1 - t0));
    return times_.front() <= t0 + slack && times_.back() >= t1 - slack;
  }

  Matrix operator()(double tau) const {
    Matrix out;
    switch (kind_) {
      case TrajectoryKind::Constant:
        return constant_;
      case TrajectoryKind::ClosedForm:
        out = fn_(tau);
        if (out.rows() != rows_ || out.cols() != cols_) {
          throw std::runtime_error(
              "MatrixTrajectory: closed-form callable returned wrong shape");
        }
        break;
      case TrajectoryKind::Tabulated:
        out = interpolate(tau);
        break;
    }
    if (!out.allFinite()) {
      throw std::runtime_error("MatrixTrajectory: non-finite evaluation at tau=" +
                               std::to_string(tau));
    }
    return out;
  }

 private:
  Matrix interpolate(double tau) const {
    if (tau <= times_.front()) return values_.front();
    if (tau >= times_.back()) return values_.back();
    const auto it = std::upper_bound(times_.begin(), times_.end(), tau);
    const std::size_t hi = static_cast<std::size_t>(it - times_.begin());
    const std::size_t lo = hi - 1;
    const double dt = times_[hi] - times_[lo];
    const double s = (tau - times_[lo]) / dt;
    if (interp_ == Interpolation::Linear) {
      return (1.0 - s) * values_[lo] + s * values_[hi];
    }
    // Cubic Hermite with precomputed slopes (per entry).
    const double h00 = (1 + 2 * s) * (1 - s) * (1 - s);
    const double h10 = s * (1 - s) * (1 - s);
    const double h01 = s * s * (3 - 2 * s);
    const double h11 = s * s * (s - 1);
    return h00 * values_[lo] + (h10 * dt) * slopes_[lo] + h01 * values_[hi] +
           (h11 * dt) * slopes_[hi];
  }

  void build_slopes() {
    const std::size_t k = times_.size();
    slopes_.resize(k);
    for (std::size_t i = 0; i < k; ++i) {
      if (i == 0) {
        slopes_[i] = (values_[1] - values_[0]) / (times_[1] - times_[0]);
      } else if (i + 1 == k) {
        slopes_[i] = (values_[k - 1] - values_[k - 2]) /
                     (times_[k - 1] - times_[k - 2]);
      } else {
        slopes_[i] = (values_[i + 1] - values_[i - 1]) /
                     (times_[i + 1] - times_[i - 1]);
      }
    }
  }

  TrajectoryKind kind_ = TrajectoryKind::Constant;
  int rows_ = 0;
  int cols_ = 0;
  Interpolation interp_ = Interpolation::Linear;
  Matrix constant_;
  std::vector<double> times_;
  std::vector<Matrix> values_;
  std::vector<Matrix> slopes_;
  std::function<Matrix(double)> fn_;
};

}  // namespace lqbridge
