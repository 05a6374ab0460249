#pragma once

#include <Eigen/Core>

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "vict/error.hpp"
#include "vict/geometry.hpp"

namespace vict {

/// Anisotropic squared-exponential kernel over (x, y, z, dt):
/// k(a, b) = signal_variance * exp(-0.5 * sum_d ((a_d - b_d) / l_d)^2).
struct KernelSpec {
  double signal_variance = 1.0;           // mm^2
  std::array<double, 4> length_scales{1.0, 1.0, 1.0, 1.0};  // mm, mm, mm, s
  double noise_variance = 0.37 * 0.37;    // mm^2

  void validate() const;
};

using GprInputs = Eigen::Matrix<double, Eigen::Dynamic, 4, Eigen::RowMajor>;
using GprTargets = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

double kernel_value(const KernelSpec& k, const double* a, const double* b);
Eigen::MatrixXd kernel_matrix(const KernelSpec& k, const GprInputs& a, const GprInputs& b);

class ConditioningError : public ComputeError {
 public:
  ConditioningError(const std::string& what, double jitter)
      : ComputeError(what), jitter_(jitter) {}
  double jitter() const { return jitter_; }

 private:
  double jitter_;
};

struct GprPrediction {
  GprTargets mean;
  Eigen::MatrixXd covariance;
};

/// Gaussian-process regressor with mean-centred targets. The Gram matrix
/// K + noise*I is factored by Cholesky; on failure a diagonal jitter of
/// signal_variance * {1e-10, 1e-9, ..., 1e-4} is tried in turn.
class GprModel {
 public:
  static GprModel fit(const GprInputs& x, const GprTargets& y, const KernelSpec& kernel);

  GprPrediction predict(const GprInputs& xq) const;
  GprTargets predict_mean(const GprInputs& xq) const;
  Vec3 predict_mean(const std::array<double, 4>& xq) const;

  const KernelSpec& kernel() const { return kernel_; }
  const GprInputs& inputs() const { return x_; }
  const Eigen::RowVector3d& target_mean() const { return y_mean_; }
  const Eigen::MatrixXd& lower() const { return lower_; }
  const Eigen::MatrixXd& alpha() const { return alpha_; }
  /// Absolute jitter added to the diagonal (0 when none was needed).
  double jitter() const { return jitter_; }
  std::size_t size() const { return static_cast<std::size_t>(x_.rows()); }

 private:
  GprInputs x_;
  KernelSpec kernel_;
  Eigen::RowVector3d y_mean_ = Eigen::RowVector3d::Zero();
  Eigen::MatrixXd lower_;
  Eigen::MatrixXd alpha_;  // n x 3
  double jitter_ = 0.0;
};

/// Length scales from the per-dimension median pairwise distance, signal
/// variance from the targets, noise variance from the tracker sigma.
KernelSpec default_kernel(const GprInputs& x, const GprTargets& y, double noise_sigma);

struct TimedPoint {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
};

struct DensifyOptions {
  double step = 0.05;  // s
  std::optional<KernelSpec> kernel;  // default_kernel() when absent
  double noise_sigma = 0.37;
  std::size_t max_training = 4000;
};

struct DensifyResult {
  std::vector<TimedPoint> points;
  /// For each output point: input indices of the observations bracketing it
  /// and the fraction of the way from `from` to `to` (0 for observed points).
  std::vector<std::size_t> from;
  std::vector<std::size_t> to;
  std::vector<double> fraction;
  KernelSpec kernel;
  double jitter = 0.0;
  std::size_t training_pairs = 0;
};

/// Training pairs (tip_t, dt) -> tip_{t+dt} from consecutive observations.
/// Between each observed pair, positions are predicted by iterating the model
/// at dt = step from the earlier observation; the chain is then blended
/// linearly so that it ends exactly on the later observation.
DensifyResult densify(std::span<const TimedPoint> observations, const DensifyOptions& opts);

}  // namespace vict
