#include "vict/gpr.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace vict {

void KernelSpec::validate() const {
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
    throw InputError("kernel signal_variance must be positive");
  }
  for (double l : length_scales) {
    if (!(l > 0.0) || !std::isfinite(l)) throw InputError("kernel length scales must be positive");
  }
  if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
    throw InputError("kernel noise_variance must be non-negative");
  }
}

double kernel_value(const KernelSpec& k, const double* a, const double* b) {
  double s = 0.0;
  for (int d = 0; d < 4; ++d) {
    const double u = (a[d] - b[d]) / k.length_scales[d];
    s += u * u;
  }
  return k.signal_variance * std::exp(-0.5 * s);
}

Eigen::MatrixXd kernel_matrix(const KernelSpec& k, const GprInputs& a, const GprInputs& b) {
  Eigen::MatrixXd out(a.rows(), b.rows());
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      out(i, j) = kernel_value(k, a.row(i).data(), b.row(j).data());
    }
  }
  return out;
}

GprModel GprModel::fit(const GprInputs& x, const GprTargets& y, const KernelSpec& kernel) {
  kernel.validate();
  if (x.rows() < 1) throw InputError("gpr fit: need at least one training row");
  if (x.rows() != y.rows()) throw InputError("gpr fit: input/target row count mismatch");
  if (!x.allFinite() || !y.allFinite()) throw InputError("gpr fit: non-finite training data");

  GprModel m;
  m.x_ = x;
  m.kernel_ = kernel;
  m.y_mean_ = y.colwise().mean();
  const GprTargets centred = y.rowwise() - m.y_mean_;

  const Eigen::Index n = x.rows();
  Eigen::MatrixXd gram(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    gram(i, i) = kernel.signal_variance;
    for (Eigen::Index j = 0; j < i; ++j) {
      const double v = kernel_value(kernel, x.row(i).data(), x.row(j).data());
      gram(i, j) = v;
      gram(j, i) = v;
    }
  }
  gram.diagonal().array() += kernel.noise_variance;

  const double tol = 1e-8 * kernel.signal_variance;
  double jitter = 0.0;
  double rel = 1e-10;
  while (true) {
    Eigen::MatrixXd a = gram;
    a.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    bool ok = llt.info() == Eigen::Success;
    if (ok) {
      Eigen::MatrixXd l = llt.matrixL();
      if (n <= 1024) {
        const double resid = (l * l.transpose() - a).cwiseAbs().maxCoeff();
        ok = std::isfinite(resid) && resid <= tol;
      }
      ok = ok && (l.diagonal().array() > 0.0).all();
      if (ok) {
        m.lower_ = std::move(l);
        m.alpha_ = llt.solve(Eigen::MatrixXd(centred));
        m.jitter_ = jitter;
        return m;
      }
    }
    if (rel > 1e-4 * 1.000001) {
      throw ConditioningError("gpr fit: covariance not positive definite after jitter escalation",
                              jitter);
    }
    jitter = rel * kernel.signal_variance;
    rel *= 10.0;
  }
}

GprTargets GprModel::predict_mean(const GprInputs& xq) const {
  const Eigen::MatrixXd ks = kernel_matrix(kernel_, xq, x_);
  GprTargets mean = ks * alpha_;
  mean.rowwise() += y_mean_;
  return mean;
}

Vec3 GprModel::predict_mean(const std::array<double, 4>& xq) const {
  Eigen::RowVector3d acc = Eigen::RowVector3d::Zero();
  for (Eigen::Index i = 0; i < x_.rows(); ++i) {
    acc += kernel_value(kernel_, xq.data(), x_.row(i).data()) * alpha_.row(i);
  }
  acc += y_mean_;
  return acc.transpose();
}

GprPrediction GprModel::predict(const GprInputs& xq) const {
  GprPrediction out;
  const Eigen::MatrixXd ks = kernel_matrix(kernel_, xq, x_);
  out.mean = ks * alpha_;
  out.mean.rowwise() += y_mean_;
  const Eigen::MatrixXd v =
      lower_.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd(ks.transpose()));
  Eigen::MatrixXd cov = kernel_matrix(kernel_, xq, xq);
  cov.noalias() -= v.transpose() * v;
  out.covariance = 0.5 * (cov + cov.transpose());
  return out;
}

namespace {

double median_of(std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  return *mid;
}

}  // namespace

KernelSpec default_kernel(const GprInputs& x, const GprTargets& y, double noise_sigma) {
  KernelSpec k;
  const Eigen::Index n = x.rows();
  // Pairwise medians over at most 400 evenly strided rows.
  const Eigen::Index stride = std::max<Eigen::Index>(1, n / 400);
  for (int d = 0; d < 4; ++d) {
    std::vector<double> diffs;
    std::vector<double> values;
    for (Eigen::Index i = 0; i < n; i += stride) {
      values.push_back(std::abs(x(i, d)));
      for (Eigen::Index j = i + stride; j < n; j += stride) diffs.push_back(std::abs(x(i, d) - x(j, d)));
    }
    double l = median_of(diffs);
    if (!(l > 1e-12)) l = median_of(values);
    if (!(l > 1e-12)) l = 1.0;
    k.length_scales[d] = l;
  }
  double var = 0.0;
  if (n > 1) {
    const Eigen::RowVector3d mu = y.colwise().mean();
    var = (y.rowwise() - mu).array().square().sum() / (3.0 * static_cast<double>(n - 1));
  }
  k.signal_variance = std::max(var, 1e-6);
  k.noise_variance = noise_sigma * noise_sigma;
  return k;
}

DensifyResult densify(std::span<const TimedPoint> observations, const DensifyOptions& opts) {
  if (!(opts.step > 0.0)) throw InputError("densify: step must be positive");
  std::vector<TimedPoint> obs;
  std::vector<std::size_t> src;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const auto& o = observations[i];
    if (!o.p.allFinite() || !std::isfinite(o.t)) continue;
    if (!obs.empty() && o.t <= obs.back().t) continue;
    obs.push_back(o);
    src.push_back(i);
  }
  if (obs.size() < 2) throw ComputeError("densify: need at least two valid samples");

  const std::size_t pairs = obs.size() - 1;
  std::vector<std::size_t> chosen;
  if (pairs > opts.max_training && opts.max_training >= 2) {
    for (std::size_t k = 0; k < opts.max_training; ++k) {
      chosen.push_back((k * (pairs - 1) + (opts.max_training - 1) / 2) / (opts.max_training - 1));
    }
  } else {
    for (std::size_t k = 0; k < pairs; ++k) chosen.push_back(k);
  }
  GprInputs x(static_cast<Eigen::Index>(chosen.size()), 4);
  GprTargets y(static_cast<Eigen::Index>(chosen.size()), 3);
  for (std::size_t r = 0; r < chosen.size(); ++r) {
    const auto& a = obs[chosen[r]];
    const auto& b = obs[chosen[r] + 1];
    const auto row = static_cast<Eigen::Index>(r);
    x.row(row) << a.p[0], a.p[1], a.p[2], b.t - a.t;
    y.row(row) = b.p.transpose();
  }
  const KernelSpec kernel = opts.kernel ? *opts.kernel : default_kernel(x, y, opts.noise_sigma);
  const GprModel model = GprModel::fit(x, y, kernel);

  DensifyResult out;
  out.kernel = kernel;
  out.jitter = model.jitter();
  out.training_pairs = chosen.size();

  std::vector<Vec3> chain;
  for (std::size_t k = 0; k + 1 < obs.size(); ++k) {
    const TimedPoint& a = obs[k];
    const TimedPoint& b = obs[k + 1];
    out.points.push_back(a);
    out.from.push_back(src[k]);
    out.to.push_back(src[k + 1]);
    out.fraction.push_back(0.0);

    const double gap = b.t - a.t;
    const auto inner = static_cast<std::size_t>(std::max(0.0, std::ceil(gap / opts.step) - 1.0));
    if (inner == 0) continue;
    chain.clear();
    Vec3 cur = a.p;
    for (std::size_t j = 1; j <= inner; ++j) {
      cur = model.predict_mean(std::array<double, 4>{cur[0], cur[1], cur[2], opts.step});
      chain.push_back(cur);
    }
    const double last = gap - static_cast<double>(inner) * opts.step;
    const Vec3 end = last > 0.0 ? model.predict_mean(std::array<double, 4>{cur[0], cur[1], cur[2], last}) : cur;
    const Vec3 miss = b.p - end;
    for (std::size_t j = 1; j <= inner; ++j) {
      const double t = a.t + static_cast<double>(j) * opts.step;
      if (!(t < b.t)) break;
      const double f = (t - a.t) / gap;
      out.points.push_back({t, chain[j - 1] + f * miss});
      out.from.push_back(src[k]);
      out.to.push_back(src[k + 1]);
      out.fraction.push_back(f);
    }
  }
  out.points.push_back(obs.back());
  out.from.push_back(src.back());
  out.to.push_back(src.back());
  out.fraction.push_back(0.0);
  return out;
}

}  // namespace vict
