#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "../errors.hpp"
#include "../oracle.hpp"
#include "../rng.hpp"

namespace mlmcgrad {

// l(y) = e^{beta y}: convex, increasing, l' > 0 everywhere.
struct ExponentialLoss {
  double beta = 1.0;
  double value(double y) const { return std::exp(beta * y); }
  double derivative(double y) const { return beta * std::exp(beta * y); }
};

// Root t of (1/n) sum_i loss(-x_i - t) = level by bisection to `tol`. The root
// function is decreasing in t; the bracket [-B, B], B = 10 (max|x_i| + 1), is
// doubled up to six times before giving up.
template <class Loss>
double shortfall_root(std::span<const double> samples, double level, const Loss& loss, double tol = 1e-10) {
  require(!samples.empty(), ErrorKind::invalid_input, "shortfall root needs at least one sample");
  require(level > 0.0, ErrorKind::invalid_input, "risk level must be positive");
  double bound = 0.0;
  for (double v : samples) bound = std::max(bound, std::abs(v));
  bound = 10.0 * (bound + 1.0);
  auto excess = [&](double t) {
    double s = 0.0;
    for (double v : samples) s += loss.value(-v - t);
    return s / static_cast<double>(samples.size()) - level;
  };
  int doublings = 0;
  while (!(excess(-bound) > 0.0 && excess(bound) < 0.0)) {
    if (++doublings > 6) fail(ErrorKind::bracket_failure, "no sign change in the shortfall bracket");
    bound *= 2.0;
  }
  double lo = -bound, hi = bound;
  while (hi - lo > tol) {
    const double mid = 0.5 * (lo + hi);
    if (mid == lo || mid == hi) break;
    (excess(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Same root for the exponential loss, where the equation solves in closed
// form: t = (1/beta) log(mean e^{-beta x_i} / level), evaluated with a max shift.
inline double shortfall_root(std::span<const double> samples, double level, const ExponentialLoss& loss) {
  require(!samples.empty(), ErrorKind::invalid_input, "shortfall root needs at least one sample");
  require(level > 0.0, ErrorKind::invalid_input, "risk level must be positive");
  double m = -std::numeric_limits<double>::infinity();
  for (double v : samples) m = std::max(m, -loss.beta * v);
  double s = 0.0;
  for (double v : samples) s += std::exp(-loss.beta * v - m);
  const double log_mean = m + std::log(s / static_cast<double>(samples.size()));
  return (log_mean - std::log(level)) / loss.beta;
}

struct UbsrParams {
  Vector mean_return = (Vector(2) << 0.5, 0.3).finished();
  Eigen::MatrixXd covariance = (Eigen::MatrixXd(2, 2) << 1.0, 0.2, 0.2, 0.5).finished();
  double beta = 1.0;
  double risk_level = 0.5;
};

// Shortfall risk of a portfolio position X(theta) = theta^T R with Gaussian
// returns R and exponential loss. The level-l oracle draws 2^l pairs (R_i, R~_i)
// from two child streams; each window estimates t from its R~ positions and
// returns g = -mean(l'(-X_i - t) R_i) / mean(l'(-X_i - t)). Closed forms:
//   SR(theta)      = -theta^T m + beta theta^T S theta / 2 + log(1 / level) / beta,
//   grad SR(theta) = -m + beta S theta.
class ShortfallRisk {
 public:
  explicit ShortfallRisk(UbsrParams p = {}) : p_(std::move(p)) {
    const auto d = p_.mean_return.size();
    require(d >= 1 && p_.covariance.rows() == d && p_.covariance.cols() == d, ErrorKind::invalid_input,
            "covariance shape must match the return vector");
    require(p_.beta > 0.0 && p_.risk_level > 0.0, ErrorKind::invalid_input, "beta and risk level must be positive");
    Eigen::LLT<Eigen::MatrixXd> llt(p_.covariance);
    require(llt.info() == Eigen::Success, ErrorKind::invalid_input, "covariance must be positive definite");
    chol_ = llt.matrixL();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(p_.covariance);
    cov_min_ = eig.eigenvalues().minCoeff();
    cov_max_ = eig.eigenvalues().maxCoeff();
    loss_.beta = p_.beta;
    meta_.dim = static_cast<int>(d);
    meta_.a = meta_.b = meta_.c = 1.0;
    meta_.M_a = 0.5 * (std::exp(p_.beta * p_.beta * cov_max_) - 1.0) / p_.beta;
    meta_.M_b = p_.beta * p_.beta * cov_max_ * cov_max_ * d;
    meta_.M_c = 2.0;
    meta_.sigma_sq = p_.covariance.trace() * 4.0;
  }

  const OracleMeta& meta() const { return meta_; }
  OracleMeta& mutable_meta() { return meta_; }
  const UbsrParams& params() const { return p_; }
  const ExponentialLoss& loss() const { return loss_; }

  // n Gaussian return vectors, one per column.
  Eigen::MatrixXd draw_returns(std::size_t n, Rng& rng) const {
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd Z(p_.mean_return.size(), static_cast<Eigen::Index>(n));
    for (Eigen::Index j = 0; j < Z.cols(); ++j)
      for (Eigen::Index i = 0; i < Z.rows(); ++i) Z(i, j) = z(rng);
    return (chol_ * Z).colwise() + p_.mean_return;
  }

  // Positions theta^T R~_i used for the t estimate.
  std::vector<double> draw_positions(const Vector& theta, std::size_t n, Rng& rng) const {
    const Eigen::MatrixXd R = draw_returns(n, rng);
    std::vector<double> out(n);
    for (std::size_t j = 0; j < n; ++j) out[j] = R.col(static_cast<Eigen::Index>(j)).dot(theta);
    return out;
  }

  double sr_estimate(std::span<const double> positions) const {
    return shortfall_root(positions, p_.risk_level, loss_);
  }

  OracleOutput sample(int level, const Vector& theta, Rng& rng) const {
    const std::size_t n = std::size_t{1} << level;
    Rng x_stream = split(rng);
    Rng tilde_stream = split(rng);
    const Eigen::MatrixXd R = draw_returns(n, x_stream);
    const std::vector<double> tilde = draw_positions(theta, n, tilde_stream);
    const Vector X = R.transpose() * theta;

    auto window = [&](std::size_t lo, std::size_t count) {
      const double t = sr_estimate(std::span<const double>(tilde).subspan(lo, count));
      double den = 0.0;
      Vector num = Vector::Zero(theta.size());
      for (std::size_t j = lo; j < lo + count; ++j) {
        const double w = loss_.derivative(-X[static_cast<Eigen::Index>(j)] - t);
        den += w;
        num += w * R.col(static_cast<Eigen::Index>(j));
      }
      den /= static_cast<double>(count);
      if (!std::isfinite(den) || den < 1e-12) fail(ErrorKind::degenerate_denominator, "mean of l' below 1e-12");
      return Vector(-(num / static_cast<double>(count)) / den);
    };

    OracleOutput out;
    out.h = window(0, n);
    if (level == 0) {
      out.H = out.h;
    } else {
      out.H = out.h - 0.5 * (window(0, n / 2) + window(n / 2, n / 2));
    }
    out.cost = 2.0 * static_cast<double>(n);
    return out;
  }

  double objective(const Vector& theta) const {
    return -theta.dot(p_.mean_return) + 0.5 * p_.beta * theta.dot(p_.covariance * theta) +
           std::log(1.0 / p_.risk_level) / p_.beta;
  }
  Vector gradient(const Vector& theta) const { return -p_.mean_return + p_.beta * (p_.covariance * theta); }
  Vector minimizer() const { return p_.covariance.ldlt().solve(p_.mean_return) / p_.beta; }
  double strong_convexity() const { return p_.beta * cov_min_; }
  double smoothness() const { return p_.beta * cov_max_; }
  bool supports_coupled_evaluation() const { return true; }

 private:
  UbsrParams p_;
  ExponentialLoss loss_;
  Eigen::MatrixXd chol_;
  double cov_min_ = 0.0;
  double cov_max_ = 0.0;
  OracleMeta meta_;
};

}  // namespace mlmcgrad
