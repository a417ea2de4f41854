#pragma once

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/special_functions/gamma.hpp>
#include <boost/math/special_functions/hypergeometric_1F1.hpp>
#include <boost/math/tools/roots.hpp>

#include "../errors.hpp"
#include "../oracle.hpp"
#include "../rng.hpp"

namespace mlmcgrad {

// Inner estimates of one CSO query. `full` is defined as the average of the two
// half means, so the antithetic identity holds bit for bit.
struct InnerMeans {
  double full = 0.0;
  double first = 0.0;   // samples 1..n/2
  double second = 0.0;  // samples n/2+1..n
};

namespace detail {

// E|m + sqrt(v) Z|^{3/2} for Z standard normal.
inline double abs_power_moment(double m, double v) {
  const double k = std::pow(2.0 * v, 0.75) * boost::math::tgamma(1.25) / std::sqrt(M_PI);
  return k * boost::math::hypergeometric_1F1(-0.75, 0.5, -m * m / (2.0 * v));
}

// d/dm of abs_power_moment.
inline double abs_power_moment_dm(double m, double v) {
  const double k = std::pow(2.0 * v, 0.75) * boost::math::tgamma(1.25) / std::sqrt(M_PI);
  return 1.5 * k * (m / v) * boost::math::hypergeometric_1F1(0.25, 1.5, -m * m / (2.0 * v));
}

// sup_m d^2/dm^2 E|m + sqrt(v) Z|^{3/2} = 0.75 E|sqrt(v) Z|^{-1/2}.
inline double abs_power_curvature_bound(double v) {
  return 0.75 * std::pow(v, -0.25) * std::pow(2.0, -0.25) * boost::math::tgamma(0.25) / std::sqrt(M_PI);
}

inline double holder_grad(double u) { return 1.5 * std::copysign(std::sqrt(std::abs(u)), u); }

}  // namespace detail

struct HolderCsoParams {
  Vector direction = (Vector(2) << 1.0, 0.5).finished();
  double offset = 1.0;
  double outer_sd = 1.0;
  double inner_sd = 1.0;
  double ridge = 1.0;
  Vector center = (Vector(2) << 0.5, -0.5).finished();
};

// Conditional stochastic toy with a non-smooth outer function:
//   F(x) = E_xi |a^T x - c0 + xi + E[eta]|^{3/2} + (rho/2)|x - x_c|^2,
// xi ~ N(0, s_xi^2), eta ~ N(0, s_eta^2). The outer gradient is only
// Hoelder-1/2 continuous, so the antithetic difference keeps variance of
// order 2^{-l} and the level-l gradient bias is of order 2^{-l}.
// Level-l inner mean of 2^l draws has variance s_eta^2 2^{-l}, which gives
//   F^l(x) = G(a^T x - c0, s_xi^2 + s_eta^2 2^{-l}) + ridge,
// with G(m, v) = E|m + sqrt(v) Z|^{3/2} in closed form via 1F1.
class HolderCso {
 public:
  explicit HolderCso(HolderCsoParams p = {}) : p_(std::move(p)) {
    require(p_.direction.size() >= 1 && p_.center.size() == p_.direction.size(), ErrorKind::invalid_input,
            "direction and center must have the same positive length");
    require(p_.outer_sd > 0.0 && p_.inner_sd > 0.0, ErrorKind::invalid_input, "noise scales must be positive");
    require(p_.ridge > 0.0, ErrorKind::invalid_input, "ridge must be positive");
    const double a2 = p_.direction.squaredNorm();
    const double s2 = p_.outer_sd * p_.outer_sd;
    const double e2 = p_.inner_sd * p_.inner_sd;
    meta_.dim = static_cast<int>(p_.direction.size());
    meta_.a = meta_.b = meta_.c = 1.0;
    meta_.M_a = 0.5 * detail::abs_power_curvature_bound(s2) * e2;
    meta_.M_b = 2.25 * a2 * p_.inner_sd;
    meta_.M_c = 1.0;
    meta_.sigma_sq = 2.25 * a2 * 2.0 * (p_.outer_sd + p_.inner_sd);
  }

  const OracleMeta& meta() const { return meta_; }
  const HolderCsoParams& params() const { return p_; }
  OracleMeta& mutable_meta() { return meta_; }

  InnerMeans inner_means(int level, const Vector& x, Rng& rng) const {
    std::normal_distribution<double> z(0.0, 1.0);
    const double base = p_.direction.dot(x) - p_.offset + p_.outer_sd * z(rng);
    InnerMeans m;
    if (level == 0) {
      m.full = m.first = m.second = base + p_.inner_sd * z(rng);
      return m;
    }
    const std::size_t half = std::size_t{1} << (level - 1);
    double s1 = 0.0, s2 = 0.0;
    for (std::size_t i = 0; i < half; ++i) s1 += z(rng);
    for (std::size_t i = 0; i < half; ++i) s2 += z(rng);
    m.first = base + p_.inner_sd * s1 / static_cast<double>(half);
    m.second = base + p_.inner_sd * s2 / static_cast<double>(half);
    m.full = 0.5 * (m.first + m.second);
    return m;
  }

  OracleOutput sample(int level, const Vector& x, Rng& rng) const {
    const InnerMeans m = inner_means(level, x, rng);
    OracleOutput out;
    out.h = detail::holder_grad(m.full) * p_.direction + p_.ridge * (x - p_.center);
    if (level == 0) {
      out.H = out.h;
    } else {
      const double diff =
          detail::holder_grad(m.full) - 0.5 * (detail::holder_grad(m.first) + detail::holder_grad(m.second));
      out.H = diff * p_.direction;
    }
    out.cost = std::ldexp(1.0, level);
    return out;
  }

  double level_objective(const Vector& x, int level) const { return value(x, level_variance(level)); }
  Vector level_gradient(const Vector& x, int level) const { return grad(x, level_variance(level)); }
  double objective(const Vector& x) const { return value(x, p_.outer_sd * p_.outer_sd); }
  Vector gradient(const Vector& x) const { return grad(x, p_.outer_sd * p_.outer_sd); }

  double strong_convexity() const { return p_.ridge; }
  double smoothness() const {
    return p_.direction.squaredNorm() * detail::abs_power_curvature_bound(p_.outer_sd * p_.outer_sd) + p_.ridge;
  }
  bool supports_coupled_evaluation() const { return true; }

  // Minimizer of F (level < 0) or of F^level.
  Vector minimizer(int level = -1) const {
    const double v = level < 0 ? p_.outer_sd * p_.outer_sd : level_variance(level);
    const double a2 = p_.direction.squaredNorm();
    const double m0 = p_.direction.dot(p_.center) - p_.offset;
    // Stationarity reduces to a monotone scalar equation in m = a^T x - c0.
    auto phi = [&](double m) { return m - m0 + a2 * detail::abs_power_moment_dm(m, v) / p_.ridge; };
    double lo = m0 - 1.0, hi = m0 + 1.0;
    while (phi(lo) > 0.0) lo -= 2.0 * (hi - lo);
    while (phi(hi) < 0.0) hi += 2.0 * (hi - lo);
    std::uintmax_t iters = 200;
    auto r = boost::math::tools::toms748_solve(phi, lo, hi, boost::math::tools::eps_tolerance<double>(52), iters);
    const double m = 0.5 * (r.first + r.second);
    return p_.center - (detail::abs_power_moment_dm(m, v) / p_.ridge) * p_.direction;
  }

 private:
  double level_variance(int level) const {
    return p_.outer_sd * p_.outer_sd + p_.inner_sd * p_.inner_sd * std::ldexp(1.0, -level);
  }
  double value(const Vector& x, double v) const {
    const double m = p_.direction.dot(x) - p_.offset;
    return detail::abs_power_moment(m, v) + 0.5 * p_.ridge * (x - p_.center).squaredNorm();
  }
  Vector grad(const Vector& x, double v) const {
    const double m = p_.direction.dot(x) - p_.offset;
    return detail::abs_power_moment_dm(m, v) * p_.direction + p_.ridge * (x - p_.center);
  }

  HolderCsoParams p_;
  OracleMeta meta_;
};

struct LinearCsoParams {
  std::vector<Eigen::MatrixXd> A;
  std::vector<Vector> b;
  double jacobian_sd = 0.5;
  double noise_sd = 1.0;
  double nonconvex_weight = 0.0;  // adds kappa sum_i (1 - cos x_i)
  double radius = 3.0;            // region over which the declared M_a holds

  static LinearCsoParams defaults() {
    LinearCsoParams p;
    p.A = {(Eigen::MatrixXd(2, 2) << 2, 0, 0, 1).finished(), (Eigen::MatrixXd(2, 2) << 1, 1, 0, 1).finished(),
           (Eigen::MatrixXd(2, 2) << 1, 0, 1, 2).finished()};
    p.b = {(Vector(2) << 1, -1).finished(), (Vector(2) << 0, 1).finished(), (Vector(2) << -1, 0.5).finished()};
    return p;
  }

  static LinearCsoParams nonconvex_defaults() {
    LinearCsoParams p = defaults();
    p.nonconvex_weight = 3.0;
    return p;
  }
};

// Quadratic outer function with an inner map linear in x:
//   g_eta(x, xi) = (A_xi + s_J Z) x + b_xi + s_e e,  f(u) = |u|^2 / 2,
// xi uniform over the listed (A, b) pairs, Z and e standard normal. The
// antithetic difference cancels to second order (variance order 4^{-l}), and
//   F^l(x) = F(x) + (s_J^2 k |x|^2 + s_e^2 k) 2^{-l} / 2.
class LinearCso {
 public:
  explicit LinearCso(LinearCsoParams p = LinearCsoParams::defaults()) : p_(std::move(p)) {
    require(!p_.A.empty() && p_.A.size() == p_.b.size(), ErrorKind::invalid_input,
            "need the same positive number of matrices and offsets");
    k_ = p_.A.front().rows();
    d_ = p_.A.front().cols();
    for (std::size_t i = 0; i < p_.A.size(); ++i)
      require(p_.A[i].rows() == k_ && p_.A[i].cols() == d_ && p_.b[i].size() == k_, ErrorKind::invalid_input,
              "inconsistent matrix shapes");
    require(p_.jacobian_sd >= 0.0 && p_.noise_sd >= 0.0, ErrorKind::invalid_input, "noise scales must be >= 0");
    require(p_.nonconvex_weight >= 0.0, ErrorKind::invalid_input, "nonconvex weight must be >= 0");
    hessian_ = Eigen::MatrixXd::Zero(d_, d_);
    linear_ = Vector::Zero(d_);
    for (std::size_t i = 0; i < p_.A.size(); ++i) {
      hessian_ += p_.A[i].transpose() * p_.A[i];
      linear_ += p_.A[i].transpose() * p_.b[i];
    }
    hessian_ /= static_cast<double>(p_.A.size());
    linear_ /= static_cast<double>(p_.A.size());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(hessian_);
    lambda_min_ = eig.eigenvalues().minCoeff();
    lambda_max_ = eig.eigenvalues().maxCoeff();

    const double j2 = p_.jacobian_sd * p_.jacobian_sd * k_;
    meta_.dim = static_cast<int>(d_);
    meta_.a = 1.0;
    meta_.b = 2.0;
    meta_.c = 1.0;
    meta_.M_a = std::max(0.5 * (j2 * p_.radius * p_.radius + p_.noise_sd * p_.noise_sd * k_), 1e-12);
    meta_.M_b = std::max(4.0 * j2 * (j2 * p_.radius * p_.radius + p_.noise_sd * p_.noise_sd * k_), 1e-12);
    meta_.M_c = 1.0;
    meta_.sigma_sq = std::max(meta_.M_b + (lambda_max_ + j2) * (lambda_max_ + j2) * p_.radius * p_.radius, 1e-12);
  }

  const OracleMeta& meta() const { return meta_; }
  OracleMeta& mutable_meta() { return meta_; }
  const LinearCsoParams& params() const { return p_; }

  OracleOutput sample(int level, const Vector& x, Rng& rng) const {
    std::uniform_int_distribution<std::size_t> pick(0, p_.A.size() - 1);
    const std::size_t i = pick(rng);
    const Eigen::MatrixXd& A = p_.A[i];
    const Vector& b = p_.b[i];
    std::normal_distribution<double> z(0.0, 1.0);
    auto draw_window = [&](std::size_t count, Eigen::MatrixXd& J, Vector& g) {
      Eigen::MatrixXd zs = Eigen::MatrixXd::Zero(k_, d_);
      Vector es = Vector::Zero(k_);
      for (std::size_t s = 0; s < count; ++s) {
        for (Eigen::Index c = 0; c < d_; ++c)
          for (Eigen::Index r = 0; r < k_; ++r) zs(r, c) += z(rng);
        for (Eigen::Index r = 0; r < k_; ++r) es[r] += z(rng);
      }
      const double inv = 1.0 / static_cast<double>(count);
      J = A + (p_.jacobian_sd * inv) * zs;
      g = J * x + b + (p_.noise_sd * inv) * es;
    };

    OracleOutput out;
    const Vector det = deterministic_gradient(x);
    if (level == 0) {
      Eigen::MatrixXd J;
      Vector g;
      draw_window(1, J, g);
      out.h = J.transpose() * g + det;
      out.H = out.h;
    } else {
      const std::size_t half = std::size_t{1} << (level - 1);
      Eigen::MatrixXd J1, J2;
      Vector g1, g2;
      draw_window(half, J1, g1);
      draw_window(half, J2, g2);
      const Eigen::MatrixXd J = 0.5 * (J1 + J2);
      const Vector g = 0.5 * (g1 + g2);
      const Vector full = J.transpose() * g;
      out.h = full + det;
      out.H = full - 0.5 * (J1.transpose() * g1 + J2.transpose() * g2);
    }
    out.cost = std::ldexp(1.0, level);
    return out;
  }

  double objective(const Vector& x) const {
    double s = 0.0;
    for (std::size_t i = 0; i < p_.A.size(); ++i) s += 0.5 * (p_.A[i] * x + p_.b[i]).squaredNorm();
    s /= static_cast<double>(p_.A.size());
    return s + p_.nonconvex_weight * (1.0 - x.array().cos()).sum();
  }
  double level_objective(const Vector& x, int level) const {
    const double j2 = p_.jacobian_sd * p_.jacobian_sd * k_;
    return objective(x) + 0.5 * (j2 * x.squaredNorm() + p_.noise_sd * p_.noise_sd * k_) * std::ldexp(1.0, -level);
  }
  Vector gradient(const Vector& x) const { return hessian_ * x + linear_ + deterministic_gradient(x); }
  Vector level_gradient(const Vector& x, int level) const {
    const double j2 = p_.jacobian_sd * p_.jacobian_sd * k_;
    return gradient(x) + j2 * std::ldexp(1.0, -level) * x;
  }

  // Constants of the convex part; the nonconvex term adds curvature in [-kappa, kappa].
  double strong_convexity() const { return lambda_min_; }
  double smoothness() const {
    return lambda_max_ + p_.jacobian_sd * p_.jacobian_sd * k_ + p_.nonconvex_weight;
  }
  bool is_convex() const { return p_.nonconvex_weight == 0.0; }
  bool supports_coupled_evaluation() const { return true; }

  // Minimizer of F (convex variant only).
  Vector minimizer() const {
    require(is_convex(), ErrorKind::unsupported, "closed-form minimizer needs the convex variant");
    return -hessian_.ldlt().solve(linear_);
  }

 private:
  Vector deterministic_gradient(const Vector& x) const {
    if (p_.nonconvex_weight == 0.0) return Vector::Zero(x.size());
    return p_.nonconvex_weight * x.array().sin().matrix();
  }

  LinearCsoParams p_;
  OracleMeta meta_;
  Eigen::Index k_ = 0;
  Eigen::Index d_ = 0;
  Eigen::MatrixXd hessian_;
  Vector linear_;
  double lambda_min_ = 0.0;
  double lambda_max_ = 0.0;
};

}  // namespace mlmcgrad
