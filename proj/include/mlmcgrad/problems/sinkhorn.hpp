#pragma once

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "../errors.hpp"
#include "../oracle.hpp"
#include "../rng.hpp"

namespace mlmcgrad {

struct RegressionData {
  Eigen::MatrixXd features;  // one row per datum
  Vector labels;
};

// Comma-separated table, label in the last column, optional header line.
inline RegressionData load_regression_table(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), ErrorKind::invalid_input, "cannot open data file " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        row.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t\r", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      require(rows.empty() && lineno == 1, ErrorKind::invalid_input,
              path + ":" + std::to_string(lineno) + ": non-numeric cell");
      continue;  // header
    }
    require(row.size() >= 2, ErrorKind::invalid_input, path + ":" + std::to_string(lineno) + ": need >= 2 columns");
    require(rows.empty() || row.size() == rows.front().size(), ErrorKind::invalid_input,
            path + ":" + std::to_string(lineno) + ": ragged row");
    rows.push_back(std::move(row));
  }
  require(!rows.empty(), ErrorKind::invalid_input, "data file " + path + " has no rows");
  RegressionData data;
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size() - 1);
  data.features.resize(n, d);
  data.labels.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < d; ++j) data.features(i, j) = rows[i][j];
    data.labels[i] = rows[i][d];
  }
  return data;
}

// Linear-model synthetic in the spirit of small tabular regression sets:
// standard normal features, labels w^T a + 0.5 noise, w = (1, -1, 0.5, ...).
inline RegressionData synthetic_regression_data(int n = 50, int d = 3, std::uint64_t seed = 7) {
  require(n >= 1 && d >= 1, ErrorKind::invalid_input, "need n, d >= 1");
  Rng rng(seed);
  std::normal_distribution<double> z(0.0, 1.0);
  Vector w(d);
  for (int j = 0; j < d; ++j) w[j] = (j % 2 == 0 ? 1.0 : -1.0) / (1.0 + j / 2);
  RegressionData data;
  data.features.resize(n, d);
  data.labels.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) data.features(i, j) = z(rng);
    data.labels[i] = data.features.row(i).dot(w) + 0.5 * z(rng);
  }
  return data;
}

namespace detail {

// Streaming log-sum-exp with weighted vector sums: keeps shift = max exponent,
// sum = sum e^{e_j - shift}, vec = sum e^{e_j - shift} v_j.
struct SoftmaxAccumulator {
  double shift = -std::numeric_limits<double>::infinity();
  double sum = 0.0;
  Vector vec;
  std::size_t count = 0;
  double raw_sum = 0.0;  // sum of e_j, for control variates

  explicit SoftmaxAccumulator(Eigen::Index dim) : vec(Vector::Zero(dim)) {}

  void add(double e, const Vector& v) {
    if (e > shift) {
      const double scale = std::exp(shift - e);
      sum *= scale;
      vec *= scale;
      shift = e;
    }
    const double w = std::exp(e - shift);
    sum += w;
    vec += w * v;
    raw_sum += e;
    ++count;
  }

  // log of the mean of e^{e_j}.
  double log_mean() const { return shift + std::log(sum / static_cast<double>(count)); }
  Vector weighted_mean() const { return vec / sum; }

  static SoftmaxAccumulator merge(const SoftmaxAccumulator& a, const SoftmaxAccumulator& b) {
    SoftmaxAccumulator out(a.vec.size());
    out.shift = std::max(a.shift, b.shift);
    const double wa = std::exp(a.shift - out.shift);
    const double wb = std::exp(b.shift - out.shift);
    out.sum = wa * a.sum + wb * b.sum;
    out.vec = wa * a.vec + wb * b.vec;
    out.count = a.count + b.count;
    out.raw_sum = a.raw_sum + b.raw_sum;
    return out;
  }
};

}  // namespace detail

// log((1/n) sum exp(e_j)) computed with a max shift.
inline double log_mean_exp(const std::vector<double>& e) {
  require(!e.empty(), ErrorKind::invalid_input, "log_mean_exp needs at least one value");
  double m = -std::numeric_limits<double>::infinity();
  for (double v : e) m = std::max(m, v);
  double s = 0.0;
  for (double v : e) s += std::exp(v - m);
  return m + std::log(s / static_cast<double>(e.size()));
}

struct SinkhornParams {
  double tau_sq = 0.1;
  double lambda = 20.0;
};

// Sinkhorn-regularized robust least squares with a linear predictor:
//   F(x) = (1/n) sum_i lambda log E_{z ~ N(a_i, tau^2 I)} exp((x^T z - b_i)^2 / lambda).
// A CSO instance with f = lambda log and g = exp(loss / lambda). Because
// x^T z - b_i is Gaussian, the inner expectation is a noncentral chi-square
// moment and F has a closed form while 2 tau^2 |x|^2 < lambda.
class SinkhornDro {
 public:
  SinkhornDro(RegressionData data, SinkhornParams p = {}) : data_(std::move(data)), p_(p) {
    require(p_.lambda > 0.0 && std::isfinite(p_.lambda), ErrorKind::invalid_input, "lambda must be positive");
    require(p_.tau_sq > 0.0 && std::isfinite(p_.tau_sq), ErrorKind::invalid_input, "tau^2 must be positive");
    require(data_.features.rows() >= 1 && data_.labels.size() == data_.features.rows(), ErrorKind::invalid_input,
            "data must have matching features and labels");
    const double b2 = data_.labels.squaredNorm() / data_.labels.size();
    meta_.dim = static_cast<int>(data_.features.cols());
    meta_.a = meta_.b = meta_.c = 1.0;
    meta_.M_a = p_.tau_sq * (1.0 + b2);
    meta_.M_b = 4.0 * p_.tau_sq * (1.0 + b2);
    meta_.M_c = 1.0;
    meta_.sigma_sq = 4.0 * (1.0 + b2) * (1.0 + data_.features.squaredNorm() / data_.features.rows());
  }

  const OracleMeta& meta() const { return meta_; }
  OracleMeta& mutable_meta() { return meta_; }
  const SinkhornParams& params() const { return p_; }
  const RegressionData& data() const { return data_; }
  std::size_t size() const { return static_cast<std::size_t>(data_.labels.size()); }

  OracleOutput sample(int level, const Vector& x, Rng& rng) const {
    std::uniform_int_distribution<Eigen::Index> pick(0, data_.labels.size() - 1);
    const Eigen::Index i = pick(rng);
    OracleOutput out;
    if (level == 0) {
      detail::SoftmaxAccumulator acc(x.size());
      draw(i, 1, x, rng, acc);
      out.h = acc.weighted_mean();
      out.H = out.h;
    } else {
      const std::size_t half = std::size_t{1} << (level - 1);
      detail::SoftmaxAccumulator first(x.size()), second(x.size());
      draw(i, half, x, rng, first);
      draw(i, half, x, rng, second);
      const auto full = detail::SoftmaxAccumulator::merge(first, second);
      out.h = full.weighted_mean();
      out.H = out.h - 0.5 * (first.weighted_mean() + second.weighted_mean());
    }
    out.cost = std::ldexp(1.0, level);
    return out;
  }

  struct InnerStats {
    double smoothed = 0.0;   // lambda log mean_j exp(loss_j / lambda)
    double mean_loss = 0.0;  // mean_j loss_j, same draws
  };

  InnerStats inner_stats(Eigen::Index i, std::size_t n, const Vector& x, Rng& rng) const {
    detail::SoftmaxAccumulator acc(x.size());
    draw(i, n, x, rng, acc);
    return {p_.lambda * acc.log_mean(), p_.lambda * acc.raw_sum / static_cast<double>(acc.count)};
  }

  // E[loss] for datum i: residual^2 + tau^2 |x|^2.
  double datum_mean_loss(Eigen::Index i, const Vector& x) const {
    const double r = data_.features.row(i).dot(x) - data_.labels[i];
    return r * r + p_.tau_sq * x.squaredNorm();
  }

  // lambda log E exp(loss / lambda) for datum i, +inf past the moment boundary.
  double datum_objective(Eigen::Index i, const Vector& x) const {
    const double q = 1.0 - 2.0 * p_.tau_sq * x.squaredNorm() / p_.lambda;
    if (q <= 0.0) return std::numeric_limits<double>::infinity();
    const double r = data_.features.row(i).dot(x) - data_.labels[i];
    return -0.5 * p_.lambda * std::log(q) + r * r / q;
  }

  double objective(const Vector& x) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < data_.labels.size(); ++i) s += datum_objective(i, x);
    return s / static_cast<double>(data_.labels.size());
  }

  Vector gradient(const Vector& x) const {
    const double t2 = p_.tau_sq;
    const double q = 1.0 - 2.0 * t2 * x.squaredNorm() / p_.lambda;
    require(q > 0.0, ErrorKind::numeric, "Sinkhorn objective is infinite at this point");
    Vector g = Vector::Zero(x.size());
    for (Eigen::Index i = 0; i < data_.labels.size(); ++i) {
      const double r = data_.features.row(i).dot(x) - data_.labels[i];
      g += 2.0 * t2 * x / q + 2.0 * r * data_.features.row(i).transpose() / q +
           4.0 * t2 * r * r * x / (p_.lambda * q * q);
    }
    return g / static_cast<double>(data_.labels.size());
  }

  bool supports_coupled_evaluation() const { return true; }

 private:
  void draw(Eigen::Index i, std::size_t n, const Vector& x, Rng& rng, detail::SoftmaxAccumulator& acc) const {
    std::normal_distribution<double> z(0.0, 1.0);
    const double tau = std::sqrt(p_.tau_sq);
    Vector feat(x.size());
    for (std::size_t s = 0; s < n; ++s) {
      for (Eigen::Index j = 0; j < x.size(); ++j) feat[j] = data_.features(i, j) + tau * z(rng);
      const double r = feat.dot(x) - data_.labels[i];
      const double e = r * r / p_.lambda;
      if (!std::isfinite(e)) fail(ErrorKind::numeric, "Sinkhorn loss overflowed");
      acc.add(e, 2.0 * r * feat);
    }
  }

  RegressionData data_;
  SinkhornParams p_;
  OracleMeta meta_;
};

}  // namespace mlmcgrad
