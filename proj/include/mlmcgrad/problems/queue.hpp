#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <string_view>

#include "../errors.hpp"
#include "../oracle.hpp"
#include "../rng.hpp"

namespace mlmcgrad {

struct QueueState {
  double W = 0.0;  // waiting time
  double X = 0.0;  // time since the current busy period started
  std::size_t n = 0;
};

// One step of the Lindley recursion with interarrival u / lambda and service v / mu.
inline QueueState lindley_step(const QueueState& s, double mu, double lambda, double u, double v) {
  QueueState next;
  const double gap = u / lambda;
  next.W = std::max(s.W + v / mu - gap, 0.0);
  next.X = next.W > 0.0 ? s.X + gap : 0.0;
  next.n = s.n + 1;
  return next;
}

enum class ServiceLaw { exponential, erlang, hyperexponential };

inline std::string_view to_string(ServiceLaw s) {
  switch (s) {
    case ServiceLaw::exponential: return "exponential";
    case ServiceLaw::erlang: return "erlang";
    case ServiceLaw::hyperexponential: return "hyperexponential";
  }
  return "?";
}

inline ServiceLaw parse_service_law(std::string_view s) {
  for (auto l : {ServiceLaw::exponential, ServiceLaw::erlang, ServiceLaw::hyperexponential})
    if (s == to_string(l)) return l;
  fail(ErrorKind::invalid_input, "unknown service law '" + std::string(s) + "'");
}

// Which slices of one simulated trajectory feed the level-l and level-(l-1)
// statistics. `half`: mean over the second half of the m 2^l steps against the
// second quarter (the second half of the level-(l-1) prefix). `trailing`: the
// last m steps of the full trajectory against the last m steps of its first half.
enum class WindowMode { half, trailing };

inline std::string_view to_string(WindowMode w) { return w == WindowMode::half ? "half" : "trailing"; }

inline WindowMode parse_window_mode(std::string_view s) {
  if (s == "half") return WindowMode::half;
  if (s == "trailing") return WindowMode::trailing;
  fail(ErrorKind::invalid_input, "unknown window mode '" + std::string(s) + "'");
}

struct QueueParams {
  double chi = 10.0;           // demand scale
  double demand_shift = 0.1;   // a in lambda(p) = chi e^{a-p} / (1 + e^{a-p})
  double staffing_cost = 0.1;  // c(mu) = staffing_cost mu^2
  double holding = 1.0;        // h_0
  double revenue_weight = 1.0;  // multiplies p lambda(p); 0 leaves only the cost terms
  ServiceLaw service = ServiceLaw::exponential;
  int erlang_phases = 10;  // variance 1 / phases
  int warmup = 64;         // m: a level-l trajectory has m 2^l steps
  WindowMode window = WindowMode::half;
  double mu_lo = 2.0, mu_hi = 10.0;
  double p_lo = 1.5, p_hi = 10.0;
};

// M/G/1 mean number in system, Pollaczek-Khinchine: rho + rho^2 (1 + scv) / (2 (1 - rho)).
inline double pk_queue_length(double rho, double service_scv) {
  if (!(rho < 1.0)) fail(ErrorKind::unstable_regime, "traffic intensity " + std::to_string(rho) + " >= 1");
  return rho + rho * rho * (1.0 + service_scv) / (2.0 * (1.0 - rho));
}

// Joint pricing and staffing of a single-server queue, x = (mu, p):
//   F(mu, p) = h_0 E[Q](mu, p) + c(mu) - p lambda(p).
// Interarrivals are exponential; the service law is selectable. Level l
// simulates one trajectory of m 2^l Lindley steps from an empty system; the
// oracle plugs the window mean of W + X into the gradient expression
//   dF/dmu = c'(mu) - h_0 (lambda / mu) (E[W + X] + 1 / mu),
//   dF/dp  = -lambda - p lambda' + h_0 lambda' (E[W + X] + 1 / mu).
class QueuePricing {
 public:
  explicit QueuePricing(QueueParams p = {}) : p_(p) {
    require(p_.chi > 0.0 && p_.holding > 0.0, ErrorKind::invalid_input, "chi and h_0 must be positive");
    require(p_.staffing_cost >= 0.0 && p_.revenue_weight >= 0.0, ErrorKind::invalid_input,
            "cost weights must be nonnegative");
    require(p_.warmup >= 2 && (p_.warmup & (p_.warmup - 1)) == 0, ErrorKind::invalid_input,
            "warm-up m must be a power of two >= 2");
    require(p_.erlang_phases >= 1, ErrorKind::invalid_input, "Erlang phases must be >= 1");
    require(p_.mu_lo > 0.0 && p_.mu_lo < p_.mu_hi && p_.p_lo < p_.p_hi, ErrorKind::invalid_input,
            "domain box is empty");
    require(demand(p_.p_lo) * service_mean() < p_.mu_lo, ErrorKind::invalid_input,
            "domain box admits unstable points: lambda(p_lo) must be below mu_lo");
    meta_.dim = 2;
    meta_.a = meta_.b = meta_.c = 1.0;
    meta_.M_a = 1.0;
    meta_.M_b = 1.0;
    meta_.M_c = p_.warmup;
    meta_.sigma_sq = 10.0;
    meta_.level_cap = 20;
  }

  const OracleMeta& meta() const { return meta_; }
  OracleMeta& mutable_meta() { return meta_; }
  const QueueParams& params() const { return p_; }

  double demand(double price) const {
    return p_.chi / (1.0 + std::exp(price - p_.demand_shift));
  }
  double demand_slope(double price) const {
    const double lam = demand(price);
    return -lam * (1.0 - lam / p_.chi);
  }

  double service_mean() const {
    if (p_.service == ServiceLaw::hyperexponential) {
      double s = 0.0;
      for (int i = 1; i <= 10; ++i) s += 0.1 / hyper_rate(i);
      return s;
    }
    return 1.0;
  }
  double service_second_moment() const {
    switch (p_.service) {
      case ServiceLaw::exponential: return 2.0;
      case ServiceLaw::erlang: return 1.0 + 1.0 / p_.erlang_phases;
      case ServiceLaw::hyperexponential: {
        double s = 0.0;
        for (int i = 1; i <= 10; ++i) s += 0.1 * 2.0 / (hyper_rate(i) * hyper_rate(i));
        return s;
      }
    }
    return 2.0;
  }

  double service_draw(Rng& rng) const {
    std::exponential_distribution<double> e(1.0);
    switch (p_.service) {
      case ServiceLaw::exponential: return e(rng);
      case ServiceLaw::erlang: {
        double s = 0.0;
        for (int k = 0; k < p_.erlang_phases; ++k) s += e(rng);
        return s / p_.erlang_phases;
      }
      case ServiceLaw::hyperexponential: {
        std::uniform_int_distribution<int> pick(1, 10);
        const int i = pick(rng);
        return e(rng) / hyper_rate(i);
      }
    }
    return e(rng);
  }

  bool in_box(const Vector& x) const {
    const double tol = 1e-12;
    return x[0] >= p_.mu_lo - tol && x[0] <= p_.mu_hi + tol && x[1] >= p_.p_lo - tol && x[1] <= p_.p_hi + tol;
  }

  Vector project(const Vector& x) const {
    Vector y(2);
    y[0] = std::clamp(x[0], p_.mu_lo, p_.mu_hi);
    y[1] = std::clamp(x[1], p_.p_lo, p_.p_hi);
    return y;
  }

  // Level-l and level-(l-1) window means of W + X from one trajectory.
  struct Windows {
    double current = 0.0;
    double previous = 0.0;
  };

  Windows simulate(int level, double mu, double lambda, Rng& rng) const {
    const std::size_t m = static_cast<std::size_t>(p_.warmup);
    const std::size_t n = m << level;
    std::size_t cur_lo, prev_lo, prev_hi;
    if (p_.window == WindowMode::half) {
      cur_lo = n / 2;
      prev_lo = n / 4;
      prev_hi = n / 2;
    } else {
      cur_lo = n - m;
      prev_lo = n / 2 - m;
      prev_hi = n / 2;
    }
    std::exponential_distribution<double> inter(1.0);
    QueueState s;
    double cur = 0.0, prev = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
      const double u = inter(rng);
      const double v = service_draw(rng);
      s = lindley_step(s, mu, lambda, u, v);
      const double stat = s.W + s.X;
      if (j > cur_lo) cur += stat;
      if (level > 0 && j > prev_lo && j <= prev_hi) prev += stat;
    }
    Windows w;
    w.current = cur / static_cast<double>(n - cur_lo);
    if (level > 0) w.previous = prev / static_cast<double>(prev_hi - prev_lo);
    return w;
  }

  OracleOutput sample(int level, const Vector& x, Rng& rng) const {
    require(in_box(x), ErrorKind::invalid_input, "(mu, p) outside the domain box");
    const double mu = x[0], price = x[1];
    const double lam = demand(price);
    if (!(lam * service_mean() < mu)) fail(ErrorKind::unstable_regime, "lambda(p) >= mu");
    const double dlam = demand_slope(price);
    const Windows w = simulate(level, mu, lam, rng);
    auto grad = [&](double g) {
      Vector out(2);
      out[0] = 2.0 * p_.staffing_cost * mu - p_.holding * (lam / mu) * (g + 1.0 / mu);
      out[1] = p_.revenue_weight * (-lam - price * dlam) + p_.holding * dlam * (g + 1.0 / mu);
      return out;
    };
    OracleOutput out;
    out.h = grad(w.current);
    if (level == 0) {
      out.H = out.h;
    } else {
      const double diff = w.current - w.previous;
      out.H.resize(2);
      out.H[0] = -p_.holding * (lam / mu) * diff;
      out.H[1] = p_.holding * dlam * diff;
    }
    out.cost = static_cast<double>(static_cast<std::size_t>(p_.warmup) << level);
    return out;
  }

  double traffic(const Vector& x) const { return demand(x[1]) * service_mean() / x[0]; }

  // Closed-form objective from the Pollaczek-Khinchine mean.
  double objective(const Vector& x) const {
    const double mu = x[0], price = x[1];
    const double scv = service_second_moment() / (service_mean() * service_mean()) - 1.0;
    return p_.holding * pk_queue_length(traffic(x), scv) + p_.staffing_cost * mu * mu -
           p_.revenue_weight * price * demand(price);
  }

  Vector gradient(const Vector& x) const {
    const double mu = x[0], price = x[1];
    const double rho = traffic(x);
    if (!(rho < 1.0)) fail(ErrorKind::unstable_regime, "traffic intensity >= 1");
    const double kappa = service_second_moment() / (service_mean() * service_mean());
    const double dL = 1.0 + kappa * rho * (2.0 - rho) / (2.0 * (1.0 - rho) * (1.0 - rho));
    const double lam = demand(price), dlam = demand_slope(price);
    Vector g(2);
    g[0] = p_.holding * dL * (-rho / mu) + 2.0 * p_.staffing_cost * mu;
    g[1] = p_.holding * dL * dlam * service_mean() / mu - p_.revenue_weight * (lam + price * dlam);
    return g;
  }

  bool supports_coupled_evaluation() const { return true; }

 private:
  static double hyper_rate(int i) { return i * i * 0.155; }

  QueueParams p_;
  OracleMeta meta_;
};

}  // namespace mlmcgrad
