#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "snellmesh/errors.hpp"
#include "snellmesh/experiment.hpp"
#include "snellmesh/model.hpp"
#include "snellmesh/oracle.hpp"

namespace snell {

// ---------------------------------------------------------------------------
// Khintchine constants

/// (m)_q read as the falling factorial m (m-1) ... (m-q+1).
inline double falling_factorial(int m, int q) {
  double out = 1.0;
  for (int i = 0; i < q; ++i) out *= static_cast<double>(m - i);
  return out;
}

/// a(p) with a(2q)^{2q} = (2q)_q 2^{-q} and
/// a(2q+1)^{2q+1} = (2q+1)_{q+1} / sqrt(q + 1/2) * 2^{-(q + 1/2)}.
inline double khintchine_constant(int p) {
  if (p < 1) throw ContractError("Khintchine constant needs p >= 1");
  const int q = p / 2;
  double power;
  if (p % 2 == 0) {
    power = falling_factorial(2 * q, q) * std::pow(2.0, -q);
  } else {
    const double half = q + 0.5;
    power = falling_factorial(2 * q + 1, q + 1) / std::sqrt(half) * std::pow(2.0, -half);
  }
  return std::pow(power, 1.0 / p);
}

/// Smallest even integer >= p.
inline int even_exponent(int p) { return p % 2 == 0 ? p : p + 1; }

// ---------------------------------------------------------------------------
// Theoretical Lp bound

/// h_k(y) = max_x H_k(x, y) / min_x H_k(x, y); +inf when a column has a zero entry.
inline Eigen::VectorXd sup_ratio_h(const FiniteTables& t, std::size_t k) {
  if (k < 1 || k > t.horizon) throw ContractError("h_k is defined for 1 <= k <= n");
  const auto& p = t.transitions[k - 1];
  Eigen::VectorXd h(p.cols());
  for (Eigen::Index y = 0; y < p.cols(); ++y) {
    const double hi = p.col(y).maxCoeff(), lo = p.col(y).minCoeff();
    h(y) = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
  }
  return h;
}

inline Eigen::VectorXd sup_ratio_h(const MarkovModel& model, std::size_t k) { return sup_ratio_h(tabulate(model), k); }

struct BoundTerm {
  std::size_t l = 0;
  double q = 0.0;         // q_{k,l}
  double b = 0.0;         // b_{k,l} = ||h_{k+1}|| prod_{m=k}^{l-1} ||G_m||
  double integral = 0.0;  // [Q_{k,l+1}(h_{l+1}^{p'-1} v_{l+1}^{p'})(x)]^{1/p'}
  double contribution = 0.0;
};

struct BoundReport {
  int p = 2;
  int p_prime = 2;
  double a_p = 1.0;
  std::size_t n_particles = 0;
  std::size_t step = 0;
  std::size_t state = 0;
  std::vector<Eigen::VectorXd> h;  // h[k] for k = 1..n; h[0] unused
  std::vector<BoundTerm> terms;
  double bound = 0.0;
  double concentration_c = 0.0;  // sum_l 2 q_{k,l} [..]^{1/p'}
  bool finite = true;
  std::string diagnostic;
};

/// sup_x ||(v_hat_k - v_k)(x)||_{L_p} <= sum_{l=k}^{n-1} 2 a(p)/sqrt(N) q_{k,l} [Q_{k,l+1}(h^{p'-1} v^{p'})(x)]^{1/p'}.
///
/// The sum starts at l = k: the l = k term is the one-step error of the
/// first transition (Q_hat_{k,k} is the identity), and without it the bound
/// at k = n-1 would be zero.
inline BoundReport theoretical_lp_bound(const MarkovModel& model, int p, std::size_t n_particles, std::size_t state,
                                        std::size_t step = 0) {
  if (n_particles < 1) throw ContractError("N must be positive");
  const FiniteTables t = tabulate(model);
  const std::size_t n = t.horizon;
  if (step > n) throw ContractError("time index beyond horizon");
  if (state >= static_cast<std::size_t>(t.size(step))) throw ContractError("state outside E_k");

  BoundReport rep;
  rep.p = p;
  rep.p_prime = even_exponent(p);
  rep.a_p = khintchine_constant(p);
  rep.n_particles = n_particles;
  rep.step = step;
  rep.state = state;
  rep.h.resize(n + 1);
  for (std::size_t k = 1; k <= n; ++k) rep.h[k] = sup_ratio_h(t, k);
  if (step == n) return rep;  // v_hat_n = f_n exactly

  const ValueTables v = snell_with_criteria(t);
  const auto& gnorm = model.criteria_bounds;
  const double pp = rep.p_prime;
  const double exponent = (pp - 1.0) / pp;
  const double h_sup = rep.h[step + 1].maxCoeff();

  for (std::size_t l = step; l < n; ++l) {
    BoundTerm term;
    term.l = l;
    double g_prod = 1.0;
    for (std::size_t m = step; m < l; ++m) g_prod *= gnorm[m];
    term.b = h_sup * g_prod;
    term.q = std::pow(gnorm[l] * term.b, exponent);

    const Eigen::VectorXd& h = rep.h[l + 1];
    if (!h.allFinite() || !std::isfinite(h_sup)) {
      rep.finite = false;
      rep.diagnostic = "h_" + std::to_string(l + 1) + " is infinite (zero transition entry); bound is vacuous";
      term.integral = term.contribution = std::numeric_limits<double>::infinity();
      rep.terms.push_back(term);
      continue;
    }
    Eigen::VectorXd g = h.array().pow(pp - 1.0) * v[l + 1].array().pow(pp);
    for (std::size_t j = l + 1; j > step; --j) g = t.criteria[j - 1].cwiseProduct(t.transitions[j - 1] * g);
    term.integral = std::pow(g(static_cast<Eigen::Index>(state)), 1.0 / pp);
    term.contribution = 2.0 * rep.a_p / std::sqrt(static_cast<double>(n_particles)) * term.q * term.integral;
    rep.terms.push_back(term);
  }
  if (!rep.finite) {
    rep.bound = rep.concentration_c = std::numeric_limits<double>::infinity();
    return rep;
  }
  for (const auto& term : rep.terms) {
    rep.bound += term.contribution;
    rep.concentration_c += 2.0 * term.q * term.integral;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Empirical error statistics

struct ErrorLevel {
  std::size_t n_particles = 0;
  std::size_t runs = 0;
  double mean = 0.0;
  double oracle = 0.0;
  double standard_error = 0.0;
  double extinction_rate = 0.0;
  std::vector<std::pair<int, double>> lp_errors;

  double lp(int p) const {
    for (const auto& [q, e] : lp_errors)
      if (q == p) return e;
    throw ContractError("L" + std::to_string(p) + " error not computed");
  }
};

struct SlopeFit {
  double slope = 0.0;
  double intercept = 0.0;
  double lo = 0.0;  // 95% confidence interval
  double hi = 0.0;
};

struct ErrorReport {
  std::vector<ErrorLevel> levels;
  std::optional<SlopeFit> slope;  // empty when undefined (fewer than 2 levels or a zero L2 error)
};

inline double sample_mean(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

inline double standard_error(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = sample_mean(xs);
  double ss = 0.0;
  for (double x : xs) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
}

/// Least-squares fit of log(L2) on log(N) with a Student-t 95% interval.
inline std::optional<SlopeFit> fit_loglog_slope(std::span<const double> ns, std::span<const double> errors) {
  const std::size_t m = ns.size();
  if (m < 2) return std::nullopt;
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < m; ++i) {
    if (!(errors[i] > 0.0)) return std::nullopt;
    lx.push_back(std::log(ns[i]));
    ly.push_back(std::log(errors[i]));
  }
  const double mx = sample_mean(lx), my = sample_mean(ly);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
  }
  if (!(sxx > 0.0)) return std::nullopt;
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.lo = fit.hi = fit.slope;
  if (m > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < m; ++i) {
      const double r = ly[i] - fit.intercept - fit.slope * lx[i];
      rss += r * r;
    }
    const double se = std::sqrt(rss / static_cast<double>(m - 2) / sxx);
    const boost::math::students_t dist(static_cast<double>(m - 2));
    const double tq = boost::math::quantile(dist, 0.975);
    fit.lo = fit.slope - tq * se;
    fit.hi = fit.slope + tq * se;
  }
  return fit;
}

/// Lp errors of v_hat against the exact value, grouped by N (ascending).
inline ErrorReport empirical_error_stats(const std::vector<RunResult>& runs, double oracle, const std::vector<int>& ps,
                                         std::size_t min_runs = 30) {
  std::map<std::size_t, std::vector<const RunResult*>> groups;
  for (const auto& r : runs) groups[r.n_particles].push_back(&r);
  ErrorReport rep;
  std::vector<double> ns, l2;
  for (const auto& [n, group] : groups) {
    if (group.size() < min_runs)
      throw ContractError("N=" + std::to_string(n) + " has " + std::to_string(group.size()) +
                          " runs; at least " + std::to_string(min_runs) + " required");
    ErrorLevel level;
    level.n_particles = n;
    level.runs = group.size();
    level.oracle = oracle;
    std::vector<double> est;
    std::size_t extinct = 0;
    for (const auto* r : group) {
      est.push_back(r->v_hat);
      extinct += r->extinct ? 1 : 0;
    }
    level.mean = sample_mean(est);
    level.standard_error = standard_error(est);
    level.extinction_rate = static_cast<double>(extinct) / static_cast<double>(group.size());
    for (int p : ps) {
      if (p < 1) throw ContractError("Lp error needs p >= 1");
      double acc = 0.0;
      for (double e : est) acc += std::pow(std::abs(e - oracle), p);
      level.lp_errors.emplace_back(p, std::pow(acc / static_cast<double>(est.size()), 1.0 / p));
    }
    double acc2 = 0.0;
    for (double e : est) acc2 += (e - oracle) * (e - oracle);
    ns.push_back(static_cast<double>(n));
    l2.push_back(std::sqrt(acc2 / static_cast<double>(est.size())));
    rep.levels.push_back(std::move(level));
  }
  rep.slope = fit_loglog_slope(ns, l2);
  return rep;
}

// ---------------------------------------------------------------------------
// Bias and concentration

struct BiasOptions {
  std::size_t min_runs = 100;
  double se_multiplier = 2.0;
};

struct BiasReport {
  std::size_t runs = 0;
  double mean = 0.0;
  double oracle = 0.0;
  double bias = 0.0;
  double standard_error = 0.0;
  bool pass = false;  // mean >= oracle - multiplier * SE
};

inline BiasReport bias_check(std::span<const double> estimates, double oracle, const BiasOptions& opt = {}) {
  if (estimates.size() < opt.min_runs)
    throw ContractError("bias check needs at least " + std::to_string(opt.min_runs) + " runs, got " +
                        std::to_string(estimates.size()));
  BiasReport rep;
  rep.runs = estimates.size();
  rep.mean = sample_mean(estimates);
  rep.oracle = oracle;
  rep.bias = rep.mean - oracle;
  rep.standard_error = standard_error(estimates);
  rep.pass = rep.mean >= oracle - opt.se_multiplier * rep.standard_error;
  return rep;
}

struct ConcentrationOptions {
  std::size_t min_runs = 1000;
  double se_multiplier = 3.0;
};

struct TailRow {
  double epsilon = 0.0;
  double threshold = 0.0;  // c / sqrt(N) + epsilon
  double frequency = 0.0;
  double bound = 0.0;  // exp(-N epsilon^2 / c^2)
  double standard_error = 0.0;
  bool pass = false;
};

struct ConcentrationReport {
  bool skipped = false;
  std::string diagnostic;
  std::vector<TailRow> rows;
  bool pass = false;
};

/// Empirical P(|v - v_hat| > c/sqrt(N) + eps) against exp(-N eps^2 / c^2),
/// with binomial SE sqrt(b(1-b)/R) taken under the bound b.
inline ConcentrationReport concentration_check(std::span<const double> estimates, double oracle,
                                               std::size_t n_particles, double c,
                                               std::span<const double> eps_grid,
                                               const ConcentrationOptions& opt = {}) {
  ConcentrationReport rep;
  if (!std::isfinite(c)) {
    rep.skipped = true;
    rep.diagnostic = "concentration constant c is infinite";
    return rep;
  }
  if (estimates.size() < opt.min_runs)
    throw ContractError("concentration check needs at least " + std::to_string(opt.min_runs) + " runs, got " +
                        std::to_string(estimates.size()));
  const double big_n = static_cast<double>(n_particles);
  const double r = static_cast<double>(estimates.size());
  rep.pass = true;
  for (double eps : eps_grid) {
    TailRow row;
    row.epsilon = eps;
    row.threshold = c / std::sqrt(big_n) + eps;
    std::size_t hits = 0;
    for (double e : estimates) hits += std::abs(oracle - e) > row.threshold ? 1 : 0;
    row.frequency = static_cast<double>(hits) / r;
    row.bound = c > 0.0 ? std::exp(-big_n * eps * eps / (c * c)) : (eps > 0.0 ? 0.0 : 1.0);
    row.standard_error = std::sqrt(row.bound * (1.0 - row.bound) / r);
    row.pass = row.frequency <= row.bound + opt.se_multiplier * row.standard_error;
    rep.pass = rep.pass && row.pass;
    rep.rows.push_back(row);
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Robustness inequality for approximate models

enum class RobustnessKernel {
  markov,    // u_k = f_k v M_{k+1} u_{k+1}
  criteria,  // kernels Q_k = G_{k-1} M_k
};

struct RobustnessRow {
  std::size_t step = 0;
  std::size_t state = 0;
  double lhs = 0.0;
  double rhs = 0.0;
};

struct RobustnessReport {
  std::vector<RobustnessRow> rows;
  double max_excess = -std::numeric_limits<double>::infinity();  // max (lhs - rhs)
  bool pass = false;
};

/// |u_k - u_hat_k| <= sum_{l=k}^{n} M_hat_{k,l}|f_l - f_hat_l| + sum_{l=k}^{n-1} M_hat_{k,l}|(M_{l+1} - M_hat_{l+1}) u_{l+1}|
/// evaluated exactly at every (k, x).
inline RobustnessReport robustness_bound_check(const FiniteTables& exact, const FiniteTables& approx,
                                               RobustnessKernel kernel = RobustnessKernel::markov,
                                               double tolerance = 1e-10) {
  const std::size_t n = exact.horizon;
  bool same = approx.horizon == n;
  for (std::size_t k = 0; same && k <= n; ++k) same = exact.size(k) == approx.size(k);
  if (!same) throw ContractError("robustness check needs both models on identical state spaces");

  auto kernels = [&](const FiniteTables& t) {
    std::vector<Eigen::MatrixXd> out;
    for (std::size_t k = 1; k <= n; ++k)
      out.push_back(kernel == RobustnessKernel::markov ? t.transitions[k - 1]
                                                       : Eigen::MatrixXd(t.criteria[k - 1].asDiagonal() * t.transitions[k - 1]));
    return out;
  };
  auto envelope = [&](const FiniteTables& t, const std::vector<Eigen::MatrixXd>& m) {
    ValueTables u(n + 1);
    u[n] = t.payoffs[n];
    for (std::size_t k = n; k-- > 0;) u[k] = t.payoffs[k].cwiseMax(m[k] * u[k + 1]);
    return u;
  };
  const auto m = kernels(exact);
  const auto m_hat = kernels(approx);
  const ValueTables u = envelope(exact, m);
  const ValueTables u_hat = envelope(approx, m_hat);

  RobustnessReport rep;
  for (std::size_t k = 0; k <= n; ++k) {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(exact.size(k));
    Eigen::MatrixXd chain = Eigen::MatrixXd::Identity(exact.size(k), exact.size(k));  // M_hat_{k,l}
    for (std::size_t l = k; l <= n; ++l) {
      rhs += chain * (exact.payoffs[l] - approx.payoffs[l]).cwiseAbs();
      if (l < n) {
        rhs += chain * ((m[l] - m_hat[l]) * u[l + 1]).cwiseAbs();
        chain = chain * m_hat[l];
      }
    }
    const Eigen::VectorXd lhs = (u[k] - u_hat[k]).cwiseAbs();
    for (Eigen::Index x = 0; x < lhs.size(); ++x) {
      rep.rows.push_back({k, static_cast<std::size_t>(x), lhs(x), rhs(x)});
      rep.max_excess = std::max(rep.max_excess, lhs(x) - rhs(x));
    }
  }
  rep.pass = rep.max_excess <= tolerance;
  return rep;
}

inline RobustnessReport robustness_bound_check(const MarkovModel& exact, const MarkovModel& approx,
                                               RobustnessKernel kernel = RobustnessKernel::markov,
                                               double tolerance = 1e-10) {
  return robustness_bound_check(tabulate(exact), tabulate(approx), kernel, tolerance);
}

}  // namespace snell
