#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Dense>

#include "snellmesh/errors.hpp"
#include "snellmesh/model.hpp"

// Exact dynamic programming on finite chains. Everything here is a pure
// function of the model and sums in a fixed order.
namespace snell {

using ValueTables = std::vector<Eigen::VectorXd>;

/// Dense tables read off a finite MarkovModel (P_k stored at transitions[k-1]).
struct FiniteTables {
  std::size_t horizon = 0;
  Eigen::VectorXd initial;
  std::vector<Eigen::MatrixXd> transitions;
  std::vector<Eigen::VectorXd> payoffs;
  std::vector<Eigen::VectorXd> criteria;

  Eigen::Index size(std::size_t k) const { return payoffs[k].size(); }
};

struct OracleLimits {
  std::size_t max_paths = 1'000'000;
  std::size_t max_policy_bits = 20;
};

inline FiniteTables tabulate(const MarkovModel& model) {
  if (!model.is_finite()) throw UnsupportedModelError("exact oracle requires finite state spaces");
  const std::size_t n = model.horizon;
  FiniteTables t;
  t.horizon = n;
  auto size = [&](std::size_t k) { return static_cast<Eigen::Index>(model.spaces[k].size); };
  t.initial = Eigen::Map<const Eigen::VectorXd>(model.initial_probabilities.data(),
                                                static_cast<Eigen::Index>(model.initial_probabilities.size()));
  for (std::size_t k = 1; k <= n; ++k) {
    Eigen::MatrixXd p(size(k - 1), size(k));
    for (Eigen::Index x = 0; x < p.rows(); ++x)
      for (Eigen::Index y = 0; y < p.cols(); ++y)
        p(x, y) = model.densities[k - 1](State::category(static_cast<std::size_t>(x)),
                                         State::category(static_cast<std::size_t>(y)));
    t.transitions.push_back(std::move(p));
  }
  for (std::size_t k = 0; k <= n; ++k) {
    Eigen::VectorXd f(size(k));
    for (Eigen::Index x = 0; x < f.size(); ++x) f(x) = model.payoff(k, State::category(static_cast<std::size_t>(x)));
    t.payoffs.push_back(std::move(f));
  }
  for (std::size_t k = 0; k < n; ++k) {
    Eigen::VectorXd g(size(k));
    for (Eigen::Index x = 0; x < g.size(); ++x) g(x) = model.criterion(k, State::category(static_cast<std::size_t>(x)));
    t.criteria.push_back(std::move(g));
  }
  return t;
}

inline FiniteChainSpec to_spec(const FiniteTables& t, const MarkovModel& model) {
  FiniteChainSpec spec;
  spec.name = model.name;
  spec.initial = t.initial;
  spec.transitions = t.transitions;
  spec.payoffs = t.payoffs;
  spec.criteria = t.criteria;
  spec.epsilon = model.epsilon;
  return spec;
}

/// u_n = f_n, u_k = max(f_k, P_{k+1} u_{k+1}).
inline ValueTables snell_standard(const FiniteTables& t) {
  ValueTables u(t.horizon + 1);
  u[t.horizon] = t.payoffs[t.horizon];
  for (std::size_t k = t.horizon; k-- > 0;) u[k] = t.payoffs[k].cwiseMax(t.transitions[k] * u[k + 1]);
  return u;
}

/// v_n = f_n, v_k = max(f_k, G_k * P_{k+1} v_{k+1}).
inline ValueTables snell_with_criteria(const FiniteTables& t) {
  ValueTables v(t.horizon + 1);
  v[t.horizon] = t.payoffs[t.horizon];
  for (std::size_t k = t.horizon; k-- > 0;)
    v[k] = t.payoffs[k].cwiseMax(t.criteria[k].cwiseProduct(t.transitions[k] * v[k + 1]));
  return v;
}

inline ValueTables snell_standard(const MarkovModel& model) { return snell_standard(tabulate(model)); }
inline ValueTables snell_with_criteria(const MarkovModel& model) { return snell_with_criteria(tabulate(model)); }

/// Values of the path-space envelope u_k(x_0..x_k) for every path prefix.
/// Path (x_0, ..., x_k) is stored at the mixed-radix index with x_0 most
/// significant, so the children of prefix p are p*|E_{k+1}| + y.
struct PathTable {
  std::size_t horizon = 0;
  std::vector<std::size_t> cardinalities;
  std::vector<std::vector<double>> values;

  std::size_t path_count(std::size_t k) const { return values.at(k).size(); }

  std::vector<std::size_t> decode(std::size_t k, std::size_t index) const {
    std::vector<std::size_t> path(k + 1);
    for (std::size_t j = k + 1; j-- > 0;) {
      path[j] = index % cardinalities[j];
      index /= cardinalities[j];
    }
    return path;
  }

  double at(const std::vector<std::size_t>& path) const {
    std::size_t index = 0;
    for (std::size_t j = 0; j < path.size(); ++j) index = index * cardinalities[j] + path[j];
    return values.at(path.size() - 1).at(index);
  }
};

inline PathTable snell_path_space(const FiniteTables& t, const OracleLimits& limits = {}) {
  const std::size_t n = t.horizon;
  PathTable table;
  table.horizon = n;
  std::size_t total = 1;
  for (std::size_t k = 0; k <= n; ++k) {
    const auto size = static_cast<std::size_t>(t.size(k));
    table.cardinalities.push_back(size);
    if (total > limits.max_paths / size) throw EnumerationTooLarge("path enumeration", limits.max_paths);
    total *= size;
  }

  // prefix_weight[k][p] = prod_{j<k} G_j(x_j) along prefix p
  std::vector<std::vector<double>> weight(n + 1);
  weight[0].assign(table.cardinalities[0], 1.0);
  for (std::size_t k = 1; k <= n; ++k) {
    const std::size_t size = table.cardinalities[k];
    weight[k].resize(weight[k - 1].size() * size);
    for (std::size_t p = 0; p < weight[k - 1].size(); ++p) {
      const double g = t.criteria[k - 1](static_cast<Eigen::Index>(p % table.cardinalities[k - 1]));
      for (std::size_t y = 0; y < size; ++y) weight[k][p * size + y] = weight[k - 1][p] * g;
    }
  }

  table.values.resize(n + 1);
  auto& terminal = table.values[n];
  terminal.resize(weight[n].size());
  for (std::size_t p = 0; p < terminal.size(); ++p)
    terminal[p] = t.payoffs[n](static_cast<Eigen::Index>(p % table.cardinalities[n])) * weight[n][p];

  for (std::size_t k = n; k-- > 0;) {
    const std::size_t size = table.cardinalities[k];
    const std::size_t next_size = table.cardinalities[k + 1];
    auto& cur = table.values[k];
    const auto& next = table.values[k + 1];
    cur.resize(weight[k].size());
    for (std::size_t p = 0; p < cur.size(); ++p) {
      const auto x = static_cast<Eigen::Index>(p % size);
      double continuation = 0.0;
      for (std::size_t y = 0; y < next_size; ++y)
        continuation += t.transitions[k](x, static_cast<Eigen::Index>(y)) * next[p * next_size + y];
      cur[p] = std::max(t.payoffs[k](x) * weight[k][p], continuation);
    }
  }
  return table;
}

inline PathTable snell_path_space(const MarkovModel& model, const OracleLimits& limits = {}) {
  return snell_path_space(tabulate(model), limits);
}

/// max over k and paths of |u_k(path) - v_k(x_k) * prod_{p<k} G_p(x_p)|.
inline double path_equivalence_discrepancy(const FiniteTables& t, const PathTable& paths, const ValueTables& v) {
  double worst = 0.0;
  for (std::size_t k = 0; k <= t.horizon; ++k) {
    for (std::size_t idx = 0; idx < paths.path_count(k); ++idx) {
      const auto path = paths.decode(k, idx);
      double product = 1.0;
      for (std::size_t p = 0; p < k; ++p) product *= t.criteria[p](static_cast<Eigen::Index>(path[p]));
      const double rhs = v[k](static_cast<Eigen::Index>(path[k])) * product;
      worst = std::max(worst, std::abs(paths.values[k][idx] - rhs));
    }
  }
  return worst;
}

inline double check_path_equivalence(const MarkovModel& model, const OracleLimits& limits = {}) {
  const FiniteTables t = tabulate(model);
  return path_equivalence_discrepancy(t, snell_path_space(t, limits), snell_with_criteria(t));
}

struct EtaFlow {
  std::vector<Eigen::VectorXd> eta;  // k = 0..n
  std::vector<double> masses;        // eta_k(G_k), k = 0..n-1
  double normalizer = 1.0;           // Z_n
};

/// Phi_k: eta_{k-1} -> eta_k = (eta_{k-1} G_{k-1}) P_k / eta_{k-1}(G_{k-1}).
inline Eigen::VectorXd flow_step(const FiniteTables& t, std::size_t k, const Eigen::VectorXd& previous) {
  if (k < 1 || k > t.horizon) throw ContractError("flow step index outside [1, n]");
  const Eigen::VectorXd weighted = previous.cwiseProduct(t.criteria[k - 1]);
  const double mass = weighted.sum();
  if (!(mass > 0.0)) throw DegenerateFlowError(k);
  return (t.transitions[k - 1].transpose() * weighted) / mass;
}

inline EtaFlow compute_eta_flow(const FiniteTables& t) {
  EtaFlow flow;
  flow.eta.push_back(t.initial);
  for (std::size_t k = 1; k <= t.horizon; ++k) {
    const double mass = flow.eta.back().dot(t.criteria[k - 1]);
    if (!(mass > 0.0)) throw DegenerateFlowError(k);
    flow.masses.push_back(mass);
    flow.normalizer *= mass;
    flow.eta.push_back(flow_step(t, k, flow.eta.back()));
  }
  return flow;
}

inline EtaFlow compute_eta_flow(const MarkovModel& model) { return compute_eta_flow(tabulate(model)); }

struct OptimalityCheck {
  double best_value = 0.0;
  double snell_value = 0.0;  // eta_0(v_0)
  double gap = 0.0;
  std::size_t policies = 0;
};

/// Exhaustive search over deterministic Markov stopping rules, each given by a
/// stop set S_k within E_k for k < n (stopping at n is forced). Each rule is
/// scored with an exact forward recursion of E[f_tau(X_tau) prod_{p<tau} G_p].
inline OptimalityCheck verify_optimality(const FiniteTables& t, const OracleLimits& limits = {}) {
  const std::size_t n = t.horizon;
  std::size_t bits = 0;
  for (std::size_t k = 0; k < n; ++k) bits += static_cast<std::size_t>(t.size(k));
  if (bits > limits.max_policy_bits || bits >= 63)
    throw EnumerationTooLarge("stopping-policy enumeration (2^" + std::to_string(bits) + ")",
                              std::size_t{1} << std::min<std::size_t>(limits.max_policy_bits, 62));

  OptimalityCheck check;
  check.best_value = -std::numeric_limits<double>::infinity();
  const std::uint64_t count = std::uint64_t{1} << bits;
  for (std::uint64_t policy = 0; policy < count; ++policy) {
    Eigen::VectorXd alive = t.initial;  // sub-probability mass not yet stopped, times prod G
    double value = 0.0;
    std::size_t bit = 0;
    for (std::size_t k = 0; k < n; ++k) {
      for (Eigen::Index x = 0; x < alive.size(); ++x, ++bit) {
        if (policy >> bit & 1U) {
          value += alive(x) * t.payoffs[k](x);
          alive(x) = 0.0;
        }
      }
      alive = t.transitions[k].transpose() * alive.cwiseProduct(t.criteria[k]);
    }
    value += alive.dot(t.payoffs[n]);
    check.best_value = std::max(check.best_value, value);
  }
  check.policies = static_cast<std::size_t>(count);
  check.snell_value = t.initial.dot(snell_with_criteria(t)[0]);
  check.gap = std::abs(check.best_value - check.snell_value);
  return check;
}

inline OptimalityCheck verify_optimality(const MarkovModel& model, const OracleLimits& limits = {}) {
  return verify_optimality(tabulate(model), limits);
}

struct OracleSolution {
  ValueTables v;
  ValueTables u;
  EtaFlow flow;
};

inline OracleSolution solve_oracle(const MarkovModel& model) {
  const FiniteTables t = tabulate(model);
  return {snell_with_criteria(t), snell_standard(t), compute_eta_flow(t)};
}

}  // namespace snell
