#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "snellmesh/errors.hpp"
#include "snellmesh/random.hpp"
#include "snellmesh/state.hpp"

namespace snell {

using ScalarFn = std::function<double(const State&)>;
using DensityFn = std::function<double(const State& from, const State& to)>;
using SamplerFn = std::function<State(const State& from, Stream&)>;
using InitialSampler = std::function<State(Stream&)>;

/// Markov chain X_0..X_n with payoffs f_k and multiplicative criteria G_k.
///
/// Indexing: per-transition vectors (`densities`, `samplers`) hold the
/// kernel M_k at position k-1; per-slice vectors hold time k at position k.
/// `criteria`, `criteria_bounds` and `epsilon` only cover k < n.
///
/// Transition densities are taken w.r.t. counting measure on finite slices
/// and Lebesgue measure on continuous ones, so on a finite chain H_k is the
/// matrix entry P_k(x, y).
struct MarkovModel {
  std::string name;
  std::size_t horizon = 0;
  std::vector<StateSpace> spaces;
  InitialSampler initial_sampler;
  std::vector<double> initial_probabilities;  // only when E_0 is finite
  std::vector<DensityFn> densities;
  std::vector<SamplerFn> samplers;
  std::vector<ScalarFn> payoffs;
  std::vector<ScalarFn> criteria;
  std::vector<double> criteria_bounds;  // declared sup-norms ||G_k||
  std::vector<double> epsilon;

  bool is_finite() const {
    return std::all_of(spaces.begin(), spaces.end(), [](const StateSpace& s) { return s.is_finite(); });
  }
  const StateSpace& space(std::size_t k) const { return spaces.at(k); }
  double payoff(std::size_t k, const State& x) const { return payoffs[k](x); }
  double criterion(std::size_t k, const State& x) const { return criteria[k](x); }
};

struct Violation {
  std::optional<std::size_t> step;
  std::string message;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  std::string summary() const {
    std::string out;
    for (const auto& v : violations) {
      if (!out.empty()) out += "; ";
      if (v.step) out += "k=" + std::to_string(*v.step) + ": ";
      out += v.message;
    }
    return out;
  }
};

namespace detail {

inline void require_step(const MarkovModel& model, std::size_t k) {
  if (k < 1 || k > model.horizon)
    throw ContractError("transition index k=" + std::to_string(k) + " outside [1, " +
                        std::to_string(model.horizon) + "]");
}

inline bool finite_nonneg(double v) { return std::isfinite(v) && v >= 0.0; }

}  // namespace detail

/// H_k(x, y); throws ModelContractError when the density is not strictly positive and finite.
inline double transition_density(const MarkovModel& model, std::size_t k, const State& x, const State& y) {
  detail::require_step(model, k);
  const double h = model.densities[k - 1](x, y);
  if (!(h > 0.0) || !std::isfinite(h))
    throw ModelContractError("transition density H_" + std::to_string(k) + "(" + x.to_string() + ", " +
                             y.to_string() + ") = " + std::to_string(h) + " is not positive and finite");
  return h;
}

inline State sample_transition(const MarkovModel& model, std::size_t k, const State& x, Stream& stream) {
  detail::require_step(model, k);
  return model.samplers[k - 1](x, stream);
}

inline State sample_initial(const MarkovModel& model, Stream& stream) { return model.initial_sampler(stream); }

inline ValidationReport validate_model(const MarkovModel& model) {
  ValidationReport report;
  auto fail = [&](std::optional<std::size_t> k, std::string msg) {
    report.violations.push_back({k, std::move(msg)});
  };
  const std::size_t n = model.horizon;

  if (model.spaces.size() != n + 1) fail(std::nullopt, "expected " + std::to_string(n + 1) + " state spaces");
  if (model.payoffs.size() != n + 1) fail(std::nullopt, "expected " + std::to_string(n + 1) + " payoff functions");
  if (model.densities.size() != n || model.samplers.size() != n)
    fail(std::nullopt, "expected " + std::to_string(n) + " transition densities and samplers");
  if (model.criteria.size() != n || model.criteria_bounds.size() != n || model.epsilon.size() != n)
    fail(std::nullopt, "expected " + std::to_string(n) + " criteria, criteria bounds and epsilon levels");
  if (!model.initial_sampler) fail(std::nullopt, "missing initial sampler");
  if (!report.ok()) return report;

  for (std::size_t k = 0; k <= n; ++k)
    if (model.spaces[k].size == 0) fail(k, "state space has zero size");
  if (!report.ok()) return report;

  for (std::size_t k = 0; k < n; ++k) {
    const double eps = model.epsilon[k];
    const double bound = model.criteria_bounds[k];
    if (!detail::finite_nonneg(bound)) fail(k, "criteria bound ||G|| must be finite and non-negative");
    if (!detail::finite_nonneg(eps)) fail(k, "epsilon must be finite and non-negative");
    else if (eps * bound > 1.0)
      fail(k, "epsilon bound violated: epsilon*||G|| = " + std::to_string(eps * bound) + " > 1");
  }

  if (model.is_finite()) {
    const auto& init = model.initial_probabilities;
    if (init.size() != model.spaces[0].size) {
      fail(0, "initial law has wrong length");
    } else {
      const double total = std::accumulate(init.begin(), init.end(), 0.0);
      if (std::any_of(init.begin(), init.end(), [](double p) { return !detail::finite_nonneg(p); }) ||
          std::abs(total - 1.0) > 1e-12)
        fail(0, "initial law is not a probability vector");
    }
    for (std::size_t k = 0; k <= n; ++k) {
      const std::size_t size = model.spaces[k].size;
      for (std::size_t x = 0; x < size; ++x) {
        const State s = State::category(x);
        if (!detail::finite_nonneg(model.payoffs[k](s)))
          fail(k, "payoff f_k(" + std::to_string(x) + ") is negative or non-finite");
        if (k < n) {
          const double g = model.criteria[k](s);
          if (!detail::finite_nonneg(g))
            fail(k, "criterion G_k(" + std::to_string(x) + ") is negative or non-finite");
          else if (g > model.criteria_bounds[k])
            fail(k, "criterion G_k(" + std::to_string(x) + ") exceeds declared bound ||G_k||");
        }
      }
      if (k == 0) continue;
      const std::size_t from = model.spaces[k - 1].size;
      for (std::size_t x = 0; x < from; ++x) {
        double row = 0.0;
        bool positive = true;
        for (std::size_t y = 0; y < size; ++y) {
          const double h = model.densities[k - 1](State::category(x), State::category(y));
          positive = positive && h > 0.0 && std::isfinite(h);
          row += h;
        }
        if (!positive) fail(k, "transition row " + std::to_string(x) + " has a non-positive density entry");
        if (std::abs(row - 1.0) > 1e-12)
          fail(k, "transition row " + std::to_string(x) + " is not stochastic (sum " + std::to_string(row) + ")");
      }
    }
    return report;
  }

  // Continuous slices cannot be checked exhaustively: walk a fixed set of
  // sampled paths and check f, G and H along them.
  constexpr std::size_t kProbePaths = 64;
  for (std::size_t path = 0; path < kProbePaths; ++path) {
    Stream stream(mix_seed(0xc0ffee, path));
    State x = model.initial_sampler(stream);
    for (std::size_t k = 0; k <= n; ++k) {
      if (!x.belongs_to(model.spaces[k])) {
        fail(k, "sampled state " + x.to_string() + " is outside E_k");
        return report;
      }
      if (!detail::finite_nonneg(model.payoffs[k](x))) {
        fail(k, "payoff negative or non-finite at sampled state " + x.to_string());
        return report;
      }
      if (k == n) break;
      const double g = model.criteria[k](x);
      if (!detail::finite_nonneg(g) || g > model.criteria_bounds[k]) {
        fail(k, "criterion negative, non-finite or above ||G_k|| at sampled state " + x.to_string());
        return report;
      }
      State y = model.samplers[k](x, stream);
      const double h = model.densities[k](x, y);
      if (!(h > 0.0) || !std::isfinite(h)) {
        fail(k + 1, "transition density not positive at sampled pair");
        return report;
      }
      x = std::move(y);
    }
  }
  return report;
}

/// Tabular description of a finite chain; transitions[k-1] maps E_{k-1} to E_k.
struct FiniteChainSpec {
  std::string name = "finite";
  Eigen::VectorXd initial;
  std::vector<Eigen::MatrixXd> transitions;
  std::vector<Eigen::VectorXd> payoffs;
  std::vector<Eigen::VectorXd> criteria;
  std::vector<double> epsilon;  // empty means 0 at every step
};

namespace detail {

inline std::size_t sample_categorical(const std::vector<double>& cumulative, double u) {
  const double target = u * cumulative.back();
  auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
  if (it == cumulative.end()) --it;
  return static_cast<std::size_t>(it - cumulative.begin());
}

inline std::vector<double> cumulative_row(const Eigen::MatrixXd& m, Eigen::Index row) {
  std::vector<double> c(static_cast<std::size_t>(m.cols()));
  double acc = 0.0;
  for (Eigen::Index j = 0; j < m.cols(); ++j) c[static_cast<std::size_t>(j)] = acc += m(row, j);
  return c;
}

}  // namespace detail

/// Wraps tables into a MarkovModel. Tables are shared, not copied, by the closures.
inline MarkovModel make_finite_model(FiniteChainSpec spec) {
  const std::size_t n = spec.transitions.size();
  if (spec.payoffs.size() != n + 1 || spec.criteria.size() != n)
    throw ContractError("finite chain needs n+1 payoff tables and n criteria tables");
  if (spec.epsilon.empty()) spec.epsilon.assign(n, 0.0);
  if (spec.epsilon.size() != n) throw ContractError("finite chain needs n epsilon levels");

  auto data = std::make_shared<const FiniteChainSpec>(std::move(spec));
  MarkovModel model;
  model.name = data->name;
  model.horizon = n;
  model.spaces.push_back(StateSpace::finite(static_cast<std::size_t>(data->initial.size())));
  for (const auto& m : data->transitions) {
    if (static_cast<std::size_t>(m.rows()) != model.spaces.back().size)
      throw ContractError("transition matrix rows do not match the previous slice");
    model.spaces.push_back(StateSpace::finite(static_cast<std::size_t>(m.cols())));
  }
  for (std::size_t k = 0; k <= n; ++k)
    if (static_cast<std::size_t>(data->payoffs[k].size()) != model.spaces[k].size)
      throw ContractError("payoff table " + std::to_string(k) + " has wrong length");
  for (std::size_t k = 0; k < n; ++k)
    if (static_cast<std::size_t>(data->criteria[k].size()) != model.spaces[k].size)
      throw ContractError("criteria table " + std::to_string(k) + " has wrong length");

  model.initial_probabilities.assign(data->initial.data(), data->initial.data() + data->initial.size());
  std::vector<double> init_cum(model.initial_probabilities.size());
  std::partial_sum(model.initial_probabilities.begin(), model.initial_probabilities.end(), init_cum.begin());
  model.initial_sampler = [init_cum](Stream& s) {
    return State::category(detail::sample_categorical(init_cum, s.uniform()));
  };

  for (std::size_t k = 1; k <= n; ++k) {
    model.densities.push_back([data, k](const State& x, const State& y) {
      return data->transitions[k - 1](static_cast<Eigen::Index>(x.index()), static_cast<Eigen::Index>(y.index()));
    });
    const auto& m = data->transitions[k - 1];
    std::vector<std::vector<double>> rows;
    for (Eigen::Index r = 0; r < m.rows(); ++r) rows.push_back(detail::cumulative_row(m, r));
    model.samplers.push_back([rows = std::move(rows)](const State& x, Stream& s) {
      return State::category(detail::sample_categorical(rows.at(x.index()), s.uniform()));
    });
  }
  for (std::size_t k = 0; k <= n; ++k)
    model.payoffs.push_back([data, k](const State& x) { return data->payoffs[k](static_cast<Eigen::Index>(x.index())); });
  for (std::size_t k = 0; k < n; ++k) {
    model.criteria.push_back([data, k](const State& x) { return data->criteria[k](static_cast<Eigen::Index>(x.index())); });
    model.criteria_bounds.push_back(data->criteria[k].size() ? data->criteria[k].maxCoeff() : 0.0);
  }
  model.epsilon = data->epsilon;
  return model;
}

}  // namespace snell
