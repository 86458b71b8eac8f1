#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "snellmesh/errors.hpp"
#include "snellmesh/model.hpp"
#include "snellmesh/random.hpp"

namespace snell {

/// Two-state, two-step fixture with a closed-form oracle:
/// P = [[0.5, 0.5], [0.2, 0.8]], f_2 = (1, 2), G_0 = G_1 = (0.5, 1), X_0 = 0.
inline FiniteChainSpec toychain_spec() {
  FiniteChainSpec spec;
  spec.name = "toychain";
  spec.initial = Eigen::Vector2d(1.0, 0.0);
  Eigen::Matrix2d p;
  p << 0.5, 0.5, 0.2, 0.8;
  spec.transitions = {p, p};
  spec.payoffs = {Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), Eigen::Vector2d(1.0, 2.0)};
  spec.criteria = {Eigen::Vector2d(0.5, 1.0), Eigen::Vector2d(0.5, 1.0)};
  spec.epsilon = {0.0, 0.0};
  return spec;
}

inline MarkovModel toychain() { return make_finite_model(toychain_spec()); }

/// i.i.d. uniform chain on `states` points with G_k = 1{x = 0}, so a particle
/// survives each selection with probability 1/states. f_k(x) = x / (states - 1).
inline FiniteChainSpec indicator_chain_spec(std::size_t horizon = 5, std::size_t states = 5) {
  if (states < 2) throw ContractError("indicator chain needs at least two states");
  const auto s = static_cast<Eigen::Index>(states);
  FiniteChainSpec spec;
  spec.name = "indicator";
  spec.initial = Eigen::VectorXd::Constant(s, 1.0 / static_cast<double>(states));
  Eigen::VectorXd payoff = Eigen::VectorXd::LinSpaced(s, 0.0, 1.0);
  Eigen::VectorXd hit = Eigen::VectorXd::Zero(s);
  hit(0) = 1.0;
  for (std::size_t k = 0; k < horizon; ++k) {
    spec.transitions.push_back(Eigen::MatrixXd::Constant(s, s, 1.0 / static_cast<double>(states)));
    spec.criteria.push_back(hit);
  }
  spec.payoffs.assign(horizon + 1, payoff);
  return spec;
}

inline MarkovModel indicator_chain(std::size_t horizon = 5, std::size_t states = 5) {
  return make_finite_model(indicator_chain_spec(horizon, states));
}

struct Ar1Params {
  std::size_t horizon = 3;
  double a = 0.5;
  double sigma = 1.0;
  double initial_mean = 0.0;
  double initial_std = 0.0;  // 0 means X_0 is the point mass at initial_mean
};

// Presets: "put" max(strike - x, 0), "call" max(x - strike, 0), "constant" strike.
// `custom`, when set, wins over the preset.
struct Ar1Payoff {
  std::string preset = "put";
  double strike = 0.0;
  std::function<double(std::size_t k, double x)> custom;
};

// Presets: "none" G = 1, "discount" G = exp(-rate),
// "soft-barrier" G = exp(-beta * max(0, x - barrier)^2).
struct Ar1Criteria {
  std::string preset = "none";
  double rate = 0.0;
  double beta = 0.0;
  double barrier = 0.0;
  std::function<double(std::size_t k, double x)> custom;
  double custom_bound = 1.0;
};

inline double gaussian_density(double y, double mean, double sigma) {
  const double z = (y - mean) / sigma;
  return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

/// X_{k+1} = a X_k + sigma Z with H_{k+1}(x, y) the N(a x, sigma^2) density at y.
inline MarkovModel build_gaussian_ar1(const Ar1Params& params, const Ar1Payoff& payoff = {},
                                      const Ar1Criteria& criteria = {}, std::vector<double> epsilon = {}) {
  if (!(params.sigma > 0.0)) throw ContractError("AR(1) sigma must be positive");
  if (params.initial_std < 0.0) throw ContractError("AR(1) initial std must be non-negative");
  const std::size_t n = params.horizon;
  if (epsilon.empty()) epsilon.assign(n, 0.0);
  if (epsilon.size() != n) throw ContractError("AR(1) model needs n epsilon levels");

  std::function<double(std::size_t, double)> f = payoff.custom;
  if (!f) {
    const double strike = payoff.strike;
    if (payoff.preset == "put") f = [strike](std::size_t, double x) { return std::max(strike - x, 0.0); };
    else if (payoff.preset == "call") f = [strike](std::size_t, double x) { return std::max(x - strike, 0.0); };
    else if (payoff.preset == "constant") f = [strike](std::size_t, double) { return strike; };
    else throw ContractError("unknown payoff preset '" + payoff.preset + "'");
  }

  std::function<double(std::size_t, double)> g = criteria.custom;
  double g_bound = criteria.custom_bound;
  if (!g) {
    if (criteria.preset == "none") {
      g = [](std::size_t, double) { return 1.0; };
      g_bound = 1.0;
    } else if (criteria.preset == "discount") {
      const double factor = std::exp(-criteria.rate);
      g = [factor](std::size_t, double) { return factor; };
      g_bound = factor;
    } else if (criteria.preset == "soft-barrier") {
      const double beta = criteria.beta, barrier = criteria.barrier;
      g = [beta, barrier](std::size_t, double x) {
        const double over = std::max(0.0, x - barrier);
        return std::exp(-beta * over * over);
      };
      g_bound = 1.0;
    } else {
      throw ContractError("unknown criteria preset '" + criteria.preset + "'");
    }
  }

  MarkovModel model;
  model.name = "ar1";
  model.horizon = n;
  model.spaces.assign(n + 1, StateSpace::continuous(1));
  const double m0 = params.initial_mean, s0 = params.initial_std;
  model.initial_sampler = [m0, s0](Stream& s) { return State::point(s0 > 0.0 ? m0 + s0 * s.normal() : m0); };
  const double a = params.a, sigma = params.sigma;
  for (std::size_t k = 1; k <= n; ++k) {
    model.densities.push_back(
        [a, sigma](const State& x, const State& y) { return gaussian_density(y.scalar(), a * x.scalar(), sigma); });
    model.samplers.push_back(
        [a, sigma](const State& x, Stream& s) { return State::point(a * x.scalar() + sigma * s.normal()); });
  }
  for (std::size_t k = 0; k <= n; ++k)
    model.payoffs.push_back([f, k](const State& x) { return f(k, x.scalar()); });
  for (std::size_t k = 0; k < n; ++k) {
    model.criteria.push_back([g, k](const State& x) { return g(k, x.scalar()); });
    model.criteria_bounds.push_back(g_bound);
  }
  model.epsilon = std::move(epsilon);
  return model;
}

struct RandomModelLimits {
  std::size_t max_horizon = 4;
  std::size_t max_states = 4;
  double max_payoff = 2.0;
};

namespace detail {

inline Eigen::MatrixXd random_stochastic(Stream& s, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = 0.05 + s.uniform();
    m.row(i) /= m.row(i).sum();
  }
  return m;
}

}  // namespace detail

/// Random finite chain with strictly positive kernels, G in [0, 1] and f in [0, max_payoff).
/// Horizon is drawn from [0, max_horizon] and each |E_k| from [1, max_states].
inline FiniteChainSpec random_finite_spec(Stream& s, const RandomModelLimits& limits = {}) {
  auto draw = [&](std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(s.next() % (hi - lo + 1));
  };
  const std::size_t n = draw(0, limits.max_horizon);
  std::vector<Eigen::Index> sizes;
  for (std::size_t k = 0; k <= n; ++k) sizes.push_back(static_cast<Eigen::Index>(draw(1, limits.max_states)));

  FiniteChainSpec spec;
  spec.name = "random";
  spec.initial = detail::random_stochastic(s, 1, sizes[0]).row(0).transpose();
  for (std::size_t k = 1; k <= n; ++k) spec.transitions.push_back(detail::random_stochastic(s, sizes[k - 1], sizes[k]));
  for (std::size_t k = 0; k <= n; ++k) {
    Eigen::VectorXd f(sizes[k]);
    for (auto& v : f) v = limits.max_payoff * s.uniform();
    spec.payoffs.push_back(f);
  }
  for (std::size_t k = 0; k < n; ++k) {
    Eigen::VectorXd g(sizes[k]);
    for (auto& v : g) v = s.uniform();
    spec.criteria.push_back(g);
  }
  return spec;
}

inline MarkovModel random_finite_model(Stream& s, const RandomModelLimits& limits = {}) {
  return make_finite_model(random_finite_spec(s, limits));
}

/// Perturbed copy on the same spaces: f_hat = |f + scale*U(-1,1)|, rows of
/// M_hat = normalize(M + scale*U(0,1)). Criteria and initial law are kept.
inline FiniteChainSpec perturb_spec(const FiniteChainSpec& base, Stream& s, double scale) {
  FiniteChainSpec out = base;
  out.name = base.name + "-perturbed";
  for (auto& f : out.payoffs)
    for (auto& v : f) v = std::abs(v + scale * (2.0 * s.uniform() - 1.0));
  for (auto& m : out.transitions) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) += scale * s.uniform();
      m.row(i) /= m.row(i).sum();
    }
  }
  return out;
}

}  // namespace snell
