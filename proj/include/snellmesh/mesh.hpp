#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "snellmesh/errors.hpp"
#include "snellmesh/model.hpp"
#include "snellmesh/particle.hpp"

// Stochastic-mesh backward recursion with the change-of-measure weights
//
//   w(x, y) = G_k(x) H_{k+1}(x, y) eta^N_k(G_k) / eta^N_k(G_k H_{k+1}(., y))
//
// and v_hat_k(x) = max(f_k(x), (1/N) sum_j w(x, xi^j_{k+1}) v_hat_{k+1}(xi^j_{k+1})).
//
// All sums run in particle index order, so every result is a deterministic
// function of the trajectory.
namespace snell {

namespace detail {

// Quantities of the step k -> k+1 that do not depend on the base point.
struct MeshStep {
  std::size_t step = 0;
  double criteria_mass = 0.0;        // eta^N_k(G_k)
  std::vector<double> denominators;  // d_j = eta^N_k(G_k H_{k+1}(., xi^j_{k+1}))
  std::vector<double> scale;         // eta^N_k(G_k) / d_j
};

inline double mesh_denominator(const MarkovModel& model, std::size_t k, const ParticleCloud& source, const State& y) {
  double sum = 0.0;
  for (std::size_t i = 0; i < source.size(); ++i) {
    const double g = source.criteria[i];
    if (g != 0.0) sum += g * transition_density(model, k + 1, source.particles[i], y);
  }
  return sum / static_cast<double>(source.size());
}

inline double checked_mass(const ParticleCloud& source, std::size_t k) {
  const double mass = occupation_measure(source).criteria_mass();
  if (!(mass > 0.0)) throw ExtinctionError("particle cloud extinct at k=" + std::to_string(k));
  return mass;
}

inline MeshStep build_mesh_step(const MarkovModel& model, std::size_t k, const ParticleCloud& source,
                                const ParticleCloud& target) {
  MeshStep ms;
  ms.step = k;
  ms.criteria_mass = checked_mass(source, k);
  ms.denominators.reserve(target.size());
  ms.scale.reserve(target.size());
  std::map<State, double> memo;  // mesh points repeat on finite spaces
  for (const auto& y : target.particles) {
    auto it = memo.find(y);
    if (it == memo.end()) it = memo.emplace(y, mesh_denominator(model, k, source, y)).first;
    const double d = it->second;
    if (!(d > 0.0)) throw ModelContractError("zero mesh denominator at k=" + std::to_string(k));
    ms.denominators.push_back(d);
    ms.scale.push_back(ms.criteria_mass / d);
  }
  return ms;
}

// Q_hat_{k+1}(values)(x)
inline double continuation(const MarkovModel& model, const MeshStep& ms, const ParticleCloud& target,
                           std::span<const double> values, const State& x) {
  const double g = model.criterion(ms.step, x);
  if (g == 0.0) return 0.0;
  double sum = 0.0;
  for (std::size_t j = 0; j < target.size(); ++j)
    sum += g * transition_density(model, ms.step + 1, x, target.particles[j]) * ms.scale[j] * values[j];
  return sum / static_cast<double>(target.size());
}

}  // namespace detail

/// dQ_{k+1}(x, .)/dPhi_{k+1}(eta^N_k) evaluated at y, with eta^N_k taken from cloud_k.
inline double mesh_weight(const MarkovModel& model, std::size_t k, const ParticleCloud& cloud_k, const State& x,
                          const State& y) {
  if (k >= model.horizon) throw ContractError("mesh weights exist only for k < n");
  const double mass = detail::checked_mass(cloud_k, k);
  const double g = model.criterion(k, x);
  if (g == 0.0) return 0.0;
  const double d = detail::mesh_denominator(model, k, cloud_k, y);
  return g * transition_density(model, k + 1, x, y) * (mass / d);
}

inline double qhat_apply(const MarkovModel& model, std::size_t k, const ParticleCloud& cloud_k,
                         const ParticleCloud& cloud_next, std::span<const double> values, const State& x) {
  if (k >= model.horizon) throw ContractError("Q_hat exists only for k < n");
  if (values.size() != cloud_next.size())
    throw ContractError("value array has " + std::to_string(values.size()) + " entries for a mesh of " +
                        std::to_string(cloud_next.size()));
  const auto ms = detail::build_mesh_step(model, k, cloud_k, cloud_next);
  return detail::continuation(model, ms, cloud_next, values, x);
}

/// v_hat_k at the post-mutation mesh points for every k. An extinct trajectory
/// gives an invalid estimate with no value arrays.
struct MeshEstimate {
  std::shared_ptr<const ParticleTrajectory> trajectory;
  bool valid = false;
  std::vector<std::vector<double>> values;
  std::vector<detail::MeshStep> steps;
};

inline MeshEstimate backward_mesh(const MarkovModel& model, std::shared_ptr<const ParticleTrajectory> trajectory) {
  MeshEstimate est;
  est.trajectory = std::move(trajectory);
  const auto& traj = *est.trajectory;
  if (traj.extinct()) return est;
  const std::size_t n = model.horizon;
  if (traj.mutated.size() != n + 1) throw ContractError("trajectory does not cover the model horizon");

  est.values.resize(n + 1);
  est.steps.resize(n);
  const auto& terminal = traj.mutated[n];
  est.values[n].reserve(terminal.size());
  for (const auto& x : terminal.particles) est.values[n].push_back(model.payoff(n, x));

  for (std::size_t k = n; k-- > 0;) {
    const auto& source = traj.mutated[k];
    const auto& target = traj.mutated[k + 1];
    est.steps[k] = detail::build_mesh_step(model, k, source, target);
    auto& out = est.values[k];
    out.reserve(source.size());
    std::map<State, double> memo;
    for (const auto& x : source.particles) {
      auto it = memo.find(x);
      if (it == memo.end()) {
        const double v =
            std::max(model.payoff(k, x), detail::continuation(model, est.steps[k], target, est.values[k + 1], x));
        it = memo.emplace(x, v).first;
      }
      out.push_back(it->second);
    }
  }
  est.valid = true;
  return est;
}

inline MeshEstimate backward_mesh(const MarkovModel& model, ParticleTrajectory trajectory) {
  return backward_mesh(model, std::make_shared<const ParticleTrajectory>(std::move(trajectory)));
}

/// v_hat_k(x) for any x in E_k, reusing the stored clouds.
inline double evaluate_envelope(const MarkovModel& model, const MeshEstimate& est, std::size_t k, const State& x) {
  if (!est.valid) throw ExtinctionError("mesh estimate is invalid: trajectory went extinct");
  if (k > model.horizon) throw ContractError("time index beyond horizon");
  if (k == model.horizon) return model.payoff(k, x);
  return std::max(model.payoff(k, x), detail::continuation(model, est.steps[k], est.trajectory->mutated[k + 1],
                                                           est.values[k + 1], x));
}

}  // namespace snell
