#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "snellmesh/errors.hpp"
#include "snellmesh/model.hpp"
#include "snellmesh/random.hpp"
#include "snellmesh/state.hpp"

namespace snell {

enum class CloudKind { mutated, selected };

/// N particles at time k. `criteria` caches G_k at each particle (empty at k = n).
struct ParticleCloud {
  std::size_t step = 0;
  CloudKind kind = CloudKind::mutated;
  std::vector<State> particles;
  std::vector<double> criteria;

  std::size_t size() const { return particles.size(); }
};

/// Empirical measure (1/N) sum_i delta_{xi^i}; a view, valid while the cloud lives.
class OccupationMeasure {
 public:
  explicit OccupationMeasure(const ParticleCloud& cloud) : cloud_(&cloud) {}

  template <class F>
  double integrate(F&& f) const {
    double sum = 0.0;
    for (const auto& x : cloud_->particles) sum += f(x);
    return sum / static_cast<double>(cloud_->size());
  }

  // eta^N_k(G_k) from the cached criteria.
  double criteria_mass() const {
    double sum = 0.0;
    for (double g : cloud_->criteria) sum += g;
    return sum / static_cast<double>(cloud_->size());
  }

  const ParticleCloud& cloud() const { return *cloud_; }

 private:
  const ParticleCloud* cloud_;
};

inline OccupationMeasure occupation_measure(const ParticleCloud& cloud) { return OccupationMeasure(cloud); }

namespace detail {

inline void cache_criteria(const MarkovModel& model, ParticleCloud& cloud) {
  cloud.criteria.clear();
  if (cloud.step >= model.horizon) return;
  cloud.criteria.reserve(cloud.size());
  for (const auto& x : cloud.particles) cloud.criteria.push_back(model.criterion(cloud.step, x));
}

}  // namespace detail

inline ParticleCloud init_particles(const MarkovModel& model, std::size_t n_particles, Stream& stream) {
  if (n_particles < 1) throw ContractError("need at least one particle");
  ParticleCloud cloud;
  cloud.particles.reserve(n_particles);
  for (std::size_t i = 0; i < n_particles; ++i) cloud.particles.push_back(sample_initial(model, stream));
  detail::cache_criteria(model, cloud);
  return cloud;
}

/// Selection S_{k, eta^N_k}: particle i stays put with probability eps_k G_k(xi^i),
/// otherwise it is replaced by a draw from the G_k-weighted empirical measure.
/// Returns nullopt (extinction) when every particle has zero criteria.
///
/// Draw order: for each particle in index order, one uniform for the keep test
/// and, when resampled, one more uniform for the multinomial pick.
inline std::optional<ParticleCloud> selection_step(const MarkovModel& model, std::size_t k,
                                                   const ParticleCloud& cloud, Stream& stream) {
  if (k >= model.horizon) throw ContractError("selection only happens for k < n");
  if (cloud.step != k || cloud.kind != CloudKind::mutated)
    throw ContractError("selection expects the post-mutation cloud at step " + std::to_string(k));
  const double eps = model.epsilon[k];
  if (eps < 0.0 || eps * model.criteria_bounds[k] > 1.0)
    throw ContractError("epsilon_k * ||G_k|| must lie in [0, 1] at k=" + std::to_string(k));

  const std::size_t n = cloud.size();
  std::vector<double> cumulative(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) cumulative[i] = total += cloud.criteria[i];
  if (!(total > 0.0)) return std::nullopt;

  ParticleCloud out;
  out.step = k;
  out.kind = CloudKind::selected;
  out.particles.reserve(n);
  out.criteria.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t pick = i;
    if (!(stream.uniform() < eps * cloud.criteria[i])) {
      const double target = stream.uniform() * total;
      auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
      if (it == cumulative.end()) --it;
      pick = static_cast<std::size_t>(it - cumulative.begin());
    }
    out.particles.push_back(cloud.particles[pick]);
    out.criteria.push_back(cloud.criteria[pick]);
  }
  return out;
}

/// Mutation: xi^i_{k+1} ~ M_{k+1}(xi_hat^i_k, .) independently, in index order.
inline ParticleCloud mutation_step(const MarkovModel& model, std::size_t k, const ParticleCloud& cloud,
                                   Stream& stream) {
  if (k >= model.horizon) throw ContractError("mutation only happens for k < n");
  if (cloud.step != k || cloud.kind != CloudKind::selected)
    throw ContractError("mutation expects the post-selection cloud at step " + std::to_string(k));
  ParticleCloud out;
  out.step = k + 1;
  out.kind = CloudKind::mutated;
  out.particles.reserve(cloud.size());
  for (const auto& x : cloud.particles) out.particles.push_back(sample_transition(model, k + 1, x, stream));
  detail::cache_criteria(model, out);
  return out;
}

struct ParticleTrajectory {
  std::uint64_t seed = 0;
  std::size_t n_particles = 0;
  std::vector<ParticleCloud> mutated;   // xi_k, k = 0..min(tau, n)
  std::vector<ParticleCloud> selected;  // xi_hat_k, k < min(tau, n)
  std::vector<double> criteria_mass;    // eta^N_k(G_k) for each selection attempted
  std::optional<std::size_t> extinction_step;
  double normalizer = 0.0;  // prod_{k<n} eta^N_k(G_k), 0 when extinct

  bool extinct() const { return extinction_step.has_value(); }
};

/// Selection/mutation from k = 0 to n. Fully determined by (model, N, seed):
/// init uses stream (0, init), selection at k uses (k, selection) and the
/// mutation into k+1 uses (k+1, mutation).
inline ParticleTrajectory run_particle_system(const MarkovModel& model, std::size_t n_particles, std::uint64_t seed) {
  ParticleTrajectory traj;
  traj.seed = seed;
  traj.n_particles = n_particles;
  {
    Stream init = step_stream(seed, 0, Phase::init);
    traj.mutated.push_back(init_particles(model, n_particles, init));
  }
  double z = 1.0;
  for (std::size_t k = 0; k < model.horizon; ++k) {
    const double mass = occupation_measure(traj.mutated.back()).criteria_mass();
    traj.criteria_mass.push_back(mass);
    Stream sel = step_stream(seed, k, Phase::selection);
    auto selected = selection_step(model, k, traj.mutated.back(), sel);
    if (!selected) {
      traj.extinction_step = k;
      traj.normalizer = 0.0;
      return traj;
    }
    z *= mass;
    traj.selected.push_back(std::move(*selected));
    Stream mut = step_stream(seed, k + 1, Phase::mutation);
    traj.mutated.push_back(mutation_step(model, k, traj.selected.back(), mut));
  }
  traj.normalizer = z;
  return traj;
}

}  // namespace snell
