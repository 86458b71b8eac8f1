#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "snellmesh/mesh.hpp"
#include "snellmesh/model.hpp"
#include "snellmesh/particle.hpp"
#include "snellmesh/random.hpp"

namespace snell {

/// One full particle + mesh run. Extinct runs report v_hat = 0, i.e. the
/// estimator v_hat * 1{tau^N > n}.
struct RunResult {
  std::size_t n_particles = 0;
  std::uint64_t seed = 0;
  double v_hat = 0.0;       // v_hat_k(query)
  double v_hat_eta0 = 0.0;  // mean of v_hat_0 over the initial cloud
  double normalizer = 0.0;
  bool extinct = false;
  std::optional<std::size_t> extinction_step;
};

inline RunResult run_estimator(const MarkovModel& model, std::size_t n_particles, std::uint64_t seed,
                               const State& query, std::size_t step = 0) {
  RunResult r;
  r.n_particles = n_particles;
  r.seed = seed;
  auto est = backward_mesh(model, run_particle_system(model, n_particles, seed));
  const auto& traj = *est.trajectory;
  r.normalizer = traj.normalizer;
  r.extinction_step = traj.extinction_step;
  r.extinct = traj.extinct();
  if (!est.valid) return r;
  r.v_hat = evaluate_envelope(model, est, step, query);
  double sum = 0.0;
  for (double v : est.values[0]) sum += v;
  r.v_hat_eta0 = sum / static_cast<double>(est.values[0].size());
  return r;
}

/// `runs` independent runs; run r uses seed run_seed(master_seed, r).
inline std::vector<RunResult> run_batch(const MarkovModel& model, std::size_t n_particles, std::uint64_t master_seed,
                                        std::size_t runs, const State& query, std::size_t step = 0) {
  std::vector<RunResult> out;
  out.reserve(runs);
  for (std::size_t r = 0; r < runs; ++r)
    out.push_back(run_estimator(model, n_particles, run_seed(master_seed, r), query, step));
  return out;
}

inline std::vector<double> estimates_of(const std::vector<RunResult>& runs) {
  std::vector<double> v;
  v.reserve(runs.size());
  for (const auto& r : runs) v.push_back(r.v_hat);
  return v;
}

}  // namespace snell
