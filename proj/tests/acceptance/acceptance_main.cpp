// Acceptance gate: runs the ten criteria at their stated tolerances and prints
// one PASS/FAIL line for each. Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "snellmesh/analysis.hpp"
#include "snellmesh/builtins.hpp"
#include "snellmesh/experiment.hpp"
#include "snellmesh/mesh.hpp"
#include "snellmesh/oracle.hpp"
#include "snellmesh/particle.hpp"
#include "support/reference.hpp"

using namespace snell;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string fmt(const char* f, double a, double b) {
  char buf[160];
  std::snprintf(buf, sizeof buf, f, a, b);
  return buf;
}

std::string fmt(const char* f, double a, double b, double c) {
  char buf[200];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

void fail(Outcome& o, const std::string& why) {
  if (o.pass) o.detail = why;
  o.pass = false;
}

MarkovModel with_epsilon(FiniteChainSpec spec, double eps) {
  spec.epsilon.assign(spec.transitions.size(), eps);
  return make_finite_model(std::move(spec));
}

// 1 -------------------------------------------------------------------------
Outcome oracle_identities() {
  Outcome o;
  Stream s(0xacce5501);
  double worst_eq = 0.0, worst_gap = 0.0;
  for (int i = 0; i < 100; ++i) {
    const auto m = random_finite_model(s);
    worst_eq = std::max(worst_eq, check_path_equivalence(m));
    worst_gap = std::max(worst_gap, verify_optimality(m).gap);
  }
  if (worst_eq > 1e-12) fail(o, fmt("path equivalence discrepancy %.3g > 1e-12", worst_eq));
  if (worst_gap > 1e-10) fail(o, fmt("optimality gap %.3g > 1e-10", worst_gap));
  if (o.pass) o.detail = fmt("100 random models, max discrepancy %.3g, max gap %.3g", worst_eq, worst_gap);
  return o;
}

// 2 -------------------------------------------------------------------------
double bg_discrepancy(const MarkovModel& m, std::size_t n_particles, std::uint64_t seed) {
  const auto est = backward_mesh(m, run_particle_system(m, n_particles, seed));
  const auto ref = reference::bg_reference(m, n_particles, seed);
  double worst = 0.0;
  for (std::size_t k = 0; k <= m.horizon; ++k) {
    if (est.trajectory->mutated[k].particles != ref.points[k]) return std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n_particles; ++i) worst = std::max(worst, std::abs(est.values[k][i] - ref.values[k][i]));
  }
  return worst;
}

Outcome equivalence_reduction() {
  Outcome o;
  Stream s(0xacce5502);
  std::size_t mismatches = 0;
  std::vector<MarkovModel> unit_models;
  for (int i = 0; i < 100; ++i) {
    auto spec = random_finite_spec(s);
    for (auto& g : spec.criteria) g.setOnes();
    const auto t = tabulate(make_finite_model(spec));
    const auto u = snell_standard(t), v = snell_with_criteria(t);
    for (std::size_t k = 0; k <= t.horizon; ++k) mismatches += (u[k] != v[k]) ? 1 : 0;
    if (i < 10) unit_models.push_back(with_epsilon(spec, 1.0));
  }
  if (mismatches) fail(o, std::to_string(mismatches) + " envelope slices differ with G = 1");

  auto toy = toychain_spec();
  for (auto& g : toy.criteria) g.setOnes();
  unit_models.push_back(with_epsilon(toy, 1.0));
  Ar1Params p;
  p.initial_mean = 1.0;
  p.initial_std = 0.5;
  unit_models.push_back(build_gaussian_ar1(p, {"put", 1.0, {}}, {}, {1.0, 1.0, 1.0}));

  double worst = 0.0;
  for (std::size_t i = 0; i < unit_models.size(); ++i)
    for (std::uint64_t seed = 1; seed <= 3; ++seed)
      worst = std::max(worst, bg_discrepancy(unit_models[i], 300, run_seed(0xb6, i * 10 + seed)));
  if (!(worst <= 1e-12)) fail(o, fmt("mesh differs from the direct reference by %.3g", worst));
  if (o.pass) o.detail = fmt("G=1 envelopes identical; mesh vs direct reference max |diff| %.3g on 12 models", worst);
  return o;
}

// 3 -------------------------------------------------------------------------
Outcome frozen_cloud_unbiasedness() {
  Outcome o;
  const auto toy = toychain_spec();
  const auto t = tabulate(make_finite_model(toy));
  const std::vector<std::pair<std::string, Eigen::Vector2d>> tests{
      {"1{x=1}", Eigen::Vector2d(0.0, 1.0)}, {"G_1", t.criteria[1]}, {"f_2", t.payoffs[2]}};
  const std::vector<std::size_t> frozen_idx{0, 0, 1, 1, 1, 0, 1, 0, 0, 1};
  double worst_z = 0.0;
  for (double eps : {0.0, 0.5, 1.0}) {
    const auto m = with_epsilon(toy, eps);
    for (std::size_t k = 0; k < 2; ++k) {
      ParticleCloud frozen;
      frozen.step = k;
      for (auto i : frozen_idx) frozen.particles.push_back(State::category(i));
      detail::cache_criteria(m, frozen);

      // Phi_{k+1}(eta^N_k) as a probability vector on E_{k+1}
      Eigen::Vector2d eta = Eigen::Vector2d::Zero();
      for (auto i : frozen_idx) eta(static_cast<Eigen::Index>(i)) += 1.0;
      const Eigen::VectorXd phi = flow_step(t, k + 1, eta / eta.sum());

      std::vector<std::vector<double>> samples(tests.size());
      for (std::uint64_t r = 0; r < 10000; ++r) {
        Stream sel(run_seed(0xf302 + k, 2 * r)), mut(run_seed(0xf302 + k, 2 * r + 1));
        const auto next = mutation_step(m, k, *selection_step(m, k, frozen, sel), mut);
        const auto eta_next = occupation_measure(next);
        for (std::size_t f = 0; f < tests.size(); ++f)
          samples[f].push_back(eta_next.integrate(
              [&](const State& x) { return tests[f].second(static_cast<Eigen::Index>(x.index())); }));
      }
      for (std::size_t f = 0; f < tests.size(); ++f) {
        const double exact = phi.dot(tests[f].second);
        const double z = std::abs(sample_mean(samples[f]) - exact) / standard_error(samples[f]);
        worst_z = std::max(worst_z, z);
        if (z > 4.0)
          fail(o, "f=" + tests[f].first + fmt(" eps=%g k=%g: |z| = %.2f > 4", eps, static_cast<double>(k), z));
      }
    }
  }
  if (o.pass) o.detail = fmt("3 test functions x 3 eps x 2 steps, 10^4 replications, max |z| %.2f", worst_z);
  return o;
}

// 4 -------------------------------------------------------------------------
Outcome normalizer_unbiasedness() {
  Outcome o;
  const auto m = toychain();
  const double z_exact = compute_eta_flow(m).normalizer;
  std::vector<double> z;
  for (std::uint64_t r = 0; r < 200; ++r) z.push_back(run_particle_system(m, 10000, run_seed(0xacce5504, r)).normalizer);
  const double mean = sample_mean(z), se = standard_error(z);
  const double dev = std::abs(mean - z_exact) / se;
  o.detail = fmt("mean Z_hat %.6f vs %.6f, %.2f SE", mean, z_exact, dev);
  if (!(std::abs(z_exact - 0.375) < 1e-15 && dev <= 3.0)) fail(o, o.detail);
  return o;
}

// 5, 6, 7 -------------------------------------------------------------------
constexpr double kToyV00 = 0.6375;

Outcome convergence_rate() {
  Outcome o;
  const auto m = toychain();
  std::vector<RunResult> runs;
  const std::vector<std::size_t> ns{250, 1000, 4000, 16000};
  for (std::size_t n : ns) {
    auto batch = run_batch(m, n, mix_seed(0xacce5505, n), 200, State::category(0));
    runs.insert(runs.end(), batch.begin(), batch.end());
  }
  const auto rep = empirical_error_stats(runs, kToyV00, {2});
  if (!rep.slope) {
    fail(o, "slope undefined");
    return o;
  }
  const double slope = rep.slope->slope;
  if (slope < -0.65 || slope > -0.35) fail(o, fmt("slope %.4f outside [-0.65, -0.35]", slope));
  std::string levels;
  for (const auto& level : rep.levels) {
    const double bound = theoretical_lp_bound(m, 2, level.n_particles, 0).bound;
    if (!(bound >= level.lp(2)))
      fail(o, fmt("N=%g: bound %.4g < L2 error %.4g", static_cast<double>(level.n_particles), bound, level.lp(2)));
    levels += fmt(" N=%g L2=%.4g", static_cast<double>(level.n_particles), level.lp(2)) + fmt("/%.4g", bound);
  }
  if (o.pass) o.detail = fmt("slope %.4f (95%% CI [%.3f, %.3f]);", slope, rep.slope->lo, rep.slope->hi) + levels;
  return o;
}

Outcome high_bias() {
  Outcome o;
  const auto est = estimates_of(run_batch(toychain(), 250, 0xacce5506, 500, State::category(0)));
  const auto rep = bias_check(est, kToyV00, {100, 2.0});
  o.detail = fmt("mean %.5f, oracle %.4f, SE %.5f", rep.mean, kToyV00, rep.standard_error);
  if (!rep.pass) fail(o, o.detail);
  return o;
}

Outcome concentration() {
  Outcome o;
  const auto m = toychain();
  const double c = theoretical_lp_bound(m, 2, 1000, 0).concentration_c;
  const auto est = estimates_of(run_batch(m, 1000, 0xacce5507, 2000, State::category(0)));
  const std::vector<double> grid{0.05, 0.1, 0.2};
  const auto rep = concentration_check(est, kToyV00, 1000, c, grid, {1000, 3.0});
  std::string rows;
  for (const auto& row : rep.rows)
    rows += fmt(" eps=%g freq=%.4g", row.epsilon, row.frequency) + fmt("<=%.4g", row.bound);
  o.detail = fmt("c = %.4f;", c) + rows;
  if (rep.skipped || !rep.pass) fail(o, o.detail);
  return o;
}

// 8 -------------------------------------------------------------------------
Outcome robustness() {
  Outcome o;
  Stream s(0xacce5508);
  double worst = -std::numeric_limits<double>::infinity();
  auto check = [&](const FiniteChainSpec& base, const char* family) {
    for (int trial = 0; trial < 100; ++trial) {
      const auto exact = make_finite_model(base);
      const auto approx = make_finite_model(perturb_spec(base, s, 0.2));
      for (auto kernel : {RobustnessKernel::markov, RobustnessKernel::criteria}) {
        const auto rep = robustness_bound_check(exact, approx, kernel, 1e-10);
        worst = std::max(worst, rep.max_excess);
        if (!rep.pass) fail(o, std::string(family) + fmt(": excess %.3g", rep.max_excess));
      }
    }
  };
  check(toychain_spec(), "toychain");
  check(indicator_chain_spec(), "indicator");
  for (int i = 0; i < 100; ++i) {
    const auto base = random_finite_spec(s);
    const auto approx = make_finite_model(perturb_spec(base, s, 0.2));
    for (auto kernel : {RobustnessKernel::markov, RobustnessKernel::criteria}) {
      const auto rep = robustness_bound_check(make_finite_model(base), approx, kernel, 1e-10);
      worst = std::max(worst, rep.max_excess);
      if (!rep.pass) fail(o, fmt("random model %g: excess %.3g", i, rep.max_excess));
    }
  }
  if (o.pass) o.detail = fmt("3 families x 100 perturbations x 2 kernels, max (lhs - rhs) %.3g", worst);
  return o;
}

// 9 -------------------------------------------------------------------------
Outcome extinction() {
  Outcome o;
  const auto m = indicator_chain(5, 5);
  const double v_exact = snell_with_criteria(m)[0](0);
  std::vector<double> freq;
  std::string detail;
  for (std::size_t n : {10u, 100u, 1000u}) {
    const auto runs = run_batch(m, n, mix_seed(0xacce5509, n), 1000, State::category(0));
    std::size_t dead = 0;
    for (const auto& r : runs) {
      if (!r.extinct) continue;
      ++dead;
      if (r.v_hat != 0.0 || !r.extinction_step) fail(o, "extinct run reported a nonzero estimate");
    }
    // reports carry v_hat * 1{tau > n}: the extinct runs enter the error statistics as zeros
    const auto rep = empirical_error_stats(runs, v_exact, {2}, 1);
    if (std::abs(rep.levels[0].extinction_rate - static_cast<double>(dead) / 1000.0) > 0.0)
      fail(o, "report extinction rate disagrees with run flags");
    freq.push_back(static_cast<double>(dead) / 1000.0);
    detail += fmt(" N=%g: %.3f", static_cast<double>(n), freq.back());
  }
  // an extinct trajectory yields an invalid estimate
  std::uint64_t seed = 0;
  ParticleTrajectory traj;
  do traj = run_particle_system(m, 10, seed++);
  while (!traj.extinct());
  const auto est = backward_mesh(m, std::move(traj));
  if (est.valid) fail(o, "extinct trajectory produced a valid estimate");
  try {
    evaluate_envelope(m, est, 0, State::category(0));
    fail(o, "evaluating an extinct estimate did not raise");
  } catch (const ExtinctionError&) {
  }
  if (!(freq[0] > freq[1] && freq[1] >= freq[2])) fail(o, "extinction frequency not decreasing:" + detail);
  if (o.pass) o.detail = "extinction frequency" + detail;
  return o;
}

// 10 ------------------------------------------------------------------------
// Separate arithmetic path: the falling factorial as an integer product,
// powers of two by ldexp, and the root by exp/log.
double khintchine_reference(int p) {
  const int q = p / 2;
  if (p % 2 == 0) {
    unsigned long long prod = 1;
    for (int j = q + 1; j <= 2 * q; ++j) prod *= static_cast<unsigned long long>(j);
    return std::exp(std::log(std::ldexp(static_cast<double>(prod), -q)) / p);
  }
  unsigned long long prod = 1;
  for (int j = q + 1; j <= 2 * q + 1; ++j) prod *= static_cast<unsigned long long>(j);
  const double value = std::ldexp(static_cast<double>(prod), -q) / std::sqrt(2.0 * q + 1.0);
  return std::exp(std::log(value) / p);
}

Outcome khintchine() {
  Outcome o;
  double worst = 0.0;
  for (int p = 1; p <= 10; ++p) worst = std::max(worst, std::abs(khintchine_constant(p) - khintchine_reference(p)));
  const double a3 = std::cbrt(6.0 / std::sqrt(1.5) / std::pow(2.0, 1.5));
  const double e2 = std::abs(khintchine_constant(2) - 1.0);
  const double e4 = std::abs(khintchine_constant(4) - std::pow(3.0, 0.25));
  const double e3 = std::abs(khintchine_constant(3) - a3);
  worst = std::max({worst, e2, e3, e4});
  o.detail = fmt("a(2)=%.15f a(3)=%.15f a(4)=%.15f", khintchine_constant(2), khintchine_constant(3),
                 khintchine_constant(4)) +
             fmt(", max deviation %.3g", worst);
  if (worst > 1e-12) fail(o, o.detail);
  return o;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "oracle identities", 60, oracle_identities},
      {2, "equivalence reduction", 60, equivalence_reduction},
      {3, "frozen-cloud unbiasedness", 60, frozen_cloud_unbiasedness},
      {4, "normalizer unbiasedness", 120, normalizer_unbiasedness},
      {5, "convergence rate", 600, convergence_rate},
      {6, "high bias", 120, high_bias},
      {7, "concentration", 300, concentration},
      {8, "robustness inequality", 60, robustness},
      {9, "extinction semantics", 60, extinction},
      {10, "Khintchine constants", 1, khintchine},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > c.budget_s) {
      o.pass = false;
      o.detail += fmt(" (runtime %.1f s over the %.0f s budget)", secs, c.budget_s);
    }
    std::printf("[%s] %2d %s: %s (%.2f s)\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += o.pass ? 0 : 1;
  }
  std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed ? 1 : 0;
}
