#pragma once

// One Monte Carlo run end to end, and a runner for many of them.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <optional>
#include <thread>
#include <vector>

#include "divsim/config.hpp"
#include "divsim/engine.hpp"
#include "divsim/metrics.hpp"
#include "divsim/scenario.hpp"

namespace divsim {

struct SimulationSettings {
  std::uint32_t horizon = 100;
  std::uint32_t runs = 30;
  std::uint64_t seed = 1;
};

// Everything a scenario file describes.
struct ScenarioSpec {
  ScenarioParams network;
  DefenseConfig defense;
  double cap = 1.0;
  double omega = 0.2;
  // When set, the attacker holds this many exploit classes per family
  // instead of a cap fraction of all classes.
  std::optional<std::uint32_t> exploits_per_family;
  SimulationSettings simulation;

  void validate() const {
    network.validate();
    defense.validate();
    check_probability(cap, "cap");
    check_probability(omega, "omega");
    if (simulation.horizon < 1 || simulation.horizon >= kNever) throw ParameterError("horizon must lie in [1, 65534]");
    if (simulation.runs < 1) throw ParameterError("runs must be >= 1");
  }
};

inline StreamKey run_key(std::uint64_t seed, std::uint32_t run) { return StreamKey(seed).derive(Purpose::Run, run); }

struct RunOutcome {
  MetricSeries series;
  std::size_t effort_to_cover = 0;
  std::optional<SimulationState> state;  // kept when a trace is requested
};

struct RunContext {
  DiversityAssignment assignment;
  NetworkGraph net;
  VulnCatalog catalog;
  AttackerConfig attacker;
};

inline RunContext prepare_run(const ReferenceNetwork& ref, const ScenarioSpec& spec, std::uint32_t run) {
  const StreamKey key = run_key(spec.simulation.seed, run);
  RunContext ctx;
  ctx.assignment = apply_diversity(ref, key);
  ctx.net = configure(ref, ctx.assignment);
  ctx.catalog = assign_exploit_classes(seed_vulnerabilities(ctx.net, spec.network, key), *ref.software, spec.network.N,
                                       spec.network.cor, key);
  ctx.attacker.cap = spec.cap;
  ctx.attacker.omega = spec.omega;
  ctx.attacker.exploits = spec.exploits_per_family
                              ? select_exploits_per_family(ctx.catalog, *ref.software, *spec.exploits_per_family, key)
                              : select_attacker_exploits(ctx.catalog, *ref.software, spec.cap, key);
  return ctx;
}

inline RunOutcome run_once(const ReferenceNetwork& ref, const ScenarioSpec& spec, std::uint32_t run,
                           TraceLevel trace = TraceLevel::None, bool keep_state = false) {
  RunContext ctx = prepare_run(ref, spec, run);
  AttackEngine engine(ctx.net, ctx.catalog, ctx.attacker, spec.defense, run_key(spec.simulation.seed, run), trace);
  const auto weapon = engine.compute_weapon();
  const auto ini = engine.select_initial_targets(weapon);
  SimulationState st = engine.simulate(ini, spec.simulation.horizon);
  RunOutcome out;
  out.series = series_of(st);
  out.series.attacker_effort = static_cast<double>(ctx.attacker.exploits.size());
  out.series.weapon_size = static_cast<double>(weapon.size());
  out.series.inicomp_size = static_cast<double>(ini.size());
  out.effort_to_cover = attacker_effort_to_cover(ctx.catalog);
  if (keep_state || trace != TraceLevel::None) out.state = std::move(st);
  return out;
}

inline unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

// Runs fn(i) for i in [0, n) on a small pool; results land by index, so the
// outcome does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::atomic<bool> failed{false};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; !failed && (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          if (!failed.exchange(true)) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

inline std::vector<RunOutcome> run_many(const ReferenceNetwork& ref, const ScenarioSpec& spec,
                                        unsigned threads = default_threads(), TraceLevel trace = TraceLevel::None) {
  std::vector<RunOutcome> out(spec.simulation.runs);
  parallel_for(out.size(), threads, [&](std::size_t i) { out[i] = run_once(ref, spec, static_cast<std::uint32_t>(i), trace); });
  return out;
}

inline MetricSeries aggregate(const std::vector<RunOutcome>& runs) {
  std::vector<MetricSeries> s;
  s.reserve(runs.size());
  for (const auto& r : runs) s.push_back(r.series);
  return aggregate_runs(s);
}

}  // namespace divsim
