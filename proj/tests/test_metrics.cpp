#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fixtures.hpp"

using namespace divsim;

namespace {

SimulationState state(std::vector<std::uint16_t> apps, std::vector<std::uint16_t> oses, std::uint32_t horizon = 100) {
  SimulationState st;
  st.horizon = horizon;
  st.app_round = std::move(apps);
  st.os_round = std::move(oses);
  st.os_function.assign(st.os_round.size(), kNoFunction);
  return st;
}

SimulationState run_tiny(const fx::Tiny& t, std::uint64_t seed, TraceLevel level = TraceLevel::None) {
  AttackEngine e(t.b.net, t.cat, t.attacker, t.defense, StreamKey(seed), level);
  return e.simulate(e.select_initial_targets(e.compute_weapon()), 40);
}

// Smallest number of exploit classes covering every vulnerability, by
// enumerating subsets of all (family, class) keys.
std::size_t brute_force_effort(const VulnCatalog& cat) {
  std::vector<std::uint64_t> keys;
  for (const auto& [f, m] : cat.class_counts())
    for (std::uint32_t c = 0; c < m; ++c) keys.push_back(class_key(f, c));
  std::size_t best = keys.size();
  for (std::uint64_t mask = 0; mask < (1ULL << keys.size()); ++mask) {
    std::vector<std::uint64_t> held;
    for (std::size_t i = 0; i < keys.size(); ++i)
      if (mask >> i & 1) held.push_back(keys[i]);
    const ExploitSet x(held);
    bool all = true;
    for (const auto& r : cat.records()) all = all && x.covers(r);
    if (all) best = std::min(best, held.size());
  }
  return best;
}

}  // namespace

TEST(Metrics, FractionExamples) {
  std::vector<std::uint16_t> apps(12, kNever);
  apps[0] = 1;
  apps[4] = 3;
  apps[7] = 5;
  apps[9] = 6;
  std::vector<std::uint16_t> oses(13, kNever);
  oses[2] = 5;
  const auto st = state(apps, oses);
  EXPECT_DOUBLE_EQ(pca(st, 5), 3.0 / 12.0);
  EXPECT_DOUBLE_EQ(pca(st, 0), 0.0);
  EXPECT_DOUBLE_EQ(pcos(st, 5), 1.0 / 13.0);
  EXPECT_DOUBLE_EQ(pcos(st, 4), 0.0);
  EXPECT_DOUBLE_EQ(pca(st, 100), 4.0 / 12.0);
  EXPECT_THROW(pca(st, 101), DomainError);
  EXPECT_THROW(pcos(st, 101), DomainError);
}

TEST(Metrics, SeriesMatchesPointwiseFractions) {
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    const auto t = fx::random_tiny(seed, {.deterministic_gates = false, .omega = 1.0});
    const auto st = run_tiny(t, seed);
    const auto m = series_of(st);
    ASSERT_EQ(m.pca.size(), 41u);
    EXPECT_EQ(m.horizon(), 40u);
    for (std::uint32_t r = 0; r <= 40; ++r) {
      EXPECT_DOUBLE_EQ(m.pca[r], pca(st, r));
      EXPECT_DOUBLE_EQ(m.pcos[r], pcos(st, r));
    }
  }
}

TEST(Metrics, AggregateExample) {
  MetricSeries a, b;
  a.pca = {0, 0.5};
  a.pcos = {0, 0.25};
  b.pca = {0, 1.0};
  b.pcos = {0, 0.25};
  a.attacker_effort = 2;
  b.attacker_effort = 4;
  const std::vector<MetricSeries> runs{a, b};
  const auto m = aggregate_runs(runs);
  EXPECT_EQ(m.run_count, 2u);
  EXPECT_DOUBLE_EQ(m.pca[1], 0.75);
  EXPECT_NEAR(m.pca_std[1], std::sqrt(0.125), 1e-15);
  EXPECT_DOUBLE_EQ(m.pcos[1], 0.25);
  EXPECT_DOUBLE_EQ(m.pcos_std[1], 0.0);
  EXPECT_DOUBLE_EQ(m.attacker_effort, 3.0);
  EXPECT_THROW(aggregate_runs(std::vector<MetricSeries>{}), DomainError);
  b.pca.push_back(1);
  b.pcos.push_back(1);
  EXPECT_THROW(aggregate_runs(std::vector<MetricSeries>{a, b}), DomainError);
}

TEST(Metrics, MeanStdMatchesTextbookFormula) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + trial % 17;
    std::vector<double> xs(n);
    for (auto& x : xs) x = uniform01(rng) * 10 - 3;
    // sum of squares form, independent of the two-pass implementation
    long double s = 0, q = 0;
    for (double x : xs) {
      s += x;
      q += static_cast<long double>(x) * x;
    }
    const double mean = static_cast<double>(s / n);
    const double var = n > 1 ? static_cast<double>((q - s * s / n) / (n - 1)) : 0.0;
    const auto m = mean_std(xs);
    EXPECT_NEAR(m.mean, mean, 1e-12);
    EXPECT_NEAR(m.std, std::sqrt(std::max(0.0, var)), 1e-9);
  }
  EXPECT_EQ(mean_std(std::vector<double>{4.0}).std, 0.0);
}

TEST(Metrics, AggregateMeanLiesWithinRunRange) {
  std::vector<MetricSeries> runs;
  const auto t = fx::random_tiny(17, {.deterministic_gates = false, .omega = 0.5});
  for (std::uint64_t s = 0; s < 30; ++s) runs.push_back(series_of(run_tiny(t, s)));
  const auto m = aggregate_runs(runs);
  for (std::size_t r = 0; r < m.pca.size(); ++r) {
    double lo = 1, hi = 0, olo = 1, ohi = 0;
    for (const auto& x : runs) {
      lo = std::min(lo, x.pca[r]);
      hi = std::max(hi, x.pca[r]);
      olo = std::min(olo, x.pcos[r]);
      ohi = std::max(ohi, x.pcos[r]);
    }
    EXPECT_GE(m.pca[r], lo - 1e-12);
    EXPECT_LE(m.pca[r], hi + 1e-12);
    EXPECT_GE(m.pcos[r], olo - 1e-12);
    EXPECT_LE(m.pcos[r], ohi + 1e-12);
  }
}

TEST(Metrics, EffortMatchesSubsetEnumeration) {
  for (std::uint64_t seed = 1; seed <= 60; ++seed) {
    const auto t = fx::random_tiny(seed);
    ASSERT_LE(t.cat.class_counts().size() * 2, 16u);
    EXPECT_EQ(attacker_effort_to_cover(t.cat), brute_force_effort(t.cat)) << "seed " << seed;
    std::size_t sum = 0;
    for (const auto& [f, n] : attacker_effort_by_family(t.cat)) sum += n;
    EXPECT_EQ(sum, attacker_effort_to_cover(t.cat));
  }
  EXPECT_EQ(attacker_effort_to_cover(VulnCatalog{}), 0u);
}

TEST(Metrics, MonotoneOverManyTraces) {
  int traces = 0;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    const auto t = fx::random_tiny(seed, {.deterministic_gates = seed % 3 == 0, .omega = 0.2 + 0.8 * (seed % 5) / 4.0});
    const auto m = series_of(run_tiny(t, seed));
    ++traces;
    for (std::size_t r = 1; r < m.pca.size(); ++r) {
      ASSERT_GE(m.pca[r], m.pca[r - 1]) << "seed " << seed;
      ASSERT_GE(m.pcos[r], m.pcos[r - 1]) << "seed " << seed;
    }
  }
  EXPECT_GE(traces, 1000);
}

// A compromised OS takes every app on its computer, so with k apps per
// computer at least k apps fall per OS: pca >= pcos * min_apps / mean_apps.
TEST(Metrics, AppFractionBoundedByOsFraction) {
  for (std::uint64_t seed = 1; seed <= 500; ++seed) {
    const auto t = fx::random_tiny(seed, {.deterministic_gates = false, .omega = 1.0});
    const auto& net = t.b.net;
    std::size_t min_apps = SIZE_MAX;
    for (const auto& cg : net.computers) min_apps = std::min(min_apps, cg.apps.size());
    const double scale = static_cast<double>(min_apps) * net.computers.size() / net.app_count();
    const auto m = series_of(run_tiny(t, seed));
    for (std::size_t r = 0; r < m.pca.size(); ++r) ASSERT_GE(m.pca[r] + 1e-12, m.pcos[r] * scale) << "seed " << seed;
  }
}

TEST(Metrics, TraceExplainsEveryCompromise) {
  for (std::uint64_t seed = 1; seed <= 80; ++seed) {
    const auto t = fx::random_tiny(seed, {.deterministic_gates = false, .omega = 1.0});
    const auto& net = t.b.net;
    const auto st = run_tiny(t, seed, TraceLevel::Events);
    std::vector<std::uint16_t> apps(net.app_count(), kNever), oses(net.computers.size(), kNever);
    for (const auto& ev : st.trace) {
      ASSERT_FALSE(ev.blocked);
      if (ev.kind == EventKind::Propagation) {
        apps[net.global_app(ev.target)] = std::min(apps[net.global_app(ev.target)], ev.round);
      } else if (t.cat[*ev.vuln].priv) {
        oses[ev.target.computer] = std::min(oses[ev.target.computer], ev.round);
      } else {
        apps[net.global_app(ev.target)] = std::min(apps[net.global_app(ev.target)], ev.round);
      }
    }
    EXPECT_EQ(apps, st.app_round) << "seed " << seed;
    EXPECT_EQ(oses, st.os_round) << "seed " << seed;
  }
}
