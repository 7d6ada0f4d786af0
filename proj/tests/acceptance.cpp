// Acceptance runner: checks the nine acceptance criteria at desk scale
// (203 computers, 30 paired-seed runs, T = 100) and prints one PASS/FAIL
// line per criterion. Exit status is the number of failures.
//
// Standard errors are those of the paired per-run differences: every point
// of a comparison runs on the same network, diversity draws and
// vulnerabilities (run keys depend only on seed and run index). An exact
// zero difference counts as "within noise" and never as a strict gap.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"

using namespace divsim;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... xs) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, xs...);
  return buf;
}

struct Gap {
  double diff, se;
  // a - b exceeds k paired standard errors
  bool exceeds(double k) const { return diff > 0 && (se == 0 || diff > k * se); }
  bool within(double k) const { return diff == 0 || std::abs(diff) < k * se; }
  std::string str() const { return fmt("%+.4f (se %.4f)", diff, se); }
};

Gap gap(const std::vector<double>& a, const std::vector<double>& b) {
  const auto d = paired_diff(a, b);
  return {d.mean, d.se};
}

ExperimentOptions desk(std::uint64_t seed) {
  ExperimentOptions o;
  o.seed = seed;
  return o;
}

std::vector<ExperimentPoint> panel(const std::vector<ExperimentPoint>& pts, const std::string& name) {
  std::vector<ExperimentPoint> out;
  for (const auto& p : pts)
    if (p.panel == name) out.push_back(p);
  return out;
}

// --- 1 -------------------------------------------------------------------------

Verdict oracle_equivalence() {
  const auto t0 = Clock::now();
  int scenarios = 0, equal = 0, max_fns = 0, max_computers = 0;
  for (std::uint64_t seed = 1; seed <= 100; ++seed) {
    const auto t = fx::random_tiny(seed * 7919);
    for (const auto& cg : t.b.net.computers) {
      std::uint32_t fns = cg.os_function_count();
      for (std::uint32_t s = 0; s < cg.libs.size(); ++s) fns += cg.lib_function_count(s);
      max_fns = std::max(max_fns, static_cast<int>(fns));
    }
    max_computers = std::max(max_computers, static_cast<int>(t.b.net.computers.size()));
    AttackEngine e(t.b.net, t.cat, t.attacker, t.defense, StreamKey(seed));
    const auto ini = e.select_initial_targets(e.compute_weapon());
    const auto st = e.simulate(ini, 64);
    ++scenarios;
    equal += fx::compromised_by(st, 64) == fx::oracle_fixed_point(t, ini);
  }
  const double secs = seconds_since(t0);
  const bool ok = equal == scenarios && scenarios >= 50 && max_fns <= 30 && max_computers <= 5 && secs < 10;
  return {ok, fmt("%d/%d scenarios equal (max %d computers, %d functions per stack), %.2f s", equal, scenarios,
                  max_computers, max_fns, secs)};
}

// --- 2 -------------------------------------------------------------------------

struct TraceCheck {
  int traces = 0, non_monotone = 0, below = 0;
  void add(const MetricSeries& m) {
    ++traces;
    bool mono = true, ge = true;
    for (std::size_t t = 0; t < m.pca.size(); ++t) {
      if (t && (m.pca[t] < m.pca[t - 1] || m.pcos[t] < m.pcos[t - 1])) mono = false;
      if (m.pca[t] < m.pcos[t]) ge = false;
    }
    non_monotone += !mono;
    below += !ge;
  }
};

Verdict monotone_and_ordered(std::uint64_t seed) {
  // generated networks across a spread of parameters, small enough to run
  // many traces
  ExperimentOptions o = desk(seed);
  o.subnet_count = 4;
  o.hosts_per_subnet = 10;
  o.runs = 25;
  o.horizon = 100;
  TraceCheck gen;
  for (const auto& r : run_points(regression_points(o, 32), o.threads))
    for (const auto& run : r.runs) gen.add(run.series);
  // hand-made tiny networks with random stacks and policies
  TraceCheck tiny;
  for (std::uint64_t s = 1; s <= 400; ++s) {
    const auto t = fx::random_tiny(s, {.deterministic_gates = s % 2 == 0, .omega = 0.2 + 0.2 * (s % 5)});
    AttackEngine e(t.b.net, t.cat, t.attacker, t.defense, StreamKey(s));
    tiny.add(series_of(e.simulate(e.select_initial_targets(e.compute_weapon()), 100)));
  }
  const int traces = gen.traces + tiny.traces;
  const bool ok = traces >= 1000 && gen.non_monotone + tiny.non_monotone == 0 && gen.below + tiny.below == 0;
  return {ok, fmt("%d traces; non-monotone %d; pca < pcos on %d generated-network and %d tiny-network traces", traces,
                  gen.non_monotone + tiny.non_monotone, gen.below, tiny.below)};
}

// --- 3 -------------------------------------------------------------------------

Verdict natural_browser_diversity(std::uint64_t seed) {
  const auto t0 = Clock::now();
  const auto rs = run_points(panel(rq1_points(desk(seed)), "browser"), default_threads());
  const auto& b1 = find_point(rs, "browser", "browser1_only");
  const auto& b2 = find_point(rs, "browser", "browser2_only");
  const auto& hy = find_point(rs, "browser", "hybrid");
  const Gap lo = gap(pca_at(hy, 100), pca_at(b2, 100));
  const Gap hi = gap(pca_at(b1, 100), pca_at(hy, 100));
  const Gap os1 = gap(pcos_at(b1, 100), pcos_at(hy, 100));
  const Gap os2 = gap(pcos_at(hy, 100), pcos_at(b2, 100));
  const Gap os3 = gap(pcos_at(b1, 100), pcos_at(b2, 100));
  const double secs = seconds_since(t0);
  const bool ok = lo.exceeds(2) && hi.exceeds(2) && os1.within(1) && os2.within(1) && os3.within(1) && secs < 60;
  return {ok, fmt("pca100 b2 %.4f < hybrid %.4f < b1 %.4f; gaps %s, %s; pcos gaps %s, %s, %s; %.1f s", b2.pca100.mean,
                  hy.pca100.mean, b1.pca100.mean, lo.str().c_str(), hi.str().c_str(), os1.str().c_str(),
                  os2.str().c_str(), os3.str().c_str(), secs)};
}

// --- 4 -------------------------------------------------------------------------

Verdict layer_ordering(std::uint64_t seed) {
  const auto t0 = Clock::now();
  const auto rs = run_points(panel(rq2_points(desk(seed)), "layers"), default_threads());
  const char* order[] = {"C0", "C3", "C2", "C4", "C1"};
  bool ok = true;
  std::string d = "pcos100";
  for (int i = 0; i < 5; ++i) {
    const auto& a = find_point(rs, "layers", order[i]);
    d += fmt(" %s %.4f", order[i], a.pcos100.mean);
    if (i == 4) break;
    const Gap g = gap(pcos_at(a, 100), pcos_at(find_point(rs, "layers", order[i + 1]), 100));
    ok = ok && g.exceeds(1);
    d += fmt(" >[%s]", g.str().c_str());
  }
  const double ratio = find_point(rs, "layers", "C0").pca100.mean / find_point(rs, "layers", "C1").pca100.mean;
  const double secs = seconds_since(t0);
  ok = ok && ratio >= 1.3 && ratio <= 2.0 && secs < 120;
  return {ok, d + fmt("; C0/C1 pca100 ratio %.3f; %.1f s", ratio, secs)};
}

// --- 5 -------------------------------------------------------------------------

double r_squared(const std::vector<double>& x, const std::vector<double>& y) {
  const auto mx = mean_std(x).mean, my = mean_std(y).mean;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return syy == 0 ? 1.0 : sxy * sxy / (sxx * syy);
}

Verdict effort_against_correlation(std::uint64_t seed) {
  const auto t0 = Clock::now();
  const auto rs = run_points(panel(rq2_points(desk(seed)), "cor"), default_threads());
  auto effort = [&](const char* cor, double zeta) {
    return find_point(rs, "cor", fmt("cor=%s,zeta=%s", cor, Json(zeta).dump().c_str())).effort_to_cover.mean;
  };
  const char* cors[] = {"0.0", "0.3", "0.5", "0.7", "0.9"};
  bool ok = true;
  std::string d;
  for (double z : {0.2, 0.5}) {
    d += fmt("zeta %.1f:", z);
    for (int i = 0; i < 5; ++i) {
      d += fmt(" %.1f", effort(cors[i], z));
      if (i && !(effort(cors[i], z) < effort(cors[i - 1], z))) ok = false;
    }
    d += "; ";
  }
  std::vector<double> zs, es;
  for (double z : grid(0.1, 0.9, 0.1)) {
    zs.push_back(z);
    es.push_back(effort("0.0", z));
  }
  const double r2 = r_squared(zs, es);
  const double secs = seconds_since(t0);
  ok = ok && r2 > 0.95 && secs < 30;
  return {ok, d + fmt("R^2 at cor=0 %.5f; %.1f s", r2, secs)};
}

// --- 6 -------------------------------------------------------------------------

Verdict correlation_irrelevant_at_full_cap(std::uint64_t seed) {
  auto pts = panel(rq2_points(desk(seed)), "cor_cap");
  std::erase_if(pts, [](const ExperimentPoint& p) { return p.spec.cap != 1.0; });
  const auto rs = run_points(pts, default_threads());
  const auto& a = find_point(rs, "cor_cap", "cor=0.0,cap=1.0");
  const auto& b = find_point(rs, "cor_cap", "cor=0.5,cap=1.0");
  const Gap ga = gap(pca_at(a, 100), pca_at(b, 100));
  const Gap go = gap(pcos_at(a, 100), pcos_at(b, 100));
  return {ga.within(1) && go.within(1), fmt("pca100 diff %s, pcos100 diff %s", ga.str().c_str(), go.str().c_str())};
}

// --- 7 -------------------------------------------------------------------------

Verdict n_sweep(std::uint64_t seed) {
  const auto rs = run_points(panel(rq2_points(desk(seed)), "n_sweep"), default_threads());
  auto at = [&](int n) { return pca_at(find_point(rs, "n_sweep", fmt("N=%d", n)), 100); };
  auto mean = [&](int n) { return mean_std(at(n)).mean; };
  const Gap g15 = gap(at(1), at(5)), g110 = gap(at(1), at(10)), g510 = gap(at(5), at(10));
  const Gap g20 = gap(at(20), at(100));
  const double early = (mean(20) - mean(60)) / 40, late = (mean(60) - mean(100)) / 40;
  const bool flat = g15.within(1) && g110.within(1) && g510.within(1);
  const bool ok = flat && g20.exceeds(2) && late < early;
  return {ok, fmt("pca100 N=1 %.4f N=5 %.4f N=10 %.4f N=20 %.4f N=60 %.4f N=100 %.4f; 1-5 %s, 1-10 %s, 5-10 %s; "
                  "20-100 %s; slope 20..60 %.5f, 60..100 %.5f",
                  mean(1), mean(5), mean(10), mean(20), mean(60), mean(100), g15.str().c_str(), g110.str().c_str(),
                  g510.str().c_str(), g20.str().c_str(), early, late)};
}

// --- 8 -------------------------------------------------------------------------

Verdict degenerate_gates(std::uint64_t seed) {
  const auto o = desk(seed);
  const ScenarioSpec base = diversified(recipe_base(o), DiversityConfig::C1, 10);
  const auto ref = build_reference_network(base.network);
  auto zero_series = [&](ScenarioSpec s) {
    for (const auto& r : run_many(ref, s)) {
      for (std::size_t t = 0; t < r.series.pca.size(); ++t)
        if (r.series.pca[t] != 0 || r.series.pcos[t] != 0) return false;
    }
    return true;
  };
  ScenarioSpec cap0 = base, omega0 = base;
  cap0.cap = 0;
  omega0.omega = 0;
  const bool z1 = zero_series(cap0), z2 = zero_series(omega0);

  // no zero-days and closed gates: nothing gets past the entry attempts
  auto lateral = [&](double tau, std::size_t& initial) {
    ScenarioSpec s = base;
    s.network.tau = tau;
    s.defense.gamma = s.defense.alpha = 0;
    std::size_t moves = 0;
    initial = 0;
    for (const auto& r : run_many(ref, s, default_threads(), TraceLevel::Events))
      for (const auto& ev : r.state->trace) {
        moves += ev.kind == EventKind::LateralMove;
        initial += ev.kind == EventKind::InitialCompromise;
      }
    return moves;
  };
  std::size_t ini0 = 0, ini1 = 0;
  const std::size_t none = lateral(0.0, ini0);
  const std::size_t some = lateral(0.5, ini1);
  const bool ok = z1 && z2 && none == 0 && ini0 == 0 && some > 0;
  return {ok, fmt("cap=0 all zero: %s; omega=0 all zero: %s; gamma=alpha=tau=0: %zu lateral moves, %zu entries; "
                  "tau=0.5: %zu lateral moves",
                  z1 ? "yes" : "no", z2 ? "yes" : "no", none, ini0, some)};
}

// --- 9 -------------------------------------------------------------------------

std::string outputs_of(const ReferenceNetwork& ref, const ScenarioSpec& s, unsigned threads) {
  const auto runs = run_many(ref, s, threads, TraceLevel::Events);
  std::ostringstream out;
  out << series_csv(aggregate(runs));
  for (std::uint32_t r = 0; r < runs.size(); ++r) write_trace_ndjson(out, *runs[r].state, r);
  return out.str();
}

Verdict determinism_and_scale(std::uint64_t seed) {
  const auto o = desk(seed);
  ScenarioSpec s = diversified(recipe_base(o), DiversityConfig::C1, 10);
  s.simulation.runs = 10;
  const auto ref = build_reference_network(s.network);
  const std::string a = outputs_of(ref, s, 1);
  const std::string b = outputs_of(build_reference_network(s.network), s, 1);
  const std::string c = outputs_of(ref, s, 4);
  const bool same = a == b && a == c;

  const auto t0 = Clock::now();
  ScenarioSpec full;  // 2,003 computers
  full.simulation.seed = seed;
  const auto big = build_reference_network(full.network);
  const double build = seconds_since(t0);
  const auto run = run_once(big, full, 0);
  const double secs = seconds_since(t0);
  const bool ok = same && big.graph.computer_count() == 2003 && secs < 60;
  return {ok, fmt("identical outputs across rebuilds and thread counts: %s (%zu bytes); full-scale build %.1f s, "
                  "build + run %.1f s (pca100 %.4f)",
                  same ? "yes" : "no", a.size(), build, secs, run.series.pca.back())};
}

}  // namespace

int main(int argc, char** argv) {
  const std::uint64_t seed = argc > 1 ? std::strtoull(argv[1], nullptr, 10) : 1;
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"oracle equivalence", oracle_equivalence},
      {"monotone compromise, pca >= pcos", [&] { return monotone_and_ordered(seed); }},
      {"natural browser diversity ordering", [&] { return natural_browser_diversity(seed); }},
      {"layer ordering C0 > C3 > C2 > C4 > C1", [&] { return layer_ordering(seed); }},
      {"attacker effort against cor", [&] { return effort_against_correlation(seed); }},
      {"cor irrelevant at cap = 1", [&] { return correlation_irrelevant_at_full_cap(seed); }},
      {"N sweep with two exploits per family", [&] { return n_sweep(seed); }},
      {"degenerate gates", [&] { return degenerate_gates(seed); }},
      {"determinism and full-scale run", [&] { return determinism_and_scale(seed); }},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failures += !v.pass;
    std::printf("%s criterion %zu (%s): %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  return failures;
}
