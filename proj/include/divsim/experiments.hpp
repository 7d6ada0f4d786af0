#pragma once

// Experiment recipes, parameter sweeps and the regression dataset.
//
// Points that are compared with each other share the simulation seed, so run
// i of every point sees the same keyed draws wherever the points agree
// (common random numbers).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "divsim/metrics.hpp"
#include "divsim/scenario.hpp"
#include "divsim/scenario_io.hpp"
#include "divsim/simulation.hpp"

namespace divsim {

struct ExperimentOptions {
  std::uint32_t subnet_count = 10;
  std::uint32_t hosts_per_subnet = 20;
  std::uint32_t runs = 30;
  std::uint32_t horizon = 100;
  std::uint64_t seed = 1;          // simulation seed, shared by all points
  std::uint64_t network_seed = 1;  // topology and code
  unsigned threads = default_threads();
};

struct ExperimentPoint {
  std::string panel;
  std::string label;
  ScenarioSpec spec;
  bool effort_only = false;  // only the vulnerability catalog is needed
};

struct PointResult {
  ExperimentPoint point;
  std::string digest;
  std::vector<RunOutcome> runs;
  MetricSeries mean;  // empty for effort-only points
  MeanStd pca100, pcos100, effort_to_cover, exploits_held;
};

inline MeanStd endpoint(const std::vector<RunOutcome>& runs, const std::function<double(const RunOutcome&)>& f) {
  std::vector<double> xs;
  xs.reserve(runs.size());
  for (const auto& r : runs) xs.push_back(f(r));
  return mean_std(xs);
}

// Mean and standard error of the per-run differences a_i - b_i.
struct PairedDiff {
  double mean = 0, se = 0;
};

inline PairedDiff paired_diff(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty()) throw DomainError("paired samples must be non-empty and of equal size");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  const MeanStd m = mean_std(d);
  return {m.mean, m.std / std::sqrt(static_cast<double>(d.size()))};
}

inline std::vector<double> pca_at(const PointResult& r, std::uint32_t t) {
  std::vector<double> v;
  for (const auto& o : r.runs) v.push_back(o.series.pca.at(t));
  return v;
}
inline std::vector<double> pcos_at(const PointResult& r, std::uint32_t t) {
  std::vector<double> v;
  for (const auto& o : r.runs) v.push_back(o.series.pcos.at(t));
  return v;
}
inline std::vector<double> effort_of(const PointResult& r) {
  std::vector<double> v;
  for (const auto& o : r.runs) v.push_back(static_cast<double>(o.effort_to_cover));
  return v;
}

// Effort without configuring stacks or simulating.
inline RunOutcome effort_run(const ReferenceNetwork& ref, const ScenarioSpec& spec, std::uint32_t run) {
  const StreamKey key = run_key(spec.simulation.seed, run);
  const auto assignment = apply_diversity(ref, key);
  const VulnCatalog cat =
      assign_exploit_classes(seed_vulnerabilities(deployed_implementations(ref, assignment), *ref.software, spec.network, key),
                             *ref.software, spec.network.N, spec.network.cor, key);
  RunOutcome out;
  out.effort_to_cover = attacker_effort_to_cover(cat);
  return out;
}

// Fields that the reference network depends on.
inline std::string network_key(const ScenarioSpec& spec) {
  const Json doc = to_json(spec);
  return doc["network"].dump() + doc["diversity"].dump();
}

inline std::vector<PointResult> run_points(const std::vector<ExperimentPoint>& points, unsigned threads) {
  std::map<std::string, std::shared_ptr<const ReferenceNetwork>> refs;
  std::vector<std::shared_ptr<const ReferenceNetwork>> ref_of(points.size());
  std::vector<PointResult> out(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    points[i].spec.validate();
    auto& slot = refs[network_key(points[i].spec)];
    if (!slot) slot = std::make_shared<const ReferenceNetwork>(build_reference_network(points[i].spec.network));
    ref_of[i] = slot;
    out[i].point = points[i];
    out[i].digest = scenario_digest(points[i].spec, *slot);
    out[i].runs.resize(points[i].spec.simulation.runs);
  }
  std::vector<std::pair<std::size_t, std::uint32_t>> jobs;
  for (std::size_t i = 0; i < points.size(); ++i)
    for (std::uint32_t r = 0; r < points[i].spec.simulation.runs; ++r) jobs.emplace_back(i, r);
  parallel_for(jobs.size(), threads, [&](std::size_t j) {
    const auto [i, r] = jobs[j];
    const auto& spec = points[i].spec;
    out[i].runs[r] = points[i].effort_only ? effort_run(*ref_of[i], spec, r) : run_once(*ref_of[i], spec, r);
  });
  for (auto& res : out) {
    res.effort_to_cover = endpoint(res.runs, [](const RunOutcome& o) { return static_cast<double>(o.effort_to_cover); });
    if (res.point.effort_only) continue;
    const std::uint32_t T = res.point.spec.simulation.horizon;
    res.mean = aggregate(res.runs);
    res.pca100 = endpoint(res.runs, [T](const RunOutcome& o) { return o.series.pca[T]; });
    res.pcos100 = endpoint(res.runs, [T](const RunOutcome& o) { return o.series.pcos[T]; });
    res.exploits_held = endpoint(res.runs, [](const RunOutcome& o) { return o.series.attacker_effort; });
  }
  return out;
}

inline const PointResult& find_point(const std::vector<PointResult>& rs, const std::string& panel, const std::string& label) {
  for (const auto& r : rs)
    if (r.point.panel == panel && r.point.label == label) return r;
  throw DomainError("no experiment point " + panel + "/" + label);
}

// --- sweeps -----------------------------------------------------------------

struct SweepAxis {
  std::string pointer;  // JSON pointer into the scenario file, e.g. /attacker/cap
  std::vector<Json> values;
};

enum class SeedPolicy : std::uint8_t { Shared, PerPoint };

struct SweepSpec {
  ScenarioSpec base;
  std::vector<SweepAxis> axes;
  std::uint32_t runs_per_point = 30;
  std::uint32_t horizon = 100;
  SeedPolicy seeds = SeedPolicy::Shared;

  void validate() const {
    if (runs_per_point < 1) throw ParameterError("runs_per_point must be >= 1");
    const Json doc = to_json(base);
    for (const auto& a : axes) {
      Json::json_pointer ptr;
      try {
        ptr = Json::json_pointer(a.pointer);
      } catch (const Json::exception&) {
        throw SchemaError(a.pointer, "not a JSON pointer");
      }
      // map-valued sections accept new keys
      const bool in_map = !ptr.empty() && doc.contains(ptr.parent_pointer()) && doc[ptr.parent_pointer()].is_object() &&
                          (ptr.parent_pointer().back() == "zeta_by_family" ||
                           ptr.parent_pointer().back() == "impl_overrides");
      if (ptr.empty() || (!doc.contains(ptr) && !in_map)) throw SchemaError(a.pointer, "no such scenario parameter");
      if (a.values.empty()) throw SchemaError(a.pointer, "axis needs at least one value");
    }
  }
};

inline std::string axis_label(const SweepAxis& a, const Json& v) {
  const auto slash = a.pointer.rfind('/');
  return a.pointer.substr(slash + 1) + "=" + (v.is_string() ? v.get<std::string>() : v.dump());
}

// Cartesian product; the last axis varies fastest.
inline std::vector<ExperimentPoint> expand(const SweepSpec& sweep, const std::string& panel) {
  sweep.validate();
  std::vector<ExperimentPoint> out;
  std::vector<std::size_t> idx(sweep.axes.size(), 0);
  Json base = to_json(sweep.base);
  base["simulation"]["runs"] = sweep.runs_per_point;
  base["simulation"]["T"] = sweep.horizon;
  for (;;) {
    Json doc = base;
    std::string label;
    for (std::size_t k = 0; k < sweep.axes.size(); ++k) {
      const auto& a = sweep.axes[k];
      doc[Json::json_pointer(a.pointer)] = a.values[idx[k]];
      label += (k ? "," : "") + axis_label(a, a.values[idx[k]]);
    }
    ExperimentPoint p{panel, label.empty() ? "base" : label, parse_scenario(doc)};
    if (sweep.seeds == SeedPolicy::PerPoint)
      p.spec.simulation.seed = StreamKey(sweep.base.simulation.seed).derive(Purpose::Run, 0xffffffffULL, out.size()).bits();
    out.push_back(std::move(p));
    std::size_t k = sweep.axes.size();
    while (k > 0 && ++idx[k - 1] == sweep.axes[k - 1].values.size()) idx[--k] = 0;
    if (k == 0) break;
  }
  return out;
}

// --- recipes ----------------------------------------------------------------

// Shared block: gamma = alpha = 0.2, theta = 0.8, tau = 0.05, zeta = 0.2,
// cap = 1, omega = 0.2, tight NIPS and HIPS.
inline ScenarioSpec recipe_base(const ExperimentOptions& o) {
  ScenarioSpec s;
  s.network.subnet_count = o.subnet_count;
  s.network.hosts_per_subnet = o.hosts_per_subnet;
  s.network.rng_seed = o.network_seed;
  s.network.zeta = 0.2;
  s.network.theta = 0.8;
  s.network.tau = 0.05;
  s.defense = {Policy::Tight, Policy::Tight, 0.2, 0.2};
  s.cap = 1.0;
  s.omega = 0.2;
  s.simulation = {o.horizon, o.runs, o.seed};
  return s;
}

inline std::vector<ExperimentPoint> rq1_points(const ExperimentOptions& o) {
  std::vector<ExperimentPoint> pts;
  auto browser = [&](const std::string& label, std::vector<MixEntry> mix) {
    ScenarioSpec s = recipe_base(o);
    for (const auto& m : mix) s.network.zeta_by_family[m.family] = m.family == "browser1" ? 0.4 : 0.2;
    s.network.browser_mix = std::move(mix);
    pts.push_back({"browser", label, s});
  };
  browser("browser1_only", {{"browser1", 1.0}});
  browser("browser2_only", {{"browser2", 1.0}});
  browser("hybrid", {{"browser1", 0.5}, {"browser2", 0.5}});
  auto os = [&](const std::string& label, std::vector<MixEntry> mix) {
    ScenarioSpec s = recipe_base(o);
    for (const auto& m : mix) s.network.zeta_by_family[m.family] = m.family == "OS1" ? 0.2 : 0.4;
    s.network.os_mix = std::move(mix);
    pts.push_back({"os", label, s});
  };
  os("os1_only", {{"OS1", 1.0}});
  os("os2_only", {{"OS2", 1.0}});
  os("hybrid", {{"OS1", 0.5}, {"OS2", 0.5}});
  return pts;
}

inline std::vector<double> grid(double lo, double hi, double step) {
  std::vector<double> v;
  for (int i = 0; lo + i * step <= hi + 1e-9; ++i) v.push_back(std::round((lo + i * step) * 1e6) / 1e6);
  return v;
}

inline ScenarioSpec diversified(ScenarioSpec s, DiversityConfig c, std::uint32_t n) {
  s.network.diversity = c;
  s.network.N = c == DiversityConfig::C0 ? 1 : n;
  return s;
}

inline constexpr DiversityConfig kAllConfigs[] = {DiversityConfig::C0, DiversityConfig::C1, DiversityConfig::C2,
                                                  DiversityConfig::C3, DiversityConfig::C4};

inline std::vector<ExperimentPoint> rq2_points(const ExperimentOptions& o) {
  std::vector<ExperimentPoint> pts;
  auto add_sweep = [&](SweepSpec sw, const std::string& panel, const std::string& prefix = "") {
    sw.runs_per_point = o.runs;
    sw.horizon = o.horizon;
    for (auto& p : expand(sw, panel)) {
      if (!prefix.empty()) p.label = prefix + "," + p.label;
      pts.push_back(std::move(p));
    }
  };
  // (a) cap grid for monoculture and full diversification
  for (auto c : {DiversityConfig::C0, DiversityConfig::C1}) {
    SweepSpec sw;
    sw.base = diversified(recipe_base(o), c, 10);
    std::vector<Json> zetas{0.1, 0.2}, caps;
    for (double x : grid(0.0, 1.0, 0.1)) caps.push_back(x);
    sw.axes = {{"/vulnerabilities/zeta", zetas}, {"/attacker/cap", caps}};
    add_sweep(sw, "cap", "config=" + std::string(to_string(c)));
  }
  // (a') the same grid under correlated exploits
  {
    SweepSpec sw;
    sw.base = diversified(recipe_base(o), DiversityConfig::C1, 10);
    std::vector<Json> cors{0.0, 0.5}, caps;
    for (double x : grid(0.0, 1.0, 0.1)) caps.push_back(x);
    sw.axes = {{"/vulnerabilities/cor", cors}, {"/attacker/cap", caps}};
    add_sweep(sw, "cor_cap");
  }
  // (b) N sweep, the attacker holding two exploit classes per family
  {
    ScenarioSpec s = diversified(recipe_base(o), DiversityConfig::C1, 1);
    s.exploits_per_family = 2;
    SweepSpec sw;
    sw.base = s;
    std::vector<Json> ns{1, 5};
    for (int n = 10; n <= 100; n += 10) ns.push_back(n);
    sw.axes = {{"/diversity/N", ns}};
    add_sweep(sw, "n_sweep");
  }
  // (c) which layer to diversify: 0.2 where monoculture, 0.1 where diversified
  for (auto c : kAllConfigs) {
    ScenarioSpec s = diversified(recipe_base(o), c, 10);
    for (Layer l : {Layer::Application, Layer::Library, Layer::OperatingSystem})
      s.network.zeta_by_layer[l] = diversifies(c, l) ? 0.1 : 0.2;
    pts.push_back({"layers", std::string(to_string(c)), s});
  }
  // (d) attacker effort against exploit correlation
  {
    SweepSpec sw;
    sw.base = diversified(recipe_base(o), DiversityConfig::C1, 10);
    std::vector<Json> cors{0.0, 0.3, 0.5, 0.7, 0.9}, zetas;
    for (double z : grid(0.1, 0.9, 0.1)) zetas.push_back(z);
    sw.axes = {{"/vulnerabilities/cor", cors}, {"/vulnerabilities/zeta", zetas}};
    const std::size_t first = pts.size();
    add_sweep(sw, "cor");
    for (std::size_t i = first; i < pts.size(); ++i) pts[i].effort_only = true;
  }
  return pts;
}

// The case (a, b) runs a instances of OS1 and b of OS2.
inline std::vector<ExperimentPoint> rq3_points(const ExperimentOptions& o) {
  std::vector<ExperimentPoint> pts;
  auto add = [&](const std::string& label, std::vector<MixEntry> mix, std::uint32_t n) {
    ScenarioSpec s = diversified(recipe_base(o), DiversityConfig::C1, n);
    for (const auto& m : mix) s.network.zeta_by_family[m.family] = m.family == "OS1" ? 0.2 : 0.4;
    s.network.os_mix = std::move(mix);
    pts.push_back({"hybrid", label, s});
  };
  add("(0,1)", {{"OS2", 1.0}}, 1);
  add("(1,1)", {{"OS1", 0.5}, {"OS2", 0.5}}, 1);
  add("(10,10)", {{"OS1", 0.5}, {"OS2", 0.5}}, 10);
  return pts;
}

// --- regression dataset -------------------------------------------------------

inline constexpr int config_rank(DiversityConfig c) {
  switch (c) {
    case DiversityConfig::C0: return 5;
    case DiversityConfig::C1: return 1;
    case DiversityConfig::C2: return 3;
    case DiversityConfig::C3: return 4;
    case DiversityConfig::C4: return 2;
  }
  return 0;
}

inline constexpr const char* kRegressionColumns[] = {"x1",  "x2",  "x3",  "x4",  "x5",  "x6",  "x7",     "x8",
                                                     "x9",  "x10", "x11", "x12", "x13", "x14", "pca100", "pcos100"};

struct RegressionRow {
  std::array<double, 16> v{};
};

inline double mix_weight(const std::vector<MixEntry>& mix, const std::string& name) {
  double total = 0, w = 0;
  for (const auto& m : mix) {
    total += m.weight;
    if (m.family == name) w += m.weight;
  }
  return total > 0 ? w / total : 0;
}

inline RegressionRow regression_row(const PointResult& r) {
  const auto& s = r.point.spec;
  const auto& p = s.network;
  RegressionRow row;
  row.v = {mix_weight(p.os_mix, "OS1"),
           static_cast<double>(p.apps_per_host.size()),
           mix_weight(p.browser_mix, "browser2"),
           static_cast<double>(p.N),
           static_cast<double>(config_rank(p.diversity)),
           p.zeta,
           p.theta,
           p.tau,
           s.cap,
           s.omega,
           s.defense.alpha,
           s.defense.gamma,
           s.defense.nips == Policy::Tight ? 1.0 : 0.0,
           s.defense.hips == Policy::Tight ? 1.0 : 0.0,
           r.pca100.mean,
           r.pcos100.mean};
  return row;
}

// Columns not already in [0, 1] (apps per computer, N, configuration rank)
// are min-max scaled over the dataset; a constant column becomes 0.
inline void standardize(std::vector<RegressionRow>& rows) {
  for (int c : {1, 3, 4}) {
    double lo = INFINITY, hi = -INFINITY;
    for (const auto& r : rows) {
      lo = std::min(lo, r.v[c]);
      hi = std::max(hi, r.v[c]);
    }
    for (auto& r : rows) r.v[c] = hi > lo ? (r.v[c] - lo) / (hi - lo) : 0.0;
  }
}

inline std::vector<RegressionRow> export_regression_dataset(const std::vector<PointResult>& results) {
  std::vector<RegressionRow> rows;
  for (const auto& r : results)
    if (!r.point.effort_only) rows.push_back(regression_row(r));
  standardize(rows);
  return rows;
}

inline std::string regression_csv(const std::vector<RegressionRow>& rows) {
  std::ostringstream s;
  CsvWriter w(s);
  w.row(std::vector<std::string>(std::begin(kRegressionColumns), std::end(kRegressionColumns)));
  for (const auto& r : rows) {
    std::vector<std::string> f;
    for (double x : r.v) f.push_back(format_number(x));
    w.row(f);
  }
  return s.str();
}

// Keyed sample of the parameter space: each variable drawn from a small
// level set, independently per point.
inline std::vector<ExperimentPoint> regression_points(const ExperimentOptions& o, std::uint32_t count) {
  const StreamKey key = StreamKey(o.seed).derive(Purpose::Run, 0xfffffffeULL);
  auto pick = [&](std::uint32_t i, std::uint32_t var, const auto& levels) {
    const auto n = static_cast<std::uint32_t>(std::size(levels));
    return levels[std::min(n - 1, static_cast<std::uint32_t>(key.derive(i, var).uniform() * n))];
  };
  static const double fractions[] = {0.0, 0.5, 1.0};
  static const std::uint32_t app_counts[] = {1, 2, 3, 4};
  static const std::uint32_t ns[] = {1, 5, 10};
  static const double zetas[] = {0.1, 0.2, 0.3, 0.4};
  static const double thetas[] = {0.2, 0.5, 0.8};
  static const double taus[] = {0.0, 0.05, 0.1};
  static const double caps[] = {0.2, 0.6, 1.0};
  static const double rates[] = {0.1, 0.2, 0.5};
  static const Policy policies[] = {Policy::Tight, Policy::Loose};
  std::vector<ExperimentPoint> pts;
  for (std::uint32_t i = 0; i < count; ++i) {
    ScenarioSpec s = recipe_base(o);
    auto& p = s.network;
    const double os1 = pick(i, 1, fractions);
    p.os_mix.clear();
    if (os1 > 0) p.os_mix.push_back({"OS1", os1});
    if (os1 < 1) p.os_mix.push_back({"OS2", 1 - os1});
    p.apps_per_host.resize(pick(i, 2, app_counts));
    const double b2 = pick(i, 3, fractions);
    p.browser_mix.clear();
    if (b2 < 1) p.browser_mix.push_back({"browser1", 1 - b2});
    if (b2 > 0) p.browser_mix.push_back({"browser2", b2});
    p.diversity = pick(i, 5, kAllConfigs);
    p.N = p.diversity == DiversityConfig::C0 ? 1 : pick(i, 4, ns);
    p.zeta = pick(i, 6, zetas);
    p.theta = pick(i, 7, thetas);
    p.tau = pick(i, 8, taus);
    s.cap = pick(i, 9, caps);
    s.omega = pick(i, 10, rates);
    s.defense.alpha = pick(i, 11, rates);
    s.defense.gamma = pick(i, 12, rates);
    s.defense.nips = pick(i, 13, policies);
    s.defense.hips = pick(i, 14, policies);
    pts.push_back({"regression", "point" + std::to_string(i), s});
  }
  return pts;
}

inline const std::vector<std::string>& recipe_names() {
  static const std::vector<std::string> names{"rq1", "rq2", "rq3", "regression"};
  return names;
}

inline std::vector<ExperimentPoint> recipe_points(const std::string& name, const ExperimentOptions& o,
                                                  std::uint32_t regression_count = 24) {
  if (name == "rq1") return rq1_points(o);
  if (name == "rq2") return rq2_points(o);
  if (name == "rq3") return rq3_points(o);
  if (name == "regression") return regression_points(o, regression_count);
  throw ParameterError("unknown recipe '" + name + "'");
}

// The parameters each point runs with, as scenario-file JSON.
inline Json recipe_parameters(const std::vector<ExperimentPoint>& pts) {
  Json a = Json::array();
  for (const auto& p : pts)
    a.push_back({{"panel", p.panel}, {"label", p.label}, {"effort_only", p.effort_only}, {"scenario", to_json(p.spec)}});
  return a;
}

inline std::string summary_csv(const std::vector<PointResult>& rs) {
  std::ostringstream s;
  CsvWriter w(s);
  w.row({"panel", "label", "runs", "pca100_mean", "pca100_std", "pcos100_mean", "pcos100_std", "effort_to_cover_mean",
         "effort_to_cover_std", "exploits_held_mean"});
  for (const auto& r : rs) {
    const bool e = r.point.effort_only;
    auto num = [&](double x) { return e ? std::string() : format_number(x); };
    w.row({r.point.panel, r.point.label, std::to_string(r.runs.size()), num(r.pca100.mean), num(r.pca100.std),
           num(r.pcos100.mean), num(r.pcos100.std), format_number(r.effort_to_cover.mean),
           format_number(r.effort_to_cover.std), num(r.exploits_held.mean)});
  }
  return s.str();
}

inline std::string experiment_series_csv(const std::vector<PointResult>& rs) {
  std::ostringstream s;
  CsvWriter w(s);
  w.row({"panel", "label", "t", "pca_mean", "pca_std", "pcos_mean", "pcos_std"});
  for (const auto& r : rs) {
    if (r.point.effort_only) continue;
    for (std::size_t t = 0; t < r.mean.pca.size(); ++t)
      w.row({r.point.panel, r.point.label, std::to_string(t), format_number(r.mean.pca[t]),
             format_number(r.mean.pca_std[t]), format_number(r.mean.pcos[t]), format_number(r.mean.pcos_std[t])});
  }
  return s.str();
}

inline Json experiment_manifest(const std::string& recipe, const ExperimentOptions& o,
                                const std::vector<PointResult>& rs) {
  Json pts = Json::array();
  for (const auto& r : rs)
    pts.push_back({{"panel", r.point.panel},
                   {"label", r.point.label},
                   {"digest", r.digest},
                   {"effort_only", r.point.effort_only},
                   {"scenario", to_json(r.point.spec)}});
  return {{"recipe", recipe},
          {"subnet_count", o.subnet_count},
          {"hosts_per_subnet", o.hosts_per_subnet},
          {"runs_per_point", o.runs},
          {"horizon", o.horizon},
          {"seed", o.seed},
          {"network_seed", o.network_seed},
          {"points", pts}};
}

}  // namespace divsim
