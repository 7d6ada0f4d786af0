// divsim: generate scenarios, run Monte Carlo simulations, run experiment
// recipes.
//
// Exit codes: 0 ok, 1 usage or unknown recipe, 2 schema, 3 parameter,
// 4 invariant (including snapshot digest mismatch), 5 I/O.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "divsim/divsim.hpp"

namespace fs = std::filesystem;
using namespace divsim;

namespace {

enum Exit { kOk = 0, kUsage = 1, kSchema = 2, kParameter = 3, kInvariant = 4, kIo = 5 };

void make_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir);
}

std::string in_dir(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

std::string pretty(const Json& j) { return j.dump(2) + "\n"; }

struct Loaded {
  ScenarioSpec spec;
  ReferenceNetwork ref;
  std::string digest;
  bool trace = false;
};

Loaded load(const std::string& path) {
  LoadedScenario ls = load_scenario(read_json_file(path));
  ls.spec.validate();
  Loaded out{ls.spec, build_reference_network(ls.spec.network), "", ls.trace};
  out.digest = scenario_digest(out.spec, out.ref);
  if (ls.expected_digest && *ls.expected_digest != out.digest)
    throw InvariantViolation("regenerated scenario digest " + out.digest + " does not match the recorded " +
                             *ls.expected_digest);
  return out;
}

struct GenerateArgs {
  std::string input, out;
};

int cmd_generate(const GenerateArgs& a) {
  Loaded l = load(a.input);
  write_text_file(a.out, pretty(make_snapshot(l.spec, l.ref)));
  std::cout << l.digest << "\n";
  return kOk;
}

struct RunArgs {
  std::string input, out;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint32_t> runs, horizon;
  bool trace = false;
  bool trace_misses = false;
  unsigned threads = default_threads();
};

int cmd_run(const RunArgs& a) {
  Loaded l = load(a.input);
  if (a.seed) l.spec.simulation.seed = *a.seed;
  if (a.runs) l.spec.simulation.runs = *a.runs;
  if (a.horizon) l.spec.simulation.horizon = *a.horizon;
  l.spec.validate();
  const bool trace = a.trace || a.trace_misses || l.trace;
  const TraceLevel level = a.trace_misses ? TraceLevel::Full : trace ? TraceLevel::Events : TraceLevel::None;
  make_dir(a.out);

  const auto runs = run_many(l.ref, l.spec, a.threads, level);
  std::vector<std::string> outputs{"series.csv"};
  write_text_file(in_dir(a.out, "series.csv"), series_csv(aggregate(runs)));
  if (trace) {
    std::ostringstream s;
    for (std::uint32_t r = 0; r < runs.size(); ++r) write_trace_ndjson(s, *runs[r].state, r);
    write_text_file(in_dir(a.out, "trace.ndjson"), s.str());
    outputs.push_back("trace.ndjson");
  }
  write_text_file(in_dir(a.out, "manifest.json"), pretty(make_run_manifest(l.spec, l.digest, trace, outputs)));
  std::cout << l.digest << "\n";
  return kOk;
}

struct ExperimentArgs {
  std::string recipe, out;
  ExperimentOptions opt;
  std::uint32_t points = 24;
};

std::string layer_table(const std::vector<PointResult>& rs) {
  std::vector<const PointResult*> layers;
  for (const auto& r : rs)
    if (r.point.panel == "layers") layers.push_back(&r);
  std::vector<const PointResult*> order = layers;
  std::stable_sort(order.begin(), order.end(),
                   [](const PointResult* x, const PointResult* y) { return x->pcos100.mean > y->pcos100.mean; });
  std::ostringstream s;
  CsvWriter w(s);
  w.row({"config", "pcos100_rank", "pcos100_mean", "pcos100_std", "pca100_mean", "pca100_std"});
  for (std::size_t i = 0; i < order.size(); ++i)
    w.row({order[i]->point.label, std::to_string(i + 1), format_number(order[i]->pcos100.mean),
           format_number(order[i]->pcos100.std), format_number(order[i]->pca100.mean),
           format_number(order[i]->pca100.std)});
  return s.str();
}

int cmd_experiment(const ExperimentArgs& a) {
  const auto& names = recipe_names();
  if (std::find(names.begin(), names.end(), a.recipe) == names.end()) {
    std::string list;
    for (const auto& n : names) list += (list.empty() ? "" : ", ") + n;
    std::cerr << "error: unknown recipe '" << a.recipe << "'; valid recipes: " << list << "\n";
    return kUsage;
  }
  const auto points = recipe_points(a.recipe, a.opt, a.points);
  make_dir(a.out);
  const auto rs = run_points(points, a.opt.threads);

  write_text_file(in_dir(a.out, "summary.csv"), summary_csv(rs));
  write_text_file(in_dir(a.out, "series.csv"), experiment_series_csv(rs));
  if (a.recipe == "rq2") write_text_file(in_dir(a.out, "layers.csv"), layer_table(rs));
  if (a.recipe == "regression")
    write_text_file(in_dir(a.out, "regression.csv"), regression_csv(export_regression_dataset(rs)));
  write_text_file(in_dir(a.out, "manifest.json"), pretty(experiment_manifest(a.recipe, a.opt, rs)));
  std::cout << summary_csv(rs);
  return kOk;
}

int report(const char* kind, const std::exception& e, int code) {
  std::cerr << "error (" << kind << "): " << e.what() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monte Carlo simulator of software diversity under attack"};
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* g = app.add_subcommand("generate", "Build and validate a scenario's network; write a snapshot and print its digest");
  g->add_option("scenario", gen.input, "Scenario file (JSON)")->required();
  g->add_option("--out,-o", gen.out, "Snapshot file to write")->required();

  RunArgs run;
  auto* r = app.add_subcommand("run", "Run a scenario, snapshot or run manifest");
  r->add_option("input", run.input, "Scenario file, snapshot or manifest.json")->required();
  r->add_option("--out,-o", run.out, "Output directory")->required();
  r->add_option("--seed", run.seed, "Simulation seed");
  r->add_option("--runs", run.runs, "Monte Carlo runs")->check(CLI::PositiveNumber);
  r->add_option("--horizon,-T", run.horizon, "Rounds to simulate")->check(CLI::Range(1, 65534));
  r->add_flag("--trace", run.trace, "Write trace.ndjson with every successful event");
  r->add_flag("--trace-misses", run.trace_misses, "Also trace blocked and failed attempts");
  r->add_option("--threads,-j", run.threads, "Worker threads")->check(CLI::PositiveNumber);

  ExperimentArgs ex;
  auto* e = app.add_subcommand("experiment", "Run an experiment recipe: rq1, rq2, rq3 or regression");
  e->add_option("recipe", ex.recipe, "Recipe name")->required();
  e->add_option("--out,-o", ex.out, "Output directory")->required();
  e->add_option("--runs", ex.opt.runs, "Runs per point")->check(CLI::PositiveNumber);
  e->add_option("--seed", ex.opt.seed, "Simulation seed shared by all points");
  e->add_option("--network-seed", ex.opt.network_seed, "Topology and code seed");
  e->add_option("--subnets", ex.opt.subnet_count, "Client subnets")->check(CLI::PositiveNumber);
  e->add_option("--hosts", ex.opt.hosts_per_subnet, "Hosts per subnet (200 is full scale)")->check(CLI::PositiveNumber);
  e->add_option("--horizon,-T", ex.opt.horizon, "Rounds to simulate")->check(CLI::Range(1, 65534));
  e->add_option("--points", ex.points, "Sample size of the regression recipe")->check(CLI::PositiveNumber);
  e->add_option("--threads,-j", ex.opt.threads, "Worker threads")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& err) {
    return app.exit(err) == 0 ? kOk : kUsage;
  }

  try {
    if (g->parsed()) return cmd_generate(gen);
    if (r->parsed()) return cmd_run(run);
    if (e->parsed()) return cmd_experiment(ex);
  } catch (const SchemaError& err) {
    return report("schema", err, kSchema);
  } catch (const ParameterError& err) {
    return report("parameter", err, kParameter);
  } catch (const InvariantViolation& err) {
    return report("invariant", err, kInvariant);
  } catch (const IoError& err) {
    return report("io", err, kIo);
  } catch (const DomainError& err) {
    return report("parameter", err, kParameter);
  } catch (const TypingError& err) {
    return report("parameter", err, kParameter);
  }
  return kUsage;
}
