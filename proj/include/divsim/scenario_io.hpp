#pragma once

// Scenario files (JSON), digests, snapshots, and the CSV / NDJSON writers.
//
// A scenario file has six optional sections: network, diversity,
// vulnerabilities, defenses, attacker, simulation. Missing keys keep their
// defaults, unknown keys are rejected. docs/scenario_schema.md lists them.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"

#include "divsim/engine.hpp"
#include "divsim/errors.hpp"
#include "divsim/scenario.hpp"
#include "divsim/simulation.hpp"

namespace divsim {

using Json = nlohmann::ordered_json;

namespace detail {

inline std::string json_type(const Json& j) { return j.type_name(); }

// Pulls typed fields out of one JSON object and rejects keys nobody asked for.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw SchemaError(path_, "expected an object, got " + json_type(j_));
  }

  const Json* get(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string at(const std::string& key) const { return path_ + "/" + key; }

  void number(const std::string& key, double& out) {
    if (const Json* v = get(key)) {
      if (!v->is_number()) throw SchemaError(at(key), "expected a number, got " + json_type(*v));
      out = v->get<double>();
      if (!std::isfinite(out)) throw SchemaError(at(key), "expected a finite number");
    }
  }

  void probability(const std::string& key, double& out) {
    number(key, out);
    if (j_.contains(key) && !(out >= 0.0 && out <= 1.0)) throw SchemaError(at(key), "must lie in [0, 1]");
  }

  template <typename U>
  void count(const std::string& key, U& out) {
    if (const Json* v = get(key)) out = unsigned_of<U>(*v, at(key));
  }

  void string(const std::string& key, std::string& out) {
    if (const Json* v = get(key)) {
      if (!v->is_string()) throw SchemaError(at(key), "expected a string, got " + json_type(*v));
      out = v->get<std::string>();
    }
  }

  template <typename U>
  static U unsigned_of(const Json& v, const std::string& path) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
      throw SchemaError(path, "expected a non-negative integer, got " + (v.is_number() ? v.dump() : json_type(v)));
    const auto x = v.get<std::uint64_t>();
    if (x > std::numeric_limits<U>::max()) throw SchemaError(path, "integer out of range");
    return static_cast<U>(x);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.contains(it.key())) throw SchemaError(at(it.key()), "unknown key");
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline Policy parse_policy(const Json& v, const std::string& path) {
  if (v == "tight") return Policy::Tight;
  if (v == "loose") return Policy::Loose;
  throw SchemaError(path, "expected \"tight\" or \"loose\"");
}

inline std::vector<MixEntry> parse_mix(const Json& v, const std::string& path) {
  if (!v.is_array()) throw SchemaError(path, "expected an array of {family, weight}");
  std::vector<MixEntry> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    ObjectReader r(v[i], path + "/" + std::to_string(i));
    MixEntry m;
    m.family.clear();
    r.string("family", m.family);
    if (m.family.empty()) throw SchemaError(r.at("family"), "required");
    r.number("weight", m.weight);
    if (m.weight < 0) throw SchemaError(r.at("weight"), "must be >= 0");
    r.finish();
    out.push_back(m);
  }
  return out;
}

inline Json mix_json(const std::vector<MixEntry>& mix) {
  Json a = Json::array();
  for (const auto& m : mix) a.push_back({{"family", m.family}, {"weight", m.weight}});
  return a;
}

}  // namespace detail

inline ScenarioSpec parse_scenario(const Json& doc) {
  using detail::ObjectReader;
  ScenarioSpec spec;
  ScenarioParams& p = spec.network;
  ObjectReader top(doc, "");

  if (const Json* j = top.get("network")) {
    ObjectReader r(*j, "/network");
    r.count("subnet_count", p.subnet_count);
    r.count("hosts_per_subnet", p.hosts_per_subnet);
    if (const Json* a = r.get("apps_per_host")) {
      if (!a->is_array()) throw SchemaError(r.at("apps_per_host"), "expected an array of strings");
      p.apps_per_host.clear();
      for (std::size_t i = 0; i < a->size(); ++i) {
        if (!(*a)[i].is_string()) throw SchemaError(r.at("apps_per_host") + "/" + std::to_string(i), "expected a string");
        p.apps_per_host.push_back((*a)[i].get<std::string>());
      }
    }
    if (const Json* a = r.get("os_catalog")) {
      if (!a->is_array()) throw SchemaError(r.at("os_catalog"), "expected an array");
      p.os_catalog.clear();
      for (std::size_t i = 0; i < a->size(); ++i) {
        ObjectReader o((*a)[i], r.at("os_catalog") + "/" + std::to_string(i));
        OsSpec os;
        o.string("name", os.name);
        o.count("syscalls", os.syscalls);
        o.count("std_functions", os.std_functions);
        o.count("other_libs", os.other_libs);
        o.count("other_lib_functions", os.other_lib_functions);
        o.finish();
        p.os_catalog.push_back(os);
      }
    }
    if (const Json* a = r.get("os_mix")) p.os_mix = detail::parse_mix(*a, r.at("os_mix"));
    if (const Json* a = r.get("browser_mix")) p.browser_mix = detail::parse_mix(*a, r.at("browser_mix"));
    if (const Json* d = r.get("dependence")) {
      ObjectReader o(*d, r.at("dependence"));
      o.probability("p_lib_used", p.deps.p_lib_used);
      o.probability("p_fn_called", p.deps.p_fn_called);
      o.probability("p_lib_to_std", p.deps.p_lib_to_std);
      o.probability("p_lk_std", p.deps.p_lk_std);
      o.probability("p_lk_other", p.deps.p_lk_other);
      o.probability("p_kk", p.deps.p_kk);
      o.finish();
    }
    r.count("seed", p.rng_seed);
    r.finish();
  }

  if (const Json* j = top.get("diversity")) {
    ObjectReader r(*j, "/diversity");
    if (const Json* c = r.get("config")) {
      const auto d = c->is_string() ? parse_diversity(c->get<std::string>()) : std::nullopt;
      if (!d) throw SchemaError(r.at("config"), "expected one of C0, C1, C2, C3, C4");
      p.diversity = *d;
    }
    r.count("N", p.N);
    if (const Json* o = r.get("impl_overrides")) {
      if (!o->is_object()) throw SchemaError(r.at("impl_overrides"), "expected an object");
      for (auto it = o->begin(); it != o->end(); ++it)
        p.impl_overrides[it.key()] =
            ObjectReader::unsigned_of<std::uint32_t>(it.value(), r.at("impl_overrides") + "/" + it.key());
    }
    r.finish();
  }

  if (const Json* j = top.get("vulnerabilities")) {
    ObjectReader r(*j, "/vulnerabilities");
    r.probability("zeta", p.zeta);
    if (const Json* o = r.get("zeta_by_layer")) {
      ObjectReader lr(*o, r.at("zeta_by_layer"));
      for (Layer l : {Layer::Application, Layer::Library, Layer::OperatingSystem}) {
        const std::string k(to_string(l));
        if (o->contains(k)) {
          double z = 0;
          lr.probability(k, z);
          p.zeta_by_layer[l] = z;
        }
      }
      lr.finish();
    }
    if (const Json* o = r.get("zeta_by_family")) {
      if (!o->is_object()) throw SchemaError(r.at("zeta_by_family"), "expected an object");
      ObjectReader fr(*o, r.at("zeta_by_family"));
      for (auto it = o->begin(); it != o->end(); ++it) fr.probability(it.key(), p.zeta_by_family[it.key()]);
    }
    r.probability("theta", p.theta);
    r.probability("tau", p.tau);
    r.probability("cor", p.cor);
    r.finish();
  }

  if (const Json* j = top.get("defenses")) {
    ObjectReader r(*j, "/defenses");
    if (const Json* v = r.get("nips")) spec.defense.nips = detail::parse_policy(*v, r.at("nips"));
    if (const Json* v = r.get("hips")) spec.defense.hips = detail::parse_policy(*v, r.at("hips"));
    r.probability("gamma", spec.defense.gamma);
    r.probability("alpha", spec.defense.alpha);
    r.finish();
  }

  if (const Json* j = top.get("attacker")) {
    ObjectReader r(*j, "/attacker");
    r.probability("cap", spec.cap);
    r.probability("omega", spec.omega);
    if (const Json* v = r.get("exploits_per_family"); v && !v->is_null())
      spec.exploits_per_family = ObjectReader::unsigned_of<std::uint32_t>(*v, r.at("exploits_per_family"));
    r.finish();
  }

  if (const Json* j = top.get("simulation")) {
    ObjectReader r(*j, "/simulation");
    r.count("T", spec.simulation.horizon);
    r.count("runs", spec.simulation.runs);
    r.count("seed", spec.simulation.seed);
    r.finish();
  }
  top.finish();
  return spec;
}

// Every field, in a fixed order; parse_scenario(to_json(s)) == s.
inline Json to_json(const ScenarioSpec& spec) {
  const ScenarioParams& p = spec.network;
  Json os = Json::array();
  for (const auto& o : p.os_catalog)
    os.push_back({{"name", o.name},
                  {"syscalls", o.syscalls},
                  {"std_functions", o.std_functions},
                  {"other_libs", o.other_libs},
                  {"other_lib_functions", o.other_lib_functions}});
  Json overrides = Json::object();
  for (const auto& [k, v] : p.impl_overrides) overrides[k] = v;
  Json zl = Json::object();
  for (const auto& [l, z] : p.zeta_by_layer) zl[std::string(to_string(l))] = z;
  Json zf = Json::object();
  for (const auto& [f, z] : p.zeta_by_family) zf[f] = z;
  Json doc;
  doc["network"] = {{"subnet_count", p.subnet_count},
                    {"hosts_per_subnet", p.hosts_per_subnet},
                    {"apps_per_host", p.apps_per_host},
                    {"os_catalog", os},
                    {"os_mix", detail::mix_json(p.os_mix)},
                    {"browser_mix", detail::mix_json(p.browser_mix)},
                    {"dependence",
                     {{"p_lib_used", p.deps.p_lib_used},
                      {"p_fn_called", p.deps.p_fn_called},
                      {"p_lib_to_std", p.deps.p_lib_to_std},
                      {"p_lk_std", p.deps.p_lk_std},
                      {"p_lk_other", p.deps.p_lk_other},
                      {"p_kk", p.deps.p_kk}}},
                    {"seed", p.rng_seed}};
  doc["diversity"] = {{"config", std::string(to_string(p.diversity))}, {"N", p.N}, {"impl_overrides", overrides}};
  doc["vulnerabilities"] = {{"zeta", p.zeta}, {"zeta_by_layer", zl}, {"zeta_by_family", zf},
                            {"theta", p.theta}, {"tau", p.tau}, {"cor", p.cor}};
  doc["defenses"] = {{"nips", std::string(to_string(spec.defense.nips))},
                     {"hips", std::string(to_string(spec.defense.hips))},
                     {"gamma", spec.defense.gamma},
                     {"alpha", spec.defense.alpha}};
  doc["attacker"] = {{"cap", spec.cap},
                     {"omega", spec.omega},
                     {"exploits_per_family", spec.exploits_per_family ? Json(*spec.exploits_per_family) : Json()}};
  doc["simulation"] = {{"T", spec.simulation.horizon}, {"runs", spec.simulation.runs}, {"seed", spec.simulation.seed}};
  return doc;
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw SchemaError("", std::string("malformed JSON: ") + e.what());
  }
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

// Hash of the generated network: stacks, code and communication.
inline std::uint64_t graph_hash(const NetworkGraph& net) {
  std::uint64_t h = splitmix64(0xd16e57);
  auto mix = [&h](std::uint64_t v) { h = splitmix64(h ^ v); };
  auto mix_csr = [&](const auto& g, auto key) {
    mix(g.rows());
    for (auto o : g.offsets()) mix(o);
    for (const auto& t : g.targets()) mix(key(t));
  };
  auto id = [](std::uint32_t x) { return std::uint64_t{x}; };
  auto lref = [](LibFnRef r) { return std::uint64_t{r.slot} << 16 | r.function; };
  std::unordered_map<const void*, std::uint64_t> seen;  // code block -> ordinal
  auto code = [&](const void* p, auto&& body) {
    auto [it, fresh] = seen.emplace(p, seen.size());
    mix(it->second);
    if (fresh) body();
  };
  mix(net.computers.size());
  for (const auto& cg : net.computers) {
    mix(cg.os.family);
    mix(cg.os.impl);
    code(cg.os.code.get(), [&] {
      mix(cg.os.code->function_count);
      mix_csr(cg.os.code->os_calls, id);
    });
    mix(cg.libs.size());
    for (const auto& l : cg.libs) {
      mix(l.family);
      mix(l.impl);
      code(l.code.get(), [&] {
        mix(l.code->function_count);
        mix_csr(l.code->lib_calls, lref);
        mix_csr(l.code->os_calls, id);
      });
    }
    mix(cg.apps.size());
    for (const auto& a : cg.apps) {
      mix(a.family);
      mix(a.impl);
      code(a.code.get(), [&] {
        mix(a.code->lib_calls.size());
        for (auto r : a.code->lib_calls) mix(lref(r));
        mix(a.code->os_calls.size());
        for (auto k : a.code->os_calls) mix(k);
      });
    }
  }
  for (auto z : net.zone) mix(static_cast<std::uint64_t>(static_cast<std::int64_t>(z)));
  for (auto v : net.human_vuln) mix(v);
  mix_csr(net.comm->e00, id);
  mix_csr(net.comm->e01, id);
  for (auto v : net.comm->e_io) mix(v);
  for (auto v : net.comm->e_oi) mix(v);
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static const char* d = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = d[v & 15];
  return s;
}

// Identifies the scenario up to its simulation settings.
inline std::string scenario_digest(const ScenarioSpec& spec, const ReferenceNetwork& ref) {
  Json doc = to_json(spec);
  doc.erase("simulation");
  const std::uint64_t a = fnv1a64(doc.dump());
  const std::uint64_t b = graph_hash(ref.graph);
  return hex64(a) + hex64(splitmix64(a ^ b));
}

inline Json network_summary(const ReferenceNetwork& ref) {
  const auto& g = ref.graph;
  Json fams = Json::object();
  std::map<std::string, std::uint64_t> counts;
  for (const auto& cg : g.computers) {
    ++counts[ref.software->at(cg.os.family).name];
    for (const auto& a : cg.apps) ++counts[ref.software->at(a.family).name];
  }
  for (const auto& [k, v] : counts) fams[k] = v;
  std::uint64_t nodes = 0;
  for (const auto& cg : g.computers) nodes += cg.node_count();
  return {{"computers", g.computer_count()},
          {"applications", g.app_count()},
          {"stack_nodes", nodes},
          {"e00_arcs", g.comm->e00.arcs()},
          {"e01_arcs", g.comm->e01.arcs()},
          {"deployments", fams}};
}

inline constexpr std::string_view kSnapshotFormat = "divsim-snapshot/1";
inline constexpr std::string_view kRunManifestFormat = "divsim-run/1";

// The generator is deterministic, so a snapshot stores the scenario and the
// digest of what it produced; loading regenerates and checks the digest.
inline Json make_snapshot(const ScenarioSpec& spec, const ReferenceNetwork& ref) {
  return {{"format", kSnapshotFormat},
          {"digest", scenario_digest(spec, ref)},
          {"scenario", to_json(spec)},
          {"summary", network_summary(ref)}};
}

// Written next to the outputs of a run; feeding it back as the input
// reproduces them.
inline Json make_run_manifest(const ScenarioSpec& spec, const std::string& digest, bool trace,
                              const std::vector<std::string>& outputs) {
  return {{"format", kRunManifestFormat},
          {"digest", digest},
          {"scenario", to_json(spec)},
          {"trace", trace},
          {"outputs", outputs}};
}

inline bool is_snapshot(const Json& doc) { return doc.is_object() && doc.contains("format") && doc.contains("scenario"); }

struct LoadedScenario {
  ScenarioSpec spec;
  std::optional<std::string> expected_digest;
  bool trace = false;  // set by run manifests
};

// Accepts a scenario file, a snapshot or a run manifest.
inline LoadedScenario load_scenario(const Json& doc) {
  if (!is_snapshot(doc)) return {parse_scenario(doc), std::nullopt};
  detail::ObjectReader r(doc, "");
  std::string fmt, digest;
  r.string("format", fmt);
  LoadedScenario out;
  if (fmt == kSnapshotFormat) {
    r.get("summary");
  } else if (fmt == kRunManifestFormat) {
    r.get("outputs");
    if (const Json* t = r.get("trace")) {
      if (!t->is_boolean()) throw SchemaError("/trace", "expected a boolean");
      out.trace = t->get<bool>();
    }
  } else {
    throw SchemaError("/format", "unsupported format '" + fmt + "'");
  }
  r.string("digest", digest);
  const Json* sc = r.get("scenario");
  r.finish();
  out.spec = parse_scenario(*sc);
  out.expected_digest = digest;
  return out;
}

// CSV, RFC 4180: fields with a comma, quote or line break are quoted.
inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

inline std::string format_number(double v) {
  if (v == 0.0) return "0";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

class CsvWriter {
 public:
  explicit CsvWriter(std::ostream& out) : out_(out) {}
  void row(const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out_ << ',';
      out_ << csv_field(fields[i]);
    }
    out_ << "\r\n";
  }

 private:
  std::ostream& out_;
};

inline std::string series_csv(const MetricSeries& m) {
  std::ostringstream s;
  CsvWriter w(s);
  w.row({"t", "pca_mean", "pca_std", "pcos_mean", "pcos_std"});
  for (std::size_t t = 0; t < m.pca.size(); ++t)
    w.row({std::to_string(t), format_number(m.pca[t]), format_number(m.pca_std[t]), format_number(m.pcos[t]),
           format_number(m.pcos_std[t])});
  return s.str();
}

inline Json event_json(const AttackEvent& e, std::uint32_t run) {
  Json j = {{"run", run}, {"round", e.round}, {"kind", std::string(to_string(e.kind))}};
  j["source"] = e.source ? Json(to_string(*e.source)) : Json();
  j["target"] = to_string(e.target);
  j["vuln"] = e.vuln ? Json(*e.vuln) : Json();
  j["channel"] = e.channel ? Json(std::string(to_string(*e.channel))) : Json();
  j["gated"] = e.gated;
  j["blocked"] = e.blocked;
  j["block_reason"] = e.block_reason ? Json(std::string(to_string(*e.block_reason))) : Json();
  return j;
}

inline void write_trace_ndjson(std::ostream& out, const SimulationState& st, std::uint32_t run) {
  for (const auto& e : st.trace) out << event_json(e, run).dump() << '\n';
}

}  // namespace divsim
