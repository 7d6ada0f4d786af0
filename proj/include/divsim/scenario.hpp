#pragma once

// Scenario generation: the reference enterprise network, diversity
// configurations, vulnerability seeding and exploit classes.
//
// Each random decision is keyed (see random.hpp). Topology and code are keyed
// by the network seed; everything drawn per Monte Carlo run takes the run key.

#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "divsim/config.hpp"
#include "divsim/errors.hpp"
#include "divsim/network.hpp"
#include "divsim/random.hpp"
#include "divsim/software.hpp"
#include "divsim/stack.hpp"
#include "divsim/vulnerability.hpp"

namespace divsim {

struct OsSpec {
  std::string name;
  std::uint32_t syscalls = 0;
  std::uint32_t std_functions = 0;
  std::uint32_t other_libs = 0;
  std::uint32_t other_lib_functions = 0;
};

inline std::vector<OsSpec> default_os_catalog() {
  return {{"OS1", 350, 2000, 9, 200}, {"OS2", 1200, 5000, 19, 300}};
}

struct DependenceProbabilities {
  double p_lib_used = 0.5;     // app uses a non-standard library
  double p_fn_called = 0.05;   // app calls a function of a used library
  double p_lib_to_std = 0.05;  // other-library function calls a std function
  double p_lk_std = 0.05;      // std function calls an OS function
  double p_lk_other = 0.01;    // other-library function calls an OS function
  double p_kk = 0.05;          // OS function calls another OS function
};

enum class DiversityConfig : std::uint8_t { C0, C1, C2, C3, C4 };

inline constexpr std::string_view to_string(DiversityConfig c) {
  constexpr std::string_view names[] = {"C0", "C1", "C2", "C3", "C4"};
  return names[static_cast<int>(c)];
}

inline std::optional<DiversityConfig> parse_diversity(std::string_view s) {
  for (int i = 0; i < 5; ++i)
    if (to_string(static_cast<DiversityConfig>(i)) == s) return static_cast<DiversityConfig>(i);
  return std::nullopt;
}

inline bool diversifies(DiversityConfig c, Layer l) {
  switch (c) {
    case DiversityConfig::C0: return false;
    case DiversityConfig::C1: return true;
    case DiversityConfig::C2: return l == Layer::Application;
    case DiversityConfig::C3: return l == Layer::Library;
    case DiversityConfig::C4: return l == Layer::OperatingSystem;
  }
  return false;
}

struct MixEntry {
  std::string family;
  double weight = 1.0;
  friend bool operator==(const MixEntry&, const MixEntry&) = default;
};

enum class AppKind : std::uint8_t { Browser, EmailClient, P2P, WordProcessor, WebServer, EmailServer, Database };

inline constexpr std::string_view kClientApps[] = {"browser", "email_client", "p2p", "word_processor"};

struct ScenarioParams {
  std::uint32_t subnet_count = 10;
  std::uint32_t hosts_per_subnet = 200;
  std::vector<std::string> apps_per_host{"browser", "email_client", "p2p", "word_processor"};
  std::vector<OsSpec> os_catalog = default_os_catalog();
  std::vector<MixEntry> os_mix{{"OS1", 1.0}};
  std::vector<MixEntry> browser_mix{{"browser1", 1.0}};
  DependenceProbabilities deps;
  DiversityConfig diversity = DiversityConfig::C0;
  std::uint32_t N = 1;
  std::map<std::string, std::uint32_t> impl_overrides;
  double zeta = 0.2;
  std::map<Layer, double> zeta_by_layer;
  std::map<std::string, double> zeta_by_family;
  double theta = 0.8;
  double tau = 0.05;
  double cor = 0.0;
  std::uint64_t rng_seed = 1;

  std::uint32_t computer_count() const { return 3 + subnet_count * hosts_per_subnet; }

  void validate() const {
    if (subnet_count < 1) throw ParameterError("subnet_count must be >= 1");
    if (hosts_per_subnet < 1) throw ParameterError("hosts_per_subnet must be >= 1");
    if (static_cast<std::uint64_t>(subnet_count) * hosts_per_subnet > 10'000'000)
      throw ParameterError("network too large");
    if (N < 1) throw ParameterError("N must be >= 1");
    if (apps_per_host.empty()) throw ParameterError("apps_per_host must not be empty");
    std::set<std::string> seen;
    for (const auto& a : apps_per_host) {
      if (std::find(std::begin(kClientApps), std::end(kClientApps), a) == std::end(kClientApps))
        throw ParameterError("unknown client application '" + a + "'");
      if (!seen.insert(a).second) throw ParameterError("application '" + a + "' listed twice");
    }
    if (os_catalog.empty()) throw ParameterError("os_catalog must not be empty");
    std::set<std::string> os_names;
    for (const auto& os : os_catalog) {
      if (os.name.empty() || !os_names.insert(os.name).second) throw ParameterError("OS names must be unique and non-empty");
      if (os.syscalls < 1 || os.std_functions < 1) throw ParameterError("OS '" + os.name + "' needs syscalls and a std library");
      if (os.other_libs > 0 && os.other_lib_functions < 1)
        throw ParameterError("OS '" + os.name + "': libraries need >= 1 function");
      if (os.std_functions > 65535 || os.other_lib_functions > 65535 || os.other_libs > 65534)
        throw ParameterError("OS '" + os.name + "': library layout exceeds 16-bit addressing");
    }
    auto check_mix = [](const std::vector<MixEntry>& mix, const std::string& what, auto known) {
      if (mix.empty()) throw ParameterError(what + " must not be empty");
      double total = 0;
      std::set<std::string> names;
      for (const auto& m : mix) {
        if (!(m.weight >= 0.0) || !std::isfinite(m.weight)) throw ParameterError(what + " weights must be >= 0");
        if (!names.insert(m.family).second) throw ParameterError(what + " lists '" + m.family + "' twice");
        if (!known(m.family)) throw ParameterError(what + " names unknown family '" + m.family + "'");
        total += m.weight;
      }
      if (!(total > 0.0)) throw ParameterError(what + " weights must not all be zero");
    };
    check_mix(os_mix, "os_mix", [&](const std::string& n) { return os_names.contains(n); });
    check_mix(browser_mix, "browser_mix", [&](const std::string& n) {
      static const std::set<std::string> reserved{"email_client", "p2p", "word_processor", "web_server",
                                                  "email_server", "database"};
      return !n.empty() && !reserved.contains(n) && !os_names.contains(n) && n.find('/') == std::string::npos;
    });
    const auto& d = deps;
    for (auto [p, name] : {std::pair{d.p_lib_used, "p_lib_used"}, {d.p_fn_called, "p_fn_called"},
                           {d.p_lib_to_std, "p_lib_to_std"}, {d.p_lk_std, "p_lk_std"},
                           {d.p_lk_other, "p_lk_other"}, {d.p_kk, "p_kk"}})
      check_probability(p, name);
    check_probability(zeta, "zeta");
    for (const auto& [l, z] : zeta_by_layer) check_probability(z, "zeta_by_layer");
    for (const auto& [f, z] : zeta_by_family) check_probability(z, "zeta_by_family." + f);
    check_probability(theta, "theta");
    check_probability(tau, "tau");
    for (const auto& [f, n] : impl_overrides)
      if (n < 1) throw ParameterError("impl_overrides." + f + " must be >= 1");
    check_cor(cor, N);
  }

  static void check_cor(double cor, std::uint32_t n) {
    const double hi = static_cast<double>(n - 1) / static_cast<double>(n);
    if (!(cor >= 0.0 && cor <= hi + 1e-12))
      throw ParameterError("cor must lie in [0, (N-1)/N] = [0, " + std::to_string(hi) + "]");
  }
};

inline std::string lib_family_name(const std::string& os, std::uint32_t slot) {
  return slot == 0 ? os + "/std" : os + "/lib" + std::to_string(slot);
}

namespace detail {

// Calls emit(i) for each i < n selected by independent Bernoulli(p) trials.
template <typename Emit>
void bernoulli_subset(std::mt19937_64& rng, std::uint64_t n, double p, Emit&& emit) {
  std::uint64_t i = geometric_skip(rng, p);
  while (i < n) {
    emit(i);
    const std::uint64_t s = geometric_skip(rng, p);
    if (s >= n - i - 1) break;
    i += s + 1;
  }
}

inline std::size_t pick_mix(const std::vector<MixEntry>& mix, double u) {
  double total = 0;
  for (const auto& m : mix) total += m.weight;
  double acc = 0;
  for (std::size_t i = 0; i < mix.size(); ++i) {
    acc += mix[i].weight / total;
    if (u < acc && mix[i].weight > 0) return i;
  }
  for (std::size_t i = mix.size(); i-- > 0;)
    if (mix[i].weight > 0) return i;
  return 0;
}

}  // namespace detail

// Dependence arcs of every implementation, generated on first use from the
// network seed. Generation is keyed by stream tag and implementation, so
// the same implementation has the same code in every scenario sharing a seed.
class CodeBank {
 public:
  CodeBank(std::shared_ptr<const SoftwareCatalog> sw, DependenceProbabilities deps, std::uint64_t seed,
           std::map<FamilyId, std::vector<FamilyId>> os_libraries)
      : sw_(std::move(sw)), deps_(deps), key_(StreamKey(seed).derive(Purpose::Code)), os_libs_(std::move(os_libraries)) {
    for (const auto& [os, libs] : os_libs_)
      for (std::uint32_t s = 0; s < libs.size(); ++s) lib_home_[libs[s]] = {os, s};
  }

  std::shared_ptr<const OsCode> os(FamilyId f, std::uint32_t impl) {
    std::lock_guard lock(mu_);
    auto& slot = os_[{f, impl}];
    if (!slot) slot = make_os(f, impl);
    return slot;
  }

  std::shared_ptr<const LibraryCode> lib(FamilyId f, std::uint32_t impl) {
    std::lock_guard lock(mu_);
    auto& slot = lib_[{f, impl}];
    if (!slot) slot = make_lib(f, impl);
    return slot;
  }

  std::shared_ptr<const AppCode> app(FamilyId f, std::uint32_t impl, FamilyId os) {
    std::lock_guard lock(mu_);
    auto& slot = app_[{f, impl, os}];
    if (!slot) slot = make_app(f, impl, os);
    return slot;
  }

  const std::vector<FamilyId>& libraries_of(FamilyId os) const { return os_libs_.at(os); }
  ReachCache& reach() { return reach_; }

 private:
  std::mt19937_64 engine(std::initializer_list<std::uint64_t> parts) const {
    StreamKey k = key_;
    for (auto p : parts) k = k.derive(p);
    return k.engine();
  }

  std::shared_ptr<const OsCode> make_os(FamilyId f, std::uint32_t impl) const {
    const auto& fam = sw_->at(f);
    auto rng = engine({fam.stream_tag, impl});
    const std::uint32_t n = fam.function_count;
    auto code = std::make_shared<OsCode>();
    code->function_count = n;
    std::vector<std::uint32_t> row;
    for (std::uint32_t k = 0; k < n; ++k) {
      row.clear();
      detail::bernoulli_subset(rng, n - 1, deps_.p_kk, [&](std::uint64_t j) {
        row.push_back(static_cast<std::uint32_t>(j < k ? j : j + 1));
      });
      code->os_calls.push_row(row);
    }
    return code;
  }

  std::shared_ptr<const LibraryCode> make_lib(FamilyId f, std::uint32_t impl) const {
    const auto& fam = sw_->at(f);
    const auto [os, slot] = lib_home_.at(f);
    const auto& libs = os_libs_.at(os);
    const std::uint32_t std_fns = sw_->at(libs[0]).function_count;
    const std::uint32_t os_fns = sw_->at(os).function_count;
    auto rng = engine({fam.stream_tag, impl});
    auto code = std::make_shared<LibraryCode>();
    code->function_count = fam.function_count;
    std::vector<LibFnRef> lrow;
    std::vector<std::uint32_t> krow;
    for (std::uint32_t fn = 0; fn < fam.function_count; ++fn) {
      lrow.clear();
      krow.clear();
      if (slot != 0)
        detail::bernoulli_subset(rng, std_fns, deps_.p_lib_to_std, [&](std::uint64_t j) {
          lrow.push_back({0, static_cast<std::uint16_t>(j)});
        });
      detail::bernoulli_subset(rng, os_fns, slot == 0 ? deps_.p_lk_std : deps_.p_lk_other,
                               [&](std::uint64_t j) { krow.push_back(static_cast<std::uint32_t>(j)); });
      code->lib_calls.push_row(lrow);
      code->os_calls.push_row(krow);
    }
    return code;
  }

  std::shared_ptr<const AppCode> make_app(FamilyId f, std::uint32_t impl, FamilyId os) const {
    const auto& libs = os_libs_.at(os);
    auto rng = engine({sw_->at(f).stream_tag, impl, sw_->at(os).stream_tag});
    auto code = std::make_shared<AppCode>();
    for (std::uint32_t s = 0; s < libs.size(); ++s) {
      if (s != 0 && !(uniform01(rng) < deps_.p_lib_used)) continue;
      detail::bernoulli_subset(rng, sw_->at(libs[s]).function_count, deps_.p_fn_called, [&](std::uint64_t j) {
        code->lib_calls.push_back({static_cast<std::uint16_t>(s), static_cast<std::uint16_t>(j)});
      });
    }
    return code;
  }

  std::shared_ptr<const SoftwareCatalog> sw_;
  DependenceProbabilities deps_;
  StreamKey key_;
  std::map<FamilyId, std::vector<FamilyId>> os_libs_;
  std::map<FamilyId, std::pair<FamilyId, std::uint32_t>> lib_home_;
  std::mutex mu_;
  std::map<std::pair<FamilyId, std::uint32_t>, std::shared_ptr<const OsCode>> os_;
  std::map<std::pair<FamilyId, std::uint32_t>, std::shared_ptr<const LibraryCode>> lib_;
  std::map<std::tuple<FamilyId, std::uint32_t, FamilyId>, std::shared_ptr<const AppCode>> app_;
  ReachCache reach_;
};

// The generated network with every slot at implementation 0, plus what is
// needed to configure it under a diversity assignment.
struct ReferenceNetwork {
  ScenarioParams params;
  std::shared_ptr<const SoftwareCatalog> software;
  std::map<FamilyId, std::vector<FamilyId>> os_libraries;  // slot order, std library first
  std::map<FamilyId, AppKind> app_kind;
  NetworkGraph graph;
  std::shared_ptr<CodeBank> code;
};

namespace detail {

inline std::shared_ptr<SoftwareCatalog> build_catalog(const ScenarioParams& p,
                                                      std::map<FamilyId, std::vector<FamilyId>>& os_libs,
                                                      std::map<FamilyId, AppKind>& kinds) {
  auto sw = std::make_shared<SoftwareCatalog>();
  auto impls = [&](const std::string& name, Layer l) -> std::uint32_t {
    if (auto it = p.impl_overrides.find(name); it != p.impl_overrides.end()) return it->second;
    return diversifies(p.diversity, l) ? p.N : 1;
  };
  auto add_app = [&](const std::string& name, AppRole role, AppKind kind, std::uint64_t tag) {
    SoftwareFamily f{0, name, Layer::Application, role, 0, impls(name, Layer::Application), tag};
    kinds[sw->add(std::move(f))] = kind;
  };
  // Families that take the same position in a natural-diversity mix share
  // their draw stream across scenarios, so pure and mixed variants are paired.
  for (std::uint32_t i = 0; i < p.browser_mix.size(); ++i)
    add_app(p.browser_mix[i].family, AppRole::Client, AppKind::Browser, StreamKey(fnv1a64("browser")).derive(i).bits());
  add_app("email_client", AppRole::Client, AppKind::EmailClient, fnv1a64("email_client"));
  add_app("p2p", AppRole::Client, AppKind::P2P, fnv1a64("p2p"));
  add_app("word_processor", AppRole::Client, AppKind::WordProcessor, fnv1a64("word_processor"));
  add_app("web_server", AppRole::InternetFacingServer, AppKind::WebServer, fnv1a64("web_server"));
  add_app("email_server", AppRole::InternetFacingServer, AppKind::EmailServer, fnv1a64("email_server"));
  add_app("database", AppRole::InternalServer, AppKind::Database, fnv1a64("database"));

  std::vector<const OsSpec*> order;  // os_mix order first, then the rest
  for (const auto& m : p.os_mix)
    for (const auto& os : p.os_catalog)
      if (os.name == m.family) order.push_back(&os);
  for (const auto& os : p.os_catalog)
    if (std::find(order.begin(), order.end(), &os) == order.end()) order.push_back(&os);
  for (std::uint32_t pos = 0; pos < order.size(); ++pos) {
    const OsSpec& os = *order[pos];
    const StreamKey tag = StreamKey(fnv1a64("os")).derive(pos);
    const FamilyId id = sw->add({0, os.name, Layer::OperatingSystem, std::nullopt, os.syscalls,
                                 impls(os.name, Layer::OperatingSystem), tag.bits()});
    auto& libs = os_libs[id];
    for (std::uint32_t s = 0; s <= os.other_libs; ++s) {
      const std::string name = lib_family_name(os.name, s);
      libs.push_back(sw->add({0, name, Layer::Library, std::nullopt, s == 0 ? os.std_functions : os.other_lib_functions,
                              impls(name, Layer::Library), tag.derive(s + 1).bits()}));
    }
  }
  for (const auto& [name, n] : p.impl_overrides)
    if (!sw->find(name)) throw ParameterError("impl_overrides names unknown family '" + name + "'");
  for (const auto& [name, z] : p.zeta_by_family)
    if (!sw->find(name)) throw ParameterError("zeta_by_family names unknown family '" + name + "'");
  return sw;
}

}  // namespace detail

inline ComputerGraph make_computer(CodeBank& bank, const SoftwareCatalog& sw, std::uint32_t id, FamilyId os,
                                   std::uint32_t os_impl, const std::vector<FamilyId>& apps,
                                   const std::vector<std::uint32_t>& app_impls,
                                   const std::vector<std::uint32_t>& lib_impls) {
  (void)sw;
  ComputerGraph cg;
  cg.id = id;
  cg.os = {os, os_impl, bank.os(os, os_impl)};
  const auto& libs = bank.libraries_of(os);
  for (std::uint32_t s = 0; s < libs.size(); ++s) {
    const std::uint32_t impl = lib_impls.empty() ? 0 : lib_impls[s];
    cg.libs.push_back({libs[s], impl, bank.lib(libs[s], impl)});
  }
  for (std::uint32_t s = 0; s < apps.size(); ++s) {
    const std::uint32_t impl = app_impls.empty() ? 0 : app_impls[s];
    cg.apps.push_back({apps[s], impl, bank.app(apps[s], impl, os)});
  }
  finalize_stack(cg, bank.reach());
  return cg;
}

inline ReferenceNetwork build_reference_network(const ScenarioParams& params) {
  params.validate();
  ReferenceNetwork ref;
  ref.params = params;
  auto sw = detail::build_catalog(params, ref.os_libraries, ref.app_kind);
  ref.software = sw;
  ref.code = std::make_shared<CodeBank>(sw, params.deps, params.rng_seed, ref.os_libraries);
  const StreamKey net_key = StreamKey(params.rng_seed).derive(Purpose::Network);

  std::vector<FamilyId> mix_os;
  for (const auto& m : params.os_mix) mix_os.push_back(sw->require(m.family));
  std::vector<FamilyId> mix_browser;
  for (const auto& m : params.browser_mix) mix_browser.push_back(sw->require(m.family));

  const std::uint32_t n = params.computer_count();
  NetworkGraph& g = ref.graph;
  g.software = sw;
  g.computers.reserve(n);
  g.human_vuln.assign(n, 0);
  g.zone.assign(n, 0);
  for (std::uint32_t c = 0; c < n; ++c) {
    const FamilyId os = mix_os[detail::pick_mix(params.os_mix, net_key.derive(Purpose::OsMix, c).uniform())];
    std::vector<FamilyId> apps;
    if (c < 3) {
      static constexpr const char* servers[] = {"web_server", "email_server", "database"};
      apps.push_back(sw->require(servers[c]));
      g.zone[c] = c < 2 ? kZoneDmz : kZoneDatabase;
    } else {
      for (const auto& a : params.apps_per_host) {
        if (a == "browser")
          apps.push_back(mix_browser[detail::pick_mix(params.browser_mix, net_key.derive(Purpose::BrowserMix, c).uniform())]);
        else
          apps.push_back(sw->require(a));
      }
      g.zone[c] = static_cast<std::int32_t>((c - 3) / params.hosts_per_subnet);
      g.human_vuln[c] = 1;
    }
    g.computers.push_back(make_computer(*ref.code, *sw, c, os, 0, apps, {}, {}));
  }
  g.index_apps();

  // Communication rules of the enterprise network.
  CommunicationBuilder cb(g.app_count());
  const std::uint32_t web = g.global_app(0, 0), mail = g.global_app(1, 0), db = g.global_app(2, 0);
  std::vector<std::uint32_t> mail_clients;
  std::vector<std::vector<std::uint32_t>> p2p_by_subnet(params.subnet_count), wp_by_subnet(params.subnet_count);
  std::vector<std::uint32_t> all_wp;
  for (std::uint32_t c = 3; c < n; ++c) {
    const auto subnet = static_cast<std::uint32_t>(g.zone[c]);
    for (std::uint32_t s = 0; s < g.computers[c].apps.size(); ++s) {
      const std::uint32_t a = g.global_app(c, s);
      cb.set_io(a);
      switch (ref.app_kind.at(g.computers[c].apps[s].family)) {
        case AppKind::Browser:
          cb.add(a, web, Channel::ServerTargeted);
          cb.add(web, a, Channel::ClientTargeted);
          break;
        case AppKind::EmailClient:
          cb.add(a, mail, Channel::ServerTargeted);
          cb.add(mail, a, Channel::ClientTargeted);
          mail_clients.push_back(a);
          break;
        case AppKind::P2P: p2p_by_subnet[subnet].push_back(a); break;
        case AppKind::WordProcessor:
          wp_by_subnet[subnet].push_back(a);
          all_wp.push_back(a);
          break;
        default: break;
      }
    }
  }
  cb.set_oi(web);
  cb.set_oi(mail);
  cb.add(web, db, Channel::ServerTargeted);
  cb.add(db, web, Channel::ServerTargeted);
  auto other_computer = [&](std::uint32_t a, std::uint32_t b) { return g.app_ref(a).computer != g.app_ref(b).computer; };
  for (std::uint32_t a : mail_clients) {
    for (std::uint32_t b : mail_clients)
      if (other_computer(a, b)) cb.add(a, b, Channel::ClientTargeted);
    for (std::uint32_t w : all_wp)  // payload delivered by email
      if (other_computer(a, w)) cb.add(a, w, Channel::ClientTargeted);
  }
  for (std::uint32_t s = 0; s < params.subnet_count; ++s)
    for (std::uint32_t a : p2p_by_subnet[s]) {
      for (std::uint32_t b : p2p_by_subnet[s])
        if (other_computer(a, b)) cb.add(a, b, Channel::ClientTargeted);
      for (std::uint32_t w : wp_by_subnet[s])  // payload delivered by P2P
        if (other_computer(a, w)) cb.add(a, w, Channel::ClientTargeted);
    }
  // Subnets 1<->3 and 2<->8 may talk at computer granularity.
  for (auto [x, y] : {std::pair<std::uint32_t, std::uint32_t>{0, 2}, {1, 7}}) {
    if (y >= params.subnet_count) continue;
    for (std::uint32_t h = 0; h < params.hosts_per_subnet; ++h)
      for (std::uint32_t k = 0; k < params.hosts_per_subnet; ++k) {
        const std::uint32_t cx = 3 + x * params.hosts_per_subnet + h, cy = 3 + y * params.hosts_per_subnet + k;
        for (std::uint32_t i = g.app_offset[cx]; i < g.app_offset[cx + 1]; ++i)
          for (std::uint32_t j = g.app_offset[cy]; j < g.app_offset[cy + 1]; ++j) {
            cb.add(i, j, Channel::ClientTargeted);
            cb.add(j, i, Channel::ClientTargeted);
          }
      }
  }
  g.comm = cb.build();

  if (auto issues = validate_network(g); !issues.empty())
    throw InvariantViolation("generated network is invalid: " + issues.front());
  return ref;
}

// The configuration C: one implementation index per app, library and OS slot.
struct DiversityAssignment {
  std::vector<std::uint32_t> os;
  std::vector<std::vector<std::uint32_t>> apps;
  std::vector<std::vector<std::uint32_t>> libs;
  friend bool operator==(const DiversityAssignment&, const DiversityAssignment&) = default;
};

// Each slot of a family with N implementations draws uniformly from 0..N-1;
// single-implementation families pin index 0.
inline DiversityAssignment apply_diversity(const ReferenceNetwork& ref, StreamKey run_key) {
  const auto& sw = *ref.software;
  const StreamKey key = run_key.derive(Purpose::Diversity);
  auto draw = [&](FamilyId f, std::uint64_t c, std::uint64_t layer, std::uint64_t slot) -> std::uint32_t {
    const std::uint32_t n = sw.at(f).impl_count;
    if (n <= 1) return 0;
    const auto i = static_cast<std::uint32_t>(key.derive(c, layer, slot).uniform() * n);
    return std::min(i, n - 1);
  };
  DiversityAssignment a;
  const auto& comps = ref.graph.computers;
  a.os.resize(comps.size());
  a.apps.resize(comps.size());
  a.libs.resize(comps.size());
  for (std::uint32_t c = 0; c < comps.size(); ++c) {
    a.os[c] = draw(comps[c].os.family, c, 2, 0);
    for (std::uint32_t s = 0; s < comps[c].libs.size(); ++s) a.libs[c].push_back(draw(comps[c].libs[s].family, c, 1, s));
    for (std::uint32_t s = 0; s < comps[c].apps.size(); ++s) a.apps[c].push_back(draw(comps[c].apps[s].family, c, 0, s));
  }
  return a;
}

// Configures the software stacks of the reference network according to C.
inline NetworkGraph configure(const ReferenceNetwork& ref, const DiversityAssignment& a) {
  const auto& comps = ref.graph.computers;
  if (a.os.size() != comps.size() || a.apps.size() != comps.size() || a.libs.size() != comps.size())
    throw DomainError("diversity assignment does not match the network");
  NetworkGraph net;
  net.software = ref.graph.software;
  net.comm = ref.graph.comm;
  net.human_vuln = ref.graph.human_vuln;
  net.zone = ref.graph.zone;
  net.app_offset = ref.graph.app_offset;
  net.computers.reserve(comps.size());
  const auto& sw = *ref.software;
  for (std::uint32_t c = 0; c < comps.size(); ++c) {
    const auto& base = comps[c];
    if (a.apps[c].size() != base.apps.size() || a.libs[c].size() != base.libs.size())
      throw DomainError("diversity assignment does not match computer " + std::to_string(c));
    auto in_range = [&](FamilyId f, std::uint32_t i) {
      if (i >= sw.at(f).impl_count) throw DomainError("implementation index out of range for '" + sw.at(f).name + "'");
    };
    in_range(base.os.family, a.os[c]);
    std::vector<FamilyId> apps;
    for (std::uint32_t s = 0; s < base.apps.size(); ++s) {
      in_range(base.apps[s].family, a.apps[c][s]);
      apps.push_back(base.apps[s].family);
    }
    for (std::uint32_t s = 0; s < base.libs.size(); ++s) in_range(base.libs[s].family, a.libs[c][s]);
    net.computers.push_back(make_computer(*ref.code, sw, c, base.os.family, a.os[c], apps, a.apps[c], a.libs[c]));
  }
  return net;
}

inline double resolve_zeta(const ScenarioParams& p, const SoftwareFamily& f) {
  if (auto it = p.zeta_by_family.find(f.name); it != p.zeta_by_family.end()) return it->second;
  if (auto it = p.zeta_by_layer.find(f.layer); it != p.zeta_by_layer.end()) return it->second;
  return p.zeta;
}

// One draw per deployed implementation: vulnerable with probability zeta, at
// a uniformly chosen function, with loc ~ theta and zd ~ tau.
using DeployedSet = std::set<std::pair<FamilyId, std::uint32_t>>;

inline DeployedSet deployed_implementations(const NetworkGraph& net) {
  DeployedSet d;
  for (const auto& cg : net.computers) {
    d.insert({cg.os.family, cg.os.impl});
    for (const auto& l : cg.libs) d.insert({l.family, l.impl});
    for (const auto& a : cg.apps) d.insert({a.family, a.impl});
  }
  return d;
}

// Without configuring stacks; used where only the catalog matters.
inline DeployedSet deployed_implementations(const ReferenceNetwork& ref, const DiversityAssignment& a) {
  DeployedSet d;
  const auto& comps = ref.graph.computers;
  for (std::uint32_t c = 0; c < comps.size(); ++c) {
    d.insert({comps[c].os.family, a.os[c]});
    for (std::uint32_t s = 0; s < comps[c].libs.size(); ++s) d.insert({comps[c].libs[s].family, a.libs[c][s]});
    for (std::uint32_t s = 0; s < comps[c].apps.size(); ++s) d.insert({comps[c].apps[s].family, a.apps[c][s]});
  }
  return d;
}

inline VulnCatalog seed_vulnerabilities(const DeployedSet& deployed, const SoftwareCatalog& sw, const ScenarioParams& p,
                                        StreamKey run_key) {
  const StreamKey key = run_key.derive(Purpose::Vulnerability);
  VulnCatalog cat;
  for (const auto& [f, impl] : deployed) {
    const auto& fam = sw.at(f);
    const StreamKey k = key.derive(fam.stream_tag, impl);
    if (!(k.derive(0).uniform() < resolve_zeta(p, fam))) continue;
    VulnRecord r;
    r.layer = fam.layer;
    r.host = {f, impl, 0};
    if (fam.layer != Layer::Application)
      r.host.function = std::min(static_cast<std::uint32_t>(k.derive(1).uniform() * fam.function_count), fam.function_count - 1);
    r.loc = k.derive(2).uniform() < p.theta;
    r.zd = k.derive(3).uniform() < p.tau;
    r.priv = fam.layer == Layer::OperatingSystem;
    cat.add(r);
  }
  return cat;
}

inline VulnCatalog seed_vulnerabilities(const NetworkGraph& net, const ScenarioParams& p, StreamKey run_key) {
  return seed_vulnerabilities(deployed_implementations(net), *net.software, p, run_key);
}

inline std::uint32_t exploit_class_count(std::uint32_t n, double cor) {
  return std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::lround(n * (1.0 - cor))));
}

// M = max(1, round(N (1 - cor))) classes per family. The N implementations
// are dealt into the classes in a keyed random order (rank mod M), so each
// one's class is uniform, every class is used once all are vulnerable, and
// cor = 0 gives each vulnerability its own class.
inline VulnCatalog assign_exploit_classes(VulnCatalog cat, const SoftwareCatalog& sw, std::uint32_t n, double cor,
                                          StreamKey run_key) {
  ScenarioParams::check_cor(cor, n);
  const StreamKey key = run_key.derive(Purpose::ExploitClass);
  for (const auto& f : sw.families()) cat.set_class_count(f.id, exploit_class_count(f.impl_count, cor));
  std::map<FamilyId, std::vector<std::uint32_t>> rank;  // impl -> position in the dealing order
  for (const auto& r : cat.records()) {
    const auto& fam = sw.at(r.host.family);
    auto [it, fresh] = rank.try_emplace(fam.id);
    if (fresh) {
      std::vector<std::pair<double, std::uint32_t>> order;
      for (std::uint32_t i = 0; i < fam.impl_count; ++i) order.push_back({key.derive(fam.stream_tag, i).uniform(), i});
      std::sort(order.begin(), order.end());
      it->second.resize(fam.impl_count);
      for (std::uint32_t pos = 0; pos < order.size(); ++pos) it->second[order[pos].second] = pos;
    }
    cat.mutable_record(r.id).exploit_class = it->second.at(r.host.impl) % cat.class_count(fam.id);
  }
  return cat;
}

inline std::vector<std::uint64_t> nonempty_classes(const VulnCatalog& cat) {
  std::vector<std::uint64_t> keys;
  for (const auto& r : cat.records()) keys.push_back(class_key(r.host.family, r.exploit_class));
  std::sort(keys.begin(), keys.end());
  keys.erase(std::unique(keys.begin(), keys.end()), keys.end());
  return keys;
}

inline std::size_t ceil_count(double fraction, std::size_t total) {
  return static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total) - 1e-9));
}

namespace detail {

// Keeps the `count` classes with the smallest keyed priority, so selections
// for a larger count contain those for a smaller one.
inline std::vector<std::uint64_t> lowest_priority(std::vector<std::uint64_t> classes, std::size_t count,
                                                  const SoftwareCatalog& sw, StreamKey key) {
  std::vector<std::pair<double, std::uint64_t>> pri;
  for (auto c : classes)
    pri.push_back({key.derive(sw.at(static_cast<FamilyId>(c >> 32)).stream_tag, c & 0xffffffffU).uniform(), c});
  std::sort(pri.begin(), pri.end());
  std::vector<std::uint64_t> out;
  for (std::size_t i = 0; i < std::min(count, pri.size()); ++i) out.push_back(pri[i].second);
  return out;
}

}  // namespace detail

// ceil(cap * K) of the K nonempty exploit classes, uniformly at random.
inline ExploitSet select_attacker_exploits(const VulnCatalog& cat, const SoftwareCatalog& sw, double cap,
                                           StreamKey run_key) {
  check_probability(cap, "cap");
  auto classes = nonempty_classes(cat);
  const std::size_t k = ceil_count(cap, classes.size());
  return ExploitSet(detail::lowest_priority(std::move(classes), k, sw, run_key.derive(Purpose::ExploitSelect)));
}

// A fixed number of exploit classes per family (all of them if fewer are
// nonempty).
inline ExploitSet select_exploits_per_family(const VulnCatalog& cat, const SoftwareCatalog& sw, std::uint32_t per_family,
                                             StreamKey run_key) {
  std::map<FamilyId, std::vector<std::uint64_t>> by_family;
  for (auto c : nonempty_classes(cat)) by_family[static_cast<FamilyId>(c >> 32)].push_back(c);
  std::vector<std::uint64_t> held;
  for (auto& [f, classes] : by_family) {
    auto pick = detail::lowest_priority(std::move(classes), per_family, sw, run_key.derive(Purpose::ExploitSelect));
    held.insert(held.end(), pick.begin(), pick.end());
  }
  return ExploitSet(std::move(held));
}

}  // namespace divsim
