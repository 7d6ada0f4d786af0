#pragma once

// Hand-built networks and brute-force reference implementations shared by
// the unit tests and the acceptance runner. The oracles here deliberately
// avoid the closures and indexes the engine uses.

#include <algorithm>
#include <deque>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "divsim/divsim.hpp"

namespace fx {

using namespace divsim;

// --- hand-built stacks ----------------------------------------------------------

struct Built {
  std::shared_ptr<SoftwareCatalog> sw;
  NetworkGraph net;
  std::shared_ptr<ReachCache> cache = std::make_shared<ReachCache>();
};

inline std::shared_ptr<OsCode> os_code(std::uint32_t n, const std::vector<std::pair<std::uint32_t, std::uint32_t>>& kk) {
  std::vector<std::vector<std::uint32_t>> rows(n);
  for (auto [a, b] : kk) rows.at(a).push_back(b);
  auto c = std::make_shared<OsCode>();
  c->function_count = n;
  c->os_calls = Csr<std::uint32_t>(rows);
  c->os_calls.normalize();
  return c;
}

inline std::shared_ptr<LibraryCode> lib_code(std::uint32_t n, const std::vector<std::pair<std::uint32_t, LibFnRef>>& ll,
                                             const std::vector<std::pair<std::uint32_t, std::uint32_t>>& lk) {
  std::vector<std::vector<LibFnRef>> lrows(n);
  std::vector<std::vector<std::uint32_t>> krows(n);
  for (auto [a, b] : ll) lrows.at(a).push_back(b);
  for (auto [a, b] : lk) krows.at(a).push_back(b);
  auto c = std::make_shared<LibraryCode>();
  c->function_count = n;
  c->lib_calls = Csr<LibFnRef>(lrows);
  c->lib_calls.normalize();
  c->os_calls = Csr<std::uint32_t>(krows);
  c->os_calls.normalize();
  return c;
}

inline std::shared_ptr<AppCode> app_code(std::vector<LibFnRef> al, std::vector<std::uint32_t> ak = {}) {
  auto c = std::make_shared<AppCode>();
  c->lib_calls = std::move(al);
  c->os_calls = std::move(ak);
  return c;
}

// Finishes a network whose computers are filled in: indexes, closures and
// an empty communication relation unless one is given.
inline void finish(Built& b, std::shared_ptr<const Communication> comm = nullptr) {
  b.net.software = b.sw;
  for (std::uint32_t c = 0; c < b.net.computers.size(); ++c) {
    b.net.computers[c].id = c;
    finalize_stack(b.net.computers[c], *b.cache);
  }
  b.net.index_apps();
  if (b.net.human_vuln.size() != b.net.computers.size()) b.net.human_vuln.assign(b.net.computers.size(), 1);
  if (b.net.zone.size() != b.net.computers.size()) b.net.zone.assign(b.net.computers.size(), 0);
  if (!comm) comm = CommunicationBuilder(b.net.app_count()).build();
  b.net.comm = std::move(comm);
}

// The toy computer with three applications, three libraries (3, 2 and 2
// functions) and ten kernel functions. Indices are zero-based, so f_{i,1,2}
// is lib slot 0 function 1 and k_{i,5} is OS function 4.
inline Built fig2() {
  Built b;
  b.sw = std::make_shared<SoftwareCatalog>();
  std::vector<FamilyId> apps, libs;
  for (int i = 1; i <= 3; ++i)
    apps.push_back(b.sw->add({0, "app" + std::to_string(i), Layer::Application, AppRole::Client, 0, 1, 0}));
  const std::uint32_t sizes[] = {3, 2, 2};
  for (int i = 0; i < 3; ++i)
    libs.push_back(b.sw->add({0, "lib" + std::to_string(i + 1), Layer::Library, std::nullopt, sizes[i], 1, 0}));
  const FamilyId os = b.sw->add({0, "os", Layer::OperatingSystem, std::nullopt, 10, 1, 0});

  ComputerGraph cg;
  cg.os = {os, 0, os_code(10, {{3, 0}, {7, 9}})};                             // (k4,k1), (k8,k10)
  cg.libs.push_back({libs[0], 0, lib_code(3, {}, {{1, 0}})});                // (f12,k1)
  cg.libs.push_back({libs[1], 0, lib_code(2, {}, {{1, 4}})});                // (f22,k5)
  cg.libs.push_back({libs[2], 0, lib_code(2, {{0, LibFnRef{1, 1}}}, {})});  // (f31,f22)
  cg.apps.push_back({apps[0], 0, app_code({{0, 0}, {0, 1}})});
  cg.apps.push_back({apps[1], 0, app_code({{0, 1}, {1, 1}}, {2})});  // E_ak: (app2,k3)
  cg.apps.push_back({apps[2], 0, app_code({{2, 0}, {2, 1}})});
  b.net.computers.push_back(std::move(cg));
  finish(b);
  return b;
}

// --- brute-force reachability -------------------------------------------------

inline std::map<NodeId, std::vector<NodeId>> adjacency(const ComputerGraph& cg) {
  std::map<NodeId, std::vector<NodeId>> adj;
  cg.for_each_arc([&](const NodeId& a, const NodeId& b) { adj[a].push_back(b); });
  return adj;
}

// Nodes reachable from `from` by a path of length >= 1.
inline std::set<NodeId> bfs_reach(const std::map<NodeId, std::vector<NodeId>>& adj, const NodeId& from) {
  std::set<NodeId> seen;
  std::deque<NodeId> q;
  auto push_succ = [&](const NodeId& n) {
    auto it = adj.find(n);
    if (it == adj.end()) return;
    for (const auto& m : it->second)
      if (seen.insert(m).second) q.push_back(m);
  };
  push_succ(from);
  while (!q.empty()) {
    NodeId n = q.front();
    q.pop_front();
    push_succ(n);
  }
  return seen;
}

inline std::vector<NodeId> all_nodes(const ComputerGraph& cg) {
  std::vector<NodeId> v;
  for (std::uint32_t s = 0; s < cg.apps.size(); ++s) v.push_back(NodeId::app(cg.id, s));
  for (std::uint32_t s = 0; s < cg.libs.size(); ++s)
    for (std::uint32_t f = 0; f < cg.lib_function_count(s); ++f) v.push_back(NodeId::lib_fn(cg.id, s, f));
  for (std::uint32_t f = 0; f < cg.os_function_count(); ++f) v.push_back(NodeId::os_fn(cg.id, f));
  return v;
}

// --- randomized tiny scenarios -----------------------------------------------------

struct Tiny {
  Built b;
  VulnCatalog cat;
  AttackerConfig attacker;
  DefenseConfig defense;
};

struct TinyOptions {
  bool deterministic_gates = true;  // gamma, alpha in {0, 1}
  double omega = 1.0;
};

// At most 5 computers; every stack has at most 30 functions. Families have
// two implementations so several computers share code and vulnerabilities.
inline Tiny random_tiny(std::uint64_t seed, TinyOptions opt = {}) {
  std::mt19937_64 rng(seed);
  auto uni = [&] { return uniform01(rng); };
  auto below = [&](std::uint64_t n) { return static_cast<std::uint32_t>(uniform_below(rng, n)); };

  Tiny t;
  auto& sw = t.b.sw;
  sw = std::make_shared<SoftwareCatalog>();
  const FamilyId c0 = sw->add({0, "c0", Layer::Application, AppRole::Client, 0, 2, 11});
  const FamilyId c1 = sw->add({0, "c1", Layer::Application, AppRole::Client, 0, 2, 12});
  const FamilyId web = sw->add({0, "web", Layer::Application, AppRole::InternetFacingServer, 0, 2, 13});
  const FamilyId db = sw->add({0, "db", Layer::Application, AppRole::InternalServer, 0, 2, 14});
  const std::uint32_t l0n = 2 + below(7), l1n = 2 + below(7), kn = 3 + below(8);
  const FamilyId L0 = sw->add({0, "L0", Layer::Library, std::nullopt, l0n, 2, 21});
  const FamilyId L1 = sw->add({0, "L1", Layer::Library, std::nullopt, l1n, 2, 22});
  const FamilyId K = sw->add({0, "K", Layer::OperatingSystem, std::nullopt, kn, 2, 31});
  const FamilyId app_fams[] = {c0, c1, web, db};
  const double dens = 0.1 + 0.3 * uni();

  // one code block per implementation, shared by every computer running it
  std::map<std::pair<FamilyId, std::uint32_t>, std::shared_ptr<const void>> code;
  auto kcode = [&](std::uint32_t impl) {
    auto& slot = code[{K, impl}];
    if (!slot) {
      std::vector<std::pair<std::uint32_t, std::uint32_t>> kk;
      for (std::uint32_t a = 0; a < kn; ++a)
        for (std::uint32_t b = 0; b < kn; ++b)
          if (a != b && uni() < dens / 2) kk.push_back({a, b});
      slot = os_code(kn, kk);
    }
    return std::static_pointer_cast<const OsCode>(slot);
  };
  auto lcode = [&](FamilyId f, std::uint32_t impl) {
    auto& slot = code[{f, impl}];
    if (!slot) {
      const std::uint32_t n = f == L0 ? l0n : l1n;
      std::vector<std::pair<std::uint32_t, LibFnRef>> ll;
      std::vector<std::pair<std::uint32_t, std::uint32_t>> lk;
      for (std::uint32_t a = 0; a < n; ++a) {
        for (std::uint16_t s = 0; s < 2; ++s)
          for (std::uint16_t g = 0; g < (s == 0 ? l0n : l1n); ++g)
            if (!(s == (f == L0 ? 0 : 1) && g == a) && uni() < dens / 2) ll.push_back({a, LibFnRef{s, g}});
        for (std::uint32_t k = 0; k < kn; ++k)
          if (uni() < dens / 2) lk.push_back({a, k});
      }
      slot = lib_code(n, ll, lk);
    }
    return std::static_pointer_cast<const LibraryCode>(slot);
  };
  auto acode = [&](FamilyId f, std::uint32_t impl) {
    auto& slot = code[{f, impl}];
    if (!slot) {
      std::vector<LibFnRef> al;
      std::vector<std::uint32_t> ak;
      for (std::uint16_t s = 0; s < 2; ++s)
        for (std::uint16_t g = 0; g < (s == 0 ? l0n : l1n); ++g)
          if (uni() < dens) al.push_back({s, g});
      for (std::uint32_t k = 0; k < kn; ++k)
        if (uni() < dens / 3) ak.push_back(k);
      slot = app_code(al, ak);
    }
    return std::static_pointer_cast<const AppCode>(slot);
  };

  const std::uint32_t n = 2 + below(4);
  auto& net = t.b.net;
  for (std::uint32_t c = 0; c < n; ++c) {
    ComputerGraph cg;
    const std::uint32_t ki = below(2);
    cg.os = {K, ki, kcode(ki)};
    for (FamilyId f : {L0, L1}) {
      const std::uint32_t i = below(2);
      cg.libs.push_back({f, i, lcode(f, i)});
    }
    const std::uint32_t apps = 1 + below(3);
    for (std::uint32_t s = 0; s < apps; ++s) {
      const FamilyId f = app_fams[below(4)];
      const std::uint32_t i = below(2);
      cg.apps.push_back({f, i, acode(f, i)});
    }
    net.computers.push_back(std::move(cg));
    net.human_vuln.push_back(uni() < 0.7 ? 1 : 0);
  }
  net.software = sw;
  net.index_apps();

  CommunicationBuilder cb(net.app_count());
  for (std::uint32_t a = 0; a < net.app_count(); ++a) {
    const AppRole ra = classify_app(sw->at(net.app_slot(a).family));
    if (ra == AppRole::Client && uni() < 0.7) cb.set_io(a);
    if (ra == AppRole::InternetFacingServer && uni() < 0.8) cb.set_oi(a);
    for (std::uint32_t b = 0; b < net.app_count(); ++b) {
      if (net.app_ref(a).computer == net.app_ref(b).computer || uni() >= 0.35) continue;
      const AppRole rb = classify_app(sw->at(net.app_slot(b).family));
      cb.add(a, b, rb == AppRole::Client ? Channel::ClientTargeted : Channel::ServerTargeted);
    }
  }
  finish(t.b, cb.build());

  ScenarioParams p;
  p.zeta = 0.6;
  p.theta = 0.7;
  p.tau = 0.3;
  const StreamKey key = StreamKey(seed).derive(Purpose::Run, 0);
  const double cor = uni() < 0.5 ? 0.0 : 0.5;
  t.cat = assign_exploit_classes(seed_vulnerabilities(net, p, key), *sw, 2, cor, key);
  t.attacker.cap = uni() < 0.7 ? 1.0 : 0.5;
  t.attacker.omega = opt.omega;
  t.attacker.exploits = select_attacker_exploits(t.cat, *sw, t.attacker.cap, key);
  auto gate = [&] { return opt.deterministic_gates ? (uni() < 0.5 ? 0.0 : 1.0) : 0.2 + 0.6 * uni(); };
  t.defense.gamma = gate();
  t.defense.alpha = gate();
  t.defense.nips = uni() < 0.5 ? Policy::Tight : Policy::Loose;
  t.defense.hips = uni() < 0.5 ? Policy::Tight : Policy::Loose;
  return t;
}

// --- brute-force attack oracle ----------------------------------------------------

struct Compromise {
  std::set<std::uint32_t> apps;  // global app ids
  std::set<std::uint32_t> oses;  // computers
  friend bool operator==(const Compromise&, const Compromise&) = default;
};

inline Compromise compromised_by(const SimulationState& st, std::uint32_t t) {
  Compromise c;
  for (std::uint32_t g = 0; g < st.app_round.size(); ++g)
    if (st.app_round[g] <= t) c.apps.insert(g);
  for (std::uint32_t k = 0; k < st.os_round.size(); ++k)
    if (st.os_round[k] <= t) c.oses.insert(k);
  return c;
}

// Attacker-usable vulnerabilities per app, found by BFS over the raw arcs.
struct OracleView {
  std::vector<std::vector<VulnId>> usable;  // per global app
  std::vector<std::set<NodeId>> reach;      // per global app
};

inline OracleView oracle_view(const NetworkGraph& net, const VulnCatalog& cat, const ExploitSet& x) {
  OracleView o;
  o.usable.resize(net.app_count());
  o.reach.resize(net.app_count());
  for (const auto& cg : net.computers) {
    const auto adj = adjacency(cg);
    for (std::uint32_t s = 0; s < cg.apps.size(); ++s) {
      const std::uint32_t g = net.global_app(cg.id, s);
      o.reach[g] = bfs_reach(adj, NodeId::app(cg.id, s));
      for (const auto& r : cat.records()) {
        if (!x.covers(r)) continue;
        bool hit = false;
        if (r.layer == Layer::Application)
          hit = cg.apps[s].family == r.host.family && cg.apps[s].impl == r.host.impl;
        for (const auto& n : o.reach[g]) {
          if (n.kind == NodeKind::LibFn && cg.libs[n.slot].family == r.host.family && cg.libs[n.slot].impl == r.host.impl &&
              n.index == r.host.function && r.layer == Layer::Library)
            hit = true;
          if (n.kind == NodeKind::OsFn && cg.os.family == r.host.family && cg.os.impl == r.host.impl &&
              n.index == r.host.function && r.layer == Layer::OperatingSystem)
            hit = true;
        }
        if (hit) o.usable[g].push_back(r.id);
      }
    }
  }
  return o;
}

// The exploit used against a target: OS-level first, then zero-day, then
// lowest id.
inline std::optional<VulnId> oracle_choice(const VulnCatalog& cat, const std::vector<VulnId>& vs, bool remote_only) {
  std::optional<VulnId> best;
  for (VulnId v : vs) {
    if (remote_only && !cat[v].loc) continue;
    if (!best) {
      best = v;
      continue;
    }
    const auto& a = cat[v];
    const auto& b = cat[*best];
    if (std::make_tuple(a.priv, a.zd, -static_cast<long>(v)) > std::make_tuple(b.priv, b.zd, -static_cast<long>(*best)))
      best = v;
  }
  return best;
}

inline bool oracle_weapon(const NetworkGraph& net, const VulnCatalog& cat, const OracleView& o, std::uint32_t g,
                          bool* client = nullptr) {
  const AppRef r = net.app_ref(g);
  const AppRole role = classify_app(net.software->at(net.app_slot(g).family));
  const bool w0 = role == AppRole::Client && net.human_vuln[r.computer] && net.comm->e_io[g] && !o.usable[g].empty();
  const bool w1 = role == AppRole::InternetFacingServer && net.comm->e_oi[g] &&
                  oracle_choice(cat, o.usable[g], true).has_value();
  if (client) *client = w0;
  return w0 || w1;
}

// Fixed point of the attack with deterministic gates (gamma, alpha in {0,1}).
inline Compromise oracle_fixed_point(const Tiny& t, const std::vector<NodeId>& inicomp) {
  const auto& net = t.b.net;
  const auto& cat = t.cat;
  const auto o = oracle_view(net, cat, t.attacker.exploits);
  Compromise c;
  auto take = [&](std::uint32_t g, VulnId v) {
    const std::uint32_t comp = net.app_ref(g).computer;
    if (cat[v].priv) {
      c.oses.insert(comp);
      for (std::uint32_t s = 0; s < net.computers[comp].apps.size(); ++s) c.apps.insert(net.global_app(comp, s));
    } else {
      c.apps.insert(g);
    }
  };
  auto passes = [&](VulnId v, bool social) { return cat[v].zd || (social ? t.defense.alpha : t.defense.gamma) >= 1.0; };

  for (const NodeId& n : inicomp) {
    const std::uint32_t g = net.global_app(n);
    bool client = false;
    if (!oracle_weapon(net, cat, o, g, &client)) continue;
    const auto v = oracle_choice(cat, o.usable[g], !client);
    if (v && passes(*v, client)) take(g, *v);
  }
  for (bool changed = true; changed;) {
    changed = false;
    const Compromise before = c;
    for (std::uint32_t k = 0; k < net.computers.size(); ++k) {
      if (c.oses.contains(k)) continue;
      const auto& cg = net.computers[k];
      std::optional<VulnId> osv;
      for (const auto& r : cat.records())
        if (r.layer == Layer::OperatingSystem && r.host.family == cg.os.family && r.host.impl == cg.os.impl &&
            t.attacker.exploits.covers(r))
          osv = r.id;
      if (!osv) continue;
      for (std::uint32_t s = 0; s < cg.apps.size(); ++s) {
        const std::uint32_t g = net.global_app(k, s);
        if (!before.apps.contains(g)) continue;
        if (t.defense.hips == Policy::Loose || o.reach[g].contains(NodeId::os_fn(k, cat[*osv].host.function))) {
          take(g, *osv);
          break;
        }
      }
    }
    for (std::uint32_t s : before.apps)
      for (std::uint32_t u = 0; u < net.app_count(); ++u) {
        if (c.apps.contains(u) || net.app_ref(s).computer == net.app_ref(u).computer) continue;
        const auto v = oracle_choice(cat, o.usable[u], true);
        if (!v) continue;
        const bool e00 = net.comm->e00.contains(s, u), e01 = net.comm->e01.contains(s, u);
        if (t.defense.nips == Policy::Tight && !e00 && !e01) continue;
        const bool social =
            e00 || (!e01 && classify_app(net.software->at(net.app_slot(u).family)) == AppRole::Client);
        if (passes(*v, social)) take(u, *v);
      }
    changed = !(c == before);
  }
  return c;
}

}  // namespace fx
