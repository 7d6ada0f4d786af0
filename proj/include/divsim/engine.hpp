#pragma once

// The attack lifecycle: weaponization, initial compromise, then rounds of
// privilege escalation and lateral movement applied synchronously.

#include <algorithm>
#include <cstdint>
#include <iterator>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "divsim/config.hpp"
#include "divsim/errors.hpp"
#include "divsim/network.hpp"
#include "divsim/random.hpp"
#include "divsim/scenario.hpp"
#include "divsim/vulnerability.hpp"

namespace divsim {

enum class EventKind : std::uint8_t { InitialCompromise, PrivEsc, LateralMove, Propagation };
enum class AttackChannel : std::uint8_t { SocialEngineering, RemoteExploit };
enum class BlockReason : std::uint8_t { NIPS, HIPS, NoPath, NoExploit };
enum class TraceLevel : std::uint8_t { None, Events, Full };

inline constexpr std::string_view to_string(EventKind k) {
  constexpr std::string_view n[] = {"initial_compromise", "priv_esc", "lateral_move", "propagation"};
  return n[static_cast<int>(k)];
}
inline constexpr std::string_view to_string(AttackChannel c) {
  return c == AttackChannel::SocialEngineering ? "social_engineering" : "remote_exploit";
}
inline constexpr std::string_view to_string(BlockReason r) {
  constexpr std::string_view n[] = {"nips", "hips", "no_path", "no_exploit"};
  return n[static_cast<int>(r)];
}

struct AttackEvent {
  std::uint16_t round = 0;
  EventKind kind = EventKind::InitialCompromise;
  std::optional<NodeId> source{};
  NodeId target{};
  std::optional<VulnId> vuln{};
  std::optional<AttackChannel> channel{};
  bool gated = false;  // a Bernoulli gate was drawn
  bool blocked = false;
  std::optional<BlockReason> block_reason{};
};

inline constexpr std::uint16_t kNever = 0xffff;
inline constexpr std::uint32_t kNoFunction = 0xffffffffU;
inline constexpr VulnId kNoVuln = 0xffffffffU;

struct SimulationState {
  std::uint32_t horizon = 0;
  std::uint32_t rounds_run = 0;            // later rounds are a fixed point
  std::vector<std::uint16_t> app_round;    // round of compromise, kNever if never
  std::vector<std::uint16_t> os_round;     // per computer
  std::vector<std::uint32_t> os_function;  // compromised OS function, kNoFunction if none
  std::vector<AttackEvent> trace;

  bool app_compromised(std::uint32_t g, std::uint32_t t) const { return app_round[g] <= t; }
  bool os_compromised(std::uint32_t c, std::uint32_t t) const { return os_round[c] <= t; }
  std::vector<std::uint32_t> compromised_os_fns(std::uint32_t c, std::uint32_t t) const {
    if (os_round[c] <= t && os_function[c] != kNoFunction) return {os_function[c]};
    return {};
  }
};

class AttackEngine {
 public:
  AttackEngine(const NetworkGraph& net, const VulnCatalog& cat, const AttackerConfig& attacker,
               const DefenseConfig& defense, StreamKey run_key, TraceLevel level = TraceLevel::None)
      : net_(net), cat_(cat), atk_(attacker), def_(defense), key_(run_key), level_(level) {
    attacker.validate();
    defense.validate();
    if (!net.comm) throw DomainError("network has no communication relation");
    const std::uint32_t apps = net.app_count();
    best_any_.assign(apps, kNoVuln);
    best_remote_.assign(apps, kNoVuln);
    os_vuln_.assign(net.computers.size(), kNoVuln);
    for (std::uint32_t c = 0; c < net.computers.size(); ++c) {
      const auto& cg = net.computers[c];
      if (!cg.closure) throw DomainError("computer " + std::to_string(c) + " has no reachability closure");
      if (auto v = cat.at_impl(cg.os.family, cg.os.impl); v && attacker.exploits.covers(cat[*v]))
        if (cat[*v].host.function < cg.os_function_count()) os_vuln_[c] = *v;
      for (std::uint32_t s = 0; s < cg.apps.size(); ++s) {
        const std::uint32_t g = net.global_app(c, s);
        for (VulnId v : reachable_vulns(net, NodeId::app(c, s), cat)) {
          if (!attacker.exploits.covers(cat[v])) continue;
          if (better(v, best_any_[g])) best_any_[g] = v;
          if (cat[v].loc && better(v, best_remote_[g])) best_remote_[g] = v;
        }
        if (best_remote_[g] != kNoVuln) remote_candidates_.push_back(g);
      }
    }
  }

  // Exploitable vulnerability used against an app: OS-level first, then
  // zero-day, then lowest id.
  VulnId entry_vuln(std::uint32_t g) const { return best_any_[g]; }
  VulnId remote_vuln(std::uint32_t g) const { return best_remote_[g]; }
  VulnId os_vuln(std::uint32_t c) const { return os_vuln_[c]; }

  bool in_weapon0(std::uint32_t g) const {
    const AppRef r = net_.app_ref(g);
    return net_.role(g) == AppRole::Client && net_.human_vuln[r.computer] && net_.comm->e_io[g] &&
           best_any_[g] != kNoVuln;
  }
  bool in_weapon1(std::uint32_t g) const {
    return net_.role(g) == AppRole::InternetFacingServer && net_.comm->e_oi[g] && best_remote_[g] != kNoVuln;
  }

  std::vector<NodeId> compute_weapon() const {
    std::vector<NodeId> w;
    for (std::uint32_t g = 0; g < net_.app_count(); ++g)
      if (in_weapon0(g) || in_weapon1(g)) w.push_back(net_.app_node(g));
    return w;
  }

  // Samples ceil(omega |Weapon|) entries, then on each computer keeps a single
  // entry if one of them leads straight to the OS.
  std::vector<NodeId> select_initial_targets(const std::vector<NodeId>& weapon) const {
    std::vector<std::pair<double, std::uint32_t>> pri;
    for (const NodeId& n : weapon)
      pri.push_back({key_.derive(Purpose::InitialSelect, net_.global_app(n)).uniform(), net_.global_app(n)});
    std::sort(pri.begin(), pri.end());
    pri.resize(std::min(pri.size(), ceil_count(atk_.omega, weapon.size())));
    std::vector<std::uint32_t> chosen;
    std::vector<std::uint8_t> os_taken(net_.computers.size(), 0);
    for (const auto& [p, g] : pri) {
      const std::uint32_t c = net_.app_ref(g).computer;
      if (os_taken[c]) continue;
      const VulnId v = entry_for(g);
      if (v != kNoVuln && cat_[v].priv) {
        std::erase_if(chosen, [&](std::uint32_t x) { return net_.app_ref(x).computer == c; });
        os_taken[c] = 1;
      }
      chosen.push_back(g);
    }
    std::sort(chosen.begin(), chosen.end());
    std::vector<NodeId> out;
    for (auto g : chosen) out.push_back(net_.app_node(g));
    return out;
  }

  SimulationState simulate(const std::vector<NodeId>& inicomp, std::uint32_t horizon) const {
    if (horizon < 1 || horizon >= kNever) throw DomainError("horizon must lie in [1, 65534]");
    SimulationState st;
    st.horizon = horizon;
    st.app_round.assign(net_.app_count(), kNever);
    st.os_round.assign(net_.computers.size(), kNever);
    st.os_function.assign(net_.computers.size(), kNoFunction);

    // Round 1: initial compromise, attempted once.
    for (const NodeId& n : inicomp) {
      if (n.kind != NodeKind::App || n.computer >= net_.computers.size() || !net_.computers[n.computer].contains(n))
        throw DomainError("initial target " + to_string(n) + " is not an application");
      const std::uint32_t g = net_.global_app(n);
      if (!in_weapon0(g) && !in_weapon1(g)) throw DomainError("initial target " + to_string(n) + " is not in Weapon");
      const VulnId v = entry_for(g);
      const bool client = in_weapon0(g);
      AttackEvent ev{1, EventKind::InitialCompromise, std::nullopt, n, v,
                     client ? AttackChannel::SocialEngineering : AttackChannel::RemoteExploit};
      const double p = client ? def_.alpha : def_.gamma;
      bool ok = cat_[v].zd;
      if (!ok) {
        ev.gated = p > 0.0 && p < 1.0;
        ok = p >= 1.0 || (ev.gated && initial_gate(g) < p);
      }
      ev.blocked = !ok;
      if (!ok) ev.block_reason = client ? BlockReason::HIPS : BlockReason::NIPS;
      if (ok || level_ == TraceLevel::Full) record(st, ev);
      if (ok) apply(st, g, v, 1);
    }
    st.rounds_run = 1;

    std::vector<std::uint8_t> hit_app(net_.app_count()), hit_os(net_.computers.size());
    Hits new_apps;  // (app, vuln)
    Hits new_os;    // (computer, vuln)
    for (std::uint32_t t = 2; t <= horizon; ++t) {
      const auto prev = static_cast<std::uint16_t>(t - 1);
      new_apps.clear();
      new_os.clear();
      bool pending = false;

      for (std::uint32_t c = 0; c < net_.computers.size(); ++c) {
        if (st.os_round[c] <= prev) continue;
        const auto& apps = net_.computers[c].apps;
        bool any = false;
        for (std::uint32_t s = 0; s < apps.size() && !any; ++s) any = st.app_round[net_.global_app(c, s)] <= prev;
        if (!any) continue;
        for (auto& ev : attempt_privilege_escalation(st, c, t)) {
          if (!ev.blocked) {
            new_os.push_back({c, *ev.vuln});
            hit_os[c] = 1;
          }
          if (!ev.blocked || level_ == TraceLevel::Full) st.trace.push_back(ev);
        }
      }

      if (level_ == TraceLevel::Full) {
        for (std::uint32_t s = 0; s < net_.app_count(); ++s) {
          if (st.app_round[s] > prev) continue;
          for (auto& ev : lateral_from(st, s, t, hit_app, hit_os, pending)) {
            if (!ev.blocked) take(net_.global_app(ev.target), *ev.vuln, hit_app, hit_os, new_apps, new_os);
            st.trace.push_back(ev);
          }
        }
      } else {
        lateral_by_target(st, t, hit_app, hit_os, new_apps, new_os, pending);
      }

      for (auto [c, v] : new_os) hit_os[c] = 0;
      for (auto [u, v] : new_apps) hit_app[u] = 0;
      for (auto [c, v] : new_os) compromise_os(st, c, v, static_cast<std::uint16_t>(t));
      for (auto [u, v] : new_apps) apply(st, u, v, static_cast<std::uint16_t>(t));
      st.rounds_run = t;
      if (new_apps.empty() && new_os.empty() && !pending) break;  // nothing can change any more
    }
    return st;
  }

  // Phase 4 on one computer in round t, from apps compromised by round t-1.
  std::vector<AttackEvent> attempt_privilege_escalation(const SimulationState& st, std::uint32_t c,
                                                        std::uint32_t t) const {
    std::vector<AttackEvent> out;
    const auto prev = t - 1;
    if (st.os_round[c] <= prev) return out;
    const auto& cg = net_.computers[c];
    std::optional<std::uint32_t> first;
    for (std::uint32_t s = 0; s < cg.apps.size(); ++s)
      if (st.app_round[net_.global_app(c, s)] <= prev) {
        first = s;
        break;
      }
    if (!first) return out;
    const VulnId v = os_vuln_[c];
    if (v == kNoVuln) {
      if (level_ == TraceLevel::Full)
        out.push_back({static_cast<std::uint16_t>(t), EventKind::PrivEsc, NodeId::app(c, *first),
                       NodeId::os_fn(c, 0), std::nullopt, std::nullopt, false, true, BlockReason::NoExploit});
      return out;
    }
    const std::uint32_t fn = cat_[v].host.function;
    std::optional<std::uint32_t> via;
    if (def_.hips == Policy::Loose) {
      via = first;
    } else {
      for (std::uint32_t s = 0; s < cg.apps.size() && !via; ++s)
        if (st.app_round[net_.global_app(c, s)] <= prev && cg.closure->reaches(s, cg.closure->os_index(fn))) via = s;
    }
    AttackEvent ev{static_cast<std::uint16_t>(t), EventKind::PrivEsc, NodeId::app(c, via.value_or(*first)),
                   NodeId::os_fn(c, fn), v, std::nullopt};
    if (!via) {
      ev.blocked = true;
      ev.block_reason = BlockReason::HIPS;
    }
    out.push_back(ev);
    return out;
  }

  // Every lateral attempt one compromised app could make in round t, misses
  // included: NoPath where a tight NIPS has no arc, NoExploit where an arc
  // exists but the target offers nothing. Targets already taken this round
  // are passed in `taken`.
  std::vector<AttackEvent> attempt_lateral_movement(const SimulationState& st, const NodeId& source, std::uint32_t t,
                                                    const std::vector<std::uint8_t>* taken = nullptr) const {
    const std::uint32_t s = net_.global_app(source);
    if (st.app_round[s] > t - 1) throw DomainError("lateral movement source " + to_string(source) + " is not compromised");
    std::vector<std::uint8_t> none_apps(net_.app_count()), none_os(net_.computers.size());
    bool pending = false;
    return lateral_from(st, s, t, taken ? *taken : none_apps, none_os, pending, /*with_misses=*/true, /*no_path=*/true);
  }

  // Marks the OS and every app of computer c compromised at round t.
  void propagate_os_compromise(SimulationState& st, std::uint32_t c, std::uint16_t t) const {
    if (st.os_function[c] == kNoFunction || st.os_round[c] > t)
      throw DomainError("computer " + std::to_string(c) + " has no compromised OS function");
    const auto& cg = net_.computers[c];
    for (std::uint32_t s = 0; s < cg.apps.size(); ++s) {
      const std::uint32_t g = net_.global_app(c, s);
      if (st.app_round[g] <= t) continue;
      st.app_round[g] = t;
      if (level_ != TraceLevel::None)
        st.trace.push_back({t, EventKind::Propagation, NodeId::os_fn(c, st.os_function[c]), NodeId::app(c, s)});
    }
  }

  double initial_gate(std::uint32_t g) const { return key_.derive(Purpose::InitialGate, g).uniform(); }
  double lateral_gate(std::uint32_t t, std::uint32_t s, std::uint32_t u) const {
    return key_.derive(Purpose::LateralGate, t, s, u).uniform();
  }

  // Channel of the pair (s, u): the E_0 arc's, else decided by the target.
  AttackChannel channel(std::uint32_t s, std::uint32_t u) const {
    if (net_.comm->e00.contains(s, u)) return AttackChannel::SocialEngineering;
    if (net_.comm->e01.contains(s, u)) return AttackChannel::RemoteExploit;
    return net_.role(u) == AppRole::Client ? AttackChannel::SocialEngineering : AttackChannel::RemoteExploit;
  }

  const std::vector<std::uint32_t>& remote_candidates() const { return remote_candidates_; }

 private:
  bool better(VulnId a, VulnId b) const {
    if (b == kNoVuln) return true;
    const auto& x = cat_[a];
    const auto& y = cat_[b];
    if (x.priv != y.priv) return x.priv;
    if (x.zd != y.zd) return x.zd;
    return a < b;
  }

  VulnId entry_for(std::uint32_t g) const { return in_weapon0(g) ? best_any_[g] : best_remote_[g]; }

  void record(SimulationState& st, const AttackEvent& ev) const {
    if (level_ != TraceLevel::None) st.trace.push_back(ev);
  }

  void compromise_os(SimulationState& st, std::uint32_t c, VulnId v, std::uint16_t t) const {
    if (st.os_round[c] <= t) return;
    st.os_round[c] = t;
    st.os_function[c] = cat_[v].host.function;
    propagate_os_compromise(st, c, t);
  }

  // Effect of exploiting v through app g: an OS-function vulnerability takes
  // the OS, anything else takes the app.
  void apply(SimulationState& st, std::uint32_t g, VulnId v, std::uint16_t t) const {
    const std::uint32_t c = net_.app_ref(g).computer;
    if (cat_[v].priv) {
      compromise_os(st, c, v, t);
    } else if (st.app_round[g] > t) {
      st.app_round[g] = t;
    }
  }

  // Result of one gated attempt: success, and whether a live draw failed.
  bool pass_gate(VulnId v, AttackChannel ch, std::uint32_t t, std::uint32_t s, std::uint32_t u, AttackEvent& ev,
                 bool& pending) const {
    ev.channel = ch;
    if (cat_[v].zd) return true;
    const double p = ch == AttackChannel::SocialEngineering ? def_.alpha : def_.gamma;
    bool ok;
    if (p <= 0.0) {
      ok = false;
    } else if (p >= 1.0) {
      ok = true;
    } else {
      ev.gated = true;
      ok = lateral_gate(t, s, u) < p;
      if (!ok) pending = true;
    }
    if (!ok) {
      ev.blocked = true;
      ev.block_reason = ch == AttackChannel::SocialEngineering ? BlockReason::HIPS : BlockReason::NIPS;
    }
    return ok;
  }

  bool target_open(const SimulationState& st, std::uint32_t u, std::uint32_t prev, const std::vector<std::uint8_t>& hit_app,
                   const std::vector<std::uint8_t>& hit_os) const {
    const std::uint32_t c = net_.app_ref(u).computer;
    return st.app_round[u] > prev && !hit_app[u] && !hit_os[c];
  }

  std::vector<AttackEvent> lateral_from(const SimulationState& st, std::uint32_t s, std::uint32_t t,
                                        const std::vector<std::uint8_t>& hit_app, const std::vector<std::uint8_t>& hit_os,
                                        bool& pending, bool with_misses = true, bool no_path = false) const {
    std::vector<AttackEvent> out;
    const std::uint32_t prev = t - 1;
    const std::uint32_t sc = net_.app_ref(s).computer;
    const NodeId src = net_.app_node(s);
    const bool tight = def_.nips == Policy::Tight;
    std::vector<std::uint32_t> targets;
    if (tight && !no_path) {
      // only whitelisted pairs; rows are sorted and disjoint
      const auto a = net_.comm->e00.row(s);
      const auto b = net_.comm->e01.row(s);
      std::merge(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(targets));
    } else {
      targets.resize(net_.app_count());
      std::iota(targets.begin(), targets.end(), 0u);
    }
    for (std::uint32_t u : targets) {
      if (net_.app_ref(u).computer == sc || !target_open(st, u, prev, hit_app, hit_os)) continue;
      const bool arc = (tight && !no_path) || net_.comm->has_arc(s, u);
      const VulnId v = best_remote_[u];
      AttackEvent ev{static_cast<std::uint16_t>(t), EventKind::LateralMove, src, net_.app_node(u)};
      if (v == kNoVuln) {
        if (with_misses && arc) {
          ev.blocked = true;
          ev.block_reason = BlockReason::NoExploit;
          out.push_back(ev);
        }
        continue;
      }
      ev.vuln = v;
      if (tight && !arc) {
        // the whitelist stops it before any exploit is tried
        if (no_path) {
          ev.blocked = true;
          ev.block_reason = BlockReason::NoPath;
          out.push_back(ev);
        }
        continue;
      }
      pass_gate(v, channel(s, u), t, s, u, ev, pending);
      out.push_back(ev);
    }
    // A target whose OS falls with this source's earlier success is not
    // attacked again through its siblings.
    std::vector<std::uint8_t> os_fell(net_.computers.size(), 0);
    std::vector<AttackEvent> kept;
    for (auto& ev : out) {
      if (!ev.blocked) {
        const std::uint32_t c = ev.target.computer;
        if (os_fell[c]) continue;
        if (cat_[*ev.vuln].priv) os_fell[c] = 1;
      }
      kept.push_back(ev);
    }
    return kept;
  }

  using Hits = std::vector<std::pair<std::uint32_t, VulnId>>;

  void take(std::uint32_t u, VulnId v, std::vector<std::uint8_t>& hit_app, std::vector<std::uint8_t>& hit_os,
            Hits& new_apps, Hits& new_os) const {
    const std::uint32_t c = net_.app_ref(u).computer;
    if (cat_[v].priv) {
      if (!hit_os[c]) new_os.push_back({c, v});
      hit_os[c] = 1;
    } else {
      if (!hit_app[u]) new_apps.push_back({u, v});
      hit_app[u] = 1;
    }
  }

  // Same outcome as running lateral_from for every source: gate draws are
  // keyed by (round, source, target), so a target falls iff some source's
  // draw passes, and the scan can stop at the first one that does.
  void lateral_by_target(SimulationState& st, std::uint32_t t, std::vector<std::uint8_t>& hit_app,
                         std::vector<std::uint8_t>& hit_os, Hits& new_apps, Hits& new_os, bool& pending) const {
    const std::uint32_t prev = t - 1;
    const bool tight = def_.nips == Policy::Tight;
    std::vector<std::uint32_t> sources;  // loose policy: every compromised app
    if (!tight)
      for (std::uint32_t s = 0; s < net_.app_count(); ++s)
        if (st.app_round[s] <= prev) sources.push_back(s);
    AttackEvent ev;
    for (std::uint32_t u : remote_candidates_) {
      if (!target_open(st, u, prev, hit_app, hit_os)) continue;
      const VulnId v = best_remote_[u];
      const std::uint32_t uc = net_.app_ref(u).computer;
      bool won = false;
      auto try_source = [&](std::uint32_t s, AttackChannel ch) {
        if (st.app_round[s] > prev) return false;
        ev = AttackEvent{static_cast<std::uint16_t>(t), EventKind::LateralMove, net_.app_node(s), net_.app_node(u), v};
        won = pass_gate(v, ch, t, s, u, ev, pending);
        return won;
      };
      if (tight) {
        for (std::uint32_t s : net_.comm->e00_in.row(u))
          if (try_source(s, AttackChannel::SocialEngineering)) break;
        if (!won)
          for (std::uint32_t s : net_.comm->e01_in.row(u))
            if (!net_.comm->e00.contains(s, u) && try_source(s, AttackChannel::RemoteExploit)) break;
      } else if (cat_[v].zd || def_.alpha > 0.0 || def_.gamma > 0.0) {
        for (std::uint32_t s : sources) {
          if (net_.app_ref(s).computer == uc) continue;
          const AttackChannel ch = channel(s, u);
          if (!cat_[v].zd && (ch == AttackChannel::SocialEngineering ? def_.alpha : def_.gamma) <= 0.0) continue;
          if (try_source(s, ch)) break;
        }
      }
      if (!won) continue;
      if (level_ != TraceLevel::None) st.trace.push_back(ev);
      take(u, v, hit_app, hit_os, new_apps, new_os);
    }
  }

  const NetworkGraph& net_;
  const VulnCatalog& cat_;
  AttackerConfig atk_;
  DefenseConfig def_;
  StreamKey key_;
  TraceLevel level_;
  std::vector<VulnId> best_any_, best_remote_, os_vuln_;
  std::vector<std::uint32_t> remote_candidates_;
};

}  // namespace divsim
