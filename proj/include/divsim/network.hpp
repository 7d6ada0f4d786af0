#pragma once

// The whole network: computer stacks plus the inter-computer relation E_0
// (split into client-targeted e00 and server-targeted e01) and the
// internal/external relation E_*.

#include <algorithm>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "divsim/csr.hpp"
#include "divsim/software.hpp"
#include "divsim/stack.hpp"

namespace divsim {

// Zone of a computer: a subnet index >= 0 or one of the server zones.
inline constexpr std::int32_t kZoneDmz = -1;
inline constexpr std::int32_t kZoneDatabase = -2;

enum class Channel : std::uint8_t { ClientTargeted, ServerTargeted };  // e00 / e01

struct Communication {
  // Arcs over global application ids, rows sorted.
  Csr<std::uint32_t> e00, e01;
  Csr<std::uint32_t> e00_in, e01_in;  // reversed
  std::vector<std::uint8_t> e_io;     // (app, *) in E_*
  std::vector<std::uint8_t> e_oi;     // (*, app) in E_*

  bool has_arc(std::uint32_t from, std::uint32_t to) const { return e00.contains(from, to) || e01.contains(from, to); }
  std::size_t arc_count() const { return e00.arcs() + e01.arcs(); }
};

class CommunicationBuilder {
 public:
  explicit CommunicationBuilder(std::size_t app_count)
      : e00_(app_count), e01_(app_count), e_io_(app_count, 0), e_oi_(app_count, 0) {}

  void add(std::uint32_t from, std::uint32_t to, Channel ch) {
    (ch == Channel::ClientTargeted ? e00_ : e01_).at(from).push_back(to);
  }
  void set_io(std::uint32_t app) { e_io_.at(app) = 1; }
  void set_oi(std::uint32_t app) { e_oi_.at(app) = 1; }

  std::shared_ptr<const Communication> build() {
    auto c = std::make_shared<Communication>();
    c->e00 = Csr<std::uint32_t>(e00_);
    c->e01 = Csr<std::uint32_t>(e01_);
    c->e00.normalize();
    c->e01.normalize();
    c->e00_in = reverse(c->e00, e00_.size());
    c->e01_in = reverse(c->e01, e01_.size());
    c->e_io = std::move(e_io_);
    c->e_oi = std::move(e_oi_);
    e00_.clear();
    e01_.clear();
    return c;
  }

 private:
  static Csr<std::uint32_t> reverse(const Csr<std::uint32_t>& g, std::size_t n) {
    std::vector<std::uint32_t> count(n, 0);
    for (std::uint32_t t : g.targets())
      if (t < n) ++count[t];
    std::vector<std::vector<std::uint32_t>> rows(n);
    for (std::size_t i = 0; i < n; ++i) rows[i].reserve(count[i]);
    for (std::uint32_t s = 0; s < g.rows(); ++s)
      for (std::uint32_t t : g.row(s))
        if (t < n) rows[t].push_back(s);  // sources ascending already
    return Csr<std::uint32_t>(rows);
  }

  std::vector<std::vector<std::uint32_t>> e00_, e01_;
  std::vector<std::uint8_t> e_io_, e_oi_;
};

struct AppRef {
  std::uint32_t computer = 0;
  std::uint32_t slot = 0;
};

struct NetworkGraph {
  std::shared_ptr<const SoftwareCatalog> software;
  std::vector<ComputerGraph> computers;
  std::shared_ptr<const Communication> comm;
  std::vector<std::uint8_t> human_vuln;  // psi, per computer
  std::vector<std::int32_t> zone;
  std::vector<std::uint32_t> app_offset;  // computers.size() + 1 entries

  std::size_t computer_count() const { return computers.size(); }
  std::uint32_t app_count() const { return app_offset.empty() ? 0 : app_offset.back(); }
  std::uint32_t global_app(std::uint32_t computer, std::uint32_t slot) const { return app_offset[computer] + slot; }
  std::uint32_t global_app(const NodeId& n) const { return global_app(n.computer, n.slot); }

  AppRef app_ref(std::uint32_t g) const {
    auto it = std::upper_bound(app_offset.begin(), app_offset.end(), g);
    const auto c = static_cast<std::uint32_t>(it - app_offset.begin() - 1);
    return {c, g - app_offset[c]};
  }
  NodeId app_node(std::uint32_t g) const {
    const AppRef r = app_ref(g);
    return NodeId::app(r.computer, r.slot);
  }
  const AppSlot& app_slot(std::uint32_t g) const {
    const AppRef r = app_ref(g);
    return computers[r.computer].apps[r.slot];
  }
  AppRole role(std::uint32_t g) const { return classify_app(software->at(app_slot(g).family)); }

  const ComputerGraph& computer(const NodeId& n) const {
    if (n.computer >= computers.size()) throw DomainError("no computer " + std::to_string(n.computer));
    return computers[n.computer];
  }

  void index_apps() {
    app_offset.assign(computers.size() + 1, 0);
    for (std::size_t c = 0; c < computers.size(); ++c)
      app_offset[c + 1] = app_offset[c] + static_cast<std::uint32_t>(computers[c].apps.size());
  }
};

// Checks structural invariants; an empty result means the network is valid.
inline std::vector<std::string> validate_network(const NetworkGraph& net) {
  std::vector<std::string> out;
  auto fail = [&out](std::string s) { out.push_back(std::move(s)); };
  if (!net.software) {
    fail("network has no software catalog");
    return out;
  }
  const auto& sw = *net.software;
  auto family_ok = [&](FamilyId f, Layer layer, std::uint32_t impl, const std::string& where) {
    if (f >= sw.size()) {
      fail(where + ": unknown family " + std::to_string(f));
      return false;
    }
    const auto& fam = sw.at(f);
    if (fam.layer != layer) fail(where + ": family '" + fam.name + "' is at layer " + std::string(to_string(fam.layer)));
    if (impl >= fam.impl_count)
      fail(where + ": implementation " + std::to_string(impl) + " of '" + fam.name + "' exceeds impl_count");
    return true;
  };

  for (std::uint32_t c = 0; c < net.computers.size(); ++c) {
    const auto& cg = net.computers[c];
    const std::string where = "computer " + std::to_string(c);
    if (cg.id != c) fail(where + ": id field is " + std::to_string(cg.id));
    if (!cg.os.code) fail(where + ": no operating system code");
    family_ok(cg.os.family, Layer::OperatingSystem, cg.os.impl, where + " os");
    if (cg.os.code && cg.os.family < sw.size() && cg.os.code->function_count != sw.at(cg.os.family).function_count)
      fail(where + ": os function count differs from its family");
    for (std::uint32_t s = 0; s < cg.libs.size(); ++s) {
      family_ok(cg.libs[s].family, Layer::Library, cg.libs[s].impl, where + " lib slot " + std::to_string(s));
      if (!cg.libs[s].code) fail(where + " lib slot " + std::to_string(s) + ": no code");
    }
    for (std::uint32_t s = 0; s < cg.apps.size(); ++s)
      family_ok(cg.apps[s].family, Layer::Application, cg.apps[s].impl, where + " app slot " + std::to_string(s));
    cg.for_each_arc([&](const NodeId& from, const NodeId& to) {
      if (!cg.contains(from) || !cg.contains(to))
        fail(where + ": dangling arc " + to_string(from) + " -> " + to_string(to));
    });
  }

  if (net.app_offset.size() != net.computers.size() + 1) {
    fail("application index is stale");
    return out;
  }
  for (std::uint32_t c = 0; c < net.computers.size(); ++c)
    if (net.app_offset[c + 1] - net.app_offset[c] != net.computers[c].apps.size()) fail("application index is stale");
  if (net.human_vuln.size() != net.computers.size()) fail("human_vuln must have one entry per computer");
  if (!net.comm) {
    fail("network has no communication relation");
    return out;
  }
  const auto& cm = *net.comm;
  const std::uint32_t apps = net.app_count();
  if (cm.e00.rows() != apps || cm.e01.rows() != apps || cm.e_io.size() != apps || cm.e_oi.size() != apps) {
    fail("communication relation does not match the application count");
    return out;
  }
  auto role_of = [&](std::uint32_t g) -> std::optional<AppRole> {
    const auto f = net.app_slot(g).family;
    if (f >= sw.size() || !sw.at(f).app_role) return std::nullopt;
    return sw.at(f).app_role;
  };
  auto arc_name = [&](std::uint32_t a, std::uint32_t b) {
    return to_string(net.app_node(a)) + " -> " + to_string(net.app_node(b));
  };
  for (std::uint32_t a = 0; a < apps; ++a) {
    for (std::uint32_t b : cm.e00.row(a)) {
      if (b >= apps) {
        fail("e00 arc to missing application " + std::to_string(b));
        continue;
      }
      if (cm.e01.contains(a, b)) fail("arc in both e00 and e01: " + arc_name(a, b));
      if (role_of(b) != AppRole::Client) fail("e00 arc targets a non-client application: " + arc_name(a, b));
      if (net.app_ref(a).computer == net.app_ref(b).computer) fail("E_0 arc inside one computer: " + arc_name(a, b));
    }
    for (std::uint32_t b : cm.e01.row(a)) {
      if (b >= apps) {
        fail("e01 arc to missing application " + std::to_string(b));
        continue;
      }
      if (net.app_ref(a).computer == net.app_ref(b).computer) fail("E_0 arc inside one computer: " + arc_name(a, b));
    }
    if (cm.e_oi[a] && role_of(a) != AppRole::InternetFacingServer)
      fail("(*, app) entry for a non Internet-facing application: " + to_string(net.app_node(a)));
  }
  return out;
}

}  // namespace divsim
