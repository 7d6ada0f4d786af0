#pragma once

// Vulnerabilities live on implementations: every node running the same
// implementation carries the same vulnerability at the same function.

#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <vector>

#include "divsim/network.hpp"

namespace divsim {

using VulnId = std::uint32_t;

// A function (or, for applications, the whole program) of one implementation.
struct CodeLocation {
  FamilyId family = 0;
  std::uint32_t impl = 0;
  std::uint32_t function = 0;  // 0 for applications
  friend constexpr auto operator<=>(const CodeLocation&, const CodeLocation&) = default;
};

struct VulnRecord {
  VulnId id = 0;
  CodeLocation host;
  Layer layer = Layer::Application;
  bool zd = false;
  bool loc = false;
  bool priv = false;
  std::uint32_t exploit_class = 0;  // within host.family
};

// Exploit classes are keyed network-wide by (family, class).
constexpr std::uint64_t class_key(FamilyId family, std::uint32_t cls) {
  return (static_cast<std::uint64_t>(family) << 32) | cls;
}

class VulnCatalog {
 public:
  VulnId add(VulnRecord r) {
    const auto key = std::make_pair(r.host.family, r.host.impl);
    if (by_impl_.contains(key))
      throw DomainError("implementation already carries a vulnerability (at most one per implementation)");
    if (r.priv != (r.layer == Layer::OperatingSystem)) throw DomainError("priv must be set exactly for OS functions");
    r.id = static_cast<VulnId>(records_.size());
    by_impl_.emplace(key, r.id);
    records_.push_back(r);
    return r.id;
  }

  std::optional<VulnId> at_impl(FamilyId family, std::uint32_t impl) const {
    auto it = by_impl_.find({family, impl});
    if (it == by_impl_.end()) return std::nullopt;
    return it->second;
  }

  const VulnRecord& operator[](VulnId id) const { return records_.at(id); }
  VulnRecord& mutable_record(VulnId id) { return records_.at(id); }
  const std::vector<VulnRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  void set_class_count(FamilyId family, std::uint32_t m) { class_count_[family] = m; }
  std::uint32_t class_count(FamilyId family) const {
    auto it = class_count_.find(family);
    return it == class_count_.end() ? 1 : it->second;
  }
  const std::map<FamilyId, std::uint32_t>& class_counts() const { return class_count_; }

 private:
  std::vector<VulnRecord> records_;
  std::map<std::pair<FamilyId, std::uint32_t>, VulnId> by_impl_;
  std::map<FamilyId, std::uint32_t> class_count_;
};

// phi: the vulnerabilities carried by one node (zero or one here).
inline std::vector<VulnId> phi(const NetworkGraph& net, const NodeId& node, const VulnCatalog& cat) {
  const auto& cg = net.computer(node);
  if (!cg.contains(node)) throw DomainError("phi: " + to_string(node) + " does not exist");
  std::optional<VulnId> v;
  switch (node.kind) {
    case NodeKind::App: v = cat.at_impl(cg.apps[node.slot].family, cg.apps[node.slot].impl); break;
    case NodeKind::LibFn: v = cat.at_impl(cg.libs[node.slot].family, cg.libs[node.slot].impl); break;
    case NodeKind::OsFn: v = cat.at_impl(cg.os.family, cg.os.impl); break;
  }
  if (v && cat[*v].host.function != node.index) v.reset();
  return v ? std::vector<VulnId>{*v} : std::vector<VulnId>{};
}

// Inverse of phi: every node on which the vulnerability materializes.
inline std::vector<NodeId> occurrences(const NetworkGraph& net, const VulnRecord& v) {
  std::vector<NodeId> out;
  for (const auto& cg : net.computers) {
    switch (v.layer) {
      case Layer::Application:
        for (std::uint32_t s = 0; s < cg.apps.size(); ++s)
          if (cg.apps[s].family == v.host.family && cg.apps[s].impl == v.host.impl) out.push_back(NodeId::app(cg.id, s));
        break;
      case Layer::Library:
        for (std::uint32_t s = 0; s < cg.libs.size(); ++s)
          if (cg.libs[s].family == v.host.family && cg.libs[s].impl == v.host.impl)
            out.push_back(NodeId::lib_fn(cg.id, s, v.host.function));
        break;
      case Layer::OperatingSystem:
        if (cg.os.family == v.host.family && cg.os.impl == v.host.impl) out.push_back(NodeId::os_fn(cg.id, v.host.function));
        break;
    }
  }
  return out;
}

// phi(app) plus the vulnerabilities of every lib/OS function the app
// depends on, in ascending id order.
inline std::vector<VulnId> reachable_vulns(const NetworkGraph& net, const NodeId& app, const VulnCatalog& cat) {
  if (app.kind != NodeKind::App) throw TypingError("reachable_vulns: " + to_string(app) + " is not an application");
  const auto& cg = net.computer(app);
  if (!cg.contains(app)) throw DomainError("reachable_vulns: " + to_string(app) + " does not exist");
  std::vector<VulnId> out = phi(net, app, cat);
  for (std::uint32_t s = 0; s < cg.libs.size(); ++s)
    if (auto v = cat.at_impl(cg.libs[s].family, cg.libs[s].impl))
      if (cg.lib_function_count(s) > cat[*v].host.function &&
          dep_path(cg, app, NodeId::lib_fn(cg.id, s, cat[*v].host.function)))
        out.push_back(*v);
  if (auto v = cat.at_impl(cg.os.family, cg.os.impl))
    if (cg.os_function_count() > cat[*v].host.function && dep_path(cg, app, NodeId::os_fn(cg.id, cat[*v].host.function)))
      out.push_back(*v);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

}  // namespace divsim
