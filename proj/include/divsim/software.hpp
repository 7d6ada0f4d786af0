#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "divsim/errors.hpp"

namespace divsim {

enum class Layer : std::uint8_t { Application, Library, OperatingSystem };

// The role function over applications: client, Internet-facing server, or
// internal server.
enum class AppRole : std::uint8_t { Client = 0, InternetFacingServer = 1, InternalServer = 2 };

using FamilyId = std::uint32_t;

inline constexpr std::string_view to_string(Layer l) {
  switch (l) {
    case Layer::Application: return "application";
    case Layer::Library: return "library";
    case Layer::OperatingSystem: return "os";
  }
  return "?";
}

inline constexpr std::string_view to_string(AppRole r) {
  switch (r) {
    case AppRole::Client: return "client";
    case AppRole::InternetFacingServer: return "internet_facing_server";
    case AppRole::InternalServer: return "internal_server";
  }
  return "?";
}

// One piece of software that may exist in several independent implementations.
struct SoftwareFamily {
  FamilyId id = 0;
  std::string name;
  Layer layer = Layer::Application;
  std::optional<AppRole> app_role;
  std::uint32_t function_count = 0;  // 0 for applications
  std::uint32_t impl_count = 1;      // 1 means monoculture
  std::uint64_t stream_tag = 0;      // keys per-implementation random draws
};

inline AppRole classify_app(const SoftwareFamily& family) {
  if (family.layer != Layer::Application || !family.app_role)
    throw TypingError("classify_app: '" + family.name + "' is not an application family");
  return *family.app_role;
}

class SoftwareCatalog {
 public:
  FamilyId add(SoftwareFamily f) {
    if ((f.layer == Layer::Application) != f.app_role.has_value())
      throw TypingError("family '" + f.name + "': app_role is required exactly for applications");
    if (f.layer == Layer::Application && f.function_count != 0)
      throw TypingError("family '" + f.name + "': applications carry no function nodes");
    if (f.layer != Layer::Application && f.function_count == 0)
      throw ParameterError("family '" + f.name + "': libraries and operating systems need >= 1 function");
    if (f.impl_count == 0) throw ParameterError("family '" + f.name + "': impl_count must be >= 1");
    if (by_name_.contains(f.name)) throw ParameterError("duplicate software family '" + f.name + "'");
    f.id = static_cast<FamilyId>(families_.size());
    by_name_.emplace(f.name, f.id);
    families_.push_back(std::move(f));
    return families_.back().id;
  }

  const SoftwareFamily& at(FamilyId id) const { return families_.at(id); }

  std::optional<FamilyId> find(std::string_view name) const {
    auto it = by_name_.find(std::string(name));
    if (it == by_name_.end()) return std::nullopt;
    return it->second;
  }

  FamilyId require(std::string_view name) const {
    if (auto id = find(name)) return *id;
    throw ParameterError("unknown software family '" + std::string(name) + "'");
  }

  std::span<const SoftwareFamily> families() const { return families_; }
  std::size_t size() const { return families_.size(); }

 private:
  std::vector<SoftwareFamily> families_;
  std::unordered_map<std::string, FamilyId> by_name_;
};

}  // namespace divsim
