#pragma once

#include <algorithm>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "divsim/errors.hpp"
#include "divsim/vulnerability.hpp"

namespace divsim {

enum class Policy : std::uint8_t { Tight, Loose };

inline constexpr std::string_view to_string(Policy p) { return p == Policy::Tight ? "tight" : "loose"; }

inline void check_probability(double p, const std::string& name) {
  if (!(p >= 0.0 && p <= 1.0)) throw ParameterError(name + " must lie in [0, 1]");
}

struct DefenseConfig {
  Policy nips = Policy::Tight;
  Policy hips = Policy::Tight;
  double gamma = 0.2;  // NIPS fails to block
  double alpha = 0.2;  // HIPS fails to block social engineering

  void validate() const {
    check_probability(gamma, "gamma");
    check_probability(alpha, "alpha");
  }
};

// The exploit classes held by the attacker, as sorted class keys.
class ExploitSet {
 public:
  ExploitSet() = default;
  explicit ExploitSet(std::vector<std::uint64_t> keys) : keys_(std::move(keys)) {
    std::sort(keys_.begin(), keys_.end());
    keys_.erase(std::unique(keys_.begin(), keys_.end()), keys_.end());
  }

  bool covers(FamilyId family, std::uint32_t cls) const {
    return std::binary_search(keys_.begin(), keys_.end(), class_key(family, cls));
  }
  // rho(x, vul) in {0, 1}: some held exploit matches the class of vul.
  bool covers(const VulnRecord& v) const { return covers(v.host.family, v.exploit_class); }

  std::size_t size() const { return keys_.size(); }
  bool empty() const { return keys_.empty(); }
  const std::vector<std::uint64_t>& keys() const { return keys_; }

 private:
  std::vector<std::uint64_t> keys_;
};

struct AttackerConfig {
  double cap = 1.0;
  double omega = 0.2;
  ExploitSet exploits;

  void validate() const {
    check_probability(cap, "cap");
    check_probability(omega, "omega");
  }
};

}  // namespace divsim
