#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "divsim/engine.hpp"
#include "divsim/errors.hpp"
#include "divsim/vulnerability.hpp"

namespace divsim {

// Fraction of applications compromised by round t.
inline double pca(const SimulationState& st, std::uint32_t t) {
  if (t > st.horizon) throw DomainError("pca: round " + std::to_string(t) + " is past the horizon");
  if (st.app_round.empty()) return 0.0;
  std::size_t n = 0;
  for (auto r : st.app_round) n += r <= t;
  return static_cast<double>(n) / static_cast<double>(st.app_round.size());
}

// Fraction of computers whose OS is compromised by round t.
inline double pcos(const SimulationState& st, std::uint32_t t) {
  if (t > st.horizon) throw DomainError("pcos: round " + std::to_string(t) + " is past the horizon");
  if (st.os_round.empty()) return 0.0;
  std::size_t n = 0;
  for (auto r : st.os_round) n += r <= t;
  return static_cast<double>(n) / static_cast<double>(st.os_round.size());
}

struct MetricSeries {
  std::vector<double> pca, pcos;            // t = 0..T (means when aggregated)
  std::vector<double> pca_std, pcos_std;    // zeros for a single run
  std::size_t run_count = 1;
  double attacker_effort = 0;               // |X| held
  double weapon_size = 0;
  double inicomp_size = 0;

  std::uint32_t horizon() const { return pca.empty() ? 0 : static_cast<std::uint32_t>(pca.size() - 1); }
};

// Both series for t = 0..T in one pass over the compromise rounds.
inline MetricSeries series_of(const SimulationState& st) {
  const std::uint32_t T = st.horizon;
  std::vector<std::size_t> apps(T + 2, 0), oses(T + 2, 0);
  for (auto r : st.app_round)
    if (r <= T) ++apps[r];
  for (auto r : st.os_round)
    if (r <= T) ++oses[r];
  MetricSeries m;
  m.pca.resize(T + 1);
  m.pcos.resize(T + 1);
  std::size_t a = 0, o = 0;
  const double na = st.app_round.empty() ? 1.0 : static_cast<double>(st.app_round.size());
  const double no = st.os_round.empty() ? 1.0 : static_cast<double>(st.os_round.size());
  for (std::uint32_t t = 0; t <= T; ++t) {
    a += apps[t];
    o += oses[t];
    m.pca[t] = static_cast<double>(a) / na;
    m.pcos[t] = static_cast<double>(o) / no;
  }
  m.pca_std.assign(T + 1, 0.0);
  m.pcos_std.assign(T + 1, 0.0);
  return m;
}

// Exploits needed to cover every vulnerability: nonempty classes, in total
// and per family.
inline std::size_t attacker_effort_to_cover(const VulnCatalog& cat) { return nonempty_classes(cat).size(); }

inline std::map<FamilyId, std::size_t> attacker_effort_by_family(const VulnCatalog& cat) {
  std::map<FamilyId, std::size_t> out;
  for (auto key : nonempty_classes(cat)) ++out[static_cast<FamilyId>(key >> 32)];
  return out;
}

struct MeanStd {
  double mean = 0, std = 0;
};

// Sample mean and standard deviation (n - 1 denominator; 0 for one value).
inline MeanStd mean_std(std::span<const double> xs) {
  MeanStd r;
  if (xs.empty()) return r;
  long double s = 0;
  for (double x : xs) s += x;
  r.mean = static_cast<double>(s / static_cast<long double>(xs.size()));
  if (xs.size() > 1) {
    long double q = 0;
    for (double x : xs) q += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(static_cast<double>(q / static_cast<long double>(xs.size() - 1)));
  }
  return r;
}

inline MetricSeries aggregate_runs(std::span<const MetricSeries> runs) {
  if (runs.empty()) throw DomainError("aggregate_runs: no runs");
  const std::size_t len = runs.front().pca.size();
  for (const auto& r : runs)
    if (r.pca.size() != len || r.pcos.size() != len) throw DomainError("aggregate_runs: runs have different horizons");
  MetricSeries out;
  out.run_count = runs.size();
  out.pca.resize(len);
  out.pcos.resize(len);
  out.pca_std.resize(len);
  out.pcos_std.resize(len);
  std::vector<double> col(runs.size());
  for (std::size_t t = 0; t < len; ++t) {
    for (std::size_t i = 0; i < runs.size(); ++i) col[i] = runs[i].pca[t];
    auto a = mean_std(col);
    for (std::size_t i = 0; i < runs.size(); ++i) col[i] = runs[i].pcos[t];
    auto o = mean_std(col);
    out.pca[t] = a.mean;
    out.pca_std[t] = a.std;
    out.pcos[t] = o.mean;
    out.pcos_std[t] = o.std;
  }
  double e = 0, w = 0, ic = 0;
  for (const auto& r : runs) {
    e += r.attacker_effort;
    w += r.weapon_size;
    ic += r.inicomp_size;
  }
  const auto n = static_cast<double>(runs.size());
  out.attacker_effort = e / n;
  out.weapon_size = w / n;
  out.inicomp_size = ic / n;
  return out;
}

}  // namespace divsim
