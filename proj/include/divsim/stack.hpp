#pragma once

// Software-stack dependence graphs of single computers.
//
// Arcs are owned by the code of the caller: an application implementation
// knows which library functions it calls, a library implementation knows
// which library and OS functions each of its functions calls, and an OS
// implementation knows its internal call arcs. A computer graph is the
// composition of the code blocks of the implementations deployed on it, so
// computers running the same implementations share both arcs and closure.

#include <algorithm>
#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "divsim/csr.hpp"
#include "divsim/errors.hpp"
#include "divsim/random.hpp"
#include "divsim/software.hpp"

namespace divsim {

enum class NodeKind : std::uint8_t { App, LibFn, OsFn };

struct NodeId {
  std::uint32_t computer = 0;
  NodeKind kind = NodeKind::App;
  std::uint32_t slot = 0;   // app slot or library slot; 0 for OS functions
  std::uint32_t index = 0;  // function index; 0 for applications

  static constexpr NodeId app(std::uint32_t c, std::uint32_t slot) { return {c, NodeKind::App, slot, 0}; }
  static constexpr NodeId lib_fn(std::uint32_t c, std::uint32_t slot, std::uint32_t fn) {
    return {c, NodeKind::LibFn, slot, fn};
  }
  static constexpr NodeId os_fn(std::uint32_t c, std::uint32_t fn) { return {c, NodeKind::OsFn, 0, fn}; }

  friend constexpr auto operator<=>(const NodeId&, const NodeId&) = default;
};

inline std::string to_string(const NodeId& n) {
  const std::string c = std::to_string(n.computer);
  switch (n.kind) {
    case NodeKind::App: return "app(" + c + "," + std::to_string(n.slot) + ")";
    case NodeKind::LibFn:
      return "lib(" + c + "," + std::to_string(n.slot) + "," + std::to_string(n.index) + ")";
    case NodeKind::OsFn: return "os(" + c + "," + std::to_string(n.index) + ")";
  }
  return "?";
}

// A library function addressed through the library slot layout of the host.
struct LibFnRef {
  std::uint16_t slot = 0;
  std::uint16_t function = 0;
  friend constexpr auto operator<=>(const LibFnRef&, const LibFnRef&) = default;
};

struct AppCode {
  std::vector<LibFnRef> lib_calls;      // E_al
  std::vector<std::uint32_t> os_calls;  // E_ak
};

struct LibraryCode {
  std::uint32_t function_count = 0;
  Csr<LibFnRef> lib_calls;      // E_ll, one row per function
  Csr<std::uint32_t> os_calls;  // E_lk, one row per function
};

struct OsCode {
  std::uint32_t function_count = 0;
  Csr<std::uint32_t> os_calls;  // E_kk
};

struct AppSlot {
  FamilyId family = 0;
  std::uint32_t impl = 0;
  std::shared_ptr<const AppCode> code;
};

struct LibSlot {
  FamilyId family = 0;
  std::uint32_t impl = 0;
  std::shared_ptr<const LibraryCode> code;
};

struct OsSlot {
  FamilyId family = 0;
  std::uint32_t impl = 0;
  std::shared_ptr<const OsCode> code;
};

// Reachability from every application slot to every library/OS function of
// one stack. Rows are bitsets over local indices: library functions first
// (slot-major), then OS functions.
class StackClosure {
 public:
  StackClosure(std::vector<std::uint32_t> lib_offsets, std::uint32_t os_offset, std::uint32_t os_count,
               std::size_t app_count)
      : lib_offsets_(std::move(lib_offsets)),
        os_offset_(os_offset),
        width_(os_offset + os_count),
        words_((width_ + 63) / 64),
        bits_(app_count * words_, 0) {}

  std::uint32_t lib_index(std::uint32_t slot, std::uint32_t fn) const { return lib_offsets_[slot] + fn; }
  std::uint32_t os_index(std::uint32_t fn) const { return os_offset_ + fn; }
  std::uint32_t width() const { return width_; }
  std::size_t bytes() const { return bits_.size() * sizeof(std::uint64_t) + sizeof(*this); }

  bool reaches(std::uint32_t app_slot, std::uint32_t local) const {
    return (bits_[app_slot * words_ + local / 64] >> (local % 64)) & 1U;
  }
  void set(std::uint32_t app_slot, std::uint32_t local) {
    bits_[app_slot * words_ + local / 64] |= (std::uint64_t{1} << (local % 64));
  }
  std::size_t reached_count(std::uint32_t app_slot) const {
    std::size_t n = 0;
    for (std::size_t w = 0; w < words_; ++w) n += static_cast<std::size_t>(__builtin_popcountll(bits_[app_slot * words_ + w]));
    return n;
  }

 private:
  std::vector<std::uint32_t> lib_offsets_;
  std::uint32_t os_offset_;
  std::uint32_t width_;
  std::size_t words_;
  std::vector<std::uint64_t> bits_;
};

struct ComputerGraph {
  std::uint32_t id = 0;
  std::vector<AppSlot> apps;
  std::vector<LibSlot> libs;
  OsSlot os;
  std::uint64_t stack_signature = 0;
  std::shared_ptr<const StackClosure> closure;

  std::uint32_t lib_function_count(std::uint32_t slot) const { return libs[slot].code ? libs[slot].code->function_count : 0; }
  std::uint32_t os_function_count() const { return os.code ? os.code->function_count : 0; }

  bool contains(const NodeId& n) const {
    if (n.computer != id) return false;
    switch (n.kind) {
      case NodeKind::App: return n.slot < apps.size() && n.index == 0;
      case NodeKind::LibFn: return n.slot < libs.size() && n.index < lib_function_count(n.slot);
      case NodeKind::OsFn: return n.slot == 0 && n.index < os_function_count();
    }
    return false;
  }

  std::size_t node_count() const {
    std::size_t n = apps.size() + os_function_count();
    for (std::uint32_t s = 0; s < libs.size(); ++s) n += lib_function_count(s);
    return n;
  }

  // Calls fn(target) for each out-arc of `from`. Arcs whose endpoint does not
  // exist are skipped; validate_network reports them.
  template <typename Fn>
  void for_each_successor(const NodeId& from, Fn&& fn) const {
    auto emit_lib = [&](LibFnRef r) {
      if (r.slot < libs.size() && r.function < lib_function_count(r.slot)) fn(NodeId::lib_fn(id, r.slot, r.function));
    };
    auto emit_os = [&](std::uint32_t k) {
      if (k < os_function_count()) fn(NodeId::os_fn(id, k));
    };
    switch (from.kind) {
      case NodeKind::App: {
        const auto& code = apps.at(from.slot).code;
        if (!code) return;
        for (LibFnRef r : code->lib_calls) emit_lib(r);
        for (std::uint32_t k : code->os_calls) emit_os(k);
        break;
      }
      case NodeKind::LibFn: {
        const auto& code = libs.at(from.slot).code;
        if (!code || from.index >= code->function_count) return;
        for (LibFnRef r : code->lib_calls.row(from.index)) emit_lib(r);
        for (std::uint32_t k : code->os_calls.row(from.index)) emit_os(k);
        break;
      }
      case NodeKind::OsFn: {
        if (!os.code || from.index >= os.code->function_count) return;
        for (std::uint32_t k : os.code->os_calls.row(from.index)) emit_os(k);
        break;
      }
    }
  }

  // Enumerates every arc of E_i as (from, to), dangling ones included.
  template <typename Fn>
  void for_each_arc(Fn&& fn) const {
    for (std::uint32_t a = 0; a < apps.size(); ++a) {
      if (!apps[a].code) continue;
      for (LibFnRef r : apps[a].code->lib_calls) fn(NodeId::app(id, a), NodeId::lib_fn(id, r.slot, r.function));
      for (std::uint32_t k : apps[a].code->os_calls) fn(NodeId::app(id, a), NodeId::os_fn(id, k));
    }
    for (std::uint32_t s = 0; s < libs.size(); ++s) {
      const auto& code = libs[s].code;
      if (!code) continue;
      for (std::uint32_t f = 0; f < code->lib_calls.rows(); ++f)
        for (LibFnRef r : code->lib_calls.row(f)) fn(NodeId::lib_fn(id, s, f), NodeId::lib_fn(id, r.slot, r.function));
      for (std::uint32_t f = 0; f < code->os_calls.rows(); ++f)
        for (std::uint32_t k : code->os_calls.row(f)) fn(NodeId::lib_fn(id, s, f), NodeId::os_fn(id, k));
    }
    if (os.code)
      for (std::uint32_t f = 0; f < os.code->os_calls.rows(); ++f)
        for (std::uint32_t k : os.code->os_calls.row(f)) fn(NodeId::os_fn(id, f), NodeId::os_fn(id, k));
  }
};

inline std::uint64_t compute_stack_signature(const ComputerGraph& cg) {
  std::uint64_t h = splitmix64(0x5eed);
  auto mix = [&h](std::uint64_t v) { h = splitmix64(h ^ splitmix64(v)); };
  mix(cg.os.family);
  mix(cg.os.impl);
  mix(cg.libs.size());
  for (const auto& l : cg.libs) {
    mix(l.family);
    mix(l.impl);
  }
  mix(cg.apps.size());
  for (const auto& a : cg.apps) {
    mix(a.family);
    mix(a.impl);
  }
  return h;
}

namespace detail {

inline std::size_t words_for(std::size_t bits) { return (bits + 63) / 64; }

// Row k holds {k} plus every OS function reachable from k. Computed on the
// SCC condensation so dense kernels cost O(arcs * words), not O(n * arcs).
inline std::vector<std::uint64_t> os_reach_rows(const OsCode& os) {
  const std::uint32_t n = os.function_count;
  const std::size_t words = words_for(n);
  std::vector<std::uint64_t> rows(static_cast<std::size_t>(n) * words, 0);
  if (n == 0) return rows;

  // Iterative Tarjan; components come out in reverse topological order.
  constexpr std::uint32_t unset = ~std::uint32_t{0};
  std::vector<std::uint32_t> index(n, unset), low(n), comp(n, unset), edge_pos(n, 0);
  std::vector<std::uint32_t> tstack, call;
  std::vector<std::vector<std::uint32_t>> members;
  std::uint32_t counter = 0;
  auto valid = [&](std::uint32_t v) { return v < n; };
  for (std::uint32_t root = 0; root < n; ++root) {
    if (index[root] != unset) continue;
    call.push_back(root);
    index[root] = low[root] = counter++;
    tstack.push_back(root);
    while (!call.empty()) {
      const std::uint32_t v = call.back();
      auto row = os.os_calls.row(v);
      if (edge_pos[v] < row.size()) {
        const std::uint32_t w = row[edge_pos[v]++];
        if (!valid(w)) continue;
        if (index[w] == unset) {
          index[w] = low[w] = counter++;
          tstack.push_back(w);
          call.push_back(w);
        } else if (comp[w] == unset) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      call.pop_back();
      if (!call.empty()) low[call.back()] = std::min(low[call.back()], low[v]);
      if (low[v] == index[v]) {
        const auto c = static_cast<std::uint32_t>(members.size());
        members.emplace_back();
        std::uint32_t w;
        do {
          w = tstack.back();
          tstack.pop_back();
          comp[w] = c;
          members.back().push_back(w);
        } while (w != v);
      }
    }
  }

  std::vector<std::uint64_t> comp_bits(members.size() * words, 0);
  for (std::uint32_t c = 0; c < members.size(); ++c) {
    std::uint64_t* dst = comp_bits.data() + c * words;
    for (std::uint32_t v : members[c]) {
      dst[v / 64] |= std::uint64_t{1} << (v % 64);
    }
    for (std::uint32_t v : members[c])
      for (std::uint32_t w : os.os_calls.row(v)) {
        if (!valid(w) || comp[w] == c) continue;
        const std::uint64_t* src = comp_bits.data() + comp[w] * words;  // finished earlier
        for (std::size_t i = 0; i < words; ++i) dst[i] |= src[i];
      }
  }
  for (std::uint32_t v = 0; v < n; ++v)
    std::copy_n(comp_bits.data() + comp[v] * words, words, rows.data() + static_cast<std::size_t>(v) * words);
  return rows;
}

// Row f holds the OS functions reachable from library function f through
// its own OS calls (library-to-library arcs are followed by the caller).
inline std::vector<std::uint64_t> lib_os_rows(const LibraryCode& lib, const OsCode& os,
                                              const std::vector<std::uint64_t>& os_rows) {
  const std::size_t words = words_for(os.function_count);
  std::vector<std::uint64_t> rows(static_cast<std::size_t>(lib.function_count) * words, 0);
  for (std::uint32_t f = 0; f < lib.function_count; ++f) {
    std::uint64_t* dst = rows.data() + static_cast<std::size_t>(f) * words;
    for (std::uint32_t k : lib.os_calls.row(f)) {
      if (k >= os.function_count) continue;
      if (dst[k / 64] >> (k % 64) & 1U) continue;  // already covered
      const std::uint64_t* src = os_rows.data() + static_cast<std::size_t>(k) * words;
      for (std::size_t i = 0; i < words; ++i) dst[i] |= src[i];
    }
  }
  return rows;
}

}  // namespace detail

// Shares reachability between computers, and across runs, whenever they are
// built from the same code blocks. Keys are code identities; the cache holds
// the code alive so an address is never reused for a different block.
class ReachCache {
 public:
  std::shared_ptr<const StackClosure> closure(const ComputerGraph& cg) {
    std::vector<std::uintptr_t> key;
    key.reserve(cg.apps.size() + cg.libs.size() + 2);
    key.push_back(reinterpret_cast<std::uintptr_t>(cg.os.code.get()));
    for (const auto& l : cg.libs) key.push_back(reinterpret_cast<std::uintptr_t>(l.code.get()));
    key.push_back(0);
    for (const auto& a : cg.apps) key.push_back(reinterpret_cast<std::uintptr_t>(a.code.get()));
    {
      std::lock_guard lock(mu_);
      if (auto it = closures_.find(key); it != closures_.end()) return it->second.closure;
    }
    auto c = compute(cg);
    std::lock_guard lock(mu_);
    closure_bytes_ += c->bytes();
    if (closure_bytes_ > budget_ / 4) {
      closures_.clear();
      closure_bytes_ = c->bytes();
    }
    Entry e{c, {}};
    e.keep.push_back(cg.os.code);
    for (const auto& l : cg.libs) e.keep.push_back(l.code);
    for (const auto& a : cg.apps) e.keep.push_back(a.code);
    return closures_.try_emplace(std::move(key), std::move(e)).first->second.closure;
  }

  explicit ReachCache(std::size_t budget_bytes = std::size_t{512} << 20) : budget_(budget_bytes) {}

  std::size_t closure_count() const {
    std::lock_guard lock(mu_);
    return closures_.size();
  }

 private:
  struct Entry {
    std::shared_ptr<const StackClosure> closure;
    std::vector<std::shared_ptr<const void>> keep;
  };
  using Rows = std::shared_ptr<const std::vector<std::uint64_t>>;

  Rows os_rows(const std::shared_ptr<const OsCode>& os) {
    {
      std::lock_guard lock(mu_);
      if (auto it = os_rows_.find(os.get()); it != os_rows_.end()) return it->second.first;
    }
    Rows r = std::make_shared<const std::vector<std::uint64_t>>(detail::os_reach_rows(*os));
    std::lock_guard lock(mu_);
    return os_rows_.try_emplace(os.get(), r, os).first->second.first;
  }

  Rows lib_rows(const std::shared_ptr<const LibraryCode>& lib, const std::shared_ptr<const OsCode>& os) {
    const auto key = std::make_pair(lib.get(), os.get());
    {
      std::lock_guard lock(mu_);
      if (auto it = lib_rows_.find(key); it != lib_rows_.end()) return it->second.first;
    }
    Rows base = os_rows(os);
    Rows r = std::make_shared<const std::vector<std::uint64_t>>(detail::lib_os_rows(*lib, *os, *base));
    std::lock_guard lock(mu_);
    // Pure cache; with many implementations the (library, OS) pairs outgrow
    // memory, so start over once past the budget.
    row_bytes_ += r->size() * sizeof(std::uint64_t);
    if (row_bytes_ > budget_) {
      lib_rows_.clear();
      row_bytes_ = r->size() * sizeof(std::uint64_t);
    }
    return lib_rows_.try_emplace(key, r, lib).first->second.first;
  }

  std::shared_ptr<StackClosure> compute(const ComputerGraph& cg) {
    std::vector<std::uint32_t> lib_offsets(cg.libs.size());
    std::uint32_t off = 0;
    for (std::uint32_t s = 0; s < cg.libs.size(); ++s) {
      lib_offsets[s] = off;
      off += cg.lib_function_count(s);
    }
    const std::uint32_t os_count = cg.os_function_count();
    auto closure = std::make_shared<StackClosure>(lib_offsets, off, os_count, cg.apps.size());
    const std::size_t os_words = detail::words_for(os_count);

    Rows os_reach;
    std::vector<Rows> lib_reach(cg.libs.size());
    if (cg.os.code) {
      os_reach = os_rows(cg.os.code);
      for (std::uint32_t s = 0; s < cg.libs.size(); ++s)
        if (cg.libs[s].code) lib_reach[s] = lib_rows(cg.libs[s].code, cg.os.code);
    }
    std::uint64_t full_tail = os_count % 64 ? (std::uint64_t{1} << (os_count % 64)) - 1 : ~std::uint64_t{0};

    std::vector<std::uint64_t> lib_seen(detail::words_for(off));
    std::vector<std::uint64_t> os_seen(os_words);
    std::vector<std::uint32_t> stack;
    auto visit_lib = [&](LibFnRef r) {
      if (r.slot >= cg.libs.size() || r.function >= cg.lib_function_count(r.slot)) return;
      const std::uint32_t local = lib_offsets[r.slot] + r.function;
      auto& w = lib_seen[local / 64];
      const std::uint64_t bit = std::uint64_t{1} << (local % 64);
      if (w & bit) return;
      w |= bit;
      stack.push_back(local);
    };
    auto or_rows = [&](const std::vector<std::uint64_t>& rows, std::size_t row) {
      const std::uint64_t* src = rows.data() + row * os_words;
      for (std::size_t i = 0; i < os_words; ++i) os_seen[i] |= src[i];
    };
    auto os_full = [&] {
      for (std::size_t i = 0; i + 1 < os_words; ++i)
        if (os_seen[i] != ~std::uint64_t{0}) return false;
      return os_words == 0 || os_seen[os_words - 1] == full_tail;
    };

    for (std::uint32_t a = 0; a < cg.apps.size(); ++a) {
      std::fill(lib_seen.begin(), lib_seen.end(), 0);
      std::fill(os_seen.begin(), os_seen.end(), 0);
      stack.clear();
      std::vector<std::uint32_t> reached;
      if (const auto& code = cg.apps[a].code) {
        for (LibFnRef r : code->lib_calls) visit_lib(r);
        for (std::uint32_t k : code->os_calls)
          if (k < os_count) or_rows(*os_reach, k);
      }
      while (!stack.empty()) {
        const std::uint32_t local = stack.back();
        stack.pop_back();
        reached.push_back(local);
        const auto slot = static_cast<std::uint32_t>(
            std::upper_bound(lib_offsets.begin(), lib_offsets.end(), local) - lib_offsets.begin() - 1);
        for (LibFnRef r : cg.libs[slot].code->lib_calls.row(local - lib_offsets[slot])) visit_lib(r);
      }
      // OS reach of every reached library function; stops once saturated.
      std::size_t since_check = 0;
      for (std::uint32_t local : reached) {
        if (os_count == 0) break;
        const auto slot = static_cast<std::uint32_t>(
            std::upper_bound(lib_offsets.begin(), lib_offsets.end(), local) - lib_offsets.begin() - 1);
        or_rows(*lib_reach[slot], local - lib_offsets[slot]);
        if (++since_check == 32) {
          since_check = 0;
          if (os_full()) break;
        }
      }
      for (std::size_t w = 0; w < lib_seen.size(); ++w)
        for (std::uint64_t bits = lib_seen[w]; bits; bits &= bits - 1)
          closure->set(a, static_cast<std::uint32_t>(w * 64 + static_cast<std::size_t>(__builtin_ctzll(bits))));
      for (std::size_t w = 0; w < os_words; ++w)
        for (std::uint64_t bits = os_seen[w]; bits; bits &= bits - 1)
          closure->set(a, off + static_cast<std::uint32_t>(w * 64 + static_cast<std::size_t>(__builtin_ctzll(bits))));
    }
    return closure;
  }

  mutable std::mutex mu_;
  std::size_t budget_;
  std::size_t row_bytes_ = 0, closure_bytes_ = 0;
  std::map<std::vector<std::uintptr_t>, Entry> closures_;
  std::map<const OsCode*, std::pair<Rows, std::shared_ptr<const OsCode>>> os_rows_;
  std::map<std::pair<const LibraryCode*, const OsCode*>, std::pair<Rows, std::shared_ptr<const LibraryCode>>> lib_rows_;
};

// Sets signature and closure on a computer graph.
inline void finalize_stack(ComputerGraph& cg, ReachCache& cache) {
  cg.stack_signature = compute_stack_signature(cg);
  cg.closure = cache.closure(cg);
}

// True iff a directed path of length >= 1 leads from `from` to `to`.
inline bool dep_path(const ComputerGraph& cg, const NodeId& from, const NodeId& to) {
  if (from.computer != to.computer)
    throw DomainError("dep_path: " + to_string(from) + " and " + to_string(to) + " are on different computers");
  if (!cg.contains(from) || !cg.contains(to))
    throw DomainError("dep_path: node not in computer " + std::to_string(cg.id));
  if (to.kind == NodeKind::App) return false;  // no arc enters an application
  if (from.kind == NodeKind::App && cg.closure) {
    const auto local = to.kind == NodeKind::LibFn ? cg.closure->lib_index(to.slot, to.index) : cg.closure->os_index(to.index);
    return cg.closure->reaches(from.slot, local);
  }
  std::vector<NodeId> stack;
  std::vector<NodeId> seen;
  auto push = [&](const NodeId& n) {
    auto it = std::lower_bound(seen.begin(), seen.end(), n);
    if (it != seen.end() && *it == n) return;
    seen.insert(it, n);
    stack.push_back(n);
  };
  cg.for_each_successor(from, push);
  while (!stack.empty()) {
    const NodeId n = stack.back();
    stack.pop_back();
    if (n == to) return true;
    cg.for_each_successor(n, push);
  }
  return false;
}

}  // namespace divsim
