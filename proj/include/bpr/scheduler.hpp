#pragma once

// MaxWeight scheduling = maximum weighted independent set on the conflict
// graph. Schedules are one char per link (0/1). Links with zero utility are
// never activated by any solver.

#include <algorithm>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpr/routing.hpp"
#include "bpr/topology.hpp"

namespace bpr {

using Schedule = std::vector<char>;

enum class SchedulerKind { Greedy, LocalGreedy, Exact };

inline std::string to_string(SchedulerKind k) {
  switch (k) {
    case SchedulerKind::Greedy: return "greedy";
    case SchedulerKind::LocalGreedy: return "local_greedy";
    case SchedulerKind::Exact: return "exact";
  }
  return "?";
}

inline SchedulerKind parse_scheduler(std::string_view s) {
  if (s == "greedy" || s == "gms") return SchedulerKind::Greedy;
  if (s == "local_greedy" || s == "local-greedy" || s == "lgs") return SchedulerKind::LocalGreedy;
  if (s == "exact") return SchedulerKind::Exact;
  throw std::invalid_argument("unknown scheduler: " + std::string(s));
}

inline constexpr LinkId kExactMwisMaxLinks = 25;

// u_e = R_e,t * w̃_e; also stored back into the decisions.
inline std::vector<double> build_utilities(std::span<LinkDecision> decisions,
                                           std::span<const Count> rates) {
  if (decisions.size() != rates.size()) throw std::invalid_argument("build_utilities: size mismatch");
  std::vector<double> u(decisions.size());
  for (std::size_t l = 0; l < decisions.size(); ++l) {
    u[l] = decisions[l].weight > 0 ? static_cast<double>(rates[l]) * decisions[l].weight : 0.0;
    decisions[l].utility = u[l];
  }
  return u;
}

inline double schedule_utility(std::span<const char> s, std::span<const double> utilities) {
  double total = 0.0;
  for (std::size_t l = 0; l < s.size(); ++l)
    if (s[l]) total += utilities[l];
  return total;
}

// True if no positive-utility link can be added without a conflict.
inline bool is_maximal(const ConflictGraph& cg, std::span<const char> s,
                       std::span<const double> utilities) {
  for (LinkId e = 0; e < cg.num_vertices(); ++e) {
    if (s[e] || !(utilities[e] > 0)) continue;
    bool blocked = false;
    for (LinkId u : cg.neighbors(e)) blocked = blocked || s[u];
    if (!blocked) return false;
  }
  return true;
}

namespace detail {
inline void check_utilities(const ConflictGraph& cg, std::span<const double> utilities) {
  if (utilities.size() != static_cast<std::size_t>(cg.num_vertices()))
    throw std::invalid_argument("utility vector size does not match conflict graph");
  for (double u : utilities)
    if (!(u >= 0)) throw std::invalid_argument("utilities must be non-negative");
}

// Strict total order: higher utility first, then smaller id.
inline bool ranks_above(std::span<const double> u, LinkId a, LinkId b) {
  return u[a] != u[b] ? u[a] > u[b] : a < b;
}
}  // namespace detail

// Centralized greedy maximal scheduler.
inline Schedule greedy_maximal_schedule(const ConflictGraph& cg, std::span<const double> utilities) {
  detail::check_utilities(cg, utilities);
  std::vector<LinkId> order;
  for (LinkId e = 0; e < cg.num_vertices(); ++e)
    if (utilities[e] > 0) order.push_back(e);
  std::sort(order.begin(), order.end(),
            [&](LinkId a, LinkId b) { return detail::ranks_above(utilities, a, b); });
  Schedule s(static_cast<std::size_t>(cg.num_vertices()), 0);
  std::vector<char> blocked(s.size(), 0);
  for (LinkId e : order) {
    if (blocked[e]) continue;
    s[e] = 1;
    for (LinkId u : cg.neighbors(e)) blocked[u] = 1;
  }
  return s;
}

// Synchronous-round emulation of the distributed local greedy scheduler:
// each round, every undecided link that outranks all its undecided
// neighbours joins, and its neighbours drop out.
inline Schedule local_greedy_schedule(const ConflictGraph& cg, std::span<const double> utilities) {
  detail::check_utilities(cg, utilities);
  const auto n = static_cast<std::size_t>(cg.num_vertices());
  enum : char { Undecided, In, Out };
  std::vector<char> state(n, Out);
  std::size_t undecided = 0;
  for (std::size_t e = 0; e < n; ++e)
    if (utilities[e] > 0) {
      state[e] = Undecided;
      ++undecided;
    }
  std::vector<LinkId> winners;
  while (undecided > 0) {
    winners.clear();
    for (LinkId e = 0; e < static_cast<LinkId>(n); ++e) {
      if (state[e] != Undecided) continue;
      bool local_max = true;
      for (LinkId u : cg.neighbors(e)) {
        if (state[u] == Undecided && detail::ranks_above(utilities, u, e)) {
          local_max = false;
          break;
        }
      }
      if (local_max) winners.push_back(e);
    }
    for (LinkId e : winners) {
      state[e] = In;
      --undecided;
      for (LinkId u : cg.neighbors(e))
        if (state[u] == Undecided) {
          state[u] = Out;
          --undecided;
        }
    }
  }
  Schedule s(n, 0);
  for (std::size_t e = 0; e < n; ++e) s[e] = state[e] == In;
  return s;
}

// Exact MWIS by branch and bound over positive-utility links.
inline Schedule exact_mwis(const ConflictGraph& cg, std::span<const double> utilities) {
  detail::check_utilities(cg, utilities);
  if (cg.num_vertices() > kExactMwisMaxLinks)
    throw std::invalid_argument("exact_mwis: instance too large (" + std::to_string(cg.num_vertices()) +
                                " links, limit " + std::to_string(kExactMwisMaxLinks) + ")");
  const auto n = static_cast<std::size_t>(cg.num_vertices());
  std::vector<LinkId> cand;
  for (LinkId e = 0; e < static_cast<LinkId>(n); ++e)
    if (utilities[e] > 0) cand.push_back(e);
  std::sort(cand.begin(), cand.end(),
            [&](LinkId a, LinkId b) { return detail::ranks_above(utilities, a, b); });
  std::vector<double> suffix(cand.size() + 1, 0.0);
  for (std::size_t k = cand.size(); k-- > 0;) suffix[k] = suffix[k + 1] + utilities[cand[k]];

  Schedule cur(n, 0), best(n, 0);
  std::vector<int> blocked(n, 0);
  double best_value = 0.0;

  auto recurse = [&](auto&& self, std::size_t k, double value) -> void {
    if (value > best_value) {
      best_value = value;
      best = cur;
    }
    if (k == cand.size() || value + suffix[k] <= best_value) return;
    const LinkId e = cand[k];
    if (!blocked[e]) {
      cur[e] = 1;
      for (LinkId u : cg.neighbors(e)) ++blocked[u];
      self(self, k + 1, value + utilities[e]);
      for (LinkId u : cg.neighbors(e)) --blocked[u];
      cur[e] = 0;
    }
    self(self, k + 1, value);
  };
  recurse(recurse, 0, 0.0);
  return best;
}

inline Schedule solve_schedule(SchedulerKind kind, const ConflictGraph& cg,
                               std::span<const double> utilities) {
  switch (kind) {
    case SchedulerKind::Greedy: return greedy_maximal_schedule(cg, utilities);
    case SchedulerKind::LocalGreedy: return local_greedy_schedule(cg, utilities);
    case SchedulerKind::Exact: return exact_mwis(cg, utilities);
  }
  throw std::invalid_argument("unknown scheduler kind");
}

}  // namespace bpr
