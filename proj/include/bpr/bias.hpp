#pragma once

// Shortest-path bias tables. Each policy turns per-link information (hop
// count, long-term rate, predicted duty cycle) into positive link distances;
// the bias B_i^(c) is then the weighted shortest-path distance from i to c.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "bpr/routing.hpp"
#include "bpr/topology.hpp"
#include "bpr/traffic.hpp"

namespace bpr {

enum class DistanceKind {
  None,         // no bias (classical backpressure)
  ScaledHop,    // δ = k            (SP-Hop for k = 1, EDR-k otherwise)
  RateScaled,   // δ = k r̄ / r_e
  DutyInverse,  // δ = 1 / x_e
  DutyRate,     // δ = r̄ / (x_e r_e)
};

struct DistancePolicy {
  DistanceKind kind = DistanceKind::None;
  double scale = 1.0;

  static DistancePolicy none() { return {DistanceKind::None, 0.0}; }
  static DistancePolicy hop() { return {DistanceKind::ScaledHop, 1.0}; }
  static DistancePolicy scaled_hop(double k) { return {DistanceKind::ScaledHop, k}; }
  static DistancePolicy rate_scaled(double k) { return {DistanceKind::RateScaled, k}; }
  static DistancePolicy duty_inverse() { return {DistanceKind::DutyInverse, 1.0}; }
  static DistancePolicy duty_rate() { return {DistanceKind::DutyRate, 1.0}; }

  bool needs_duty() const { return kind == DistanceKind::DutyInverse || kind == DistanceKind::DutyRate; }
  bool needs_rates() const { return kind == DistanceKind::RateScaled || kind == DistanceKind::DutyRate; }

  friend bool operator==(const DistancePolicy&, const DistancePolicy&) = default;
};

namespace detail {
inline std::string format_scale(double k) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", k);
  return buf;
}
}  // namespace detail

inline std::string to_string(const DistancePolicy& p) {
  switch (p.kind) {
    case DistanceKind::None: return "BP";
    case DistanceKind::ScaledHop:
      return p.scale == 1.0 ? "SP-Hop" : "EDR-" + detail::format_scale(p.scale);
    case DistanceKind::RateScaled: return "SP-" + detail::format_scale(p.scale) + "r/r";
    case DistanceKind::DutyInverse: return "SP-1/x";
    case DistanceKind::DutyRate: return "SP-r/(xr)";
  }
  return "?";
}

// Accepts the display names produced by to_string (case-insensitive) plus a
// few short aliases: bp, hop, edr10, rate10, duty, dutyrate.
inline DistancePolicy parse_policy(std::string_view text) {
  std::string s;
  for (char ch : text) s += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  auto number = [&](std::string_view digits) {
    std::size_t used = 0;
    const double k = std::stod(std::string(digits), &used);
    if (used != digits.size() || !(k > 0)) throw std::invalid_argument("bad policy scale");
    return k;
  };
  try {
    if (s == "bp" || s == "none") return DistancePolicy::none();
    if (s == "sp-hop" || s == "hop") return DistancePolicy::hop();
    if (s == "sp-1/x" || s == "duty") return DistancePolicy::duty_inverse();
    if (s == "sp-r/(xr)" || s == "dutyrate" || s == "duty-rate") return DistancePolicy::duty_rate();
    if (s.rfind("edr-", 0) == 0) return DistancePolicy::scaled_hop(number(std::string_view(s).substr(4)));
    if (s.rfind("edr", 0) == 0) return DistancePolicy::scaled_hop(number(std::string_view(s).substr(3)));
    if (s.rfind("rate", 0) == 0) return DistancePolicy::rate_scaled(number(std::string_view(s).substr(4)));
    if (s.rfind("sp-", 0) == 0 && s.size() > 6 && s.ends_with("r/r"))
      return DistancePolicy::rate_scaled(number(std::string_view(s).substr(3, s.size() - 6)));
  } catch (const std::invalid_argument&) {
  } catch (const std::out_of_range&) {
  }
  throw std::invalid_argument("unknown routing policy: " + std::string(text));
}

// Per-link distances on the connectivity graph. duty is indexed by link id
// (= conflict-graph vertex id).
inline std::vector<double> link_distances(const DistancePolicy& policy, LinkId num_links,
                                          std::optional<std::span<const double>> duty = std::nullopt,
                                          const LinkRateProcess* rates = nullptr) {
  if (policy.kind == DistanceKind::None) return std::vector<double>(static_cast<std::size_t>(num_links), 0.0);
  if (policy.needs_duty() && (!duty || duty->size() != static_cast<std::size_t>(num_links)))
    throw std::invalid_argument(to_string(policy) + " requires duty cycles for every link");
  if (policy.needs_rates() && (!rates || rates->num_links() != static_cast<std::size_t>(num_links)))
    throw std::invalid_argument(to_string(policy) + " requires link rates for every link");
  if ((policy.kind == DistanceKind::ScaledHop || policy.kind == DistanceKind::RateScaled) &&
      !(policy.scale > 0))
    throw std::invalid_argument("policy scale must be > 0");

  std::vector<double> d(static_cast<std::size_t>(num_links));
  for (LinkId e = 0; e < num_links; ++e) {
    double r = 0.0;
    if (policy.needs_rates()) {
      r = rates->long_term_rates[e];
      if (!(r > 0)) throw std::invalid_argument("link " + std::to_string(e) + " has zero long-term rate");
    }
    double x = 0.0;
    if (policy.needs_duty()) {
      x = (*duty)[e];
      if (!(x > 0)) throw std::invalid_argument("duty cycle must be > 0");
    }
    switch (policy.kind) {
      case DistanceKind::ScaledHop: d[e] = policy.scale; break;
      case DistanceKind::RateScaled: d[e] = policy.scale * rates->network_mean_rate / r; break;
      case DistanceKind::DutyInverse: d[e] = 1.0 / x; break;
      case DistanceKind::DutyRate: d[e] = rates->network_mean_rate / (x * r); break;
      case DistanceKind::None: break;
    }
    if (!(d[e] > 0) || !std::isfinite(d[e]))
      throw std::invalid_argument("non-positive or non-finite link distance");
  }
  return d;
}

namespace detail {
inline void check_distances(const ConnectivityGraph& g, std::span<const double> delta) {
  if (delta.size() != static_cast<std::size_t>(g.num_links()))
    throw std::invalid_argument("distance vector size does not match link count");
  for (double d : delta)
    if (!(d > 0) || !std::isfinite(d)) throw std::invalid_argument("link distances must be finite and > 0");
}
}  // namespace detail

// Dijkstra from one node; returns distances to every node.
inline std::vector<double> dijkstra(const ConnectivityGraph& g, std::span<const double> delta, NodeId src) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(static_cast<std::size_t>(g.num_nodes()), inf);
  using Item = std::pair<double, NodeId>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[src] = 0.0;
  pq.push({0.0, src});
  while (!pq.empty()) {
    const auto [d, v] = pq.top();
    pq.pop();
    if (d > dist[v]) continue;
    for (const auto& nb : g.neighbors(v)) {
      const double cand = d + delta[nb.link];
      if (cand < dist[nb.node]) {
        dist[nb.node] = cand;
        pq.push({cand, nb.node});
      }
    }
  }
  return dist;
}

// B_i^(c) = weighted shortest-path distance between i and c.
inline BiasTable apsp_bias(const ConnectivityGraph& g, std::span<const double> delta) {
  detail::check_distances(g, delta);
  BiasTable table(g.num_nodes());
  for (NodeId c = 0; c < g.num_nodes(); ++c) {
    const auto dist = dijkstra(g, delta, c);
    for (NodeId i = 0; i < g.num_nodes(); ++i) {
      if (!std::isfinite(dist[i]))
        throw std::invalid_argument("apsp_bias: node " + std::to_string(i) + " cannot reach " + std::to_string(c));
      table(i, c) = dist[i];
    }
  }
  return table;
}

struct SsspResult {
  std::vector<double> distance;  // distance[i] = B_i^(c)
  int rounds = 0;                // synchronous rounds that changed some estimate
};

// Synchronous Bellman-Ford towards destination c: in each round every node
// takes the best neighbour estimate from the previous round, as a
// distributed implementation would.
inline SsspResult sssp_bias(const ConnectivityGraph& g, std::span<const double> delta, NodeId c) {
  detail::check_distances(g, delta);
  constexpr double inf = std::numeric_limits<double>::infinity();
  SsspResult res;
  std::vector<double> cur(static_cast<std::size_t>(g.num_nodes()), inf);
  cur[c] = 0.0;
  std::vector<double> next = cur;
  for (;;) {
    bool changed = false;
    for (NodeId v = 0; v < g.num_nodes(); ++v) {
      for (const auto& nb : g.neighbors(v)) {
        const double cand = cur[nb.node] + delta[nb.link];
        if (cand < next[v]) {
          next[v] = cand;
          changed = true;
        }
      }
    }
    if (!changed) break;
    ++res.rounds;
    cur = next;
    if (res.rounds > g.num_nodes()) throw InvariantError("sssp_bias: no convergence");
  }
  for (NodeId v = 0; v < g.num_nodes(); ++v)
    if (!std::isfinite(cur[v]))
      throw std::invalid_argument("sssp_bias: node " + std::to_string(v) + " cannot reach " + std::to_string(c));
  res.distance = std::move(cur);
  return res;
}

// The bias a policy induces on an instance; nullopt for classical BP.
inline std::optional<BiasTable> policy_bias(const DistancePolicy& policy, const ConnectivityGraph& g,
                                            std::optional<std::span<const double>> duty,
                                            const LinkRateProcess* rates) {
  if (policy.kind == DistanceKind::None) return std::nullopt;
  return apsp_bias(g, link_distances(policy, g.num_links(), duty, rates));
}

inline void write_bias_csv(std::ostream& os, const BiasTable& b) {
  os << "source,destination,bias\n";
  char buf[64];
  for (NodeId i = 0; i < b.num_nodes(); ++i)
    for (NodeId c = 0; c < b.num_nodes(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", b(i, c));
      os << i << ',' << c << ',' << buf << '\n';
    }
}

inline BiasTable read_bias_csv(std::istream& is) {
  std::string line;
  std::vector<std::tuple<NodeId, NodeId, double>> rows;
  NodeId n = 0;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#' || line.rfind("source", 0) == 0) continue;
    std::istringstream ss(line);
    std::string a, b, v;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, v))
      throw std::invalid_argument("bias csv: malformed row: " + line);
    rows.emplace_back(std::stoi(a), std::stoi(b), std::stod(v));
    n = std::max({n, std::get<0>(rows.back()) + 1, std::get<1>(rows.back()) + 1});
  }
  BiasTable t(n);
  for (const auto& [i, c, v] : rows) t(i, c) = v;
  return t;
}

}  // namespace bpr
