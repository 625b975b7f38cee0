#pragma once

// Per-slot backpressure decisions: commodity selection, differential backlog,
// the biased variants, and queue updates after transmission.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "bpr/common.hpp"
#include "bpr/topology.hpp"
#include "bpr/traffic.hpp"

namespace bpr {

// B_i^(c), dense |V| x |V|, row = node, column = commodity.
class BiasTable {
 public:
  BiasTable() = default;
  explicit BiasTable(NodeId num_nodes)
      : n_(num_nodes), bias_(static_cast<std::size_t>(num_nodes) * num_nodes, 0.0) {}

  NodeId num_nodes() const { return n_; }
  double operator()(NodeId i, NodeId c) const { return bias_[index(i, c)]; }
  double& operator()(NodeId i, NodeId c) { return bias_[index(i, c)]; }
  std::span<const double> values() const { return bias_; }

  bool all_zero() const {
    return std::all_of(bias_.begin(), bias_.end(), [](double b) { return b == 0.0; });
  }

  void validate() const {
    for (NodeId i = 0; i < n_; ++i) {
      if ((*this)(i, i) != 0.0) throw std::invalid_argument("bias table: B_c^(c) must be 0");
      for (NodeId c = 0; c < n_; ++c) {
        const double b = (*this)(i, c);
        if (!(b >= 0.0) || !std::isfinite(b))
          throw std::invalid_argument("bias table: entries must be finite and non-negative");
      }
    }
  }

  friend bool operator==(const BiasTable&, const BiasTable&) = default;

 private:
  std::size_t index(NodeId i, NodeId c) const { return static_cast<std::size_t>(i) * n_ + c; }

  NodeId n_ = 0;
  std::vector<double> bias_;
};

struct Packet {
  std::int32_t flow;
  Slot born;

  friend bool operator==(const Packet&, const Packet&) = default;
};

// U_i^(c) with FIFO packet records. Only commodities that are destinations
// of some flow get storage; every other backlog is identically zero.
class QueueState {
 public:
  QueueState() = default;
  QueueState(NodeId num_nodes, std::span<const Flow> flows) : n_(num_nodes) {
    for (const auto& f : flows) {
      if (f.source == f.destination) throw std::invalid_argument("flow with source == destination");
      if (f.source < 0 || f.source >= n_ || f.destination < 0 || f.destination >= n_)
        throw std::invalid_argument("flow endpoint out of range");
      commodities_.push_back(f.destination);
    }
    std::sort(commodities_.begin(), commodities_.end());
    commodities_.erase(std::unique(commodities_.begin(), commodities_.end()), commodities_.end());
    slot_of_.assign(static_cast<std::size_t>(n_), -1);
    for (std::size_t k = 0; k < commodities_.size(); ++k) slot_of_[commodities_[k]] = static_cast<int>(k);
    queues_.resize(static_cast<std::size_t>(n_) * commodities_.size());
  }

  NodeId num_nodes() const { return n_; }
  // Active commodities in ascending id order.
  std::span<const NodeId> commodities() const { return commodities_; }

  Count backlog(NodeId i, NodeId c) const {
    const int k = slot_of_.at(c);
    return k < 0 ? 0 : static_cast<Count>(queue(i, k).size());
  }

  // Backlog by commodity slot (index into commodities()).
  Count backlog_at(NodeId i, std::size_t k) const { return static_cast<Count>(queue(i, k).size()); }

  void push(NodeId i, NodeId c, Packet p) { queue(i, require_slot(c)).push_back(p); }

  // Removes up to max_count oldest packets of commodity c at node i.
  std::vector<Packet> pop(NodeId i, NodeId c, Count max_count) {
    auto& q = queue(i, require_slot(c));
    const auto n = static_cast<std::size_t>(std::clamp<Count>(max_count, 0, static_cast<Count>(q.size())));
    std::vector<Packet> out(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(n));
    q.erase(q.begin(), q.begin() + static_cast<std::ptrdiff_t>(n));
    return out;
  }

  Count total_backlog() const {
    Count s = 0;
    for (const auto& q : queues_) s += static_cast<Count>(q.size());
    return s;
  }

  template <typename Fn>
  void for_each_packet(Fn&& fn) const {
    for (NodeId i = 0; i < n_; ++i)
      for (std::size_t k = 0; k < commodities_.size(); ++k)
        for (const auto& p : queue(i, k)) fn(i, commodities_[k], p);
  }

  friend bool operator==(const QueueState&, const QueueState&) = default;

 private:
  int require_slot(NodeId c) const {
    const int k = slot_of_.at(c);
    if (k < 0) throw std::invalid_argument("commodity " + std::to_string(c) + " has no flow");
    return k;
  }
  std::deque<Packet>& queue(NodeId i, std::size_t k) { return queues_[static_cast<std::size_t>(i) * commodities_.size() + k]; }
  const std::deque<Packet>& queue(NodeId i, std::size_t k) const {
    return queues_[static_cast<std::size_t>(i) * commodities_.size() + k];
  }

  NodeId n_ = 0;
  std::vector<NodeId> commodities_;
  std::vector<int> slot_of_;
  std::vector<std::deque<Packet>> queues_;
};

struct RoutingOptions {
  // A commodity is a candidate on (i -> j) only if node i holds packets of
  // it. Without this a positive bias gradient can win the argmax for a
  // commodity that has nothing to send, and the scheduled link idles.
  bool require_backlog = true;
};

struct CommodityChoice {
  NodeId commodity = kNoNode;  // kNoNode when no candidate exists
  double backpressure = 0.0;   // attained max, may be negative

  friend bool operator==(const CommodityChoice&, const CommodityChoice&) = default;
};

// argmax_c {Ũ_i^(c) - Ũ_j^(c)} over the given commodities (ascending ids, so
// the strict comparison keeps the smallest id on ties). eligible[k] == false
// removes commodity k from consideration.
inline CommodityChoice select_commodity(std::span<const double> effective_i,
                                        std::span<const double> effective_j,
                                        std::span<const NodeId> commodities,
                                        std::span<const char> eligible = {}) {
  CommodityChoice best;
  bool found = false;
  for (std::size_t k = 0; k < commodities.size(); ++k) {
    if (!eligible.empty() && !eligible[k]) continue;
    const double bp = effective_i[k] - effective_j[k];
    if (!found || bp > best.backpressure) {
      best = {commodities[k], bp};
      found = true;
    }
  }
  return best;
}

struct LinkWeight {
  double weight = 0.0;  // w̃ = max(w_ij, w_ji), w = max(bp, 0)
  NodeId sender = kNoNode;
  NodeId receiver = kNoNode;
  NodeId commodity = kNoNode;
};

// Direction ties go to the lexicographically smaller (sender, receiver).
inline LinkWeight link_weight(NodeId i, NodeId j, const CommodityChoice& ij,
                              const CommodityChoice& ji) {
  const double w_ij = ij.commodity == kNoNode ? 0.0 : std::max(ij.backpressure, 0.0);
  const double w_ji = ji.commodity == kNoNode ? 0.0 : std::max(ji.backpressure, 0.0);
  bool forward;
  if (w_ij != w_ji) {
    forward = w_ij > w_ji;
  } else {
    forward = i < j;
  }
  return forward ? LinkWeight{w_ij, i, j, ij.commodity} : LinkWeight{w_ji, j, i, ji.commodity};
}

struct LinkDecision {
  LinkId link = -1;
  NodeId sender = kNoNode;
  NodeId receiver = kNoNode;
  NodeId commodity = kNoNode;
  double weight = 0.0;
  double utility = 0.0;

  friend bool operator==(const LinkDecision&, const LinkDecision&) = default;
};

namespace detail {

template <typename Effective>
std::vector<LinkDecision> decide(const ConnectivityGraph& g, const QueueState& q,
                                 const RoutingOptions& opt, Effective&& effective) {
  const auto cs = q.commodities();
  const std::size_t nc = cs.size();
  std::vector<double> eff(static_cast<std::size_t>(g.num_nodes()) * nc);
  std::vector<char> eligible(eff.size());
  for (NodeId v = 0; v < g.num_nodes(); ++v) {
    for (std::size_t k = 0; k < nc; ++k) {
      const Count u = q.backlog_at(v, k);
      eff[v * nc + k] = effective(v, k, u);
      eligible[v * nc + k] = !opt.require_backlog || u > 0;
    }
  }
  auto row = [&](NodeId v) { return std::span<const double>(eff.data() + v * nc, nc); };
  auto elig = [&](NodeId v) { return std::span<const char>(eligible.data() + v * nc, nc); };

  std::vector<LinkDecision> out(static_cast<std::size_t>(g.num_links()));
  for (LinkId l = 0; l < g.num_links(); ++l) {
    const Edge& e = g.edge(l);
    const auto ab = select_commodity(row(e.a), row(e.b), cs, elig(e.a));
    const auto ba = select_commodity(row(e.b), row(e.a), cs, elig(e.b));
    const auto lw = link_weight(e.a, e.b, ab, ba);
    out[l] = {l, lw.sender, lw.receiver, lw.commodity, lw.weight, 0.0};
  }
  return out;
}

}  // namespace detail

// Classical backpressure: commodity choice and weight from raw backlogs.
inline std::vector<LinkDecision> decide_links(const ConnectivityGraph& g, const QueueState& q,
                                              const RoutingOptions& opt = {}) {
  return detail::decide(g, q, opt, [](NodeId, std::size_t, Count u) { return static_cast<double>(u); });
}

// Biased backpressure on Ũ = U + B.
inline std::vector<LinkDecision> decide_links(const ConnectivityGraph& g, const QueueState& q,
                                              const BiasTable& bias, const RoutingOptions& opt = {}) {
  if (bias.num_nodes() != g.num_nodes()) throw std::invalid_argument("bias table size mismatch");
  const auto cs = q.commodities();
  return detail::decide(g, q, opt, [&](NodeId v, std::size_t k, Count u) {
    return static_cast<double>(u) + bias(v, cs[k]);
  });
}

struct Transmission {
  LinkId link;
  NodeId sender;
  NodeId receiver;
  NodeId commodity;
  Count count;

  friend bool operator==(const Transmission&, const Transmission&) = default;
};

struct Delivery {
  std::int32_t flow;
  Slot born;
  Slot delivered_at;  // end of the delivering slot, i.e. t + 1

  friend bool operator==(const Delivery&, const Delivery&) = default;
};

struct SlotTransmissions {
  std::vector<Transmission> transmissions;
  std::vector<Delivery> deliveries;
};

inline bool is_independent(const ConflictGraph& cg, std::span<const char> schedule) {
  for (const auto& [u, v] : cg.conflicts())
    if (schedule[u] && schedule[v]) return false;
  return true;
}

// Moves min(R_e,t, U_sender^(c*)) oldest packets over every scheduled link
// with positive weight. All senders are drained before any receiver is
// filled, so a packet crosses at most one link per slot.
inline SlotTransmissions commit_transmissions(QueueState& state, const ConflictGraph& cg,
                                              std::span<const char> schedule,
                                              std::span<const LinkDecision> decisions,
                                              std::span<const Count> rates, Slot t) {
  if (schedule.size() != static_cast<std::size_t>(cg.num_vertices()) ||
      decisions.size() != schedule.size() || rates.size() != schedule.size())
    throw std::invalid_argument("commit_transmissions: size mismatch");
  if (!is_independent(cg, schedule))
    throw InvariantError("slot " + std::to_string(t) + ": schedule is not an independent set");

  SlotTransmissions out;
  std::vector<std::vector<Packet>> moving;
  for (std::size_t l = 0; l < schedule.size(); ++l) {
    const auto& d = decisions[l];
    if (!schedule[l] || !(d.weight > 0) || d.commodity == kNoNode) continue;
    auto pkts = state.pop(d.sender, d.commodity, rates[l]);
    if (pkts.empty()) continue;
    out.transmissions.push_back({d.link, d.sender, d.receiver, d.commodity, static_cast<Count>(pkts.size())});
    moving.push_back(std::move(pkts));
  }
  for (std::size_t k = 0; k < moving.size(); ++k) {
    const auto& tx = out.transmissions[k];
    for (const auto& p : moving[k]) {
      if (tx.receiver == tx.commodity)
        out.deliveries.push_back({p.flow, p.born, t + 1});
      else
        state.push(tx.receiver, tx.commodity, p);
    }
  }
  return out;
}

// Appends the slot-t arrivals of every flow at its source, oldest first.
inline Count apply_arrivals(QueueState& state, const ArrivalMatrix& arrivals,
                            std::span<const Flow> flows, Slot t) {
  Count n = 0;
  for (std::size_t f = 0; f < flows.size(); ++f) {
    const Count a = arrivals.at(f, t);
    for (Count k = 0; k < a; ++k)
      state.push(flows[f].source, flows[f].destination, {static_cast<std::int32_t>(f), t});
    n += a;
  }
  return n;
}

}  // namespace bpr
