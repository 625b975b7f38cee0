#pragma once

// Episode loop and benchmark harness.
//
// Slot t:  arrivals -> per-link commodity/weight -> utilities -> schedule ->
//          transmissions.
// A packet delivered during slot t is stamped t + 1 (end of slot), so its
// delay is t + 1 - born; a packet still queued at the horizon T counts T - born.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "bpr/bias.hpp"
#include "bpr/common.hpp"
#include "bpr/gnn.hpp"
#include "bpr/routing.hpp"
#include "bpr/scheduler.hpp"
#include "bpr/topology.hpp"
#include "bpr/traffic.hpp"

namespace bpr {

struct SlotRecord {
  Schedule schedule;
  std::vector<Transmission> transmissions;
  Count arrivals = 0;
  Count delivered = 0;

  friend bool operator==(const SlotRecord&, const SlotRecord&) = default;
};

struct PacketOutcome {
  std::int32_t flow;
  Slot born;
  Slot delivered_at;  // -1 if still queued at the horizon

  friend bool operator==(const PacketOutcome&, const PacketOutcome&) = default;
};

struct SlotTrace {
  Slot horizon = 0;
  std::vector<SlotRecord> slots;       // empty unless per-slot recording is on
  std::vector<Count> total_backlog;    // after each slot
  std::vector<Count> schedule_counts;  // per link, slots in which it was active
  std::vector<PacketOutcome> packets;  // delivered (in delivery order), then undelivered

  friend bool operator==(const SlotTrace&, const SlotTrace&) = default;
};

struct EpisodeMetrics {
  double mean_delay = 0.0;
  double delivery_rate = 1.0;
  Count arrived = 0;
  Count delivered = 0;
  std::vector<Count> backlog;
  std::vector<double> schedule_frequency;
};

struct EpisodeOptions {
  Slot horizon = 0;  // 0 = the episode's full horizon
  SchedulerKind scheduler = SchedulerKind::Greedy;
  RoutingOptions routing;
  bool record_slots = false;
};

struct EpisodeResult {
  EpisodeMetrics metrics;
  SlotTrace trace;
};

inline EpisodeMetrics compute_metrics(const SlotTrace& trace, Slot horizon) {
  EpisodeMetrics m;
  m.arrived = static_cast<Count>(trace.packets.size());
  long double delay = 0;
  for (const auto& p : trace.packets) {
    if (p.delivered_at >= 0) {
      ++m.delivered;
      delay += p.delivered_at - p.born;
    } else {
      delay += horizon - p.born;
    }
  }
  if (m.arrived > 0) {
    m.mean_delay = static_cast<double>(delay / m.arrived);
    m.delivery_rate = static_cast<double>(m.delivered) / static_cast<double>(m.arrived);
  }
  m.backlog = trace.total_backlog;
  m.schedule_frequency.resize(trace.schedule_counts.size());
  for (std::size_t e = 0; e < trace.schedule_counts.size(); ++e)
    m.schedule_frequency[e] = horizon > 0 ? static_cast<double>(trace.schedule_counts[e]) / horizon : 0.0;
  return m;
}

// bias == nullptr runs classical backpressure on raw backlogs.
inline EpisodeResult run_episode(const NetworkInstance& net, const Episode& ep, const BiasTable* bias,
                                 const EpisodeOptions& opt = {}) {
  const Slot T = opt.horizon > 0 ? opt.horizon : ep.horizon();
  if (T < 1) throw std::invalid_argument("run_episode: horizon must be >= 1");
  if (T > ep.horizon() || T > ep.rates.horizon)
    throw std::invalid_argument("run_episode: horizon exceeds episode length");
  if (ep.rates.num_links() != static_cast<std::size_t>(net.num_links()))
    throw std::invalid_argument("run_episode: link rate process does not match instance");
  if (bias) {
    if (bias->num_nodes() != net.num_nodes()) throw std::invalid_argument("run_episode: bias size mismatch");
    bias->validate();
  }

  const auto E = static_cast<std::size_t>(net.num_links());
  QueueState state(net.num_nodes(), ep.flows);
  EpisodeResult res;
  SlotTrace& tr = res.trace;
  tr.horizon = T;
  tr.schedule_counts.assign(E, 0);
  tr.total_backlog.reserve(static_cast<std::size_t>(T));
  if (opt.record_slots) tr.slots.reserve(static_cast<std::size_t>(T));

  Count arrived = 0;
  Count delivered = 0;
  std::vector<Count> rates(E);
  for (Slot t = 0; t < T; ++t) {
    const Count a = apply_arrivals(state, ep.arrivals, ep.flows, t);
    arrived += a;

    auto decisions = bias ? decide_links(net.graph, state, *bias, opt.routing)
                          : decide_links(net.graph, state, opt.routing);
    for (std::size_t e = 0; e < E; ++e) rates[e] = ep.rates.rate(static_cast<LinkId>(e), t);
    const auto utilities = build_utilities(decisions, rates);
    Schedule s = solve_schedule(opt.scheduler, net.conflicts, utilities);
    auto tx = commit_transmissions(state, net.conflicts, s, decisions, rates, t);

    for (const auto& d : tx.deliveries) tr.packets.push_back({d.flow, d.born, d.delivered_at});
    delivered += static_cast<Count>(tx.deliveries.size());
    for (std::size_t e = 0; e < E; ++e) tr.schedule_counts[e] += s[e] ? 1 : 0;

    const Count backlog = state.total_backlog();
    if (delivered + backlog != arrived)
      throw InvariantError("slot " + std::to_string(t) + ": packet conservation violated (arrived " +
                           std::to_string(arrived) + ", delivered " + std::to_string(delivered) +
                           ", queued " + std::to_string(backlog) + ")");
    for (NodeId c : state.commodities())
      if (state.backlog(c, c) != 0)
        throw InvariantError("slot " + std::to_string(t) + ": packets queued at their destination");
    tr.total_backlog.push_back(backlog);

    if (opt.record_slots)
      tr.slots.push_back({std::move(s), std::move(tx.transmissions), a, static_cast<Count>(tx.deliveries.size())});
  }

  std::vector<PacketOutcome> left;
  state.for_each_packet([&](NodeId, NodeId, const Packet& p) { left.push_back({p.flow, p.born, -1}); });
  std::sort(left.begin(), left.end(), [](const PacketOutcome& x, const PacketOutcome& y) {
    return std::tie(x.born, x.flow) < std::tie(y.born, y.flow);
  });
  tr.packets.insert(tr.packets.end(), left.begin(), left.end());
  res.metrics = compute_metrics(tr, T);
  return res;
}

// Duty cycles predicted for an instance's conflict graph.
inline std::vector<double> predict_duty(const GnnParams& params, const NetworkInstance& net) {
  return forward(params, net.conflicts).duty;
}

// Runs one policy on one (instance, episode); duty may be empty for
// policies that do not need it.
inline EpisodeResult run_policy(const NetworkInstance& net, const Episode& ep, const DistancePolicy& policy,
                                std::span<const double> duty, const EpisodeOptions& opt = {}) {
  std::optional<std::span<const double>> d;
  if (policy.needs_duty()) {
    if (duty.empty()) throw std::invalid_argument(to_string(policy) + " requires a trained GNN");
    d = duty;
  }
  const auto bias = policy_bias(policy, net.graph, d, &ep.rates);
  return run_episode(net, ep, bias ? &*bias : nullptr, opt);
}

// Runs fn(i) for i in [0, n) on `jobs` threads. Results must be written to
// per-index slots by fn so ordering does not depend on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn&& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, jobs));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lk(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

struct BenchmarkConfig {
  std::vector<int> node_counts{20, 40, 60};
  ConflictModel conflict_model = ConflictModel::UnitDisk;
  double interference_range = kDefaultInterferenceRange;
  double node_density = 8.0 / 3.14159265358979323846;
  double link_range = 1.0;
  std::vector<DistancePolicy> policies;
  int networks_per_size = 10;
  int instances_per_network = 10;
  Slot horizon = 1000;
  SchedulerKind scheduler = SchedulerKind::Greedy;
  RoutingOptions routing;
  TrafficConfig traffic;
  std::vector<double> arrival_rates;  // load sweep; empty = random per-flow rates
  std::uint64_t seed = 1;
  int jobs = 1;
};

struct BenchmarkRow {
  int num_nodes = 0;
  ConflictModel conflict_model = ConflictModel::UnitDisk;
  std::string policy;
  std::uint64_t seed = 0;  // episode seed
  double mean_delay = 0.0;
  double delivery_rate = 0.0;
  int network = 0;
  int instance = 0;
  double arrival_rate = -1.0;  // -1 when rates are drawn per flow
};

struct BenchmarkSummary {
  int num_nodes = 0;
  double arrival_rate = -1.0;
  std::string policy;
  int episodes = 0;
  double mean_delay = 0.0;
  double delay_se = 0.0;  // standard error across networks
  double delivery_rate = 0.0;
  double delivery_se = 0.0;
};

inline std::uint64_t network_seed(std::uint64_t seed, int num_nodes, int network) {
  return derive_seed(seed, static_cast<std::uint64_t>(num_nodes), static_cast<std::uint64_t>(network));
}

inline std::uint64_t episode_seed(std::uint64_t net_seed, int instance) {
  return derive_seed(net_seed, 0x1000u + static_cast<std::uint64_t>(instance));
}

inline NetworkInstance benchmark_network(const BenchmarkConfig& cfg, int num_nodes, int network) {
  TopologyConfig tc;
  tc.num_nodes = num_nodes;
  tc.node_density = cfg.node_density;
  tc.link_range = cfg.link_range;
  tc.conflict_model = cfg.conflict_model;
  tc.interference_range = cfg.interference_range;
  tc.rng_seed = network_seed(cfg.seed, num_nodes, network);
  return generate_network(tc);
}

// Every policy sees the same instance, flows, arrivals and link rates for a
// given (size, network, instance, load) cell.
inline std::vector<BenchmarkRow> run_benchmark(const BenchmarkConfig& cfg, const GnnParams* gnn = nullptr) {
  if (cfg.policies.empty()) throw std::invalid_argument("benchmark: empty policy list");
  if (cfg.node_counts.empty()) throw std::invalid_argument("benchmark: empty node-count list");
  if (cfg.networks_per_size < 1 || cfg.instances_per_network < 1)
    throw std::invalid_argument("benchmark: need at least one network and one instance");
  for (const auto& p : cfg.policies)
    if (p.needs_duty() && !gnn) throw std::invalid_argument("benchmark: " + to_string(p) + " requires a GNN checkpoint");

  std::vector<double> loads = cfg.arrival_rates;
  if (loads.empty()) loads.push_back(-1.0);
  struct Cell {
    int n, net, inst;
    double load;
  };
  std::vector<Cell> cells;
  for (int n : cfg.node_counts)
    for (double load : loads)
      for (int k = 0; k < cfg.networks_per_size; ++k)
        for (int j = 0; j < cfg.instances_per_network; ++j) cells.push_back({n, k, j, load});

  const std::size_t P = cfg.policies.size();
  std::vector<BenchmarkRow> rows(cells.size() * P);
  EpisodeOptions opt;
  opt.horizon = cfg.horizon;
  opt.scheduler = cfg.scheduler;
  opt.routing = cfg.routing;

  parallel_for(cells.size(), cfg.jobs, [&](std::size_t ci) {
    const Cell& c = cells[ci];
    const NetworkInstance net = benchmark_network(cfg, c.n, c.net);
    TrafficConfig traffic = cfg.traffic;
    if (c.load >= 0) traffic.fixed_arrival_rate = c.load;
    const std::uint64_t es = episode_seed(net.seed, c.inst);
    const Episode ep = sample_episode(net.num_nodes(), net.num_links(), cfg.horizon, traffic, es);
    std::vector<double> duty;
    if (gnn) duty = predict_duty(*gnn, net);
    for (std::size_t p = 0; p < P; ++p) {
      const auto& pol = cfg.policies[p];
      const auto r = run_policy(net, ep, pol, pol.needs_duty() ? std::span<const double>(duty)
                                                               : std::span<const double>(), opt);
      rows[ci * P + p] = {c.n, cfg.conflict_model, to_string(pol), es, r.metrics.mean_delay,
                          r.metrics.delivery_rate, c.net, c.inst, c.load};
    }
  });
  return rows;
}

// Per (num_nodes, arrival_rate, policy): mean over all episodes, standard
// error over per-network means.
inline std::vector<BenchmarkSummary> summarize(std::span<const BenchmarkRow> rows) {
  using Key = std::tuple<int, double, std::string>;
  std::map<Key, std::map<int, std::vector<const BenchmarkRow*>>> groups;
  std::vector<Key> order;
  for (const auto& r : rows) {
    Key k{r.num_nodes, r.arrival_rate, r.policy};
    if (!groups.count(k)) order.push_back(k);
    groups[k][r.network].push_back(&r);
  }
  auto mean_se = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double se = v.size() > 1 ? std::sqrt(ss / (v.size() - 1) / v.size()) : 0.0;
    return std::pair{m, se};
  };
  std::vector<BenchmarkSummary> out;
  for (const auto& k : order) {
    BenchmarkSummary s;
    std::tie(s.num_nodes, s.arrival_rate, s.policy) = k;
    std::vector<double> delay_means, deliv_means;
    double delay_sum = 0.0, deliv_sum = 0.0;
    for (const auto& [net, rs] : groups[k]) {
      double d = 0.0, r = 0.0;
      for (const auto* row : rs) {
        d += row->mean_delay;
        r += row->delivery_rate;
      }
      delay_sum += d;
      deliv_sum += r;
      s.episodes += static_cast<int>(rs.size());
      delay_means.push_back(d / static_cast<double>(rs.size()));
      deliv_means.push_back(r / static_cast<double>(rs.size()));
    }
    s.mean_delay = delay_sum / s.episodes;
    s.delivery_rate = deliv_sum / s.episodes;
    s.delay_se = mean_se(delay_means).second;
    s.delivery_se = mean_se(deliv_means).second;
    out.push_back(std::move(s));
  }
  return out;
}

inline const BenchmarkSummary& find_summary(std::span<const BenchmarkSummary> sums, int num_nodes,
                                            const std::string& policy, double arrival_rate = -1.0) {
  for (const auto& s : sums)
    if (s.num_nodes == num_nodes && s.policy == policy && s.arrival_rate == arrival_rate) return s;
  throw std::out_of_range("no summary for " + policy + " at " + std::to_string(num_nodes) + " nodes");
}

namespace detail {
inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}
}  // namespace detail

inline void write_benchmark_csv(std::ostream& os, std::span<const BenchmarkRow> rows) {
  os << "num_nodes,conflict_model,policy,seed,mean_delay,delivery_rate,network,instance,arrival_rate\n";
  for (const auto& r : rows) {
    os << r.num_nodes << ',' << to_string(r.conflict_model) << ',' << r.policy << ',' << r.seed << ','
       << detail::fmt_double(r.mean_delay) << ',' << detail::fmt_double(r.delivery_rate) << ',' << r.network
       << ',' << r.instance << ',';
    if (r.arrival_rate >= 0) os << detail::fmt_double(r.arrival_rate);
    os << '\n';
  }
}

inline void write_summary_csv(std::ostream& os, std::span<const BenchmarkSummary> sums) {
  os << "num_nodes,arrival_rate,policy,episodes,mean_delay,delay_se,delivery_rate,delivery_se\n";
  for (const auto& s : sums) {
    os << s.num_nodes << ',';
    if (s.arrival_rate >= 0) os << detail::fmt_double(s.arrival_rate);
    os << ',' << s.policy << ',' << s.episodes << ',' << detail::fmt_double(s.mean_delay) << ','
       << detail::fmt_double(s.delay_se) << ',' << detail::fmt_double(s.delivery_rate) << ','
       << detail::fmt_double(s.delivery_se) << '\n';
  }
}

// slot,link,sender,receiver,commodity,count for every transmission.
inline void write_trace_csv(std::ostream& os, const SlotTrace& tr) {
  os << "slot,link,sender,receiver,commodity,count\n";
  for (std::size_t t = 0; t < tr.slots.size(); ++t)
    for (const auto& x : tr.slots[t].transmissions)
      os << t << ',' << x.link << ',' << x.sender << ',' << x.receiver << ',' << x.commodity << ',' << x.count
         << '\n';
}

}  // namespace bpr
