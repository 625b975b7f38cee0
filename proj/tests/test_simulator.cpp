#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

#include "bpr/simulator.hpp"

namespace bpr {
namespace {

// Nodes 0 and 1 half a unit apart, one flow 0 -> 1.
NetworkInstance two_nodes() {
  return make_instance({{0, 0}, {0.5, 0}}, 1.0, ConflictModel::Interface, kDefaultInterferenceRange, 0);
}

Episode manual_episode(std::vector<Flow> flows, Slot T, LinkId links, Count rate) {
  Episode ep;
  ep.flows = std::move(flows);
  ep.arrivals = ArrivalMatrix(ep.flows.size(), T);
  ep.rates.horizon = T;
  ep.rates.long_term_rates.assign(static_cast<std::size_t>(links), static_cast<double>(rate));
  ep.rates.realized.assign(static_cast<std::size_t>(links) * T, rate);
  ep.rates.network_mean_rate = static_cast<double>(rate);
  return ep;
}

TEST(Episode, TwoNodeChainDeliversEveryPacketInOneSlot) {
  const auto net = two_nodes();
  auto ep = manual_episode({{0, 1, 1.0}}, 50, 1, 100);
  for (Slot t = 0; t < 50; t += 3) ep.arrivals.at(0, t) = 2;
  const auto hop = run_policy(net, ep, DistancePolicy::hop(), {});
  EXPECT_EQ(hop.metrics.delivery_rate, 1.0);
  EXPECT_EQ(hop.metrics.mean_delay, 1.0);
  for (const auto& p : hop.trace.packets) EXPECT_EQ(p.delivered_at, p.born + 1);
  const auto bp = run_policy(net, ep, DistancePolicy::none(), {});
  EXPECT_EQ(bp.metrics.mean_delay, 1.0);
}

TEST(Episode, ZeroArrivalsMeansIdleNetwork) {
  TopologyConfig cfg;
  cfg.num_nodes = 20;
  const auto net = generate_network(cfg);
  TrafficConfig traffic;
  traffic.fixed_arrival_rate = 0.0;
  const auto ep = sample_episode(20, net.num_links(), 100, traffic, 1);
  EpisodeOptions opt;
  opt.record_slots = true;
  const auto r = run_policy(net, ep, DistancePolicy::scaled_hop(10), {}, opt);
  EXPECT_EQ(r.metrics.arrived, 0);
  EXPECT_EQ(r.metrics.delivery_rate, 1.0);
  EXPECT_EQ(r.metrics.mean_delay, 0.0);
  for (Count b : r.metrics.backlog) EXPECT_EQ(b, 0);
  for (const auto& s : r.trace.slots) EXPECT_EQ(std::count(s.schedule.begin(), s.schedule.end(), 1), 0);
}

TEST(Episode, UndeliveredPacketCountsHorizonMinusBirth) {
  // The only link never has capacity, so nothing moves.
  const auto net = two_nodes();
  auto ep = manual_episode({{0, 1, 1.0}}, 40, 1, 0);
  ep.arrivals.at(0, 10) = 1;
  const auto r = run_episode(net, ep, nullptr);
  EXPECT_EQ(r.metrics.delivered, 0);
  EXPECT_EQ(r.metrics.delivery_rate, 0.0);
  EXPECT_EQ(r.metrics.mean_delay, 30.0);
}

TEST(Metrics, Examples) {
  SlotTrace tr;
  tr.packets = {{0, 0, 1}, {0, 3, 4}};
  tr.schedule_counts = {250, 0};
  auto m = compute_metrics(tr, 1000);
  EXPECT_EQ(m.mean_delay, 1.0);
  EXPECT_EQ(m.schedule_frequency[0], 0.25);
  tr.packets = {{0, 0, -1}};
  m = compute_metrics(tr, 1000);
  EXPECT_EQ(m.mean_delay, 1000.0);
  EXPECT_EQ(m.delivery_rate, 0.0);
}

struct Fixture {
  NetworkInstance net;
  Episode ep;
};

Fixture random_fixture(int n, std::uint64_t seed, Slot T = 300) {
  TopologyConfig cfg;
  cfg.num_nodes = n;
  cfg.rng_seed = seed;
  Fixture f{generate_network(cfg), {}};
  f.ep = sample_episode(n, f.net.num_links(), T, TrafficConfig{}, derive_seed(seed, 5));
  return f;
}

TEST(Episode, ReplayIsDeterministic) {
  const auto f = random_fixture(30, 4);
  EpisodeOptions opt;
  opt.record_slots = true;
  for (const auto& p : {DistancePolicy::none(), DistancePolicy::scaled_hop(10), DistancePolicy::rate_scaled(10)}) {
    const auto a = run_policy(f.net, f.ep, p, {}, opt);
    const auto b = run_policy(f.net, f.ep, p, {}, opt);
    EXPECT_EQ(a.trace, b.trace);
  }
}

TEST(Episode, NoBiasEqualsZeroBiasTable) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto f = random_fixture(25, seed);
    EpisodeOptions opt;
    opt.record_slots = true;
    const BiasTable zero(f.net.num_nodes());
    EXPECT_EQ(run_episode(f.net, f.ep, nullptr, opt).trace, run_episode(f.net, f.ep, &zero, opt).trace);
  }
}

TEST(Episode, TraceInvariants) {
  const auto f = random_fixture(30, 8);
  EpisodeOptions opt;
  opt.record_slots = true;
  for (auto kind : {SchedulerKind::Greedy, SchedulerKind::LocalGreedy}) {
    opt.scheduler = kind;
    const auto r = run_policy(f.net, f.ep, DistancePolicy::hop(), {}, opt);
    Count arrived = 0, delivered = 0;
    for (std::size_t t = 0; t < r.trace.slots.size(); ++t) {
      const auto& s = r.trace.slots[t];
      EXPECT_TRUE(is_independent(f.net.conflicts, s.schedule));
      arrived += s.arrivals;
      delivered += s.delivered;
      EXPECT_EQ(arrived - delivered, r.trace.total_backlog[t]);
      for (const auto& x : s.transmissions) {
        EXPECT_GT(x.count, 0);
        EXPECT_LE(x.count, f.ep.rates.rate(x.link, static_cast<Slot>(t)));
      }
    }
    EXPECT_EQ(arrived, f.ep.arrivals.total());
    EXPECT_GE(r.metrics.delivery_rate, 0.0);
    EXPECT_LE(r.metrics.delivery_rate, 1.0);
    for (double x : r.metrics.schedule_frequency) {
      EXPECT_GE(x, 0.0);
      EXPECT_LE(x, 1.0);
    }
  }
}

TEST(Episode, ExactSchedulerOnTinyNetwork) {
  // Path of four nodes: three links, well under the exact-solver bound.
  const auto net = make_instance({{0, 0}, {0.9, 0}, {1.8, 0}, {2.7, 0}}, 1.0, ConflictModel::Interface,
                                 kDefaultInterferenceRange, 0);
  auto ep = manual_episode({{0, 3, 0.5}}, 60, net.num_links(), 3);
  for (Slot t = 0; t < 60; t += 2) ep.arrivals.at(0, t) = 1;
  EpisodeOptions opt;
  opt.scheduler = SchedulerKind::Exact;
  const auto r = run_policy(net, ep, DistancePolicy::hop(), {}, opt);
  EXPECT_GT(r.metrics.delivered, 0);
}

TEST(Episode, RejectsMismatchedInputs) {
  const auto f = random_fixture(20, 1, 50);
  EpisodeOptions opt;
  opt.horizon = 51;
  EXPECT_THROW(run_episode(f.net, f.ep, nullptr, opt), std::invalid_argument);
  const BiasTable wrong(3);
  EXPECT_THROW(run_episode(f.net, f.ep, &wrong), std::invalid_argument);
  EXPECT_THROW(run_policy(f.net, f.ep, DistancePolicy::duty_inverse(), {}), std::invalid_argument);
}

TEST(Stability, LowLoadBacklogStaysBounded) {
  const auto gnn = GnnParams::init(GnnArchitecture{}, 1);
  const std::vector<DistancePolicy> policies{
      DistancePolicy::none(),           DistancePolicy::hop(),          DistancePolicy::scaled_hop(10),
      DistancePolicy::rate_scaled(10),  DistancePolicy::duty_inverse(), DistancePolicy::duty_rate()};
  const Slot T = 1000;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    TopologyConfig cfg;
    cfg.num_nodes = 20;
    cfg.rng_seed = derive_seed(seed, 77);
    const auto net = generate_network(cfg);
    Episode ep;
    ep.flows = sample_flows(20, {2, 2}, {0.1, 0.1}, derive_seed(seed, 1));
    ep.arrivals = sample_arrivals(ep.flows, T, derive_seed(seed, 2));
    ep.rates = sample_link_rates(net.num_links(), {10, 42}, 3, T, derive_seed(seed, 3));
    const auto duty = predict_duty(gnn, net);
    for (const auto& p : policies) {
      const auto b = run_policy(net, ep, p, duty).metrics.backlog;
      const Count early = *std::max_element(b.begin() + T / 4, b.begin() + T / 2);
      const Count late = *std::max_element(b.begin() + T / 2, b.end());
      EXPECT_LE(late, 3 * early) << to_string(p) << " seed " << seed;
    }
  }
}

TEST(Benchmark, RowsCoverGridAndPoliciesShareRandomness) {
  BenchmarkConfig cfg;
  cfg.node_counts = {20};
  cfg.policies = {DistancePolicy::none(), DistancePolicy::scaled_hop(10)};
  cfg.networks_per_size = 2;
  cfg.instances_per_network = 3;
  cfg.horizon = 100;
  const auto rows = run_benchmark(cfg);
  ASSERT_EQ(rows.size(), 12u);
  for (std::size_t k = 0; k < rows.size(); k += 2) {
    EXPECT_EQ(rows[k].seed, rows[k + 1].seed);
    EXPECT_EQ(rows[k].policy, "BP");
    EXPECT_EQ(rows[k + 1].policy, "EDR-10");
  }
  cfg.jobs = 3;
  const auto parallel = run_benchmark(cfg);
  ASSERT_EQ(parallel.size(), rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    EXPECT_EQ(parallel[k].mean_delay, rows[k].mean_delay);
    EXPECT_EQ(parallel[k].delivery_rate, rows[k].delivery_rate);
  }
  const auto sums = summarize(rows);
  ASSERT_EQ(sums.size(), 2u);
  EXPECT_EQ(find_summary(sums, 20, "BP").episodes, 6);
  EXPECT_THROW(find_summary(sums, 40, "BP"), std::out_of_range);
}

TEST(Benchmark, LoadSweepAddsArrivalRateColumn) {
  BenchmarkConfig cfg;
  cfg.node_counts = {20};
  cfg.policies = {DistancePolicy::hop()};
  cfg.networks_per_size = 1;
  cfg.instances_per_network = 1;
  cfg.horizon = 50;
  cfg.arrival_rates = {0.05, 0.25};
  const auto rows = run_benchmark(cfg);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].arrival_rate, 0.05);
  EXPECT_EQ(rows[1].arrival_rate, 0.25);
  std::stringstream ss;
  write_benchmark_csv(ss, rows);
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, "num_nodes,conflict_model,policy,seed,mean_delay,delivery_rate,network,instance,arrival_rate");
}

TEST(Benchmark, ErrorsOnEmptyOrUnsatisfiableConfig) {
  BenchmarkConfig cfg;
  EXPECT_THROW(run_benchmark(cfg), std::invalid_argument);
  cfg.policies = {DistancePolicy::duty_inverse()};
  EXPECT_THROW(run_benchmark(cfg), std::invalid_argument);
}

}  // namespace
}  // namespace bpr
