#pragma once

// Flows, Poisson packet arrivals and stochastic per-slot link rates for one
// simulation episode. An Episode is the full randomness an episode consumes,
// so it can be replayed unchanged under every routing policy.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <json.hpp>

#include "bpr/common.hpp"

namespace bpr {

struct Flow {
  NodeId source = 0;
  NodeId destination = 0;
  double arrival_rate = 0.0;  // packets per slot

  friend bool operator==(const Flow&, const Flow&) = default;
};

// Row-major |F| x T matrix of packet counts.
class ArrivalMatrix {
 public:
  ArrivalMatrix() = default;
  ArrivalMatrix(std::size_t num_flows, Slot horizon)
      : num_flows_(num_flows), horizon_(horizon), counts_(num_flows * horizon, 0) {}

  std::size_t num_flows() const { return num_flows_; }
  Slot horizon() const { return horizon_; }
  Count& at(std::size_t f, Slot t) { return counts_[f * horizon_ + t]; }
  Count at(std::size_t f, Slot t) const { return counts_[f * horizon_ + t]; }
  std::span<const Count> row(std::size_t f) const {
    return {counts_.data() + f * horizon_, static_cast<std::size_t>(horizon_)};
  }

  Count total() const {
    Count s = 0;
    for (Count c : counts_) s += c;
    return s;
  }

  friend bool operator==(const ArrivalMatrix&, const ArrivalMatrix&) = default;

 private:
  std::size_t num_flows_ = 0;
  Slot horizon_ = 0;
  std::vector<Count> counts_;
};

struct LinkRateProcess {
  std::vector<double> long_term_rates;  // r_e
  std::vector<Count> realized;          // |E| x T, row-major
  Slot horizon = 0;
  double network_mean_rate = 0.0;       // empirical mean of realized

  std::size_t num_links() const { return long_term_rates.size(); }
  Count rate(LinkId e, Slot t) const { return realized[static_cast<std::size_t>(e) * horizon + t]; }

  friend bool operator==(const LinkRateProcess&, const LinkRateProcess&) = default;
};

// Flow counts used by the evaluation protocol: floor(0.15|V|) .. ceil(0.30|V|).
inline std::pair<int, int> default_flow_count_range(int num_nodes) {
  const int lo = std::max(1, 15 * num_nodes / 100);
  const int hi = std::max(lo, (30 * num_nodes + 99) / 100);
  return {lo, hi};
}

inline std::vector<Flow> sample_flows(int num_nodes, std::pair<int, int> count_range,
                                      std::pair<double, double> rate_range,
                                      std::uint64_t seed) {
  if (num_nodes < 2) throw std::invalid_argument("sample_flows: need at least 2 nodes");
  auto [cmin, cmax] = count_range;
  if (cmin < 0 || cmax < cmin) throw std::invalid_argument("sample_flows: bad count range");
  const long long max_pairs = static_cast<long long>(num_nodes) * (num_nodes - 1);
  if (cmax > max_pairs)
    throw std::invalid_argument("sample_flows: more flows requested than distinct node pairs");
  if (rate_range.first < 0 || rate_range.second < rate_range.first)
    throw std::invalid_argument("sample_flows: bad rate range");

  Rng rng(seed);
  const int count = std::uniform_int_distribution<int>(cmin, cmax)(rng);
  std::uniform_int_distribution<NodeId> node(0, num_nodes - 1);
  std::uniform_real_distribution<double> rate(rate_range.first, rate_range.second);

  std::vector<Flow> flows;
  std::set<std::pair<NodeId, NodeId>> used;
  if (2LL * count > max_pairs) {
    // Dense request: shuffle all ordered pairs instead of rejection sampling.
    std::vector<std::pair<NodeId, NodeId>> pairs;
    for (NodeId s = 0; s < num_nodes; ++s)
      for (NodeId d = 0; d < num_nodes; ++d)
        if (s != d) pairs.emplace_back(s, d);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    for (int k = 0; k < count; ++k) flows.push_back({pairs[k].first, pairs[k].second, rate(rng)});
    return flows;
  }
  while (static_cast<int>(flows.size()) < count) {
    const NodeId s = node(rng);
    const NodeId d = node(rng);
    if (s == d || !used.emplace(s, d).second) continue;
    flows.push_back({s, d, rate(rng)});
  }
  return flows;
}

inline ArrivalMatrix sample_arrivals(std::span<const Flow> flows, Slot horizon, std::uint64_t seed) {
  if (horizon < 1) throw std::invalid_argument("sample_arrivals: horizon must be >= 1");
  ArrivalMatrix a(flows.size(), horizon);
  Rng rng(seed);
  for (std::size_t f = 0; f < flows.size(); ++f) {
    if (!(flows[f].arrival_rate > 0)) continue;
    std::poisson_distribution<Count> pois(flows[f].arrival_rate);
    for (Slot t = 0; t < horizon; ++t) a.at(f, t) = pois(rng);
  }
  return a;
}

// noise_sd is a standard deviation. Realized rates are rounded to the nearest
// integer and clamped at zero.
inline LinkRateProcess sample_link_rates(LinkId num_links, std::pair<double, double> rate_range,
                                         double noise_sd, Slot horizon, std::uint64_t seed) {
  if (rate_range.first < 0 || rate_range.second < rate_range.first)
    throw std::invalid_argument("sample_link_rates: bad rate range");
  if (noise_sd < 0) throw std::invalid_argument("sample_link_rates: noise_sd must be >= 0");
  if (horizon < 1) throw std::invalid_argument("sample_link_rates: horizon must be >= 1");
  LinkRateProcess p;
  p.horizon = horizon;
  Rng rng(seed);
  std::uniform_real_distribution<double> mean(rate_range.first, rate_range.second);
  p.long_term_rates.resize(static_cast<std::size_t>(num_links));
  for (auto& r : p.long_term_rates) r = mean(rng);
  p.realized.resize(static_cast<std::size_t>(num_links) * horizon);
  long double total = 0;
  std::normal_distribution<double> unit(0.0, 1.0);
  for (LinkId e = 0; e < num_links; ++e) {
    const double re = p.long_term_rates[e];
    for (Slot t = 0; t < horizon; ++t) {
      const double g = noise_sd > 0 ? re + noise_sd * unit(rng) : re;
      const auto v = static_cast<Count>(std::llround(std::max(0.0, g)));
      p.realized[static_cast<std::size_t>(e) * horizon + t] = v;
      total += v;
    }
  }
  const auto cells = static_cast<long double>(num_links) * horizon;
  p.network_mean_rate = cells > 0 ? static_cast<double>(total / cells) : 0.0;
  return p;
}

struct TrafficConfig {
  std::pair<double, double> arrival_rate_range{0.2, 1.0};
  std::pair<double, double> link_rate_range{10.0, 42.0};
  double link_rate_sd = 3.0;
  // When set, every flow gets this arrival rate (load sweeps).
  double fixed_arrival_rate = -1.0;
};

struct Episode {
  std::vector<Flow> flows;
  ArrivalMatrix arrivals;
  LinkRateProcess rates;

  Slot horizon() const { return arrivals.horizon(); }
  friend bool operator==(const Episode&, const Episode&) = default;
};

inline Episode sample_episode(int num_nodes, LinkId num_links, Slot horizon,
                              const TrafficConfig& cfg, std::uint64_t seed) {
  Episode ep;
  auto rate_range = cfg.arrival_rate_range;
  if (cfg.fixed_arrival_rate >= 0) rate_range = {cfg.fixed_arrival_rate, cfg.fixed_arrival_rate};
  ep.flows = sample_flows(num_nodes, default_flow_count_range(num_nodes), rate_range,
                          derive_seed(seed, 1));
  ep.arrivals = sample_arrivals(ep.flows, horizon, derive_seed(seed, 2));
  ep.rates = sample_link_rates(num_links, cfg.link_rate_range, cfg.link_rate_sd, horizon,
                               derive_seed(seed, 3));
  return ep;
}

inline nlohmann::json to_json(const Episode& ep) {
  nlohmann::json j;
  j["format"] = "bpr-episode";
  j["version"] = 1;
  j["horizon"] = ep.horizon();
  auto& flows = j["flows"] = nlohmann::json::array();
  for (const auto& f : ep.flows) flows.push_back({f.source, f.destination, f.arrival_rate});
  auto& arr = j["arrivals"] = nlohmann::json::array();
  for (std::size_t f = 0; f < ep.arrivals.num_flows(); ++f) {
    auto row = ep.arrivals.row(f);
    arr.push_back(std::vector<Count>(row.begin(), row.end()));
  }
  j["long_term_rates"] = ep.rates.long_term_rates;
  j["realized_rates"] = ep.rates.realized;
  j["network_mean_rate"] = ep.rates.network_mean_rate;
  return j;
}

inline Episode episode_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "bpr-episode")
    throw std::invalid_argument("not a bpr-episode document");
  Episode ep;
  const Slot horizon = j.at("horizon").get<Slot>();
  for (const auto& f : j.at("flows"))
    ep.flows.push_back({f.at(0).get<NodeId>(), f.at(1).get<NodeId>(), f.at(2).get<double>()});
  ep.arrivals = ArrivalMatrix(ep.flows.size(), horizon);
  const auto& arr = j.at("arrivals");
  for (std::size_t f = 0; f < ep.flows.size(); ++f)
    for (Slot t = 0; t < horizon; ++t) ep.arrivals.at(f, t) = arr.at(f).at(t).get<Count>();
  ep.rates.horizon = horizon;
  ep.rates.long_term_rates = j.at("long_term_rates").get<std::vector<double>>();
  ep.rates.realized = j.at("realized_rates").get<std::vector<Count>>();
  ep.rates.network_mean_rate = j.at("network_mean_rate").get<double>();
  if (ep.rates.realized.size() != ep.rates.long_term_rates.size() * static_cast<std::size_t>(horizon))
    throw std::invalid_argument("episode: realized rate matrix has wrong size");
  return ep;
}

}  // namespace bpr
