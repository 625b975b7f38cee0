#pragma once

// Replay-based training of the duty-cycle GNN.
//
// Per episode: draw an instance, predict duty cycles with the current
// parameters, bias with delta = 1/x, run biased backpressure, store
// (Laplacian, empirical schedule frequency) and take Adam steps on batches
// sampled from the replay memory.

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <vector>

#include "bpr/bias.hpp"
#include "bpr/gnn.hpp"
#include "bpr/simulator.hpp"
#include "bpr/topology.hpp"
#include "bpr/traffic.hpp"

namespace bpr {

struct TrainConfig {
  int episodes = 100;
  std::vector<int> node_counts{20, 30, 40, 50, 60};
  // nullopt alternates interface / unit-disk instances episode by episode.
  std::optional<ConflictModel> conflict_model;
  double interference_range = kDefaultInterferenceRange;
  double node_density = 8.0 / 3.14159265358979323846;
  double link_range = 1.0;
  Slot horizon = 1000;
  TrafficConfig traffic;
  SchedulerKind scheduler = SchedulerKind::Greedy;
  RoutingOptions routing;
  GnnArchitecture arch;
  AdamConfig adam;
  std::size_t buffer_capacity = 64;
  std::size_t batch_size = 8;
  int steps_per_episode = 1;
  std::uint64_t seed = 1;
};

struct TrainingLogEntry {
  int episode = 0;
  int num_nodes = 0;
  ConflictModel conflict_model = ConflictModel::UnitDisk;
  double instance_loss = 0.0;  // current params on the new instance, before updating
  double batch_loss = 0.0;     // mean batch loss before the first step of the episode
};

struct TrainResult {
  GnnParams params;
  std::vector<TrainingLogEntry> curve;
};

struct TrainingSample {
  NetworkInstance network;
  Episode episode;
};

inline TrainingSample draw_training_sample(const TrainConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  const int n = cfg.node_counts.at(std::uniform_int_distribution<std::size_t>(0, cfg.node_counts.size() - 1)(rng));
  TopologyConfig tc;
  tc.num_nodes = n;
  tc.node_density = cfg.node_density;
  tc.link_range = cfg.link_range;
  tc.interference_range = cfg.interference_range;
  tc.conflict_model = cfg.conflict_model.value_or(ConflictModel::UnitDisk);
  tc.rng_seed = derive_seed(seed, 1);
  TrainingSample s;
  s.network = generate_network(tc);
  s.episode = sample_episode(n, s.network.num_links(), cfg.horizon, cfg.traffic, derive_seed(seed, 2));
  return s;
}

// Runs the delta = 1/x biased backpressure for the current parameters and
// returns the replay tuple (Laplacian, E_t[s]).
inline ReplayTuple collect_tuple(const GnnParams& params, const NetworkInstance& net, const Episode& ep,
                                 const EpisodeOptions& opt) {
  const auto duty = predict_duty(params, net);
  const auto r = run_policy(net, ep, DistancePolicy::duty_inverse(), duty, opt);
  return {net.conflicts.laplacian(), r.metrics.schedule_frequency};
}

inline double tuple_loss(const GnnParams& params, const ReplayTuple& t) {
  return loss(forward(params, t.laplacian, t.frequency.size()).output, t.frequency);
}

using TrainCallback = std::function<void(const TrainingLogEntry&)>;

inline TrainResult train(const TrainConfig& cfg, std::optional<GnnParams> init = std::nullopt,
                         const TrainCallback& on_episode = {}) {
  if (cfg.episodes < 0) throw std::invalid_argument("train: episodes must be >= 0");
  if (cfg.node_counts.empty()) throw std::invalid_argument("train: empty node-count list");
  if (cfg.batch_size == 0) throw std::invalid_argument("train: batch size must be > 0");
  if (cfg.steps_per_episode < 1) throw std::invalid_argument("train: steps_per_episode must be >= 1");
  TrainResult res;
  res.params = init ? std::move(*init) : GnnParams::init(cfg.arch, derive_seed(cfg.seed, 0x11));
  check_params(res.params);
  AdamOptimizer adam(res.params, cfg.adam);
  ReplayBuffer buffer(cfg.buffer_capacity);
  Rng batch_rng(derive_seed(cfg.seed, 0x22));
  EpisodeOptions opt;
  opt.horizon = cfg.horizon;
  opt.scheduler = cfg.scheduler;
  opt.routing = cfg.routing;

  for (int k = 0; k < cfg.episodes; ++k) {
    TrainConfig episode_cfg = cfg;
    if (!cfg.conflict_model)
      episode_cfg.conflict_model = k % 2 == 0 ? ConflictModel::UnitDisk : ConflictModel::Interface;
    const auto sample = draw_training_sample(episode_cfg, derive_seed(cfg.seed, 0x33, static_cast<std::uint64_t>(k)));
    ReplayTuple tup = collect_tuple(res.params, sample.network, sample.episode, opt);

    TrainingLogEntry log;
    log.episode = k;
    log.num_nodes = sample.network.num_nodes();
    log.conflict_model = sample.network.conflict_model;
    log.instance_loss = tuple_loss(res.params, tup);
    buffer.push(std::move(tup));

    for (int s = 0; s < cfg.steps_per_episode; ++s) {
      const auto idx = buffer.sample(cfg.batch_size, batch_rng);
      const auto batch = batch_loss_and_gradient(res.params, buffer, idx);
      if (s == 0) log.batch_loss = batch.loss;
      adam.step(res.params, batch.grads);
    }
    res.curve.push_back(log);
    if (on_episode) on_episode(log);
  }
  return res;
}

inline void write_training_curve_csv(std::ostream& os, const std::vector<TrainingLogEntry>& curve) {
  os << "episode,num_nodes,conflict_model,instance_loss,batch_loss\n";
  char buf[64];
  for (const auto& e : curve) {
    os << e.episode << ',' << e.num_nodes << ',' << to_string(e.conflict_model) << ',';
    std::snprintf(buf, sizeof buf, "%.10g,%.10g", e.instance_loss, e.batch_loss);
    os << buf << '\n';
  }
}

}  // namespace bpr
