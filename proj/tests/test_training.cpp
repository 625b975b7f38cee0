#include <gtest/gtest.h>

#include <numeric>
#include <sstream>

#include "bpr/training.hpp"

namespace bpr {
namespace {

// One default-regimen run shared by the tests below (100 episodes, T = 1000).
const TrainResult& default_run() {
  static const TrainResult res = train(TrainConfig{});
  return res;
}

TEST(Training, SingleStepDescendsOnFixedTuple) {
  TrainConfig cfg;
  cfg.horizon = 200;
  const auto sample = draw_training_sample(cfg, 5);
  auto params = GnnParams::init(cfg.arch, 3);
  EpisodeOptions opt;
  ReplayBuffer buf(1);
  buf.push(collect_tuple(params, sample.network, sample.episode, opt));
  const std::vector<std::size_t> idx{0};
  const auto before = batch_loss_and_gradient(params, buf, idx);
  AdamConfig small;
  small.learning_rate = 1e-4;
  AdamOptimizer adam(params, small);
  adam.step(params, before.grads);
  EXPECT_LT(tuple_loss(params, buf[0]), before.loss);
}

TEST(Training, TargetsAreScheduleFrequencies) {
  TrainConfig cfg;
  cfg.horizon = 150;
  const auto sample = draw_training_sample(cfg, 2);
  const auto params = GnnParams::init(cfg.arch, 1);
  const auto tup = collect_tuple(params, sample.network, sample.episode, {});
  ASSERT_EQ(tup.frequency.size(), static_cast<std::size_t>(sample.network.num_links()));
  for (double f : tup.frequency) {
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
    EXPECT_NEAR(f * 150, std::round(f * 150), 1e-9);
  }
  EXPECT_EQ(tup.laplacian.to_dense(), sample.network.conflicts.laplacian().to_dense());
}

TEST(Training, AlternatesConflictModelsAndSizes) {
  TrainConfig cfg;
  cfg.episodes = 6;
  cfg.horizon = 50;
  const auto res = train(cfg);
  ASSERT_EQ(res.curve.size(), 6u);
  for (const auto& e : res.curve) {
    EXPECT_EQ(e.conflict_model, e.episode % 2 == 0 ? ConflictModel::UnitDisk : ConflictModel::Interface);
    EXPECT_GE(e.num_nodes, 20);
    EXPECT_LE(e.num_nodes, 60);
  }
  std::stringstream ss;
  write_training_curve_csv(ss, res.curve);
  std::string header;
  std::getline(ss, header);
  EXPECT_EQ(header, "episode,num_nodes,conflict_model,instance_loss,batch_loss");
}

TEST(Training, Deterministic) {
  TrainConfig cfg;
  cfg.episodes = 4;
  cfg.horizon = 60;
  EXPECT_EQ(train(cfg).params, train(cfg).params);
}

TEST(Training, DefaultRegimenLossTrendsDown) {
  const auto& curve = default_run().curve;
  ASSERT_EQ(curve.size(), 100u);
  auto window = [&](std::size_t start) {
    double s = 0.0;
    for (std::size_t k = start; k < start + 20; ++k) s += curve[k].instance_loss;
    return s / 20;
  };
  EXPECT_LT(window(80), window(0));
}

TEST(Training, TrainedBeatsUntrainedOnHeldOutInstances) {
  TrainConfig cfg;
  const auto untrained = GnnParams::init(cfg.arch, derive_seed(cfg.seed, 0x11));
  const auto& trained = default_run().params;
  EpisodeOptions opt;
  opt.horizon = cfg.horizon;
  double before = 0.0, after = 0.0;
  for (int k = 0; k < 20; ++k) {
    // Seeds disjoint from the training draws.
    auto held = cfg;
    held.conflict_model = k % 2 == 0 ? ConflictModel::UnitDisk : ConflictModel::Interface;
    const auto s = draw_training_sample(held, derive_seed(0xfeed, static_cast<std::uint64_t>(k)));
    // Each model is scored against the schedules its own bias produces,
    // which is the quantity training minimizes.
    before += tuple_loss(untrained, collect_tuple(untrained, s.network, s.episode, opt));
    after += tuple_loss(trained, collect_tuple(trained, s.network, s.episode, opt));
  }
  EXPECT_LT(after, before);
}

TEST(Training, HubLinksGetLowerDutyThanBridgeLinks) {
  // Two ten-spoke stars joined by a four-link chain; interface conflicts.
  // Spokes at a hub conflict with ten others, the middle of the chain with
  // two, so hub links can be active far less often.
  std::vector<Point> pos(26);
  std::vector<Edge> edges;
  const NodeId hub_a = 0, hub_b = 1;
  NodeId next = 2;
  for (NodeId hub : {hub_a, hub_b})
    for (int k = 0; k < 10; ++k) edges.push_back({hub, next++});
  const NodeId c1 = next++, c2 = next++, c3 = next++;
  edges.push_back({hub_a, c1});
  edges.push_back({c1, c2});
  edges.push_back({c2, c3});
  edges.push_back({c3, hub_b});
  pos.resize(static_cast<std::size_t>(next));
  NetworkInstance net;
  net.graph = ConnectivityGraph(pos, edges);
  net.conflicts = line_graph_conflicts(net.graph);
  net.conflict_model = ConflictModel::Interface;

  const auto duty = predict_duty(default_run().params, net);
  double hub = 0.0, mid = 0.0;
  int nh = 0, nm = 0;
  for (LinkId e = 0; e < net.num_links(); ++e) {
    const auto& ed = net.graph.edge(e);
    if (ed.a == hub_a || ed.a == hub_b || ed.b == hub_a || ed.b == hub_b) {
      hub += duty[e];
      ++nh;
    } else if (!(ed.a >= 2 && ed.a < 22) && !(ed.b >= 2 && ed.b < 22)) {
      mid += duty[e];
      ++nm;
    }
  }
  ASSERT_EQ(nm, 2);  // c1 - c2 and c2 - c3
  EXPECT_LT(hub / nh, mid / nm);
}

TEST(Training, RejectsBadConfig) {
  TrainConfig cfg;
  cfg.node_counts.clear();
  EXPECT_THROW(train(cfg), std::invalid_argument);
  cfg = {};
  cfg.batch_size = 0;
  EXPECT_THROW(train(cfg), std::invalid_argument);
}

}  // namespace
}  // namespace bpr
