#include <gtest/gtest.h>

#include <random>

#include "bpr/scheduler.hpp"
#include "bpr/topology.hpp"

namespace bpr {
namespace {

const ConflictGraph kPath3(3, {{0, 1}, {1, 2}});
const ConflictGraph kTriangle(3, {{0, 1}, {1, 2}, {0, 2}});

// Brute force over all 2^n subsets: best independent-set value and the
// number of independent sets.
std::pair<double, int> brute_force(const ConflictGraph& cg, const std::vector<double>& u) {
  const int n = cg.num_vertices();
  double best = 0.0;
  int count = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    bool ok = true;
    for (const auto& [a, b] : cg.conflicts()) ok = ok && !((mask >> a & 1u) && (mask >> b & 1u));
    if (!ok) continue;
    ++count;
    double v = 0.0;
    for (int e = 0; e < n; ++e)
      if (mask >> e & 1u) v += u[e];
    best = std::max(best, v);
  }
  return {best, count};
}

ConflictGraph random_conflict_graph(int n, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution edge(p);
  std::vector<std::pair<LinkId, LinkId>> pairs;
  for (LinkId a = 0; a < n; ++a)
    for (LinkId b = a + 1; b < n; ++b)
      if (edge(rng)) pairs.emplace_back(a, b);
  return ConflictGraph(n, pairs);
}

TEST(Greedy, PathPicksMiddleWhileOptimumTakesEnds) {
  const std::vector<double> u{3, 4, 3};
  const auto [opt, sets] = brute_force(kPath3, u);
  EXPECT_EQ(sets, 5);
  EXPECT_EQ(opt, 6.0);
  EXPECT_EQ(greedy_maximal_schedule(kPath3, u), (Schedule{0, 1, 0}));
  EXPECT_EQ(exact_mwis(kPath3, u), (Schedule{1, 0, 1}));
  EXPECT_EQ(schedule_utility(exact_mwis(kPath3, u), u), opt);
}

TEST(Greedy, TriangleKeepsOnlyBest) {
  EXPECT_EQ(greedy_maximal_schedule(kTriangle, std::vector<double>{5, 4, 3}), (Schedule{1, 0, 0}));
}

TEST(Greedy, ZeroUtilitiesGiveEmptySchedule) {
  const std::vector<double> z{0, 0, 0};
  for (auto kind : {SchedulerKind::Greedy, SchedulerKind::LocalGreedy, SchedulerKind::Exact})
    EXPECT_EQ(solve_schedule(kind, kPath3, z), (Schedule{0, 0, 0}));
}

TEST(Greedy, TiesGoToSmallestLink) {
  EXPECT_EQ(greedy_maximal_schedule(kTriangle, std::vector<double>{2, 2, 2}), (Schedule{1, 0, 0}));
}

TEST(LocalGreedy, Examples) {
  const ConflictGraph two(2, {});
  EXPECT_EQ(local_greedy_schedule(two, std::vector<double>{2, 7}), (Schedule{1, 1}));
  EXPECT_EQ(local_greedy_schedule(kPath3, std::vector<double>{3, 4, 3}), (Schedule{0, 1, 0}));
  const ConflictGraph star(4, {{0, 1}, {0, 2}, {0, 3}});
  EXPECT_EQ(local_greedy_schedule(star, std::vector<double>{10, 1, 1, 1}), (Schedule{1, 0, 0, 0}));
}

TEST(LocalGreedy, NeedsSeveralRoundsOnDescendingPath) {
  // 1 - 2 - 3 - 4 - 5 (utilities 5,4,3,2,1): rounds pick e0, then e2, then e4.
  const ConflictGraph path(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
  EXPECT_EQ(local_greedy_schedule(path, std::vector<double>{5, 4, 3, 2, 1}), (Schedule{1, 0, 1, 0, 1}));
}

TEST(Exact, Examples) {
  const ConflictGraph one(1, {});
  EXPECT_EQ(exact_mwis(one, std::vector<double>{0}), (Schedule{0}));
  const ConflictGraph free4(4, {});
  EXPECT_EQ(exact_mwis(free4, std::vector<double>{1, 0, 2, 3}), (Schedule{1, 0, 1, 1}));
}

TEST(Exact, RefusesLargeInstances) {
  const ConflictGraph big(kExactMwisMaxLinks + 1, {});
  EXPECT_THROW(exact_mwis(big, std::vector<double>(kExactMwisMaxLinks + 1, 1.0)), std::invalid_argument);
}

TEST(Schedulers, RejectNegativeOrMissizedUtilities) {
  EXPECT_THROW(greedy_maximal_schedule(kPath3, std::vector<double>{1, -1, 1}), std::invalid_argument);
  EXPECT_THROW(local_greedy_schedule(kPath3, std::vector<double>{1, 1}), std::invalid_argument);
}

TEST(Schedulers, RandomGraphProperties) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> util(0, 10);
  std::bernoulli_distribution zero(0.2);
  double worst_ratio = 1.0;
  for (int trial = 0; trial < 300; ++trial) {
    const int n = 1 + trial % 12;
    const auto cg = random_conflict_graph(n, 0.35, rng);
    std::vector<double> u(n);
    for (auto& x : u) x = zero(rng) ? 0.0 : util(rng);
    const auto g = greedy_maximal_schedule(cg, u);
    const auto l = local_greedy_schedule(cg, u);
    const auto x = exact_mwis(cg, u);
    for (const auto* s : {&g, &l, &x}) {
      EXPECT_TRUE(is_independent(cg, *s));
      for (int e = 0; e < n; ++e) {
        if ((*s)[e]) {
          EXPECT_GT(u[e], 0.0);
        }
      }
    }
    EXPECT_TRUE(is_maximal(cg, g, u));
    EXPECT_TRUE(is_maximal(cg, l, u));
    const double opt = brute_force(cg, u).first;
    EXPECT_DOUBLE_EQ(schedule_utility(x, u), opt);
    EXPECT_GE(schedule_utility(x, u), schedule_utility(g, u));
    EXPECT_GE(schedule_utility(g, u), opt / static_cast<double>(cg.max_degree() + 1) - 1e-12);
    // With distinct utilities the two greedy variants pick the same set.
    EXPECT_EQ(g, l);
    if (opt > 0) worst_ratio = std::min(worst_ratio, schedule_utility(g, u) / opt);
  }
  RecordProperty("worst_greedy_ratio", std::to_string(worst_ratio));
}

TEST(Utilities, RateTimesWeight) {
  std::vector<LinkDecision> d(3);
  d[0].weight = 4;
  d[1].weight = 4;
  d[2].weight = 0;
  const std::vector<Count> rates{5, 0, 9};
  const auto u = build_utilities(d, rates);
  EXPECT_EQ(u, (std::vector<double>{20, 0, 0}));
  EXPECT_EQ(d[0].utility, 20.0);
}

TEST(SchedulerNames, ParseAndPrint) {
  for (auto k : {SchedulerKind::Greedy, SchedulerKind::LocalGreedy, SchedulerKind::Exact})
    EXPECT_EQ(parse_scheduler(to_string(k)), k);
  EXPECT_THROW(parse_scheduler("random"), std::invalid_argument);
}

}  // namespace
}  // namespace bpr
