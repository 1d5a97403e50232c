#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <set>

#include "empathic/error.hpp"
#include "empathic/planning.hpp"
#include "oracles.hpp"

using namespace empathic;

namespace {

oracle::FrozenMap to_oracle(const StaticMap& map, const ObjectRewards& rewards) {
  oracle::FrozenMap m;
  m.n = map.size();
  m.reward.assign(static_cast<std::size_t>(m.n * m.n), std::numeric_limits<double>::quiet_NaN());
  for (const auto& o : map.objects()) {
    m.reward[static_cast<std::size_t>(o.cell.row * m.n + o.cell.col)] = rewards[static_cast<std::size_t>(o.type)];
  }
  return m;
}

EnvState state_with(int size, std::vector<PlacedObject> objects, AgentPose agent) {
  EnvState s;
  s.config.size = size;
  s.objects = std::move(objects);
  s.agent = agent;
  s.rng = Rng(17);
  return s;
}

}  // namespace

TEST(ValueIterate, EmptyMapIsZero) {
  const StaticMap empty(8, {});
  const auto v = value_iterate(empty, RewardSpec::ground_truth());
  for (double x : v.values()) EXPECT_EQ(x, 0.0);
}

TEST(ValueIterate, PassengerAheadMeansMaintain) {
  const std::vector<PlacedObject> objs{{{3, 4}, ObjectType::Passenger}};
  const StaticMap map(8, objs);
  const auto rewards = object_rewards(behavior_mappings()[0]);
  const auto v = value_iterate(map, rewards);
  const AgentPose agent{{4, 4}, Heading::N};
  EXPECT_EQ(greedy_action(q_values(map, rewards, v, agent)), Action::Maintain);
  int oracle_first = -1;
  oracle::enumerate_best(to_oracle(map, rewards), {4, 4, 0}, 6, kDiscount, &oracle_first);
  EXPECT_EQ(oracle_first, 0);
}

TEST(ValueIterate, NearerPassengerFirst) {
  // distance-2 passenger behind-left, distance-5 passenger ahead
  const std::vector<PlacedObject> objs{{{4, 2}, ObjectType::Passenger}, {{0, 3}, ObjectType::Passenger}};
  const StaticMap map(8, objs);
  const auto rewards = object_rewards(RewardSpec::ground_truth());
  const auto v = value_iterate(map, rewards);
  auto s = state_with(8, objs, {{5, 3}, Heading::W});
  s.config.respawn = false;
  GreedyPolicy pi(rewards);
  std::optional<Cell> first;
  for (int i = 0; i < 6 && !first; ++i) {
    const auto a = pi.act(s, false);
    const auto out = step_in_place(s, a);
    if (out.event) first = s.agent.cell;
  }
  ASSERT_TRUE(first.has_value());
  EXPECT_EQ(*first, (Cell{4, 2}));
  const double best = oracle::enumerate_best(to_oracle(map, rewards), {5, 3, 3}, 6, kDiscount);
  EXPECT_NEAR(best, v.at({{5, 3}, Heading::W}), 1e-6);
}

TEST(ValueIterate, BellmanOptimalityAndResidual) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = new_episode(seed, RewardSpec::ground_truth());
    const auto map = static_snapshot(s);
    const auto rewards = object_rewards(s.spec);
    const auto v = value_iterate(map, rewards);
    EXPECT_LT(v.residual(), 1e-6);
    for (int i = 0; i < state_count(8); ++i) {
      const auto pose = state_pose(8, i);
      const auto q = q_values(map, rewards, v, pose);
      for (double x : q) EXPECT_LE(x, v.at(pose) + 1e-9 + 1e-6);
    }
  }
}

TEST(ValueIterate, MatchesFiniteHorizonDp) {
  const auto s = new_episode(42, RewardSpec::ground_truth());
  const auto map = static_snapshot(s);
  const auto rewards = object_rewards(s.spec);
  const auto v = value_iterate(map, rewards);
  const auto dp = oracle::finite_horizon_dp(to_oracle(map, rewards), 200, kDiscount);
  const double bound = std::pow(kDiscount, 200) * 6.0 / (1 - kDiscount) + 1e-5;
  for (int i = 0; i < state_count(8); ++i) EXPECT_NEAR(v.values()[static_cast<std::size_t>(i)], dp.v[static_cast<std::size_t>(i)], bound);
}

TEST(ValueIterate, ArgmaxInvariantUnderScaling) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto s = new_episode(seed + 50, RewardSpec::ground_truth());
    const auto map = static_snapshot(s);
    const auto rewards = object_rewards(s.spec);
    for (double c : {0.5, 3.0, 17.0}) {
      ObjectRewards scaled = rewards;
      for (auto& r : scaled) r *= c;
      PlanningConfig tight;
      tight.tolerance = 1e-10;
      const auto v1 = value_iterate(map, rewards, tight);
      const auto v2 = value_iterate(map, scaled, tight);
      for (int i = 0; i < state_count(8); ++i) {
        const auto pose = state_pose(8, i);
        const auto q1 = q_values(map, rewards, v1, pose);
        const auto q2 = q_values(map, scaled, v2, pose);
        const double m1 = *std::max_element(q1.begin(), q1.end());
        const double m2 = *std::max_element(q2.begin(), q2.end());
        for (std::size_t a = 0; a < 3; ++a) {
          EXPECT_EQ(q1[a] >= m1 - 1e-7, q2[a] >= m2 - 1e-7 * c) << "state " << i << " action " << a;
        }
      }
    }
  }
}

TEST(ValueIterate, NonConvergenceReported) {
  const std::vector<PlacedObject> objs{{{0, 0}, ObjectType::Passenger}};
  PlanningConfig cfg;
  cfg.max_sweeps = 2;
  EXPECT_THROW(value_iterate(StaticMap(8, objs), RewardSpec::ground_truth(), cfg), Error);
}

TEST(PolicyTable, GreedyWithRespectToValues) {
  const auto s = new_episode(9, RewardSpec::ground_truth());
  const auto map = static_snapshot(s);
  const auto rewards = object_rewards(s.spec);
  const auto v = value_iterate(map, rewards);
  const auto table = greedy_policy(map, rewards, v);
  EXPECT_EQ(table.provenance(), rewards);
  for (int i = 0; i < state_count(8); ++i) {
    const auto pose = state_pose(8, i);
    const auto q = q_values(map, rewards, v, pose);
    EXPECT_GE(q[static_cast<std::size_t>(table.at(pose))], *std::max_element(q.begin(), q.end()) - 1e-12);
  }
}

TEST(Planner, CacheReturnsSameValues) {
  const auto s = new_episode(4, RewardSpec::ground_truth());
  Planner planner;
  const auto rewards = object_rewards(s.spec);
  const auto& a = planner.values(static_snapshot(s), rewards);
  const auto copy = a.values();
  const auto& b = planner.values(static_snapshot(s), rewards);
  EXPECT_EQ(copy, b.values());
  EXPECT_EQ(copy, value_iterate(static_snapshot(s), rewards).values());
}

TEST(BehaviorStep, NoSwitchKeepsMappingAndActsGreedy) {
  const auto s = new_episode(21, RewardSpec::ground_truth());
  auto bp = make_behavior_policy(3, 0.0);
  const int mapping = bp.mapping;
  Planner planner;
  for (int i = 0; i < 20; ++i) {
    const auto d = behavior_step(bp, s, false, planner);
    EXPECT_EQ(bp.mapping, mapping);
    EXPECT_FALSE(d.reselected);
    const auto rewards = object_rewards(behavior_mappings()[static_cast<std::size_t>(mapping)]);
    const auto map = static_snapshot(s);
    EXPECT_EQ(d.action, greedy_action(q_values(map, rewards, value_iterate(map, rewards), s.agent)));
  }
}

TEST(BehaviorStep, PickupRedrawsUniformly) {
  const auto s = new_episode(22, RewardSpec::ground_truth());
  auto bp = make_behavior_policy(5, 0.0);
  Planner planner;
  std::array<int, 3> counts{};
  const int trials = 30000;
  for (int i = 0; i < trials; ++i) {
    behavior_step(bp, s, true, planner);
    counts[static_cast<std::size_t>(bp.mapping)]++;
  }
  for (int c : counts) EXPECT_NEAR(static_cast<double>(c) / trials, 1.0 / 3.0, 0.02);
}

TEST(BehaviorStep, SwitchFrequency) {
  const auto s = new_episode(23, RewardSpec::ground_truth());
  auto bp = make_behavior_policy(6);
  Planner planner;
  int switches = 0;
  const int trials = 20000;
  for (int i = 0; i < trials; ++i) switches += behavior_step(bp, s, false, planner).reselected ? 1 : 0;
  EXPECT_NEAR(static_cast<double>(switches) / trials, 0.1, 0.01);
}

TEST(McEstimate, DeterministicStrippedIsExact) {
  const std::vector<PlacedObject> objs{{{2, 4}, ObjectType::Passenger}, {{6, 6}, ObjectType::ParkedCar}};
  auto s = state_with(8, objs, {{5, 4}, Heading::N});
  s.config.respawn = false;
  McConfig cfg;
  cfg.n_rollouts = 5;
  cfg.horizon = 20;
  GreedyPolicy pi(RewardSpec::ground_truth());
  const auto est = mc_estimate(s, Action::Maintain, pi, RewardSpec::ground_truth(), cfg);
  // three cells north to the passenger, then nothing positive remains
  EXPECT_DOUBLE_EQ(est.q_hat, 6.0 * kDiscount * kDiscount);
  EXPECT_EQ(est.q_stderr, 0.0);
}

TEST(McEstimate, HorizonZeroIsImmediateReward) {
  const std::vector<PlacedObject> objs{{{4, 4}, ObjectType::ParkedCar}};
  const auto s = state_with(8, objs, {{5, 4}, Heading::N});
  McConfig cfg;
  cfg.horizon = 0;
  cfg.n_rollouts = 3;
  RandomPolicy pi(1);
  EXPECT_EQ(mc_estimate(s, Action::Maintain, pi, RewardSpec::ground_truth(), cfg).q_hat, -5.0);
  EXPECT_EQ(mc_estimate(s, Action::TurnLeft, pi, RewardSpec::ground_truth(), cfg).q_hat, 0.0);
}

TEST(McEstimate, SelfConsistency) {
  const auto s = new_episode(31, RewardSpec::ground_truth());
  RandomPolicy pi(2);
  McConfig small;
  small.n_rollouts = 10000;
  small.seed = 1;
  McConfig big = small;
  big.n_rollouts = 100000;
  big.seed = 2;
  const auto a = mc_estimate(s, Action::Maintain, pi, RewardSpec::ground_truth(), small);
  const auto b = mc_estimate(s, Action::Maintain, pi, RewardSpec::ground_truth(), big);
  EXPECT_LT(std::abs(a.q_hat - b.q_hat), 3.0 * std::hypot(a.q_stderr, b.q_stderr));
}

TEST(McEstimate, RejectsZeroRollouts) {
  McConfig cfg;
  cfg.n_rollouts = 0;
  RandomPolicy pi(1);
  EXPECT_THROW(mc_estimate(new_episode(1, RewardSpec::ground_truth()), Action::Maintain, pi,
                           RewardSpec::ground_truth(), cfg),
               InvalidArgument);
}

TEST(TaskStatistics, ArgmaxIsOptimal) {
  const auto s = new_episode(12, RewardSpec::ground_truth());
  const auto map = static_snapshot(s);
  const auto rewards = object_rewards(s.spec);
  const auto q = q_values(map, rewards, value_iterate(map, rewards), s.agent);
  const auto best = greedy_action(q);
  GreedyPolicy pi(s.spec);
  const auto ts = task_statistics(s, best, pi, s.spec);
  EXPECT_EQ(ts.optimality, 1);
  EXPECT_NEAR(ts.advantage_star, 0.0, 1e-12);
}

TEST(TaskStatistics, OptimalBehaviorHasNoSurprise) {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto s = new_episode(seed + 70, RewardSpec::ground_truth());
    GreedyPolicy pi(s.spec);
    for (auto a : kActions) {
      const auto ts = task_statistics(s, a, pi, s.spec);
      EXPECT_NEAR(ts.surprise, 0.0, 3.0 * ts.q_behavior_stderr + 1e-4);
      EXPECT_NEAR(ts.surprise, ts.q_behavior - ts.q_star, 1e-12);
    }
  }
}

TEST(TaskStatistics, SmallMapMatchesDpOracle) {
  const std::vector<PlacedObject> objs{{{2, 2}, ObjectType::Passenger}};
  const StaticMap map(3, objs);
  const auto spec = RewardSpec::ground_truth();
  const auto rewards = object_rewards(spec);
  const auto dp = oracle::finite_horizon_dp(to_oracle(map, rewards), 200, kDiscount);
  GreedyPolicy pi(spec);
  TaskStatisticsConfig cfg;
  cfg.mc.n_rollouts = 2000;
  for (int i = 0; i < state_count(3); ++i) {
    const auto pose = state_pose(3, i);
    if (pose.cell == Cell{2, 2}) continue;
    const auto s = state_with(3, objs, pose);
    const auto& q = dp.q[static_cast<std::size_t>(i)];
    const double v = *std::max_element(q.begin(), q.end());
    for (std::size_t a = 0; a < 3; ++a) {
      const auto ts = task_statistics(s, kActions[a], pi, spec, cfg);
      EXPECT_NEAR(ts.q_star, q[a], 1e-3);
      EXPECT_NEAR(ts.v_star, v, 1e-3);
      EXPECT_EQ(ts.optimality, q[a] >= v - 1e-6 ? 1 : 0);
      EXPECT_NEAR(ts.advantage_star, q[a] - v, 1e-3);
      EXPECT_NEAR(ts.q_behavior, q[a], 4.0 * ts.q_behavior_stderr + 1e-3);
      EXPECT_NEAR(ts.v_behavior, v, 0.1);
      EXPECT_NEAR(ts.advantage_behavior, ts.q_behavior - ts.v_behavior, 1e-12);
    }
  }
}

TEST(TaskStatistics, StarredReadingHasZeroSurprise) {
  const auto s = new_episode(13, RewardSpec::ground_truth());
  RandomPolicy pi(4);
  TaskStatisticsConfig cfg;
  cfg.starred_behavior_q = true;
  cfg.mc.n_rollouts = 20;
  for (auto a : kActions) EXPECT_EQ(task_statistics(s, a, pi, s.spec, cfg).surprise, 0.0);
}
