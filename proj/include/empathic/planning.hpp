#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <memory>
#include <vector>

#include "empathic/gridworld.hpp"

namespace empathic {

inline constexpr double kDiscount = 0.95;

struct PlanningConfig {
  double gamma = kDiscount;
  double tolerance = 1e-6;
  int max_sweeps = 10000;
};

// Reward for entering a cell holding each object type, indexed by ObjectType.
using ObjectRewards = std::array<double, 3>;
ObjectRewards object_rewards(const RewardSpec& spec);

// Planning states are (cell, heading) pairs.
int state_count(int size);
int state_index(int size, const AgentPose& pose);
AgentPose state_pose(int size, int index);

// Values on a frozen map. Entering an object cell pays the object's reward
// and ends the plan, so a frozen object is collected at most once.
class ValueFunction {
 public:
  ValueFunction() = default;
  ValueFunction(int size, std::vector<double> values, double gamma, double residual, int sweeps)
      : size_(size), values_(std::move(values)), gamma_(gamma), residual_(residual), sweeps_(sweeps) {}

  double at(const AgentPose& pose) const { return values_[static_cast<std::size_t>(state_index(size_, pose))]; }
  const std::vector<double>& values() const { return values_; }
  int size() const { return size_; }
  double gamma() const { return gamma_; }
  double residual() const { return residual_; }
  int sweeps() const { return sweeps_; }

 private:
  int size_ = 0;
  std::vector<double> values_;
  double gamma_ = kDiscount;
  double residual_ = 0.0;
  int sweeps_ = 0;
};

// Throws Error if the residual does not drop below tolerance within max_sweeps.
ValueFunction value_iterate(const StaticMap& map, const ObjectRewards& rewards, const PlanningConfig& config = {});
ValueFunction value_iterate(const StaticMap& map, const RewardSpec& spec, const PlanningConfig& config = {});

std::array<double, 3> q_values(const StaticMap& map, const ObjectRewards& rewards, const ValueFunction& v,
                               const AgentPose& pose);
double bellman_residual(const StaticMap& map, const ObjectRewards& rewards, const ValueFunction& v);

// First action (Maintain, TurnLeft, TurnRight order) within 1e-12 of the best.
Action greedy_action(const std::array<double, 3>& q);

class PolicyTable {
 public:
  PolicyTable(int size, std::vector<Action> actions, ObjectRewards provenance)
      : size_(size), actions_(std::move(actions)), provenance_(provenance) {}
  Action at(const AgentPose& pose) const { return actions_[static_cast<std::size_t>(state_index(size_, pose))]; }
  const ObjectRewards& provenance() const { return provenance_; }

 private:
  int size_;
  std::vector<Action> actions_;
  ObjectRewards provenance_;
};

PolicyTable greedy_policy(const StaticMap& map, const ObjectRewards& rewards, const ValueFunction& v);

// Memoizes value iteration per (map, rewards); maps only change on pickups
// and respawns, so an episode needs a few dozen solves rather than one per tick.
class Planner {
 public:
  explicit Planner(PlanningConfig config = {}, std::size_t capacity = 8) : config_(config), capacity_(capacity) {}
  const ValueFunction& values(const StaticMap& map, const ObjectRewards& rewards);
  Action act(const StaticMap& map, const ObjectRewards& rewards, const AgentPose& pose);
  const PlanningConfig& config() const { return config_; }

 private:
  struct Entry {
    StaticMap map;
    ObjectRewards rewards;
    ValueFunction values;
  };
  PlanningConfig config_;
  std::size_t capacity_;
  std::deque<Entry> entries_;
};

// --- policies ---

class Policy {
 public:
  virtual ~Policy() = default;
  virtual Action act(const EnvState& state, bool just_picked_up) = 0;
  virtual std::unique_ptr<Policy> clone() const = 0;
  // Gives the policy an independent random stream (no-op for deterministic policies).
  virtual void reseed(std::uint64_t /*seed*/) {}
};

// Pseudo-optimal policy: greedy on value iteration over the current snapshot.
class GreedyPolicy final : public Policy {
 public:
  explicit GreedyPolicy(const RewardSpec& spec, PlanningConfig config = {});
  explicit GreedyPolicy(const ObjectRewards& rewards, PlanningConfig config = {});
  Action act(const EnvState& state, bool just_picked_up) override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<GreedyPolicy>(*this); }

 private:
  ObjectRewards rewards_;
  Planner planner_;
};

class RandomPolicy final : public Policy {
 public:
  explicit RandomPolicy(std::uint64_t seed) : rng_(seed) {}
  Action act(const EnvState&, bool) override { return kActions[static_cast<std::size_t>(rng_.uniform_int(3))]; }
  std::unique_ptr<Policy> clone() const override { return std::make_unique<RandomPolicy>(*this); }
  void reseed(std::uint64_t seed) override { rng_ = Rng(seed); }

 private:
  Rng rng_;
};

// The three plan mappings the behavior policy switches between:
// go for passenger, go for road-block, go for parked-car.
const std::array<RewardSpec, 3>& behavior_mappings();

struct BehaviorPolicyState {
  int mapping = 0;
  double switch_probability = 0.1;
  Rng rng;
};

// Initial mapping drawn uniformly.
BehaviorPolicyState make_behavior_policy(std::uint64_t seed, double switch_probability = 0.1);

struct BehaviorDecision {
  Action action = Action::Maintain;
  bool reselected = false;
};

// Re-draws the mapping after a pickup or with the switch probability, then
// returns the greedy action of the current mapping on the static snapshot.
BehaviorDecision behavior_step(BehaviorPolicyState& bp, const EnvState& state, bool just_picked_up, Planner& planner);

class BehaviorPolicy final : public Policy {
 public:
  explicit BehaviorPolicy(BehaviorPolicyState state, PlanningConfig config = {}) : state_(std::move(state)), planner_(config) {}
  Action act(const EnvState& state, bool just_picked_up) override;
  std::unique_ptr<Policy> clone() const override { return std::make_unique<BehaviorPolicy>(*this); }
  void reseed(std::uint64_t seed) override { state_.rng = Rng(seed); }
  const BehaviorPolicyState& state() const { return state_; }

 private:
  BehaviorPolicyState state_;
  Planner planner_;
};

// --- Monte Carlo estimation and task statistics ---

enum class RolloutModel {
  Full,    // regenerating environment
  Static,  // frozen map, rollout ends at the first pickup (the planning model)
};

struct McConfig {
  int n_rollouts = 200;
  int horizon = 100;
  double gamma = kDiscount;
  RolloutModel model = RolloutModel::Full;
  std::uint64_t seed = 0;
};

struct McEstimate {
  double v_hat = 0.0;
  double q_hat = 0.0;
  double v_stderr = 0.0;
  double q_stderr = 0.0;
};

// q: take `action`, then follow `policy` for `horizon` steps. v: follow
// `policy` for horizon+1 steps. Rewards come from `spec`. Rollout i uses the
// same environment seed for q and v.
McEstimate mc_estimate(const EnvState& state, Action action, const Policy& policy, const RewardSpec& spec,
                       const McConfig& config);

struct TaskStatistics {
  double q_star = 0.0;
  double v_star = 0.0;
  int optimality = 0;
  double q_behavior = 0.0;
  double v_behavior = 0.0;
  double advantage_star = 0.0;
  double advantage_behavior = 0.0;
  double surprise = 0.0;
  double q_behavior_stderr = 0.0;
};

struct TaskStatisticsConfig {
  PlanningConfig planning;
  McConfig mc{200, 100, kDiscount, RolloutModel::Static, 0};
  // Q^b(s,a) = R(s,a) + gamma V*(s') instead of the behavior policy's own value.
  bool starred_behavior_q = false;
};

TaskStatistics task_statistics(const EnvState& state, Action action, const Policy& behavior, const RewardSpec& spec,
                               const TaskStatisticsConfig& config = {});

}  // namespace empathic
