#include "empathic/planning.hpp"

#include <algorithm>
#include <cmath>

#include "empathic/error.hpp"

namespace empathic {

ObjectRewards object_rewards(const RewardSpec& spec) {
  ObjectRewards r{};
  for (auto t : kObjectTypes) r[static_cast<std::size_t>(t)] = spec.reward(t);
  return r;
}

int state_count(int size) { return size * size * 4; }

int state_index(int size, const AgentPose& pose) {
  return (pose.cell.row * size + pose.cell.col) * 4 + static_cast<int>(pose.heading);
}

AgentPose state_pose(int size, int index) {
  const int cell = index / 4;
  return {{cell / size, cell % size}, static_cast<Heading>(index % 4)};
}

namespace {

struct Transition {
  int next = 0;
  double probability = 1.0;
  double reward = 0.0;
  bool terminal = false;
};

// Up to two outcomes per (state, action); flattened for the sweep loop.
struct TransitionModel {
  int states = 0;
  std::vector<std::array<Transition, 2>> outcomes;  // index: state * 3 + action
  std::vector<std::uint8_t> counts;
};

TransitionModel build_model(const StaticMap& map, const ObjectRewards& rewards) {
  const int n = map.size();
  TransitionModel m;
  m.states = state_count(n);
  m.outcomes.resize(static_cast<std::size_t>(m.states) * 3);
  m.counts.resize(static_cast<std::size_t>(m.states) * 3);
  for (int s = 0; s < m.states; ++s) {
    const AgentPose pose = state_pose(n, s);
    for (std::size_t a = 0; a < 3; ++a) {
      const auto resolved = resolve_outcomes(n, pose, kActions[a]);
      const std::size_t slot = static_cast<std::size_t>(s) * 3 + a;
      m.counts[slot] = static_cast<std::uint8_t>(resolved.size());
      for (std::size_t k = 0; k < resolved.size(); ++k) {
        const AgentPose next = apply_action(pose, resolved[k].action);
        Transition t;
        t.next = state_index(n, next);
        t.probability = resolved[k].probability;
        if (const auto obj = map.at(next.cell)) {
          t.reward = rewards[static_cast<std::size_t>(*obj)];
          t.terminal = true;
        }
        m.outcomes[slot][k] = t;
      }
    }
  }
  return m;
}

double backup(const TransitionModel& m, const std::vector<double>& v, int s, std::size_t a, double gamma) {
  const std::size_t slot = static_cast<std::size_t>(s) * 3 + a;
  double q = 0.0;
  for (std::size_t k = 0; k < m.counts[slot]; ++k) {
    const auto& t = m.outcomes[slot][k];
    q += t.probability * (t.reward + (t.terminal ? 0.0 : gamma * v[static_cast<std::size_t>(t.next)]));
  }
  return q;
}

}  // namespace

ValueFunction value_iterate(const StaticMap& map, const ObjectRewards& rewards, const PlanningConfig& config) {
  const auto model = build_model(map, rewards);
  std::vector<double> v(static_cast<std::size_t>(model.states), 0.0);
  std::vector<double> next(v.size(), 0.0);
  double residual = 0.0;
  for (int sweep = 1; sweep <= config.max_sweeps; ++sweep) {
    residual = 0.0;
    for (int s = 0; s < model.states; ++s) {
      double best = backup(model, v, s, 0, config.gamma);
      best = std::max(best, backup(model, v, s, 1, config.gamma));
      best = std::max(best, backup(model, v, s, 2, config.gamma));
      residual = std::max(residual, std::abs(best - v[static_cast<std::size_t>(s)]));
      next[static_cast<std::size_t>(s)] = best;
    }
    v.swap(next);
    if (residual < config.tolerance) {
      // report the residual of the returned values, not of the previous sweep
      ValueFunction out(map.size(), std::move(v), config.gamma, 0.0, sweep);
      return ValueFunction(map.size(), out.values(), config.gamma, bellman_residual(map, rewards, out), sweep);
    }
  }
  throw Error("value iteration did not converge within " + std::to_string(config.max_sweeps) +
              " sweeps (residual " + std::to_string(residual) + ")");
}

ValueFunction value_iterate(const StaticMap& map, const RewardSpec& spec, const PlanningConfig& config) {
  return value_iterate(map, object_rewards(spec), config);
}

std::array<double, 3> q_values(const StaticMap& map, const ObjectRewards& rewards, const ValueFunction& v,
                               const AgentPose& pose) {
  std::array<double, 3> q{};
  for (std::size_t a = 0; a < 3; ++a) {
    for (const auto& r : resolve_outcomes(map.size(), pose, kActions[a])) {
      const AgentPose next = apply_action(pose, r.action);
      const auto obj = map.at(next.cell);
      const double reward = obj ? rewards[static_cast<std::size_t>(*obj)] : 0.0;
      q[a] += r.probability * (reward + (obj ? 0.0 : v.gamma() * v.at(next)));
    }
  }
  return q;
}

double bellman_residual(const StaticMap& map, const ObjectRewards& rewards, const ValueFunction& v) {
  double residual = 0.0;
  for (int s = 0; s < state_count(map.size()); ++s) {
    const AgentPose pose = state_pose(map.size(), s);
    const auto q = q_values(map, rewards, v, pose);
    residual = std::max(residual, std::abs(*std::max_element(q.begin(), q.end()) - v.at(pose)));
  }
  return residual;
}

Action greedy_action(const std::array<double, 3>& q) {
  const double best = *std::max_element(q.begin(), q.end());
  for (std::size_t a = 0; a < 3; ++a) {
    if (q[a] >= best - 1e-12) return kActions[a];
  }
  return Action::Maintain;
}

PolicyTable greedy_policy(const StaticMap& map, const ObjectRewards& rewards, const ValueFunction& v) {
  std::vector<Action> actions(static_cast<std::size_t>(state_count(map.size())));
  for (int s = 0; s < state_count(map.size()); ++s) {
    actions[static_cast<std::size_t>(s)] = greedy_action(q_values(map, rewards, v, state_pose(map.size(), s)));
  }
  return PolicyTable(map.size(), std::move(actions), rewards);
}

const ValueFunction& Planner::values(const StaticMap& map, const ObjectRewards& rewards) {
  for (auto it = entries_.begin(); it != entries_.end(); ++it) {
    if (it->rewards == rewards && it->map == map) {
      if (it != entries_.begin()) {
        auto e = std::move(*it);
        entries_.erase(it);
        entries_.push_front(std::move(e));
      }
      return entries_.front().values;
    }
  }
  entries_.push_front({map, rewards, value_iterate(map, rewards, config_)});
  if (entries_.size() > capacity_) entries_.pop_back();
  return entries_.front().values;
}

Action Planner::act(const StaticMap& map, const ObjectRewards& rewards, const AgentPose& pose) {
  return greedy_action(q_values(map, rewards, values(map, rewards), pose));
}

GreedyPolicy::GreedyPolicy(const RewardSpec& spec, PlanningConfig config)
    : rewards_(object_rewards(spec)), planner_(config) {}

GreedyPolicy::GreedyPolicy(const ObjectRewards& rewards, PlanningConfig config) : rewards_(rewards), planner_(config) {}

Action GreedyPolicy::act(const EnvState& state, bool) {
  return planner_.act(static_snapshot(state), rewards_, state.agent);
}

const std::array<RewardSpec, 3>& behavior_mappings() {
  static const std::array<RewardSpec, 3> mappings{
      RewardSpec::from_values(6, -1, -5),
      RewardSpec::from_values(-1, 6, -5),
      RewardSpec::from_values(-1, -5, 6),
  };
  return mappings;
}

BehaviorPolicyState make_behavior_policy(std::uint64_t seed, double switch_probability) {
  BehaviorPolicyState bp;
  bp.rng = Rng(seed);
  bp.switch_probability = switch_probability;
  bp.mapping = bp.rng.uniform_int(3);
  return bp;
}

BehaviorDecision behavior_step(BehaviorPolicyState& bp, const EnvState& state, bool just_picked_up, Planner& planner) {
  BehaviorDecision d;
  if (just_picked_up || bp.rng.bernoulli(bp.switch_probability)) {
    bp.mapping = bp.rng.uniform_int(3);
    d.reselected = true;
  }
  const auto rewards = object_rewards(behavior_mappings()[static_cast<std::size_t>(bp.mapping)]);
  d.action = planner.act(static_snapshot(state), rewards, state.agent);
  return d;
}

Action BehaviorPolicy::act(const EnvState& state, bool just_picked_up) {
  return behavior_step(state_, state, just_picked_up, planner_).action;
}

namespace {

struct Rollout {
  double q_return = 0.0;
  double v_return = 0.0;
};

double run_rollout(EnvState env, std::optional<Action> first, Policy& policy, int steps, const McConfig& cfg) {
  if (cfg.model == RolloutModel::Static) env.config.respawn = false;
  env.config.episode_length = env.tick + steps + 1;
  double total = 0.0;
  double discount = 1.0;
  bool picked = false;
  for (int t = 0; t < steps; ++t) {
    const Action a = (t == 0 && first) ? *first : policy.act(env, picked);
    const auto out = step_in_place(env, a);
    total += discount * out.reward;
    discount *= cfg.gamma;
    picked = out.event.has_value();
    if (picked && cfg.model == RolloutModel::Static) break;
  }
  return total;
}

std::pair<double, double> mean_stderr(const std::vector<double>& xs) {
  const double n = static_cast<double>(xs.size());
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= n;
  if (xs.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0) / n)};
}

}  // namespace

McEstimate mc_estimate(const EnvState& state, Action action, const Policy& policy, const RewardSpec& spec,
                       const McConfig& config) {
  if (config.n_rollouts < 1) throw InvalidArgument("n_rollouts must be at least 1");
  if (config.horizon < 0) throw InvalidArgument("horizon must be non-negative");
  Rng seeds(config.seed);
  std::vector<double> qs;
  std::vector<double> vs;
  qs.reserve(static_cast<std::size_t>(config.n_rollouts));
  vs.reserve(static_cast<std::size_t>(config.n_rollouts));
  for (int i = 0; i < config.n_rollouts; ++i) {
    const std::uint64_t env_seed = seeds.fork_seed();
    const std::uint64_t policy_seed = seeds.fork_seed();
    EnvState start = state;
    start.spec = spec;
    start.rng = Rng(env_seed);

    auto q_policy = policy.clone();
    q_policy->reseed(policy_seed);
    qs.push_back(run_rollout(start, action, *q_policy, config.horizon + 1, config));

    auto v_policy = policy.clone();
    v_policy->reseed(policy_seed);
    vs.push_back(run_rollout(start, std::nullopt, *v_policy, config.horizon + 1, config));
  }
  McEstimate est;
  std::tie(est.q_hat, est.q_stderr) = mean_stderr(qs);
  std::tie(est.v_hat, est.v_stderr) = mean_stderr(vs);
  return est;
}

TaskStatistics task_statistics(const EnvState& state, Action action, const Policy& behavior, const RewardSpec& spec,
                               const TaskStatisticsConfig& config) {
  const StaticMap map = static_snapshot(state);
  const auto rewards = object_rewards(spec);
  const auto v_star = value_iterate(map, rewards, config.planning);
  const auto q = q_values(map, rewards, v_star, state.agent);
  const std::size_t a = static_cast<std::size_t>(action);

  TaskStatistics ts;
  ts.q_star = q[a];
  ts.v_star = *std::max_element(q.begin(), q.end());
  ts.optimality = ts.q_star >= ts.v_star - 1e-9 ? 1 : 0;
  ts.advantage_star = ts.q_star - ts.v_star;

  const auto est = mc_estimate(state, action, behavior, spec, config.mc);
  ts.v_behavior = est.v_hat;
  if (config.starred_behavior_q) {
    ts.q_behavior = ts.q_star;
    ts.q_behavior_stderr = 0.0;
  } else {
    ts.q_behavior = est.q_hat;
    ts.q_behavior_stderr = est.q_stderr;
  }
  ts.advantage_behavior = ts.q_behavior - ts.v_behavior;
  ts.surprise = ts.q_behavior - ts.q_star;
  return ts;
}

}  // namespace empathic
