#pragma once

#include <cstdint>
#include <deque>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "empathic/feature_pipeline.hpp"
#include "empathic/gridworld.hpp"
#include "empathic/inference.hpp"
#include "empathic/observer_sim.hpp"
#include "empathic/planning.hpp"
#include "empathic/reaction_model.hpp"

namespace empathic {

enum class InputMode : std::uint8_t {
  Synthetic,  // simulated observer reacts to pickups
  Live,       // gestures injected from outside, rendered by the same synthesizer
  External,   // externally extracted frame vectors pushed in
  Silent      // no frames at all
};
std::string_view to_string(InputMode m);
std::optional<InputMode> parse_input_mode(std::string_view s);

enum class ReplanTrigger : std::uint8_t { EveryUpdate, EveryPickup };
std::string_view to_string(ReplanTrigger r);
std::optional<ReplanTrigger> parse_replan_trigger(std::string_view s);

struct SessionConfig {
  std::uint64_t seed = 0;
  TimeBase time;
  EnvConfig env;
  RewardSpec truth = RewardSpec::ground_truth();
  InputMode input = InputMode::Synthetic;
  ObserverProfile profile = ObserverProfile::clean();  // reactions and sensor baseline
  HypothesisSpace hypotheses = HypothesisSpace::AllPermutations;
  ReplanTrigger replan = ReplanTrigger::EveryUpdate;
  EventPooling pooling = EventPooling::GeometricMean;
  int warmup_ticks = 0;  // random actions before the belief-driven policy takes over
  double live_gesture_intensity = 3.0;
  double live_gesture_duration_s = 1.0;
};

std::string session_config_to_json(const SessionConfig& c);
SessionConfig session_config_from_json(const std::string& text);

struct TickMetrics {
  int tick = 0;
  std::array<double, kRankingCount> posterior{};
  double entropy = 0.0;
  int cumulative_return = 0;
  double tau = 0.0;  // MAP ranking vs truth
  int map_index = 0;
  int policy_index = 0;  // ranking the agent is currently planning under
  int updates = 0;
};

struct UpdateRecord {
  int tick = 0;          // pickup tick
  ObjectType object = ObjectType::Passenger;
  int frame = 0;         // frame whose arrival completed the evidence
  std::array<double, 3> probabilities{};
  int map_before = 0;
  int map_after = 0;
};

struct InjectedGesture {
  int tick = 0;  // tick during which it was injected
  GestureEvent gesture;
};

// Everything needed to re-run a session: config, the agent's actions and any
// live input.
struct SessionRecord {
  SessionConfig config;
  std::vector<Action> actions;
  std::vector<InjectedGesture> gestures;
  std::vector<std::pair<int, FrameFeatures>> external_frames;  // (tick pushed, features)
};

inline constexpr int kSessionRecordVersion = 1;
void write_session_record(std::ostream& os, const SessionRecord& r);
// Throws IntegrityError on truncation, checksum or version mismatch.
SessionRecord read_session_record(std::istream& is);

// One owner of env + belief, advanced one tick at a time.
class OnlineSession {
 public:
  OnlineSession(SessionConfig config, std::shared_ptr<const ModelParams> model, WindowConfig window);

  // Advances one tick. With `forced`, that action replaces the planner's
  // choice (used by replay).
  void step(std::optional<Action> forced = std::nullopt);
  bool finished() const { return state_.finished(); }

  // Live input: a gesture starting at the next frame not yet produced.
  GestureEvent inject_gesture(GestureKind kind);
  void inject_gesture(const GestureEvent& g);
  // External input: frames are consumed in order.
  void push_external_frame(const FrameFeatures& f);

  const SessionConfig& config() const { return config_; }
  const EnvState& state() const { return state_; }
  const EpisodeLog& log() const { return log_; }
  const Belief& belief() const { return belief_; }
  RewardSpec policy_spec() const { return all_rankings()[static_cast<std::size_t>(policy_index_)]; }
  const std::vector<TickMetrics>& metrics() const { return metrics_; }
  const std::vector<UpdateRecord>& updates() const { return updates_; }
  const std::vector<GestureEvent>& gestures() const { return gestures_; }
  int frames_produced() const { return frames_produced_; }
  int starved_updates() const { return starved_; }
  int pending_updates() const { return static_cast<int>(pending_.size()); }
  const std::vector<std::string>& notes() const { return notes_; }
  const SessionRecord& record() const { return record_; }

 private:
  struct Pending {
    int tick;
    ObjectType object;
    int first_agg;  // first aggregated frame of the tick, once known
    int last_agg;
  };
  Action choose_action();
  void produce_frame(int index);
  void process_pending(int frame);
  void append_metrics();

  SessionConfig config_;
  std::shared_ptr<const ModelParams> model_;
  WindowConfig window_;
  EnvState state_;
  EpisodeLog log_;
  Belief belief_;
  int policy_index_ = 0;
  Planner planner_;
  Rng warmup_rng_;
  ObserverProfile observer_;
  FrameSynthesizer synth_;
  FeatureExtractor extractor_;
  std::vector<AggregatedFrame> agg_;
  std::vector<std::uint8_t> agg_starved_;
  bool block_starved_ = false;
  std::vector<GestureEvent> gestures_;
  std::deque<FrameFeatures> external_;
  std::deque<Pending> pending_;
  std::vector<TickMetrics> metrics_;
  std::vector<UpdateRecord> updates_;
  std::vector<std::string> notes_;
  SessionRecord record_;
  int frames_produced_ = 0;
  int cumulative_return_ = 0;
  int starved_ = 0;
};

struct OnlineResult {
  EpisodeLog log;
  std::vector<TickMetrics> metrics;
  std::vector<UpdateRecord> updates;
  Belief belief;
  RewardSpec final_map = RewardSpec::ground_truth();
  int dropped_updates = 0;  // pickups too late in the episode for their window
  int starved_updates = 0;
  SessionRecord record;
};

OnlineResult run_online_episode(const SessionConfig& config, std::shared_ptr<const ModelParams> model,
                                const WindowConfig& window);
// Re-runs a recorded session with the recorded actions and live input.
OnlineResult replay_session(const SessionRecord& record, std::shared_ptr<const ModelParams> model,
                            const WindowConfig& window);

void write_metrics_csv(std::ostream& os, const std::vector<TickMetrics>& metrics);

// ---- batch of online sessions ----

struct OnlineBatchReport {
  std::vector<std::uint64_t> seeds;
  std::vector<int> final_return;
  std::vector<int> final_map;
  std::vector<bool> passenger_highest;
  int positive_returns = 0;
  int passenger_highest_count = 0;
  double binomial_p = 1.0;  // positive returns vs p0 = 0.5, one-sided
  double mean_return = 0.0;
  double random_baseline_mean = 0.0;
  int baseline_episodes = 0;
  std::vector<std::vector<TickMetrics>> metrics;
};

OnlineBatchReport run_online_batch(const SessionConfig& base, std::shared_ptr<const ModelParams> model,
                                   const WindowConfig& window, int sessions, int baseline_episodes);
std::string online_batch_json(const OnlineBatchReport& r);

// Mean return of uniformly random actions over seeded episodes.
double random_policy_baseline(const EnvConfig& env, const RewardSpec& truth, int episodes, std::uint64_t seed);

}  // namespace empathic
