#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "empathic/rng.hpp"

namespace empathic {

enum class ObjectType : std::uint8_t { Passenger = 0, Roadblock = 1, ParkedCar = 2 };
inline constexpr std::array<ObjectType, 3> kObjectTypes{ObjectType::Passenger, ObjectType::Roadblock,
                                                        ObjectType::ParkedCar};

enum class Heading : std::uint8_t { N = 0, E = 1, S = 2, W = 3 };

enum class Action : std::uint8_t { Maintain = 0, TurnLeft = 1, TurnRight = 2 };
inline constexpr std::array<Action, 3> kActions{Action::Maintain, Action::TurnLeft, Action::TurnRight};

// The three reward values, in the fixed class order used everywhere
// (labels, model outputs, beliefs): index 0 = -5, 1 = -1, 2 = +6.
inline constexpr std::array<int, 3> kRewardValues{-5, -1, 6};
int reward_class_index(int reward_value);

std::string_view to_string(ObjectType t);
std::string_view to_string(Heading h);
std::string_view to_string(Action a);
std::optional<ObjectType> parse_object_type(std::string_view s);
std::optional<Heading> parse_heading(std::string_view s);
std::optional<Action> parse_action(std::string_view s);

struct Cell {
  int row = 0;
  int col = 0;
  friend auto operator<=>(const Cell&, const Cell&) = default;
};

// Assignment of the reward values {+6, -1, -5} to object types.
class RewardSpec {
 public:
  // Passenger +6, Roadblock -1, ParkedCar -5.
  static RewardSpec ground_truth();
  // Throws InvalidArgument unless the three values are a permutation of {+6,-1,-5}.
  static RewardSpec from_values(int passenger, int roadblock, int parked_car);

  int reward(ObjectType t) const { return values_[static_cast<std::size_t>(t)]; }
  const std::array<int, 3>& values() const { return values_; }
  std::string describe() const;

  friend bool operator==(const RewardSpec&, const RewardSpec&) = default;

 private:
  explicit RewardSpec(std::array<int, 3> v) : values_(v) {}
  std::array<int, 3> values_;
};

struct AgentPose {
  Cell cell;
  Heading heading = Heading::N;
  friend bool operator==(const AgentPose&, const AgentPose&) = default;
};

struct PlacedObject {
  Cell cell;
  ObjectType type = ObjectType::Passenger;
  friend bool operator==(const PlacedObject&, const PlacedObject&) = default;
};

struct PendingSpawn {
  ObjectType type = ObjectType::Passenger;
  int due_tick = 0;
  friend bool operator==(const PendingSpawn&, const PendingSpawn&) = default;
};

struct EnvConfig {
  int size = 8;
  int episode_length = 200;
  int objects_per_type = 2;
  int respawn_delay = 2;
  // false strips regeneration (picked objects stay gone)
  bool respawn = true;
  friend bool operator==(const EnvConfig&, const EnvConfig&) = default;
};

struct EnvState {
  EnvConfig config;
  RewardSpec spec = RewardSpec::ground_truth();
  int tick = 0;
  AgentPose agent;
  std::vector<PlacedObject> objects;
  std::vector<PendingSpawn> spawn_queue;
  int score = 0;
  Rng rng;

  bool finished() const { return tick >= config.episode_length; }
  std::optional<ObjectType> object_at(Cell c) const;
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

// Frozen occupancy grid used as the planning substrate.
class StaticMap {
 public:
  StaticMap(int size, std::span<const PlacedObject> objects);
  int size() const { return size_; }
  bool in_bounds(Cell c) const { return c.row >= 0 && c.row < size_ && c.col >= 0 && c.col < size_; }
  std::optional<ObjectType> at(Cell c) const;
  const std::vector<PlacedObject>& objects() const { return objects_; }
  friend bool operator==(const StaticMap&, const StaticMap&) = default;

 private:
  int size_;
  std::vector<std::int8_t> cells_;
  std::vector<PlacedObject> objects_;
};

// --- movement geometry (shared by the environment and the planner) ---

Cell forward(Cell c, Heading h);
Heading turned(Heading h, Action a);
bool in_grid(int size, Cell c);
// Heading change then one cell of advance; does not check bounds.
AgentPose apply_action(const AgentPose& pose, Action a);
// Number of cells between the pose and the boundary in direction d.
int cells_to_boundary(int size, Cell c, Heading d);

struct ResolvedAction {
  Action action;
  double probability;
};
// Effective actions for a requested action and their probabilities. One
// entry unless the forced boundary turn is an exact tie (then 0.5/0.5).
std::vector<ResolvedAction> resolve_outcomes(int size, const AgentPose& pose, Action requested);

// --- environment operations ---

EnvState new_episode(std::uint64_t seed, const RewardSpec& spec, const EnvConfig& config = {});

// Forced-turn rule at the map boundary. Returns the requested action when its
// target cell is inside the grid. A Maintain into the boundary becomes a turn
// toward the side with more cells (ties drawn from the state RNG); a turn into
// the boundary becomes Maintain, or the forced turn at a corner.
Action boundary_resolve(EnvState& state, Action requested);

struct StepOutcome {
  int reward = 0;
  std::optional<ObjectType> event;
  Action effective_action = Action::Maintain;
};

// Advances the state in place. Throws InvalidArgument on a finished episode.
StepOutcome step_in_place(EnvState& state, Action action);

struct StepResult {
  EnvState state;
  int reward = 0;
  std::optional<ObjectType> event;
  Action effective_action = Action::Maintain;
};
StepResult step(const EnvState& state, Action action);

StaticMap static_snapshot(const EnvState& state);

// --- episode log ---

struct StepRecord {
  int tick = 0;
  AgentPose agent;
  std::vector<PlacedObject> objects;
  Action action = Action::Maintain;
  int reward = 0;
  std::optional<ObjectType> event;
  friend bool operator==(const StepRecord&, const StepRecord&) = default;
};

struct EpisodeLog {
  RewardSpec spec = RewardSpec::ground_truth();
  std::vector<StepRecord> records;

  int total_reward() const;
  std::size_t pickup_count() const;
  friend bool operator==(const EpisodeLog&, const EpisodeLog&) = default;
};

// Records the pre-step snapshot of `state` and advances it.
StepOutcome step_and_record(EnvState& state, Action action, EpisodeLog& log);

std::string record_to_json_line(const StepRecord& r);
StepRecord record_from_json_line(const std::string& line, std::size_t line_number);
void write_episode_jsonl(std::ostream& os, const EpisodeLog& log);
// The reward spec is not part of the line format; it is supplied by the caller.
EpisodeLog read_episode_jsonl(std::istream& is, const RewardSpec& spec);

}  // namespace empathic
