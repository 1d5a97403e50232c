#include "empathic/gridworld.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "empathic/error.hpp"
#include "json.hpp"

namespace empathic {

using nlohmann::json;

int reward_class_index(int reward_value) {
  for (std::size_t i = 0; i < kRewardValues.size(); ++i) {
    if (kRewardValues[i] == reward_value) return static_cast<int>(i);
  }
  throw InvalidArgument("reward value " + std::to_string(reward_value) + " is not one of {-5, -1, +6}");
}

std::string_view to_string(ObjectType t) {
  switch (t) {
    case ObjectType::Passenger: return "Passenger";
    case ObjectType::Roadblock: return "Roadblock";
    case ObjectType::ParkedCar: return "ParkedCar";
  }
  return "?";
}

std::string_view to_string(Heading h) {
  static constexpr std::array<std::string_view, 4> names{"N", "E", "S", "W"};
  return names[static_cast<std::size_t>(h)];
}

std::string_view to_string(Action a) {
  switch (a) {
    case Action::Maintain: return "Maintain";
    case Action::TurnLeft: return "TurnLeft";
    case Action::TurnRight: return "TurnRight";
  }
  return "?";
}

std::optional<ObjectType> parse_object_type(std::string_view s) {
  for (auto t : kObjectTypes) {
    if (to_string(t) == s) return t;
  }
  return std::nullopt;
}

std::optional<Heading> parse_heading(std::string_view s) {
  for (int i = 0; i < 4; ++i) {
    auto h = static_cast<Heading>(i);
    if (to_string(h) == s) return h;
  }
  return std::nullopt;
}

std::optional<Action> parse_action(std::string_view s) {
  for (auto a : kActions) {
    if (to_string(a) == s) return a;
  }
  return std::nullopt;
}

RewardSpec RewardSpec::ground_truth() { return RewardSpec({6, -1, -5}); }

RewardSpec RewardSpec::from_values(int passenger, int roadblock, int parked_car) {
  std::array<int, 3> v{passenger, roadblock, parked_car};
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  if (sorted != kRewardValues) {
    throw InvalidArgument("reward spec must assign a permutation of {+6, -1, -5}");
  }
  return RewardSpec(v);
}

std::string RewardSpec::describe() const {
  std::string s;
  for (auto t : kObjectTypes) {
    if (!s.empty()) s += ", ";
    s += std::string(to_string(t)) + ": " + std::to_string(reward(t));
  }
  return "{" + s + "}";
}

std::optional<ObjectType> EnvState::object_at(Cell c) const {
  for (const auto& o : objects) {
    if (o.cell == c) return o.type;
  }
  return std::nullopt;
}

StaticMap::StaticMap(int size, std::span<const PlacedObject> objects)
    : size_(size), cells_(static_cast<std::size_t>(size * size), -1), objects_(objects.begin(), objects.end()) {
  for (const auto& o : objects_) {
    if (!in_bounds(o.cell)) throw InvalidArgument("object outside the grid");
    cells_[static_cast<std::size_t>(o.cell.row * size_ + o.cell.col)] = static_cast<std::int8_t>(o.type);
  }
}

std::optional<ObjectType> StaticMap::at(Cell c) const {
  const auto v = cells_[static_cast<std::size_t>(c.row * size_ + c.col)];
  if (v < 0) return std::nullopt;
  return static_cast<ObjectType>(v);
}

Cell forward(Cell c, Heading h) {
  switch (h) {
    case Heading::N: return {c.row - 1, c.col};
    case Heading::E: return {c.row, c.col + 1};
    case Heading::S: return {c.row + 1, c.col};
    case Heading::W: return {c.row, c.col - 1};
  }
  return c;
}

Heading turned(Heading h, Action a) {
  const int v = static_cast<int>(h);
  switch (a) {
    case Action::Maintain: return h;
    case Action::TurnLeft: return static_cast<Heading>((v + 3) % 4);
    case Action::TurnRight: return static_cast<Heading>((v + 1) % 4);
  }
  return h;
}

bool in_grid(int size, Cell c) { return c.row >= 0 && c.row < size && c.col >= 0 && c.col < size; }

AgentPose apply_action(const AgentPose& pose, Action a) {
  const Heading h = turned(pose.heading, a);
  return {forward(pose.cell, h), h};
}

int cells_to_boundary(int size, Cell c, Heading d) {
  switch (d) {
    case Heading::N: return c.row;
    case Heading::E: return size - 1 - c.col;
    case Heading::S: return size - 1 - c.row;
    case Heading::W: return c.col;
  }
  return 0;
}

namespace {

std::vector<ResolvedAction> forced_turn(int size, const AgentPose& pose) {
  const int left = cells_to_boundary(size, pose.cell, turned(pose.heading, Action::TurnLeft));
  const int right = cells_to_boundary(size, pose.cell, turned(pose.heading, Action::TurnRight));
  if (left > right) return {{Action::TurnLeft, 1.0}};
  if (right > left) return {{Action::TurnRight, 1.0}};
  return {{Action::TurnLeft, 0.5}, {Action::TurnRight, 0.5}};
}

}  // namespace

std::vector<ResolvedAction> resolve_outcomes(int size, const AgentPose& pose, Action requested) {
  if (in_grid(size, apply_action(pose, requested).cell)) return {{requested, 1.0}};
  if (requested != Action::Maintain && in_grid(size, apply_action(pose, Action::Maintain).cell)) {
    return {{Action::Maintain, 1.0}};
  }
  return forced_turn(size, pose);
}

Action boundary_resolve(EnvState& state, Action requested) {
  const auto outcomes = resolve_outcomes(state.config.size, state.agent, requested);
  if (outcomes.size() == 1) return outcomes.front().action;
  return state.rng.bernoulli(0.5) ? outcomes[0].action : outcomes[1].action;
}

namespace {

std::vector<Cell> free_cells(const EnvState& s, bool exclude_agent) {
  std::vector<Cell> cells;
  const int n = s.config.size;
  cells.reserve(static_cast<std::size_t>(n * n));
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      const Cell cell{r, c};
      if (exclude_agent && cell == s.agent.cell) continue;
      if (s.object_at(cell)) continue;
      cells.push_back(cell);
    }
  }
  return cells;
}

void place_object(EnvState& s, ObjectType type) {
  const auto cells = free_cells(s, true);
  if (cells.empty()) return;
  s.objects.push_back({cells[s.rng.uniform_index(cells.size())], type});
}

}  // namespace

EnvState new_episode(std::uint64_t seed, const RewardSpec& spec, const EnvConfig& config) {
  if (config.size < 2) throw InvalidArgument("grid size must be at least 2");
  if (3 * config.objects_per_type >= config.size * config.size) {
    throw InvalidArgument("grid too small for the requested object count");
  }
  EnvState s;
  s.config = config;
  s.spec = spec;
  s.rng = Rng(seed);
  // agent is placed after the objects; park it off-grid while sampling
  s.agent.cell = {-1, -1};
  for (auto t : kObjectTypes) {
    for (int i = 0; i < config.objects_per_type; ++i) place_object(s, t);
  }
  const auto cells = free_cells(s, true);
  s.agent.cell = cells[s.rng.uniform_index(cells.size())];
  s.agent.heading = static_cast<Heading>(s.rng.uniform_int(4));
  return s;
}

StepOutcome step_in_place(EnvState& s, Action action) {
  if (s.finished()) throw InvalidArgument("episode already finished at tick " + std::to_string(s.tick));
  StepOutcome out;
  out.effective_action = boundary_resolve(s, action);
  s.agent = apply_action(s.agent, out.effective_action);

  auto hit = std::find_if(s.objects.begin(), s.objects.end(), [&](const PlacedObject& o) { return o.cell == s.agent.cell; });
  if (hit != s.objects.end()) {
    out.event = hit->type;
    out.reward = s.spec.reward(hit->type);
    if (s.config.respawn) s.spawn_queue.push_back({hit->type, s.tick + s.config.respawn_delay});
    s.objects.erase(hit);
  }
  s.score += out.reward;
  s.tick += 1;

  if (!s.spawn_queue.empty()) {
    for (auto t : kObjectTypes) {
      for (auto it = s.spawn_queue.begin(); it != s.spawn_queue.end();) {
        if (it->type == t && it->due_tick <= s.tick) {
          place_object(s, t);
          it = s.spawn_queue.erase(it);
        } else {
          ++it;
        }
      }
    }
  }
  return out;
}

StepResult step(const EnvState& state, Action action) {
  StepResult r{state, 0, std::nullopt, Action::Maintain};
  const auto out = step_in_place(r.state, action);
  r.reward = out.reward;
  r.event = out.event;
  r.effective_action = out.effective_action;
  return r;
}

StaticMap static_snapshot(const EnvState& state) { return StaticMap(state.config.size, state.objects); }

int EpisodeLog::total_reward() const {
  int total = 0;
  for (const auto& r : records) total += r.reward;
  return total;
}

std::size_t EpisodeLog::pickup_count() const {
  return static_cast<std::size_t>(std::count_if(records.begin(), records.end(), [](const StepRecord& r) { return r.event.has_value(); }));
}

StepOutcome step_and_record(EnvState& state, Action action, EpisodeLog& log) {
  StepRecord rec;
  rec.tick = state.tick;
  rec.agent = state.agent;
  rec.objects = state.objects;
  const auto out = step_in_place(state, action);
  rec.action = out.effective_action;
  rec.reward = out.reward;
  rec.event = out.event;
  log.records.push_back(std::move(rec));
  return out;
}

std::string record_to_json_line(const StepRecord& r) {
  nlohmann::ordered_json objects = nlohmann::ordered_json::array();
  for (const auto& o : r.objects) objects.push_back({o.cell.row, o.cell.col, to_string(o.type)});
  nlohmann::ordered_json j;
  j["tick"] = r.tick;
  j["agent"] = {r.agent.cell.row, r.agent.cell.col, to_string(r.agent.heading)};
  j["objects"] = std::move(objects);
  j["action"] = to_string(r.action);
  j["reward"] = r.reward;
  j["event"] = r.event ? nlohmann::ordered_json(to_string(*r.event)) : nlohmann::ordered_json(nullptr);
  return j.dump();
}

StepRecord record_from_json_line(const std::string& line, std::size_t line_number) {
  const auto where = " (line " + std::to_string(line_number) + ")";
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string(e.what()) + where);
  }
  for (const char* key : {"tick", "agent", "objects", "action", "reward", "event"}) {
    if (!j.contains(key)) throw SchemaError(std::string("missing field \"") + key + "\"" + where);
  }
  try {
    StepRecord r;
    r.tick = j.at("tick").get<int>();
    const auto& a = j.at("agent");
    r.agent.cell = {a.at(0).get<int>(), a.at(1).get<int>()};
    const auto h = parse_heading(a.at(2).get<std::string>());
    if (!h) throw ParseError("bad heading" + where);
    r.agent.heading = *h;
    for (const auto& o : j.at("objects")) {
      const auto t = parse_object_type(o.at(2).get<std::string>());
      if (!t) throw ParseError("bad object type" + where);
      r.objects.push_back({{o.at(0).get<int>(), o.at(1).get<int>()}, *t});
    }
    const auto act = parse_action(j.at("action").get<std::string>());
    if (!act) throw ParseError("bad action" + where);
    r.action = *act;
    r.reward = j.at("reward").get<int>();
    if (!j.at("event").is_null()) {
      const auto t = parse_object_type(j.at("event").get<std::string>());
      if (!t) throw ParseError("bad event" + where);
      r.event = *t;
    }
    return r;
  } catch (const json::exception& e) {
    throw ParseError(std::string(e.what()) + where);
  }
}

void write_episode_jsonl(std::ostream& os, const EpisodeLog& log) {
  for (const auto& r : log.records) os << record_to_json_line(r) << '\n';
}

EpisodeLog read_episode_jsonl(std::istream& is, const RewardSpec& spec) {
  EpisodeLog log;
  log.spec = spec;
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    ++n;
    if (line.empty()) continue;
    log.records.push_back(record_from_json_line(line, n));
  }
  return log;
}

}  // namespace empathic
