#include "empathic/session.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "empathic/error.hpp"
#include "empathic/rng.hpp"

namespace empathic {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kEnvStream = 0xE1;
constexpr std::uint64_t kObserverStream = 0x0B5;
constexpr std::uint64_t kWarmupStream = 0xAA;
constexpr std::uint64_t kBaselineEnvStream = 0xBA5E;
constexpr std::uint64_t kBaselinePolicyStream = 0xBA5F;

double map_tau(const Belief& b, const RewardSpec& truth) {
  const auto map = map_ranking(b);
  std::vector<double> x, y;
  for (auto t : kObjectTypes) {
    x.push_back(map.reward(t));
    y.push_back(truth.reward(t));
  }
  return kendall_tau(x, y, false).tau;
}

}  // namespace

std::string_view to_string(InputMode m) {
  switch (m) {
    case InputMode::Synthetic: return "synthetic";
    case InputMode::Live: return "live";
    case InputMode::External: return "external";
    case InputMode::Silent: return "silent";
  }
  return "?";
}

std::optional<InputMode> parse_input_mode(std::string_view s) {
  for (auto m : {InputMode::Synthetic, InputMode::Live, InputMode::External, InputMode::Silent})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

std::string_view to_string(ReplanTrigger r) { return r == ReplanTrigger::EveryUpdate ? "update" : "pickup"; }

std::optional<ReplanTrigger> parse_replan_trigger(std::string_view s) {
  if (s == "update") return ReplanTrigger::EveryUpdate;
  if (s == "pickup") return ReplanTrigger::EveryPickup;
  return std::nullopt;
}

std::string session_config_to_json(const SessionConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  j["fps"] = c.time.fps;
  j["step_period_s"] = c.time.step_period_s;
  j["env"] = {{"size", c.env.size},
              {"episode_length", c.env.episode_length},
              {"objects_per_type", c.env.objects_per_type},
              {"respawn_delay", c.env.respawn_delay},
              {"respawn", c.env.respawn}};
  j["truth"] = c.truth.values();
  j["input"] = to_string(c.input);
  j["profile"] = ojson::parse(profile_to_json(c.profile));
  j["hypotheses"] = to_string(c.hypotheses);
  j["replan"] = to_string(c.replan);
  j["pooling"] = c.pooling == EventPooling::GeometricMean ? "geometric" : "per-frame";
  j["warmup_ticks"] = c.warmup_ticks;
  j["live_gesture_intensity"] = c.live_gesture_intensity;
  j["live_gesture_duration_s"] = c.live_gesture_duration_s;
  return j.dump();
}

SessionConfig session_config_from_json(const std::string& text) {
  SessionConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.seed = j.value("seed", c.seed);
    c.time.fps = j.value("fps", c.time.fps);
    c.time.step_period_s = j.value("step_period_s", c.time.step_period_s);
    if (j.contains("env")) {
      const auto& e = j["env"];
      c.env.size = e.value("size", c.env.size);
      c.env.episode_length = e.value("episode_length", c.env.episode_length);
      c.env.objects_per_type = e.value("objects_per_type", c.env.objects_per_type);
      c.env.respawn_delay = e.value("respawn_delay", c.env.respawn_delay);
      c.env.respawn = e.value("respawn", c.env.respawn);
    }
    if (j.contains("truth")) {
      const auto v = j["truth"].get<std::array<int, 3>>();
      c.truth = RewardSpec::from_values(v[0], v[1], v[2]);
    }
    if (j.contains("input")) {
      const auto m = parse_input_mode(j["input"].get<std::string>());
      if (!m) throw SchemaError("unknown input mode " + j["input"].get<std::string>());
      c.input = *m;
    }
    if (j.contains("profile")) c.profile = profile_from_json(j["profile"].dump());
    if (j.contains("hypotheses")) {
      const auto h = parse_hypothesis_space(j["hypotheses"].get<std::string>());
      if (!h) throw SchemaError("unknown hypothesis space");
      c.hypotheses = *h;
    }
    if (j.contains("replan")) {
      const auto r = parse_replan_trigger(j["replan"].get<std::string>());
      if (!r) throw SchemaError("unknown replan trigger");
      c.replan = *r;
    }
    if (j.contains("pooling")) c.pooling = j["pooling"] == "per-frame" ? EventPooling::PerFrame : EventPooling::GeometricMean;
    c.warmup_ticks = j.value("warmup_ticks", c.warmup_ticks);
    c.live_gesture_intensity = j.value("live_gesture_intensity", c.live_gesture_intensity);
    c.live_gesture_duration_s = j.value("live_gesture_duration_s", c.live_gesture_duration_s);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("session config: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("session config: ") + e.what());
  }
  if (!(c.time.step_period_s > 0)) throw InvalidArgument("step_period_s must be positive");
  return c;
}

// ---- online session ----

OnlineSession::OnlineSession(SessionConfig config, std::shared_ptr<const ModelParams> model, WindowConfig window)
    : config_(std::move(config)),
      model_(std::move(model)),
      window_(window),
      state_(new_episode(hash_mix(config_.seed, kEnvStream), config_.truth, config_.env)),
      belief_(config_.hypotheses),
      warmup_rng_(hash_mix(config_.seed, kWarmupStream)),
      observer_([&] {
        auto p = config_.profile;
        p.seed = hash_mix(config_.seed, kObserverStream);
        p.validate();
        return p;
      }()),
      synth_(observer_, config_.time.fps),
      extractor_(window.pool, config_.time.frames_per_tick()) {
  if (!(config_.time.step_period_s > 0)) throw InvalidArgument("step_period_s must be positive");
  if (!model_) throw InvalidArgument("online session needs a model");
  if (model_->config().fau_in != window_.fau_width() || model_->config().head_in != window_.head_width()) {
    throw InvalidArgument("model input widths do not match the window");
  }
  log_.spec = config_.truth;
  policy_index_ = map_index(belief_);
  record_.config = config_;
  if (config_.input == InputMode::Synthetic) {
    const int total = config_.env.episode_length * config_.time.frames_per_tick();
    for (auto& g : background_gestures(observer_, total, config_.time.fps)) {
      g.offset_frame = std::min(g.offset_frame, total);
      if (g.offset_frame - g.onset_frame >= 2) gestures_.push_back(g);
    }
  }
}

Action OnlineSession::choose_action() {
  if (state_.tick < config_.warmup_ticks) return kActions[static_cast<std::size_t>(warmup_rng_.uniform_int(3))];
  return planner_.act(static_snapshot(state_), object_rewards(policy_spec()), state_.agent);
}

void OnlineSession::step(std::optional<Action> forced) {
  if (finished()) throw Error("episode already finished");
  const int t = state_.tick;
  const Action action = forced ? *forced : choose_action();
  record_.actions.push_back(action);
  const auto out = step_and_record(state_, action, log_);
  cumulative_return_ += out.reward;
  const int fpt = config_.time.frames_per_tick();
  if (out.event) {
    if (config_.input != InputMode::Silent) pending_.push_back({t, *out.event, -1, -1});
    if (config_.input == InputMode::Synthetic) {
      const int total = config_.env.episode_length * fpt;
      for (auto g : event_gestures(observer_, RewardEvent{t, out.reward, config_.time.frame_of_tick(t)}, config_.time.fps)) {
        // frames already produced cannot show an anticipatory onset
        g.onset_frame = std::max(g.onset_frame, frames_produced_);
        g.offset_frame = std::min(g.offset_frame, total);
        if (g.offset_frame - g.onset_frame >= 2) gestures_.push_back(g);
      }
    }
    if (config_.replan == ReplanTrigger::EveryPickup) policy_index_ = map_index(belief_);
  }
  for (int i = t * fpt; i < (t + 1) * fpt; ++i) produce_frame(i);
  append_metrics();
}

GestureEvent OnlineSession::inject_gesture(GestureKind kind) {
  GestureEvent g;
  g.kind = kind;
  g.onset_frame = frames_produced_;
  g.offset_frame = g.onset_frame + std::max(2, static_cast<int>(std::lround(config_.live_gesture_duration_s * config_.time.fps)));
  g.intensity = config_.live_gesture_intensity;
  inject_gesture(g);
  return g;
}

void OnlineSession::inject_gesture(const GestureEvent& g) {
  if (g.offset_frame - g.onset_frame < 2) throw InvalidArgument("gesture shorter than 2 frames");
  gestures_.push_back(g);
  record_.gestures.push_back({state_.tick, g});
}

void OnlineSession::push_external_frame(const FrameFeatures& f) {
  external_.push_back(f);
  record_.external_frames.emplace_back(state_.tick, f);
}

void OnlineSession::produce_frame(int index) {
  if (config_.input == InputMode::Silent) {
    ++frames_produced_;
    return;
  }
  FrameFeatures f{};
  if (config_.input == InputMode::External) {
    if (external_.empty()) {
      block_starved_ = true;  // success = 0: the extractor holds the last valid frame
    } else {
      f = external_.front();
      external_.pop_front();
    }
  } else {
    f = synth_.frame(gestures_, index);
  }
  ++frames_produced_;
  if (auto a = extractor_.push(f)) {
    agg_.push_back(*a);
    agg_starved_.push_back(block_starved_ ? 1 : 0);
    block_starved_ = false;
    process_pending(index);
  }
}

void OnlineSession::process_pending(int frame) {
  const int fpt = config_.time.frames_per_tick();
  const int pool = window_.pool;
  while (!pending_.empty()) {
    auto& p = pending_.front();
    const int first = (p.tick * fpt + pool - 1) / pool;
    const int last = ((p.tick + 1) * fpt + pool - 1) / pool - 1;
    if (static_cast<int>(agg_.size()) <= last + window_.l) return;

    std::vector<WindowSample> samples;
    bool starved = false;
    for (int j = first; j <= last; ++j) {
      auto s = window_at(agg_, {}, j, window_);
      if (!s) continue;
      for (int q = j - window_.k; q <= j + window_.l; ++q) starved |= agg_starved_[static_cast<std::size_t>(q)] != 0;
      samples.push_back(std::move(*s));
    }
    if (starved) {
      ++starved_;
      notes_.push_back("tick " + std::to_string(p.tick) + ": input starved, update skipped");
    } else if (samples.empty()) {
      notes_.push_back("tick " + std::to_string(p.tick) + ": window leaves the stream, update skipped");
    } else {
      std::vector<std::array<double, 3>> probs;
      for (const auto& pr : predict(*model_, make_batch(samples))) probs.push_back(pr.probabilities);
      UpdateRecord u;
      u.tick = p.tick;
      u.object = p.object;
      u.frame = frame;
      u.map_before = map_index(belief_);
      if (config_.pooling == EventPooling::GeometricMean) {
        u.probabilities = geometric_pool(probs);
        belief_.update(p.object, u.probabilities);
      } else {
        u.probabilities = geometric_pool(probs);
        for (const auto& pr : probs) belief_.update(p.object, pr);
      }
      u.map_after = map_index(belief_);
      updates_.push_back(u);
      if (config_.replan == ReplanTrigger::EveryUpdate) policy_index_ = u.map_after;
    }
    pending_.pop_front();
  }
}

void OnlineSession::append_metrics() {
  TickMetrics m;
  m.tick = log_.records.back().tick;
  m.posterior = belief_.probabilities();
  m.entropy = belief_.entropy();
  m.cumulative_return = cumulative_return_;
  m.tau = map_tau(belief_, config_.truth);
  m.map_index = map_index(belief_);
  m.policy_index = policy_index_;
  m.updates = belief_.updates();
  metrics_.push_back(m);
}

namespace {

OnlineResult finish(OnlineSession& s) {
  OnlineResult r;
  r.log = s.log();
  r.metrics = s.metrics();
  r.updates = s.updates();
  r.belief = s.belief();
  r.final_map = map_ranking(s.belief());
  r.dropped_updates = s.pending_updates();
  r.starved_updates = s.starved_updates();
  r.record = s.record();
  return r;
}

}  // namespace

OnlineResult run_online_episode(const SessionConfig& config, std::shared_ptr<const ModelParams> model,
                                const WindowConfig& window) {
  OnlineSession s(config, std::move(model), window);
  while (!s.finished()) s.step();
  return finish(s);
}

OnlineResult replay_session(const SessionRecord& record, std::shared_ptr<const ModelParams> model,
                            const WindowConfig& window) {
  OnlineSession s(record.config, std::move(model), window);
  std::size_t gi = 0, fi = 0;
  for (std::size_t t = 0; t < record.actions.size(); ++t) {
    if (s.finished()) throw IntegrityError("record has more actions than the episode has ticks");
    const int tick = static_cast<int>(t);
    while (gi < record.gestures.size() && record.gestures[gi].tick == tick) s.inject_gesture(record.gestures[gi++].gesture);
    while (fi < record.external_frames.size() && record.external_frames[fi].first == tick)
      s.push_external_frame(record.external_frames[fi++].second);
    s.step(record.actions[t]);
  }
  return finish(s);
}

void write_metrics_csv(std::ostream& os, const std::vector<TickMetrics>& metrics) {
  os << "tick,cumulative_return,entropy,tau,map_index,policy_index,updates";
  for (int i = 0; i < kRankingCount; ++i) os << ",p" << i;
  os << '\n';
  os.precision(17);
  for (const auto& m : metrics) {
    os << m.tick << ',' << m.cumulative_return << ',' << m.entropy << ',' << m.tau << ',' << m.map_index << ','
       << m.policy_index << ',' << m.updates;
    for (double p : m.posterior) os << ',' << p;
    os << '\n';
  }
}

// ---- session records ----

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace

void write_session_record(std::ostream& os, const SessionRecord& r) {
  std::vector<std::string> lines;
  lines.push_back(ojson{{"type", "header"},
                        {"format", "empathic-session"},
                        {"version", kSessionRecordVersion},
                        {"config", ojson::parse(session_config_to_json(r.config))}}
                      .dump());
  std::string actions;
  for (auto a : r.actions) actions += static_cast<char>('0' + static_cast<int>(a));
  lines.push_back(ojson{{"type", "actions"}, {"actions", actions}}.dump());
  for (const auto& g : r.gestures) {
    lines.push_back(ojson{{"type", "gesture"},
                          {"tick", g.tick},
                          {"kind", to_string(g.gesture.kind)},
                          {"onset", g.gesture.onset_frame},
                          {"offset", g.gesture.offset_frame},
                          {"intensity", g.gesture.intensity}}
                        .dump());
  }
  for (const auto& [tick, f] : r.external_frames) lines.push_back(ojson{{"type", "frame"}, {"tick", tick}, {"values", f}}.dump());
  std::uint64_t h = fnv1a("");
  for (const auto& l : lines) {
    os << l << '\n';
    h = fnv1a(l + "\n", h);
  }
  os << ojson{{"type", "end"}, {"lines", lines.size()}, {"checksum", hex(h)}}.dump() << '\n';
  if (!os) throw Error("failed to write session record");
}

SessionRecord read_session_record(std::istream& is) {
  SessionRecord r;
  std::string line;
  std::uint64_t h = fnv1a("");
  std::size_t count = 0;
  bool ended = false, have_header = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw IntegrityError("session record line " + std::to_string(count + 1) + " is not valid JSON (truncated?)");
    }
    const auto type = j.value("type", "");
    if (type == "end") {
      if (j.value("lines", std::size_t{0}) != count || j.value("checksum", "") != hex(h)) {
        throw IntegrityError("session record checksum mismatch");
      }
      ended = true;
      break;
    }
    h = fnv1a(line + "\n", h);
    ++count;
    try {
      if (type == "header") {
        if (j.value("format", "") != "empathic-session") throw IntegrityError("not a session record");
        const int v = j.value("version", 0);
        if (v != kSessionRecordVersion) {
          throw IntegrityError("session record version " + std::to_string(v) + " is not supported (expected " +
                               std::to_string(kSessionRecordVersion) + ")");
        }
        r.config = session_config_from_json(j.at("config").dump());
        have_header = true;
      } else if (type == "actions") {
        for (char c : j.at("actions").get<std::string>()) {
          if (c < '0' || c > '2') throw IntegrityError("bad action code in session record");
          r.actions.push_back(static_cast<Action>(c - '0'));
        }
      } else if (type == "gesture") {
        InjectedGesture g;
        g.tick = j.at("tick").get<int>();
        const auto kind = parse_gesture_kind(j.at("kind").get<std::string>());
        if (!kind) throw IntegrityError("unknown gesture in session record");
        g.gesture.kind = *kind;
        g.gesture.onset_frame = j.at("onset").get<int>();
        g.gesture.offset_frame = j.at("offset").get<int>();
        g.gesture.intensity = j.at("intensity").get<double>();
        r.gestures.push_back(g);
      } else if (type == "frame") {
        r.external_frames.emplace_back(j.at("tick").get<int>(), j.at("values").get<FrameFeatures>());
      } else {
        throw IntegrityError("unknown session record entry '" + type + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw IntegrityError(std::string("malformed session record entry: ") + e.what());
    }
  }
  if (!ended) throw IntegrityError("session record truncated (no end marker)");
  if (!have_header) throw IntegrityError("session record has no header");
  return r;
}

// ---- batches ----

double random_policy_baseline(const EnvConfig& env, const RewardSpec& truth, int episodes, std::uint64_t seed) {
  if (episodes < 1) throw InvalidArgument("baseline needs at least one episode");
  double total = 0.0;
  for (int i = 0; i < episodes; ++i) {
    auto state = new_episode(hash_mix(seed, kBaselineEnvStream, static_cast<std::uint64_t>(i)), truth, env);
    RandomPolicy pi(hash_mix(seed, kBaselinePolicyStream, static_cast<std::uint64_t>(i)));
    EpisodeLog log;
    while (!state.finished()) step_and_record(state, pi.act(state, false), log);
    total += log.total_reward();
  }
  return total / episodes;
}

OnlineBatchReport run_online_batch(const SessionConfig& base, std::shared_ptr<const ModelParams> model,
                                   const WindowConfig& window, int sessions, int baseline_episodes) {
  if (sessions < 1) throw InvalidArgument("need at least one session");
  OnlineBatchReport r;
  double total = 0.0;
  for (int i = 0; i < sessions; ++i) {
    auto cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(i);
    const auto res = run_online_episode(cfg, model, window);
    const int ret = res.log.total_reward();
    r.seeds.push_back(cfg.seed);
    r.final_return.push_back(ret);
    r.final_map.push_back(ranking_index(res.final_map));
    const bool top = res.final_map.reward(ObjectType::Passenger) == 6;
    r.passenger_highest.push_back(top);
    r.positive_returns += ret > 0;
    r.passenger_highest_count += top;
    total += ret;
    r.metrics.push_back(res.metrics);
  }
  r.mean_return = total / sessions;
  r.binomial_p = binomial_test(r.positive_returns, sessions, 0.5, true);
  r.baseline_episodes = baseline_episodes;
  if (baseline_episodes > 0) r.random_baseline_mean = random_policy_baseline(base.env, base.truth, baseline_episodes, base.seed);
  return r;
}

std::string online_batch_json(const OnlineBatchReport& r) {
  ojson j;
  j["sessions"] = r.seeds.size();
  j["positive_returns"] = r.positive_returns;
  j["binomial_p_one_sided"] = r.binomial_p;
  j["passenger_highest"] = r.passenger_highest_count;
  j["mean_return"] = r.mean_return;
  j["random_baseline_mean"] = r.random_baseline_mean;
  j["random_baseline_episodes"] = r.baseline_episodes;
  auto runs = ojson::array();
  for (std::size_t i = 0; i < r.seeds.size(); ++i) {
    const auto& last = r.metrics[i].back();
    runs.push_back({{"seed", r.seeds[i]},
                    {"final_return", r.final_return[i]},
                    {"final_map", all_rankings()[static_cast<std::size_t>(r.final_map[i])].values()},
                    {"passenger_highest", static_cast<bool>(r.passenger_highest[i])},
                    {"final_entropy", last.entropy},
                    {"final_tau", last.tau},
                    {"updates", last.updates}});
  }
  j["runs"] = runs;
  return j.dump(2);
}

}  // namespace empathic
