#include "empathic/observer_sim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "empathic/error.hpp"

namespace empathic {

using json = nlohmann::json;

namespace {

constexpr std::array<int, kAuPresenceCount> kPresenceUnits{1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 25, 26, 28, 45};
constexpr std::array<int, kAuIntensityCount> kIntensityUnits{1, 2, 4, 5, 6, 7, 9, 10, 12, 14, 15, 17, 20, 23, 25, 26, 45};

std::array<std::string, kFrameWidth> make_column_storage() {
  std::array<std::string, kFrameWidth> cols;
  cols[0] = "success";
  auto unit_name = [](int u, const char* suffix) {
    std::string s = "AU";
    if (u < 10) s += '0';
    return s + std::to_string(u) + suffix;
  };
  for (int i = 0; i < kAuPresenceCount; ++i) cols[static_cast<std::size_t>(kAuPresenceOffset + i)] = unit_name(kPresenceUnits[static_cast<std::size_t>(i)], "_c");
  for (int i = 0; i < kAuIntensityCount; ++i) cols[static_cast<std::size_t>(kAuIntensityOffset + i)] = unit_name(kIntensityUnits[static_cast<std::size_t>(i)], "_r");
  const char* pose[] = {"pose_Tx", "pose_Ty", "pose_Tz", "pose_Rx", "pose_Ry", "pose_Rz"};
  for (int i = 0; i < kPoseCount; ++i) cols[static_cast<std::size_t>(kPoseOffset + i)] = pose[i];
  return cols;
}

constexpr std::array<std::string_view, kGestureKinds> kGestureNames{"Smile",   "Pout",      "EyebrowRaise", "EyebrowFrown",
                                                                    "HeadNod", "HeadShake", "EyeRoll"};

std::size_t gi(GestureKind k) { return static_cast<std::size_t>(k); }

GestureWeights weights(std::initializer_list<std::pair<GestureKind, double>> entries) {
  GestureWeights w{};
  for (const auto& [k, v] : entries) w[gi(k)] = v;
  return w;
}

}  // namespace

const std::array<std::string_view, kFrameWidth>& frame_columns() {
  static const auto storage = make_column_storage();
  static const auto views = [] {
    std::array<std::string_view, kFrameWidth> v;
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = storage[i];
    return v;
  }();
  return views;
}

int au_c(int unit) {
  for (std::size_t i = 0; i < kPresenceUnits.size(); ++i)
    if (kPresenceUnits[i] == unit) return kAuPresenceOffset + static_cast<int>(i);
  return -1;
}

int au_r(int unit) {
  for (std::size_t i = 0; i < kIntensityUnits.size(); ++i)
    if (kIntensityUnits[i] == unit) return kAuIntensityOffset + static_cast<int>(i);
  return -1;
}

Sentiment sentiment_of(GestureKind k) {
  switch (k) {
    case GestureKind::Smile:
    case GestureKind::HeadNod: return Sentiment::Positive;
    case GestureKind::EyebrowRaise: return Sentiment::Neutral;
    default: return Sentiment::Negative;
  }
}

std::string_view to_string(GestureKind k) { return kGestureNames[gi(k)]; }

std::optional<GestureKind> parse_gesture_kind(std::string_view s) {
  for (std::size_t i = 0; i < kGestureNames.size(); ++i)
    if (kGestureNames[i] == s) return static_cast<GestureKind>(i);
  return std::nullopt;
}

// ---- profiles ----

ObserverProfile ObserverProfile::clean() {
  ObserverProfile p;
  p.name = "clean";
  const auto pos = weights({{GestureKind::Smile, 0.5}, {GestureKind::HeadNod, 0.5}});
  const auto neg = weights({{GestureKind::Pout, 0.5}, {GestureKind::HeadShake, 0.5}});
  p.classes[0] = {neg, pos, 1.0, 1.0, 3.5, 0.0};
  p.classes[1] = {weights({{GestureKind::EyebrowFrown, 1.0}}), weights({{GestureKind::Smile, 1.0}}), 1.0, 0.0, 2.0, 0.0};
  p.classes[2] = {pos, neg, 1.0, 1.0, 3.5, 0.0};
  p.latency = {1.47, 0.3, -2.8, 3.6};
  p.duration = {1.0, 0.15, 0.4, 2.5};
  p.background_rate_per_min = 0.0;
  p.confusion_rate = 0.0;
  return p;
}

ObserverProfile ObserverProfile::default_profile() {
  ObserverProfile p;
  p.name = "default";
  const auto pos = weights({{GestureKind::Smile, 0.35}, {GestureKind::HeadNod, 0.35}, {GestureKind::EyebrowRaise, 0.2},
                            {GestureKind::Pout, 0.1}});
  const auto neg_mild = weights({{GestureKind::EyebrowFrown, 0.3}, {GestureKind::HeadShake, 0.2}, {GestureKind::Pout, 0.15},
                                 {GestureKind::Smile, 0.2}, {GestureKind::EyeRoll, 0.15}});
  const auto neg_strong = weights({{GestureKind::EyebrowFrown, 0.25}, {GestureKind::HeadShake, 0.25}, {GestureKind::Pout, 0.2},
                                   {GestureKind::Smile, 0.15}, {GestureKind::EyeRoll, 0.15}});
  const auto mild_mirror = weights({{GestureKind::Smile, 0.5}, {GestureKind::HeadNod, 0.25}, {GestureKind::EyebrowRaise, 0.25}});
  p.classes[0] = {neg_strong, pos, 0.8, 0.6, 3.5, 0.6};
  p.classes[1] = {neg_mild, mild_mirror, 0.6, 0.2, 2.0, 0.5};
  p.classes[2] = {pos, neg_strong, 0.8, 0.4, 3.0, 0.6};
  p.latency = {1.47, 0.8, -2.8, 3.6};
  p.duration = {1.0, 0.3, 0.4, 2.5};
  p.background_rate_per_min = 2.0;
  p.confusion_rate = 0.0;
  return p;
}

ObserverProfile ObserverProfile::named(std::string_view name) {
  if (name == "clean") return clean();
  if (name == "default") return default_profile();
  throw InvalidArgument("unknown observer profile '" + std::string(name) + "' (expected clean or default)");
}

void ObserverProfile::validate() const {
  auto check_dist = [](const GestureWeights& w, const std::string& what) {
    double total = 0.0;
    for (double x : w) {
      if (!(x >= 0.0)) throw InvalidArgument(what + " has a negative weight");
      total += x;
    }
    if (std::abs(total - 1.0) > 1e-9) throw InvalidArgument(what + " does not sum to 1");
  };
  auto check_prob = [](double p, const std::string& what) {
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument(what + " must lie in [0,1]");
  };
  for (std::size_t c = 0; c < 3; ++c) {
    const auto label = "class " + std::to_string(kRewardValues[c]);
    check_dist(classes[c].gestures, label + " gesture distribution");
    check_dist(classes[c].mirror, label + " mirror distribution");
    check_prob(classes[c].reaction_probability, label + " reaction probability");
    check_prob(classes[c].second_gesture_probability, label + " second gesture probability");
    if (classes[c].intensity_sd < 0) throw InvalidArgument(label + " intensity sd is negative");
  }
  check_prob(confusion_rate, "confusion rate");
  if (latency.min_s > latency.max_s || latency.mean_s < latency.min_s || latency.mean_s > latency.max_s)
    throw InvalidArgument("latency mean must lie within its truncation bounds");
  if (latency.sd_s < 0 || duration.sd_s < 0) throw InvalidArgument("negative standard deviation");
  if (duration.min_s <= 0 || duration.min_s > duration.max_s) throw InvalidArgument("bad duration bounds");
  if (background_rate_per_min < 0) throw InvalidArgument("background rate is negative");
}

namespace {

json class_to_json(const ClassProfile& c) {
  auto dist = [](const GestureWeights& w) {
    json j = json::object();
    for (std::size_t i = 0; i < w.size(); ++i)
      if (w[i] != 0.0) j[std::string(kGestureNames[i])] = w[i];
    return j;
  };
  return {{"gestures", dist(c.gestures)},
          {"mirror", dist(c.mirror)},
          {"reaction_probability", c.reaction_probability},
          {"second_gesture_probability", c.second_gesture_probability},
          {"intensity_mean", c.intensity_mean},
          {"intensity_sd", c.intensity_sd}};
}

ClassProfile class_from_json(const json& j) {
  auto dist = [](const json& d) {
    GestureWeights w{};
    for (const auto& [k, v] : d.items()) {
      const auto kind = parse_gesture_kind(k);
      if (!kind) throw SchemaError("unknown gesture '" + k + "'");
      w[gi(*kind)] = v.get<double>();
    }
    return w;
  };
  ClassProfile c;
  c.gestures = dist(j.at("gestures"));
  c.mirror = dist(j.at("mirror"));
  c.reaction_probability = j.at("reaction_probability").get<double>();
  c.second_gesture_probability = j.at("second_gesture_probability").get<double>();
  c.intensity_mean = j.at("intensity_mean").get<double>();
  c.intensity_sd = j.at("intensity_sd").get<double>();
  return c;
}

}  // namespace

std::string profile_to_json(const ObserverProfile& p) {
  json j;
  j["name"] = p.name;
  json classes = json::object();
  for (std::size_t c = 0; c < 3; ++c) classes[std::to_string(kRewardValues[c])] = class_to_json(p.classes[c]);
  j["classes"] = classes;
  j["latency"] = {{"mean_s", p.latency.mean_s}, {"sd_s", p.latency.sd_s}, {"min_s", p.latency.min_s}, {"max_s", p.latency.max_s}};
  j["duration"] = {{"mean_s", p.duration.mean_s}, {"sd_s", p.duration.sd_s}, {"min_s", p.duration.min_s}, {"max_s", p.duration.max_s}};
  j["background_rate_per_min"] = p.background_rate_per_min;
  j["background_intensity"] = p.background_intensity;
  j["confusion_rate"] = p.confusion_rate;
  j["au_noise"] = p.au_noise;
  j["pose_noise"] = p.pose_noise;
  j["seed"] = p.seed;
  return j.dump(2);
}

ObserverProfile profile_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("observer profile: ") + e.what());
  }
  try {
    ObserverProfile p;
    p.name = j.value("name", "custom");
    for (std::size_t c = 0; c < 3; ++c) p.classes[c] = class_from_json(j.at("classes").at(std::to_string(kRewardValues[c])));
    const auto& l = j.at("latency");
    p.latency = {l.at("mean_s").get<double>(), l.at("sd_s").get<double>(), l.at("min_s").get<double>(), l.at("max_s").get<double>()};
    const auto& d = j.at("duration");
    p.duration = {d.at("mean_s").get<double>(), d.at("sd_s").get<double>(), d.at("min_s").get<double>(), d.at("max_s").get<double>()};
    p.background_rate_per_min = j.at("background_rate_per_min").get<double>();
    p.background_intensity = j.at("background_intensity").get<double>();
    p.confusion_rate = j.at("confusion_rate").get<double>();
    p.au_noise = j.at("au_noise").get<double>();
    p.pose_noise = j.at("pose_noise").get<double>();
    p.seed = j.at("seed").get<std::uint64_t>();
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("observer profile: ") + e.what());
  }
}

int TimeBase::frames_per_tick() const {
  const double f = fps * step_period_s;
  if (!(step_period_s > 0) || !(fps > 0)) throw InvalidArgument("fps and step period must be positive");
  const int n = static_cast<int>(std::lround(f));
  if (n < 1 || std::abs(f - n) > 1e-9) throw InvalidArgument("step period must span a whole number of frames");
  return n;
}

// ---- reactions ----

namespace {

double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi) {
  if (sd <= 0.0) return std::clamp(mean, lo, hi);
  for (int i = 0; i < 1000; ++i) {
    const double x = rng.normal(mean, sd);
    if (x >= lo && x <= hi) return x;
  }
  return std::clamp(mean, lo, hi);
}

// Index by inverse CDF from a single uniform; -1 if all weights are zero.
int pick(const GestureWeights& w, double u, int exclude = -1) {
  double total = 0.0;
  for (std::size_t i = 0; i < w.size(); ++i)
    if (static_cast<int>(i) != exclude) total += w[i];
  if (total <= 0.0) return -1;
  double x = u * total;
  int last = -1;
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (static_cast<int>(i) == exclude || w[i] <= 0.0) continue;
    last = static_cast<int>(i);
    if (x < w[i]) return last;
    x -= w[i];
  }
  return last;
}

}  // namespace

std::vector<GestureEvent> react_to_event(const ObserverProfile& profile, const RewardEvent& event, Rng& rng,
                                         double fps) {
  const int cls = reward_class_index(event.reward);
  const auto& cp = profile.classes[static_cast<std::size_t>(cls)];

  const double u_react = rng.uniform();
  const double u_confuse = rng.uniform();
  const double u_count = rng.uniform();
  const double u_clean1 = rng.uniform();
  const double u_clean2 = rng.uniform();
  const double u_mirror1 = rng.uniform();
  const double u_mirror2 = rng.uniform();
  const std::array<std::uint64_t, 2> slot_seeds{rng.next_u64(), rng.next_u64()};

  if (u_react >= cp.reaction_probability) return {};
  const bool confused = u_confuse < profile.confusion_rate;
  const auto& dist = confused ? cp.mirror : cp.gestures;
  const double u1 = confused ? u_mirror1 : u_clean1;
  const double u2 = confused ? u_mirror2 : u_clean2;

  std::vector<int> kinds;
  const int first = pick(dist, u1);
  if (first < 0) return {};
  kinds.push_back(first);
  if (u_count < cp.second_gesture_probability) {
    const int second = pick(dist, u2, first);
    if (second >= 0) kinds.push_back(second);
  }

  std::vector<GestureEvent> out;
  for (std::size_t s = 0; s < kinds.size(); ++s) {
    Rng slot(slot_seeds[s]);
    const double latency = truncated_normal(slot, profile.latency.mean_s, profile.latency.sd_s, profile.latency.min_s,
                                            profile.latency.max_s);
    const double duration = truncated_normal(slot, profile.duration.mean_s, profile.duration.sd_s,
                                             profile.duration.min_s, profile.duration.max_s);
    const double intensity = std::clamp(cp.intensity_sd > 0 ? slot.normal(cp.intensity_mean, cp.intensity_sd) : cp.intensity_mean, 0.5, 5.0);
    GestureEvent g;
    g.kind = static_cast<GestureKind>(kinds[s]);
    g.onset_frame = event.frame + static_cast<int>(std::lround(latency * fps));
    g.offset_frame = g.onset_frame + std::max(2, static_cast<int>(std::lround(duration * fps)));
    g.intensity = intensity;
    g.provoking_tick = event.tick;
    out.push_back(g);
  }
  return out;
}

std::vector<GestureEvent> event_gestures(const ObserverProfile& profile, const RewardEvent& event, double fps) {
  Rng rng(hash_mix(profile.seed, 0xE7, static_cast<std::uint64_t>(event.tick)));
  return react_to_event(profile, event, rng, fps);
}

std::vector<GestureEvent> background_gestures(const ObserverProfile& profile, int total_frames, double fps) {
  std::vector<GestureEvent> out;
  if (profile.background_rate_per_min <= 0.0) return out;
  Rng rng(hash_mix(profile.seed, 0xB6));
  const double rate_per_frame = profile.background_rate_per_min / 60.0 / fps;
  double t = 0.0;
  for (;;) {
    t += rng.exponential(rate_per_frame);
    if (t >= total_frames) break;
    GestureEvent g;
    g.kind = kAllGestures[static_cast<std::size_t>(rng.uniform_int(kGestureKinds))];
    const double duration = truncated_normal(rng, profile.duration.mean_s, profile.duration.sd_s, profile.duration.min_s,
                                             profile.duration.max_s);
    g.onset_frame = static_cast<int>(t);
    g.offset_frame = g.onset_frame + std::max(2, static_cast<int>(std::lround(duration * fps)));
    g.intensity = profile.background_intensity;
    out.push_back(g);
  }
  return out;
}

// ---- frame synthesis ----

namespace {

struct Overlay {
  std::array<int, 3> units;
  int count;
};

Overlay overlay_units(GestureKind k) {
  switch (k) {
    case GestureKind::Smile: return {{6, 12, 0}, 2};
    case GestureKind::Pout: return {{15, 17, 0}, 2};
    case GestureKind::EyebrowRaise: return {{1, 2, 5}, 3};
    case GestureKind::EyebrowFrown: return {{4, 7, 0}, 2};
    case GestureKind::EyeRoll: return {{5, 0, 0}, 1};
    default: return {{0, 0, 0}, 0};
  }
}

constexpr double kPresenceThreshold = 1.0;
constexpr double kDriftHz = 0.02;
constexpr double kHeadGestureHz = 2.0;
constexpr double kHeadGestureRadPerUnit = 0.04;

}  // namespace

FrameSynthesizer::FrameSynthesizer(const ObserverProfile& profile, double fps)
    : fps_(fps), au_noise_(profile.au_noise), pose_noise_(profile.pose_noise), seed_(hash_mix(profile.seed, 0xF5)) {
  Rng rng(seed_);
  for (std::size_t d = 0; d < 6; ++d) {
    const bool translation = d < 3;
    pose_offset_[d] = translation ? rng.normal(0.0, 20.0) : rng.normal(0.0, 0.05);
    drift_amp_[d] = translation ? 5.0 : 0.02;
    drift_phase_[d] = rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  pose_offset_[2] += 500.0;
}

FrameFeatures FrameSynthesizer::frame(const std::vector<GestureEvent>& gestures, int index) const {
  FrameFeatures f{};
  f[0] = 1.0;
  const auto idx = static_cast<std::uint64_t>(index);
  for (int j = 0; j < kAuIntensityCount; ++j) {
    f[static_cast<std::size_t>(kAuIntensityOffset + j)] =
        std::max(0.0, au_noise_ * hash_normal(seed_, idx, static_cast<std::uint64_t>(j)));
  }
  const double t = index / fps_;
  for (std::size_t d = 0; d < 6; ++d) {
    const double noise_scale = d < 3 ? pose_noise_ * 250.0 : pose_noise_;
    f[static_cast<std::size_t>(kPoseOffset) + d] =
        pose_offset_[d] + drift_amp_[d] * std::sin(2.0 * std::numbers::pi * kDriftHz * t + drift_phase_[d]) +
        noise_scale * hash_normal(seed_, idx, 100 + d);
  }

  auto raise = [&](int unit, double a) {
    if (const int r = au_r(unit); r >= 0) f[static_cast<std::size_t>(r)] = std::max(f[static_cast<std::size_t>(r)], a);
    if (const int c = au_c(unit); c >= 0 && a >= kPresenceThreshold) f[static_cast<std::size_t>(c)] = 1.0;
  };

  for (const auto& g : gestures) {
    if (index < g.onset_frame || index >= g.offset_frame) continue;
    const double len = g.offset_frame - g.onset_frame;
    const double phase = (index - g.onset_frame + 0.5) / len;
    const double env = std::sin(std::numbers::pi * phase);
    const double a = g.intensity * env;
    const auto ov = overlay_units(g.kind);
    for (int u = 0; u < ov.count; ++u) raise(ov.units[static_cast<std::size_t>(u)], a);
    if (g.kind == GestureKind::EyeRoll && phase > 1.0 / 3.0 && phase < 2.0 / 3.0) raise(45, g.intensity);
    if (g.kind == GestureKind::HeadNod || g.kind == GestureKind::HeadShake) {
      const double osc = std::sin(2.0 * std::numbers::pi * kHeadGestureHz * (index - g.onset_frame) / fps_);
      const auto dim = g.kind == GestureKind::HeadNod ? PoseDim::Rx : PoseDim::Ry;
      f[static_cast<std::size_t>(pose_col(dim))] += kHeadGestureRadPerUnit * g.intensity * env * osc;
    }
  }
  for (int j = 0; j < kAuIntensityCount; ++j) {
    auto& v = f[static_cast<std::size_t>(kAuIntensityOffset + j)];
    v = std::min(v, 5.0);
  }
  return f;
}

Annotation FrameSynthesizer::annotation(const std::vector<GestureEvent>& gestures, int index) const {
  Annotation a{};
  for (const auto& g : gestures) {
    if (index < g.onset_frame || index >= g.offset_frame) continue;
    a[gi(g.kind)] = 1;
    a[static_cast<std::size_t>(sentiment_channel(sentiment_of(g.kind)))] = 1;
  }
  return a;
}

FrameStream synthesize_frames(const std::vector<GestureEvent>& gestures, int episode_frames,
                              const ObserverProfile& profile, double fps) {
  for (const auto& g : gestures) {
    if (g.offset_frame - g.onset_frame < 2) throw InvalidArgument("gesture shorter than 2 frames");
  }
  const FrameSynthesizer synth(profile, fps);
  FrameStream out;
  out.frames.reserve(static_cast<std::size_t>(episode_frames));
  out.annotations.reserve(static_cast<std::size_t>(episode_frames));
  for (int i = 0; i < episode_frames; ++i) {
    out.frames.push_back(synth.frame(gestures, i));
    out.annotations.push_back(synth.annotation(gestures, i));
  }
  return out;
}

std::vector<RewardEvent> reward_events(const EpisodeLog& log, const TimeBase& time) {
  std::vector<RewardEvent> out;
  for (const auto& r : log.records) {
    if (r.event) out.push_back({r.tick, r.reward, time.frame_of_tick(r.tick)});
  }
  return out;
}

std::vector<RewardEvent> SessionRecording::reward_events() const { return empathic::reward_events(log, time); }

SessionRecording generate_session(const ObserverProfile& profile, const EpisodeLog& log, const TimeBase& time) {
  profile.validate();
  SessionRecording rec;
  rec.log = log;
  rec.time = time;
  const int total = static_cast<int>(log.records.size()) * time.frames_per_tick();
  std::vector<GestureEvent> gestures;
  for (const auto& ev : empathic::reward_events(log, time)) {
    for (auto& g : event_gestures(profile, ev, time.fps)) gestures.push_back(g);
  }
  for (auto& g : background_gestures(profile, total, time.fps)) gestures.push_back(g);
  for (auto& g : gestures) {
    g.onset_frame = std::max(g.onset_frame, 0);
    g.offset_frame = std::min(g.offset_frame, total);
  }
  std::erase_if(gestures, [](const GestureEvent& g) { return g.offset_frame - g.onset_frame < 2; });
  std::stable_sort(gestures.begin(), gestures.end(),
                   [](const GestureEvent& a, const GestureEvent& b) { return a.onset_frame < b.onset_frame; });
  auto stream = synthesize_frames(gestures, total, profile, time.fps);
  rec.gestures = std::move(gestures);
  rec.frames = std::move(stream.frames);
  rec.annotations = std::move(stream.annotations);
  return rec;
}

// ---- CSV output ----

void write_feature_csv(std::ostream& os, const std::vector<FrameFeatures>& frames) {
  const auto& cols = frame_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
  os << '\n';
  os.precision(17);
  for (const auto& f : frames) {
    for (std::size_t i = 0; i < f.size(); ++i) os << (i ? "," : "") << f[i];
    os << '\n';
  }
}

void write_annotation_csv(std::ostream& os, const std::vector<Annotation>& annotations) {
  os << "frame";
  for (auto k : kAllGestures) os << ',' << to_string(k);
  os << ",Positive,Negative,Neutral\n";
  for (std::size_t i = 0; i < annotations.size(); ++i) {
    os << i;
    for (auto v : annotations[i]) os << ',' << static_cast<int>(v);
    os << '\n';
  }
}

std::vector<Annotation> read_annotation_csv(std::istream& is) {
  std::vector<Annotation> out;
  std::string line;
  if (!std::getline(is, line)) throw SchemaError("annotation CSV is empty");
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::getline(ss, cell, ',');
    Annotation a{};
    for (std::size_t c = 0; c < a.size(); ++c) {
      if (!std::getline(ss, cell, ',')) throw ParseError("annotation row " + std::to_string(row) + " is short");
      if (cell != "0" && cell != "1") throw ParseError("annotation row " + std::to_string(row) + " has a non-binary value");
      a[c] = cell == "1" ? 1 : 0;
    }
    out.push_back(a);
  }
  return out;
}

}  // namespace empathic
