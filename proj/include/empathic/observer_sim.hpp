#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "empathic/gridworld.hpp"
#include "empathic/rng.hpp"

namespace empathic {

// ---- per-frame feature schema (OpenFace 2.0 column names) ----

inline constexpr int kFrameWidth = 42;
inline constexpr int kAuPresenceCount = 18;
inline constexpr int kAuIntensityCount = 17;
inline constexpr int kPoseCount = 6;
inline constexpr int kAuPresenceOffset = 1;
inline constexpr int kAuIntensityOffset = kAuPresenceOffset + kAuPresenceCount;  // 19
inline constexpr int kPoseOffset = kAuIntensityOffset + kAuIntensityCount;       // 36

const std::array<std::string_view, kFrameWidth>& frame_columns();

// Column index of an action unit's presence / intensity channel, e.g. au_c(12).
// Returns -1 when the unit has no such channel (AU28 has no intensity).
int au_c(int unit);
int au_r(int unit);

enum class PoseDim : std::uint8_t { Tx = 0, Ty, Tz, Rx, Ry, Rz };
inline int pose_col(PoseDim d) { return kPoseOffset + static_cast<int>(d); }

using FrameFeatures = std::array<double, kFrameWidth>;

// ---- gestures and annotations ----

enum class GestureKind : std::uint8_t { Smile = 0, Pout, EyebrowRaise, EyebrowFrown, HeadNod, HeadShake, EyeRoll };
inline constexpr int kGestureKinds = 7;
inline constexpr int kAnnotationChannels = 10;
inline constexpr std::array<GestureKind, kGestureKinds> kAllGestures{
    GestureKind::Smile,   GestureKind::Pout,      GestureKind::EyebrowRaise, GestureKind::EyebrowFrown,
    GestureKind::HeadNod, GestureKind::HeadShake, GestureKind::EyeRoll};

enum class Sentiment : std::uint8_t { Positive = 0, Negative = 1, Neutral = 2 };
Sentiment sentiment_of(GestureKind k);
// Channels 0..6 are gestures, 7..9 are Positive, Negative, Neutral.
inline int sentiment_channel(Sentiment s) { return kGestureKinds + static_cast<int>(s); }

std::string_view to_string(GestureKind k);
std::optional<GestureKind> parse_gesture_kind(std::string_view s);

using Annotation = std::array<std::uint8_t, kAnnotationChannels>;

struct GestureEvent {
  GestureKind kind = GestureKind::Smile;
  int onset_frame = 0;
  int offset_frame = 0;  // exclusive
  double intensity = 3.0;
  std::optional<int> provoking_tick;
  friend bool operator==(const GestureEvent&, const GestureEvent&) = default;
};

// ---- observer profile ----

using GestureWeights = std::array<double, kGestureKinds>;

struct ClassProfile {
  GestureWeights gestures{};  // valence-faithful distribution
  GestureWeights mirror{};    // wrong-valence distribution, used at the confusion rate
  double reaction_probability = 1.0;
  double second_gesture_probability = 0.0;
  double intensity_mean = 3.0;
  double intensity_sd = 0.0;
};

struct LatencyModel {
  double mean_s = 1.47;
  double sd_s = 0.8;
  double min_s = -2.8;
  double max_s = 3.6;
};

struct DurationModel {
  double mean_s = 1.0;
  double sd_s = 0.25;
  double min_s = 0.4;
  double max_s = 2.5;
};

struct ObserverProfile {
  std::string name = "custom";
  // indexed by reward class: 0 = -5, 1 = -1, 2 = +6
  std::array<ClassProfile, 3> classes{};
  LatencyModel latency;
  DurationModel duration;
  double background_rate_per_min = 2.0;
  double background_intensity = 2.0;
  double confusion_rate = 0.0;
  // baseline sensor noise
  double au_noise = 0.05;
  double pose_noise = 0.004;
  std::uint64_t seed = 0;

  // Deterministic valence-faithful gestures, no background.
  static ObserverProfile clean();
  static ObserverProfile default_profile();
  // Looks up "clean" or "default"; throws InvalidArgument otherwise.
  static ObserverProfile named(std::string_view name);

  // Throws InvalidArgument on malformed distributions or bounds.
  void validate() const;
};

// JSON round-trip of every profile field.
std::string profile_to_json(const ObserverProfile& p);
ObserverProfile profile_from_json(const std::string& text);

// ---- time base ----

struct TimeBase {
  double fps = 30.0;
  double step_period_s = 1.5;

  int frames_per_tick() const;
  // First frame of a tick; a pickup recorded at tick t is stamped at frame_of_tick(t).
  int frame_of_tick(int tick) const { return tick * frames_per_tick(); }
  int tick_of_frame(int frame) const { return frame / frames_per_tick(); }
};

// ---- generation ----

struct RewardEvent {
  int tick = 0;
  int reward = 0;
  int frame = 0;
};

// Draws the observer's reaction to one reward event. Consumes a fixed number
// of draws from `rng` whatever the outcome, so confusion-rate sweeps over one
// seed produce nested sets of confused reactions.
std::vector<GestureEvent> react_to_event(const ObserverProfile& profile, const RewardEvent& event, Rng& rng,
                                         double fps = 30.0);

// Gestures provoked by the session's own reward events plus background ones.
// Each event draws from its own stream keyed by (seed, tick), so the result
// for a prefix of the episode does not depend on later events.
std::vector<GestureEvent> event_gestures(const ObserverProfile& profile, const RewardEvent& event, double fps);
std::vector<GestureEvent> background_gestures(const ObserverProfile& profile, int total_frames, double fps);

// Frame-level synthesis is a pure function of (gestures, frame index, seed);
// any range can be produced independently.
class FrameSynthesizer {
 public:
  FrameSynthesizer(const ObserverProfile& profile, double fps = 30.0);
  FrameFeatures frame(const std::vector<GestureEvent>& gestures, int index) const;
  Annotation annotation(const std::vector<GestureEvent>& gestures, int index) const;

 private:
  double fps_;
  double au_noise_;
  double pose_noise_;
  std::uint64_t seed_;
  std::array<double, 6> drift_phase_{};
  std::array<double, 6> drift_amp_{};
  std::array<double, 6> pose_offset_{};
};

struct FrameStream {
  std::vector<FrameFeatures> frames;
  std::vector<Annotation> annotations;
};

FrameStream synthesize_frames(const std::vector<GestureEvent>& gestures, int episode_frames,
                              const ObserverProfile& profile, double fps = 30.0);

struct SessionRecording {
  EpisodeLog log;
  TimeBase time;
  std::vector<GestureEvent> gestures;
  std::vector<FrameFeatures> frames;
  std::vector<Annotation> annotations;  // may be empty for ingested recordings
  // Reward events in log order with their frame stamps.
  std::vector<RewardEvent> reward_events() const;
};

std::vector<RewardEvent> reward_events(const EpisodeLog& log, const TimeBase& time);

SessionRecording generate_session(const ObserverProfile& profile, const EpisodeLog& log, const TimeBase& time = {});

// ---- persistence ----

void write_feature_csv(std::ostream& os, const std::vector<FrameFeatures>& frames);
void write_annotation_csv(std::ostream& os, const std::vector<Annotation>& annotations);
std::vector<Annotation> read_annotation_csv(std::istream& is);

}  // namespace empathic
