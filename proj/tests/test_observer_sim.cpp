#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "empathic/error.hpp"
#include "empathic/observer_sim.hpp"
#include "empathic/planning.hpp"

using namespace empathic;

namespace {

ObserverProfile smile_only() {
  auto p = ObserverProfile::clean();
  p.classes[2].gestures = {};
  p.classes[2].gestures[0] = 1.0;  // Smile
  p.classes[2].second_gesture_probability = 0.0;
  p.latency.sd_s = 0.0;
  p.duration.sd_s = 0.0;
  return p;
}

EpisodeLog behavior_episode(std::uint64_t seed) {
  auto s = new_episode(seed, RewardSpec::ground_truth());
  BehaviorPolicy pi(make_behavior_policy(seed + 1));
  EpisodeLog log;
  log.spec = s.spec;
  bool picked = false;
  while (!s.finished()) picked = step_and_record(s, pi.act(s, picked), log).event.has_value();
  return log;
}

}  // namespace

TEST(FrameSchema, ColumnOrder) {
  const auto& c = frame_columns();
  EXPECT_EQ(c[0], "success");
  EXPECT_EQ(c[1], "AU01_c");
  EXPECT_EQ(c[17], "AU28_c");
  EXPECT_EQ(c[18], "AU45_c");
  EXPECT_EQ(c[19], "AU01_r");
  EXPECT_EQ(c[35], "AU45_r");
  EXPECT_EQ(c[36], "pose_Tx");
  EXPECT_EQ(c[41], "pose_Rz");
  EXPECT_EQ(au_r(28), -1);
  EXPECT_EQ(au_c(12), 9);
}

TEST(ReactToEvent, DeterministicProfile) {
  const auto p = smile_only();
  Rng rng(1);
  const auto g = react_to_event(p, {10, 6, 450}, rng);
  ASSERT_EQ(g.size(), 1u);
  EXPECT_EQ(g[0].kind, GestureKind::Smile);
  EXPECT_EQ(g[0].onset_frame, 450 + 44);  // 1.47 s at 30 fps
  EXPECT_EQ(g[0].provoking_tick, 10);
}

TEST(ReactToEvent, NoReactionProbability) {
  auto p = ObserverProfile::clean();
  for (auto& c : p.classes) c.reaction_probability = 0.0;
  Rng rng(2);
  for (int i = 0; i < 100; ++i) EXPECT_TRUE(react_to_event(p, {i, kRewardValues[static_cast<std::size_t>(i % 3)], i * 45}, rng).empty());
}

TEST(ReactToEvent, ConfusionHalfFlipsValence) {
  auto p = ObserverProfile::clean();
  p.confusion_rate = 0.5;
  Rng rng(3);
  int positive = 0;
  const int trials = 10000;
  for (int i = 0; i < trials; ++i) {
    const auto g = react_to_event(p, {0, 6, 0}, rng);
    ASSERT_FALSE(g.empty());
    if (sentiment_of(g[0].kind) == Sentiment::Positive) ++positive;
  }
  EXPECT_NEAR(static_cast<double>(positive) / trials, 0.5, 0.02);
}

TEST(ReactToEvent, ConfusedSetsAreNested) {
  auto low = ObserverProfile::clean();
  auto high = low;
  low.confusion_rate = 0.2;
  high.confusion_rate = 0.4;
  Rng a(4), b(4);
  for (int i = 0; i < 2000; ++i) {
    const auto ga = react_to_event(low, {0, 6, 0}, a);
    const auto gb = react_to_event(high, {0, 6, 0}, b);
    const bool flipped_low = sentiment_of(ga[0].kind) != Sentiment::Positive;
    const bool flipped_high = sentiment_of(gb[0].kind) != Sentiment::Positive;
    if (flipped_low) EXPECT_TRUE(flipped_high);
  }
}

TEST(ReactToEvent, OnsetsInsideReactionWindow) {
  const auto p = ObserverProfile::default_profile();
  Rng rng(5);
  for (int i = 0; i < 5000; ++i) {
    const int frame = 3000;
    for (const auto& g : react_to_event(p, {0, kRewardValues[static_cast<std::size_t>(i % 3)], frame}, rng)) {
      EXPECT_GE(g.onset_frame, frame - 84);
      EXPECT_LE(g.onset_frame, frame + 108);
      EXPECT_GE(g.offset_frame - g.onset_frame, 2);
    }
  }
}

TEST(SynthesizeFrames, NoGesturesIsNeutral) {
  const auto s = synthesize_frames({}, 300, ObserverProfile::clean());
  ASSERT_EQ(s.frames.size(), 300u);
  for (std::size_t i = 0; i < s.frames.size(); ++i) {
    EXPECT_EQ(s.frames[i][0], 1.0);
    for (int j = 0; j < kAuPresenceCount; ++j) EXPECT_EQ(s.frames[i][static_cast<std::size_t>(kAuPresenceOffset + j)], 0.0);
    for (auto a : s.annotations[i]) EXPECT_EQ(a, 0);
  }
}

TEST(SynthesizeFrames, SmileAnnotationSpan) {
  const std::vector<GestureEvent> g{{GestureKind::Smile, 30, 60, 3.0, std::nullopt}};
  const auto s = synthesize_frames(g, 120, ObserverProfile::clean());
  for (int i = 0; i < 120; ++i) {
    const bool inside = i >= 30 && i < 60;
    EXPECT_EQ(s.annotations[static_cast<std::size_t>(i)][0], inside ? 1 : 0) << i;
    EXPECT_EQ(s.annotations[static_cast<std::size_t>(i)][static_cast<std::size_t>(sentiment_channel(Sentiment::Positive))], inside ? 1 : 0);
  }
  EXPECT_EQ(s.frames[45][static_cast<std::size_t>(au_c(12))], 1.0);
  EXPECT_GT(s.frames[45][static_cast<std::size_t>(au_r(6))], 2.5);
  EXPECT_EQ(s.frames[10][static_cast<std::size_t>(au_c(12))], 0.0);
}

TEST(SynthesizeFrames, OverlapsCombineByMax) {
  const std::vector<GestureEvent> g{{GestureKind::EyebrowRaise, 0, 30, 2.0, std::nullopt},
                                    {GestureKind::EyeRoll, 0, 30, 4.0, std::nullopt}};
  const auto both = synthesize_frames(g, 30, ObserverProfile::clean());
  const auto roll = synthesize_frames({g[1]}, 30, ObserverProfile::clean());
  EXPECT_EQ(both.frames[15][static_cast<std::size_t>(au_r(5))], roll.frames[15][static_cast<std::size_t>(au_r(5))]);
}

TEST(SynthesizeFrames, RandomAccessMatchesBatch) {
  const std::vector<GestureEvent> g{{GestureKind::HeadNod, 10, 50, 3.0, 0}};
  const auto p = ObserverProfile::default_profile();
  const auto batch = synthesize_frames(g, 100, p);
  const FrameSynthesizer synth(p);
  for (int i : {0, 17, 42, 99}) EXPECT_EQ(synth.frame(g, i), batch.frames[static_cast<std::size_t>(i)]);
}

TEST(GenerateSession, ZeroPickupsNoBackgroundIsNeutral) {
  EpisodeLog log;
  for (int t = 0; t < 20; ++t) log.records.push_back(StepRecord{t, {{1, 1}, Heading::N}, {}, Action::Maintain, 0, std::nullopt});
  const auto rec = generate_session(ObserverProfile::clean(), log);
  EXPECT_EQ(rec.frames.size(), 20u * 45u);
  EXPECT_TRUE(rec.gestures.empty());
}

TEST(GenerateSession, ThreePickupsThreeClusters) {
  EpisodeLog log;
  for (int t = 0; t < 60; ++t) {
    StepRecord r{t, {{1, 1}, Heading::N}, {}, Action::Maintain, 0, std::nullopt};
    if (t == 5 || t == 25 || t == 45) {
      r.reward = -1;
      r.event = ObjectType::Roadblock;
    }
    log.records.push_back(r);
  }
  auto p = ObserverProfile::clean();
  p.latency.sd_s = 0;
  const auto rec = generate_session(p, log);
  ASSERT_EQ(rec.gestures.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    const int tick = std::array{5, 25, 45}[i];
    EXPECT_EQ(rec.gestures[i].kind, GestureKind::EyebrowFrown);
    EXPECT_EQ(rec.gestures[i].onset_frame, tick * 45 + 44);
  }
}

TEST(GenerateSession, DeterministicAndAnnotationConsistent) {
  const auto log = behavior_episode(3);
  auto p = ObserverProfile::default_profile();
  p.seed = 99;
  const auto a = generate_session(p, log);
  const auto b = generate_session(p, log);
  EXPECT_EQ(a.frames, b.frames);
  EXPECT_EQ(a.gestures, b.gestures);
  for (std::size_t f = 0; f < a.annotations.size(); f += 7) {
    for (auto k : kAllGestures) {
      bool covered = false;
      for (const auto& g : a.gestures) covered |= g.kind == k && static_cast<int>(f) >= g.onset_frame && static_cast<int>(f) < g.offset_frame;
      EXPECT_EQ(a.annotations[f][static_cast<std::size_t>(k)], covered ? 1 : 0);
    }
  }
  for (const auto& g : a.gestures) {
    if (!g.provoking_tick) continue;
    const int ev = *g.provoking_tick * 45;
    if (g.onset_frame > 0) EXPECT_GE(g.onset_frame, ev - 84);
    EXPECT_LE(g.onset_frame, ev + 108);
  }
}

TEST(GenerateSession, CollectionShape) {
  int sessions = 0;
  for (int subject = 0; subject < 17; ++subject) {
    for (int ep = 0; ep < 3; ++ep) {
      auto p = ObserverProfile::default_profile();
      p.seed = static_cast<std::uint64_t>(subject * 3 + ep);
      EpisodeLog log;
      for (int t = 0; t < 200; ++t) log.records.push_back(StepRecord{t, {{0, 0}, Heading::E}, {}, Action::Maintain, 0, std::nullopt});
      const auto rec = generate_session(p, log);
      EXPECT_EQ(rec.frames.size(), 9000u);
      ++sessions;
    }
  }
  EXPECT_EQ(sessions, 51);
}

TEST(Profile, JsonRoundTripAndValidation) {
  for (const auto& p : {ObserverProfile::clean(), ObserverProfile::default_profile()}) {
    EXPECT_NO_THROW(p.validate());
    const auto back = profile_from_json(profile_to_json(p));
    EXPECT_EQ(profile_to_json(back), profile_to_json(p));
  }
  auto bad = ObserverProfile::clean();
  bad.classes[0].gestures[0] += 0.5;
  EXPECT_THROW(bad.validate(), InvalidArgument);
  EXPECT_THROW(ObserverProfile::named("grumpy"), InvalidArgument);
}

TEST(AnnotationCsv, RoundTrip) {
  const std::vector<GestureEvent> g{{GestureKind::Pout, 3, 9, 3.0, std::nullopt}};
  const auto s = synthesize_frames(g, 20, ObserverProfile::clean());
  std::stringstream ss;
  write_annotation_csv(ss, s.annotations);
  EXPECT_EQ(read_annotation_csv(ss), s.annotations);
}
