#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "empathic/error.hpp"
#include "empathic/experiments.hpp"

using namespace empathic;

#ifndef EMPATHIC_DATA_DIR
#error "EMPATHIC_DATA_DIR must point at the repository's data directory"
#endif

namespace {

DatasetConfig tiny_data(std::uint64_t seed) {
  DatasetConfig d;
  d.subjects = 5;
  d.episodes_per_subject = 3;
  d.env.episode_length = 80;
  d.seed = seed;
  return d;
}

TrainConfig tiny_train() {
  TrainConfig t;
  t.model = ModelConfig::for_window(t.window);
  t.model.fau_enc = 8;
  t.model.head_enc = 8;
  t.model.trunk = {16, 8};
  t.max_epochs = 4;
  t.patience = 2;
  t.batch_size = 32;
  return t;
}

}  // namespace

TEST(Dataset, EpisodesArePureFunctions) {
  const auto d = tiny_data(3);
  const WindowConfig w;
  const auto a = synthesize_episode(d, 2, 1, w);
  const auto b = synthesize_episode(d, 2, 1, w);
  EXPECT_EQ(a.log, b.log);
  ASSERT_EQ(a.samples.size(), b.samples.size());
  for (std::size_t i = 0; i < a.samples.size(); ++i) EXPECT_EQ(a.samples[i].fau, b.samples[i].fau);
  for (const auto& s : a.samples) {
    EXPECT_EQ(s.subject, 2);
    EXPECT_EQ(s.episode, 1);
  }
  EXPECT_NE(synthesize_episode(d, 2, 2, w).log, a.log);
}

TEST(Dataset, SpecsCoverRankingsWhenRandomized) {
  auto d = tiny_data(4);
  d.subjects = 8;
  std::set<int> seen;
  for (int s = 0; s < d.subjects; ++s)
    for (int e = 0; e < 3; ++e) seen.insert(ranking_index(synthesize_recording(d, s, e).log.spec));
  EXPECT_GE(seen.size(), 4u);
  d.randomize_specs = false;
  EXPECT_EQ(synthesize_recording(d, 1, 1).log.spec, RewardSpec::ground_truth());
}

TEST(Dataset, LabelsFollowTheEpisodeSpec) {
  const auto e = synthesize_episode(tiny_data(5), 0, 0, WindowConfig{});
  std::map<int, std::optional<ObjectType>> events;
  for (const auto& r : e.log.records) events[r.tick] = r.event;
  for (const auto& s : e.samples) {
    const auto ev = events[s.tick];
    const int expected = ev ? reward_class_index(e.spec.reward(*ev)) : -1;
    if (ev) EXPECT_EQ(s.label, expected);
  }
}

TEST(Trajectories, ShippedFilesMatchBuiltins) {
  const auto loaded = load_trajectories(EMPATHIC_DATA_DIR "/trajectories");
  const auto builtin = builtin_trajectories();
  ASSERT_EQ(loaded.size(), builtin.size());
  for (std::size_t i = 0; i < builtin.size(); ++i) {
    EXPECT_EQ(loaded[i].name, builtin[i].name);
    EXPECT_EQ(loaded[i].return_value, builtin[i].return_value);
    EXPECT_EQ(trajectory_to_json(loaded[i]), trajectory_to_json(builtin[i]));
  }
}

TEST(Trajectories, ReturnGroups) {
  int pos = 0, zero = 0, neg = 0;
  for (const auto& t : builtin_trajectories()) (t.return_value > 0 ? pos : t.return_value < 0 ? neg : zero)++;
  EXPECT_EQ(pos, 3);
  EXPECT_EQ(zero, 2);
  EXPECT_EQ(neg, 3);
}

TEST(Trajectories, JsonValidation) {
  EXPECT_THROW(trajectory_from_json("{"), ParseError);
  EXPECT_THROW(trajectory_from_json(R"({"name":"x","duration_s":5,"return":0})"), SchemaError);
  EXPECT_THROW(trajectory_from_json(R"({"name":"x","duration_s":5,"return":0,"events":[{"time_s":1,"reaction":3}]})"),
               InvalidArgument);
  EXPECT_THROW(trajectory_from_json(R"({"name":"x","duration_s":5,"return":0,"events":[{"time_s":9,"reaction":6}]})"),
               InvalidArgument);
  EXPECT_THROW(load_trajectories("/nonexistent/dir"), Error);
}

TEST(Trajectories, SynthesisPlacesReactionsAfterEvents) {
  const Trajectory t{"one", 10.0, 1, {{4.0, 6, "go"}}};
  auto profile = ObserverProfile::clean();
  profile.seed = 9;
  const auto rec = synthesize_trajectory(t, profile);
  EXPECT_EQ(rec.frames.size(), 315u);  // padded to whole ticks
  EXPECT_EQ(rec.log.records.size(), 7u);  // ceil(10 s / 1.5 s)
  bool provoked = false;
  for (const auto& g : rec.gestures)
    if (g.provoking_tick == 0) {
      provoked = true;
      // event at frame 120; latency bounded to [-2.8 s, 3.6 s]
      EXPECT_GE(g.onset_frame, 120 - 84);
      EXPECT_LE(g.onset_frame, 120 + 108);
    }
  EXPECT_TRUE(provoked);
}

TEST(Experiments, HoldoutRankingSmoke) {
  RankingExperimentConfig c;
  c.data = tiny_data(6);
  c.train = tiny_train();
  c.repetitions = 2;
  c.extra_eval_episodes = 1;
  const auto r = run_holdout_ranking(c);
  ASSERT_EQ(r.repetitions.size(), 2u);
  EXPECT_EQ(r.subject_tau.size(), 5u);
  EXPECT_NE(r.repetitions[0].seed, r.repetitions[1].seed);
  EXPECT_EQ(r.ranked_episodes + r.no_evidence_episodes, 10);
  for (double t : r.subject_tau) {
    EXPECT_GE(t, -1.0);
    EXPECT_LE(t, 1.0);
  }
  const auto j = nlohmann::json::parse(ranking_experiment_json(r));
  EXPECT_TRUE(j.contains("mean_tau"));
  std::ostringstream csv;
  write_subject_tau_csv(csv, r);
  const auto text = csv.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 6);

  c.repetitions = 0;
  EXPECT_THROW(run_holdout_ranking(c), InvalidArgument);
}

TEST(Experiments, TransferSmoke) {
  const auto tc = binary_variant(tiny_train());
  EXPECT_EQ(tc.weights.lambda_ce, 0.0);
  EXPECT_GT(tc.weights.lambda1, 0.0);
  const auto params = ModelParams::init(tc.model, 1);
  auto observers = tiny_data(7);
  observers.subjects = 2;
  const auto r = evaluate_transfer(params, tc.window, observers, builtin_trajectories());
  ASSERT_EQ(r.scores.size(), 2u);
  ASSERT_EQ(r.scores[0].size(), 8u);
  for (const auto& row : r.scores)
    for (double s : row) {
      EXPECT_GE(s, 0.0);
      EXPECT_LE(s, 1.0);
    }
  const auto j = nlohmann::json::parse(transfer_json(r));
  ASSERT_EQ(j["ranking"].size(), 8u);
  for (std::size_t i = 1; i < 8; ++i)
    EXPECT_GE(j["ranking"][i - 1]["mean_positivity"].get<double>(), j["ranking"][i]["mean_positivity"].get<double>());
  EXPECT_THROW(evaluate_transfer(params, tc.window, observers, {builtin_trajectories()[0]}), InvalidArgument);
}

TEST(DatasetDir, RoundTripIsExact) {
  auto d = tiny_data(8);
  d.subjects = 2;
  d.episodes_per_subject = 2;
  d.env.episode_length = 40;
  const auto dir = std::filesystem::temp_directory_path() / "empathic_dataset_rt";
  std::filesystem::remove_all(dir);
  write_dataset_dir(dir.string(), d);
  const WindowConfig w;
  DatasetConfig back;
  const auto loaded = load_dataset_dir(dir.string(), w, &back);
  const auto direct = synthesize_dataset(d, w);
  EXPECT_EQ(dataset_config_to_json(back), dataset_config_to_json(d));
  ASSERT_EQ(loaded.size(), direct.size());
  for (std::size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(loaded[i].log, direct[i].log);
    EXPECT_EQ(loaded[i].spec, direct[i].spec);
    ASSERT_EQ(loaded[i].samples.size(), direct[i].samples.size());
    for (std::size_t k = 0; k < loaded[i].samples.size(); ++k) {
      EXPECT_EQ(loaded[i].samples[k].fau, direct[i].samples[k].fau);
      EXPECT_EQ(loaded[i].samples[k].head, direct[i].samples[k].head);
      EXPECT_EQ(loaded[i].samples[k].aux, direct[i].samples[k].aux);
      EXPECT_EQ(loaded[i].samples[k].label, direct[i].samples[k].label);
    }
  }

  std::filesystem::remove(dir / "s1_e1.features.csv");
  EXPECT_THROW(load_dataset_dir(dir.string(), w), Error);
  std::ofstream(dir / "manifest.json") << "{\"format\":\"empathic-dataset\",\"version\":2}";
  EXPECT_THROW(load_dataset_dir(dir.string(), w), IntegrityError);
  std::filesystem::remove_all(dir);
}

TEST(DatasetDir, RankHoldoutEpisodes) {
  auto d = tiny_data(9);
  const WindowConfig w;
  const auto eps = synthesize_dataset(d, w);
  const auto params = ModelParams::init(tiny_train().model, 3);
  const auto holdout = rank_dataset(params, w, eps, d, false);
  EXPECT_EQ(holdout.episodes.size(), 5u);
  EXPECT_EQ(holdout.subject_tau.size(), 5u);
  const auto all = rank_dataset(params, w, eps, d, true);
  EXPECT_EQ(all.episodes.size(), 15u);
  EXPECT_EQ(all.subject_tau, holdout.subject_tau);
  EXPECT_TRUE(nlohmann::json::parse(dataset_ranking_json(all)).contains("episodes"));
}
