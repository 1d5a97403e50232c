#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "empathic/feature_pipeline.hpp"
#include "empathic/gridworld.hpp"
#include "empathic/inference.hpp"
#include "empathic/observer_sim.hpp"
#include "empathic/reaction_model.hpp"

namespace empathic {

// ---- synthetic data collection ----

struct DatasetConfig {
  int subjects = 8;
  int episodes_per_subject = 3;
  ObserverProfile profile = ObserverProfile::clean();
  // Each episode's hidden spec drawn uniformly over the six rankings; the
  // observer and the environment share it. Off: ground truth everywhere.
  bool randomize_specs = true;
  TimeBase time;
  EnvConfig env;
  double switch_probability = 0.1;
  std::uint64_t seed = 0;
};

// Episode `episode` of `subject`; a pure function of (config, subject, episode),
// so episodes past episodes_per_subject serve as unseen evaluation data.
struct EpisodeData {
  int subject = 0;
  int episode = 0;
  RewardSpec spec = RewardSpec::ground_truth();
  EpisodeLog log;
  std::vector<WindowSample> samples;  // subject/episode fields filled
};

ObserverProfile subject_profile(const DatasetConfig& config, int subject, int episode);
SessionRecording synthesize_recording(const DatasetConfig& config, int subject, int episode);
EpisodeData synthesize_episode(const DatasetConfig& config, int subject, int episode, const WindowConfig& window);
std::vector<EpisodeData> synthesize_dataset(const DatasetConfig& config, const WindowConfig& window);
std::vector<WindowSample> flatten_samples(const std::vector<EpisodeData>& episodes);

std::string dataset_config_to_json(const DatasetConfig& c);
DatasetConfig dataset_config_from_json(const std::string& text);

// ---- datasets on disk ----
// manifest.json plus, per episode, the step log (JSONL), the 30 fps feature
// CSV and the annotation CSV.

inline constexpr int kDatasetFormatVersion = 1;

void write_dataset_dir(const std::string& dir, const DatasetConfig& config);
// Throws IntegrityError for a missing/mismatched manifest, or the reader's
// error for a bad episode file.
std::vector<EpisodeData> load_dataset_dir(const std::string& dir, const WindowConfig& window,
                                          DatasetConfig* config_out = nullptr);

// The subject/episode split plan every experiment on `data` uses.
SplitPlan split_plan(const DatasetConfig& data);

// Trains with the evaluation split (holdout episodes held out).
TrainResult train_on_episodes(const std::vector<EpisodeData>& episodes, const DatasetConfig& data, const TrainConfig& train);

struct EpisodeRanking {
  int subject = 0;
  int episode = 0;
  bool holdout = false;
  RankingResult result;
};

struct DatasetRankingReport {
  std::vector<EpisodeRanking> episodes;
  std::vector<double> subject_tau;  // holdout episodes only
  double mean_tau = 0.0;
  double wilcoxon_p = 1.0;
  bool wilcoxon_defined = false;
};

// Ranks episodes with a fixed model; holdout episodes only unless `all`.
DatasetRankingReport rank_dataset(const ModelParams& params, const WindowConfig& window,
                                  const std::vector<EpisodeData>& episodes, const DatasetConfig& data, bool all,
                                  EventPooling pooling = EventPooling::GeometricMean);
std::string dataset_ranking_json(const DatasetRankingReport& r);

// ---- reward-ranking experiment ----

struct RankingExperimentConfig {
  DatasetConfig data;
  TrainConfig train;
  int repetitions = 4;
  // Unseen episodes per subject ranked in addition to the holdout episode.
  int extra_eval_episodes = 0;
  EventPooling pooling = EventPooling::GeometricMean;
};

struct RepetitionResult {
  std::uint64_t seed = 0;
  int best_epoch = 0;
  double best_test_loss = 0.0;
  std::vector<double> subject_tau;  // mean over the subject's ranked episodes
  std::vector<EpochRecord> curves;
};

struct RankingReport {
  std::vector<RepetitionResult> repetitions;
  std::vector<double> subject_tau;  // mean over repetitions
  double mean_tau = 0.0;
  double wilcoxon_p = 1.0;          // one-sided, per-subject tau vs 0
  bool wilcoxon_defined = true;     // false with fewer than 5 nonzero subjects
  int ranked_episodes = 0;          // per repetition
  int no_evidence_episodes = 0;
};

RankingReport run_holdout_ranking(const RankingExperimentConfig& config);
std::string ranking_experiment_json(const RankingReport& r);
void write_subject_tau_csv(std::ostream& os, const RankingReport& r);

struct NoiseSweepPoint {
  double confusion = 0.0;
  RankingReport report;
};

std::vector<NoiseSweepPoint> run_noise_sweep(const RankingExperimentConfig& base, const std::vector<double>& levels);
std::string noise_sweep_json(const std::vector<NoiseSweepPoint>& points);

// Trains one model on the whole synthetic collection with the evaluation
// split (holdout episodes excluded).
TrainResult train_on_dataset(const DatasetConfig& data, const TrainConfig& train);

// ---- scripted trajectories (robotic-sorting analog) ----

struct TrajectoryEvent {
  double time_s = 0.0;
  int reaction_class = 6;  // reward value whose reaction the event provokes
  std::string label;
};

struct Trajectory {
  std::string name;
  double duration_s = 20.0;
  int return_value = 0;
  std::vector<TrajectoryEvent> events;
};

Trajectory trajectory_from_json(const std::string& text);
std::string trajectory_to_json(const Trajectory& t);
// Loads every *.json in `dir`, sorted by file name.
std::vector<Trajectory> load_trajectories(const std::string& dir);
// The shipped set: three +2, two 0, three -1 returns.
std::vector<Trajectory> builtin_trajectories();

SessionRecording synthesize_trajectory(const Trajectory& t, const ObserverProfile& profile, const TimeBase& time = {});

struct TransferConfig {
  DatasetConfig data;  // subjects observing the trajectories and the training collection
  TrainConfig train;   // binary variant: lambda_ce = 0
  std::vector<Trajectory> trajectories;
};

struct TransferReport {
  std::vector<std::string> names;
  std::vector<double> returns;
  std::vector<std::vector<double>> scores;  // [subject][trajectory]
  CrossSubjectRanking ranking;
  std::vector<double> subject_tau;          // per-subject tau-b vs returns
};

// Scores with an already trained model.
TransferReport evaluate_transfer(const ModelParams& params, const WindowConfig& window, const DatasetConfig& observers,
                                 const std::vector<Trajectory>& trajectories);
TransferReport run_transfer(const TransferConfig& config);
std::string transfer_json(const TransferReport& r);
void write_transfer_csv(std::ostream& os, const TransferReport& r);

// The binary-variant training configuration used for trajectory scoring.
TrainConfig binary_variant(TrainConfig base);

}  // namespace empathic
