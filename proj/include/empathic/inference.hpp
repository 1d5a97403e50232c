#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "empathic/feature_pipeline.hpp"
#include "empathic/gridworld.hpp"
#include "empathic/reaction_model.hpp"

namespace empathic {

inline constexpr int kRankingCount = 6;
inline constexpr double kLikelihoodFloor = 1e-6;

// All assignments of {-5,-1,+6} to (Passenger, Roadblock, ParkedCar), in
// lexicographic order of the value triple. Index 0 is (-5,-1,+6); the ground
// truth (+6,-1,-5) is last.
const std::array<RewardSpec, kRankingCount>& all_rankings();
int ranking_index(const RewardSpec& spec);

enum class HypothesisSpace : std::uint8_t { AllPermutations, PolicyMappings };
std::string_view to_string(HypothesisSpace h);
std::optional<HypothesisSpace> parse_hypothesis_space(std::string_view s);

class Belief {
 public:
  explicit Belief(HypothesisSpace space = HypothesisSpace::AllPermutations);

  HypothesisSpace space() const { return space_; }
  bool active(int ranking) const { return active_[static_cast<std::size_t>(ranking)]; }
  // Unnormalised; inactive rankings hold 0 and are ignored.
  const std::array<double, kRankingCount>& log_weights() const { return log_; }
  std::array<double, kRankingCount> probabilities() const;
  double entropy() const;  // nats
  int updates() const { return updates_; }

  // log P(m) += log max(p[class of m(object)], floor) for every active m.
  void update(ObjectType object, const std::array<double, 3>& class_probabilities, double floor = kLikelihoodFloor);

 private:
  HypothesisSpace space_;
  std::array<bool, kRankingCount> active_{};
  std::array<double, kRankingCount> log_{};
  int updates_ = 0;
};

Belief posterior_update(Belief belief, ObjectType object, const Prediction& pred, double floor = kLikelihoodFloor);

// Highest posterior; exact ties go to the lowest canonical index.
RewardSpec map_ranking(const Belief& belief);
int map_index(const Belief& belief);

// Normalised geometric mean of class-probability vectors.
std::array<double, 3> geometric_pool(const std::vector<std::array<double, 3>>& probabilities);

enum class EventPooling : std::uint8_t { GeometricMean, PerFrame };

struct EventEvidence {
  int tick = 0;
  ObjectType object = ObjectType::Passenger;
  std::vector<std::array<double, 3>> frame_probabilities;  // one per aggregated frame of the tick
};

// Groups window samples by pickup tick and attaches the model's predictions.
std::vector<EventEvidence> collect_evidence(const ModelParams& params, const std::vector<WindowSample>& samples,
                                            const EpisodeLog& log);

Belief accumulate(const std::vector<EventEvidence>& events, EventPooling pooling = EventPooling::GeometricMean,
                  HypothesisSpace space = HypothesisSpace::AllPermutations, double floor = kLikelihoodFloor);

// ---- rank statistics ----

struct RankStatistic {
  double tau = 0.0;
  double p_value = 1.0;
  bool tie_corrected = false;
  bool defined = true;  // false when tau-b's denominator vanishes
};

// Exact permutation p-value (two-sided unless `one_sided`, which tests
// tau > 0) for n <= 8, normal approximation with tie-corrected variance above.
RankStatistic kendall_tau(const std::vector<double>& a, const std::vector<double>& b, bool tie_corrected,
                          bool one_sided = false);

// Zeros dropped, mid-ranks for ties. Exact for n <= 20 (dynamic programme
// over the sign-assignment distribution), normal approximation above.
// Two-sided p counts |W+ - E W+| >= observed. Throws InsufficientData for
// fewer than 5 nonzero differences.
double wilcoxon_signed_rank(const std::vector<double>& values, double null_median = 0.0, bool one_sided = false);

// One-sided: P(X >= k). Two-sided: sum of pmf values not exceeding pmf(k).
double binomial_test(int k, int n, double p0, bool one_sided);

// ---- episode ranking ----

struct RankingResult {
  bool evidence = false;  // false for an episode without pickups
  Belief belief;
  RewardSpec map = all_rankings()[0];
  double tau = 0.0;
  double p_value = 1.0;
  int events = 0;
};

// Uniform prior, one update per pickup, MAP ranking and Kendall tau between
// the MAP values and the truth over the three object types.
RankingResult rank_episode(const ModelParams& params, const SessionRecording& session, const RewardSpec& truth,
                           const WindowConfig& window, EventPooling pooling = EventPooling::GeometricMean);
RankingResult rank_from_evidence(const std::vector<EventEvidence>& events, const RewardSpec& truth,
                                 EventPooling pooling = EventPooling::GeometricMean);
std::string ranking_report_json(const RankingResult& r);

// ---- trajectory positivity ----

// softmax(z_bin)[pos] at every aggregated frame whose window fits the stream.
std::vector<double> positivity_series(const ModelParams& params, const SessionRecording& session,
                                      const WindowConfig& window);
// Mean of the series. Throws InvalidArgument on an empty series.
double trajectory_positivity(const std::vector<double>& series);
double trajectory_positivity(const ModelParams& params, const SessionRecording& session, const WindowConfig& window);

struct CrossSubjectRanking {
  std::vector<double> mean_score;  // per trajectory
  std::vector<int> order;          // trajectory indices, highest mean first
  RankStatistic statistic;         // tau-b of mean scores vs returns
};

// scores[subject][trajectory]
CrossSubjectRanking cross_subject_rank(const std::vector<std::vector<double>>& scores, const std::vector<double>& returns);

}  // namespace empathic
