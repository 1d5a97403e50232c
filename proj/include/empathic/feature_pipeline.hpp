#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "empathic/observer_sim.hpp"

namespace empathic {

inline constexpr int kFauWidth = kAuPresenceCount + kAuIntensityCount;  // 35
inline constexpr int kFftWindow = 50;
inline constexpr int kFftBins = 9;
inline constexpr int kHeadWidth = kPoseCount * kFftBins;  // 54
inline constexpr int kDefaultPool = 9;

using PoseVector = std::array<double, kPoseCount>;
using FauVector = std::array<double, kFauWidth>;
using HeadVector = std::array<double, kHeadWidth>;

// Frame i's pose minus the cumulative mean of frames 0..i.
std::vector<PoseVector> pose_detrend(const std::vector<PoseVector>& pose);

// Complex DFT of one window (length kFftWindow); diagnostic access to all bins.
std::vector<std::complex<double>> window_spectrum(std::span<const double> window);

// Magnitudes of bins 0..8 of the trailing 50-frame window ending at frame i,
// for each of the 6 pose dims (dim-major). Frames before 0 count as zero.
HeadVector head_motion_fft(const std::vector<PoseVector>& detrended, int i);

struct AggregatedFrame {
  FauVector fau{};
  HeadVector head{};
  int first_frame = 0;
  int last_frame = 0;  // inclusive
  int tick = 0;        // tick containing first_frame
};

// Streaming form of the whole per-frame pipeline: hold invalid frames,
// detrend pose, trailing FFT, then max-pool blocks of `pool` frames.
class FeatureExtractor {
 public:
  FeatureExtractor(int pool = kDefaultPool, int frames_per_tick = 45);
  ~FeatureExtractor();
  FeatureExtractor(FeatureExtractor&&) noexcept;
  FeatureExtractor& operator=(FeatureExtractor&&) noexcept;

  // Returns an aggregated frame each time a block of `pool` frames completes.
  std::optional<AggregatedFrame> push(const FrameFeatures& frame);
  // Pools a trailing partial block, if any.
  std::optional<AggregatedFrame> flush();
  int frames_seen() const { return frames_seen_; }

 private:
  struct Fft;
  int pool_;
  int frames_per_tick_;
  int frames_seen_ = 0;
  bool have_valid_ = false;
  FrameFeatures held_{};
  PoseVector pose_sum_{};
  std::array<std::array<double, kFftWindow>, kPoseCount> history_{};  // ring per dim
  int block_count_ = 0;
  AggregatedFrame block_;
  std::unique_ptr<Fft> fft_;
};

std::vector<AggregatedFrame> extract_features(const std::vector<FrameFeatures>& frames, int pool = kDefaultPool,
                                              int frames_per_tick = 45);

// Per-dimension max over consecutive blocks of `pool` rows; a trailing
// partial block is pooled as-is.
std::vector<std::vector<double>> max_pool(const std::vector<std::vector<double>>& rows, int pool);
std::vector<Annotation> pool_annotations(const std::vector<Annotation>& annotations, int pool);

// ---- window samples ----

struct WindowConfig {
  int k = 0;
  int l = 12;
  int pool = kDefaultPool;
  int window_frames() const { return k + l + 1; }
  int fau_width() const { return kFauWidth * window_frames(); }
  int head_width() const { return kHeadWidth * window_frames(); }
  int aux_width() const { return kAnnotationChannels * window_frames(); }
  friend bool operator==(const WindowConfig&, const WindowConfig&) = default;
};

struct WindowSample {
  std::vector<double> fau;   // 35 per window frame, oldest first
  std::vector<double> head;  // 54 per window frame
  std::vector<double> aux;   // 10 per window frame; empty if no annotations
  int label = 0;             // class index in [-5, -1, +6] order
  int y_bin = 0;             // 1 iff label is +6
  int frame = 0;             // aggregated frame index T
  int tick = 0;
  int half = 0;              // 0 for the first half of the episode
  int subject = 0;
  int episode = 0;
};

// Window of aggregated frames T-k..T+l (the label fields are left at zero).
// Returns nullopt if the window leaves the stream.
std::optional<WindowSample> window_at(const std::vector<AggregatedFrame>& agg, const std::vector<Annotation>& agg_ann,
                                      int t, const WindowConfig& cfg);

// One sample per aggregated frame whose tick has a nonzero reward, windows
// clipped by the episode edges dropped.
std::vector<WindowSample> make_samples(const std::vector<AggregatedFrame>& agg, const std::vector<Annotation>& agg_ann,
                                       const EpisodeLog& log, const WindowConfig& cfg);
std::vector<WindowSample> make_samples(const SessionRecording& session, const WindowConfig& cfg);

// ---- splits ----

enum class SplitRole : std::uint8_t { Train, Test, Validation, Holdout };

struct SplitPlan {
  int subjects = 0;
  std::vector<int> holdout_episode;  // per subject
  struct Fold {
    int target = 0;
    int validation_episode = 0;         // of the target subject
    std::vector<int> test_episode;      // per subject
    std::vector<int> test_half;         // per subject
  };
  std::vector<Fold> folds;
  // holdout evaluation: half an episode per subject to test, the rest to train
  std::vector<int> eval_test_episode;
  std::vector<int> eval_test_half;
};

// Requires >= 2 subjects, each with exactly 3 episodes.
SplitPlan make_splits(const std::vector<int>& episodes_per_subject, std::uint64_t seed);
SplitRole fold_role(const SplitPlan& plan, int fold, int subject, int episode, int half);
SplitRole eval_role(const SplitPlan& plan, int subject, int episode, int half);

struct IndexSplit {
  std::vector<std::size_t> train, test, validation, holdout;
};
IndexSplit fold_indices(const SplitPlan& plan, int fold, const std::vector<WindowSample>& samples);
IndexSplit eval_indices(const SplitPlan& plan, const std::vector<WindowSample>& samples);

std::string split_manifest_json(const SplitPlan& plan);

// ---- external feature CSVs ----

struct IngestedStream {
  std::vector<FrameFeatures> frames;
  std::vector<std::uint8_t> valid;  // success flag per frame
};

// Header must contain all 42 feature columns (extra columns ignored, names
// trimmed). Missing column -> SchemaError naming it; bad cell -> ParseError
// with the row number.
IngestedStream ingest_csv(std::istream& is);
IngestedStream ingest_csv_file(const std::string& path);

}  // namespace empathic
