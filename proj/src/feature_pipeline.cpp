#include "empathic/feature_pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>
#include <unsupported/Eigen/FFT>

#include "empathic/error.hpp"

namespace empathic {

std::vector<PoseVector> pose_detrend(const std::vector<PoseVector>& pose) {
  std::vector<PoseVector> out(pose.size());
  PoseVector sum{};
  for (std::size_t i = 0; i < pose.size(); ++i) {
    for (std::size_t d = 0; d < kPoseCount; ++d) {
      sum[d] += pose[i][d];
      out[i][d] = pose[i][d] - sum[d] / static_cast<double>(i + 1);
    }
  }
  return out;
}

std::vector<std::complex<double>> window_spectrum(std::span<const double> window) {
  Eigen::FFT<double> fft;
  std::vector<double> in(window.begin(), window.end());
  std::vector<std::complex<double>> out;
  fft.fwd(out, in);
  return out;
}

HeadVector head_motion_fft(const std::vector<PoseVector>& detrended, int i) {
  HeadVector out{};
  Eigen::FFT<double> fft;
  std::vector<double> window(kFftWindow);
  std::vector<std::complex<double>> spec;
  for (std::size_t d = 0; d < kPoseCount; ++d) {
    for (int j = 0; j < kFftWindow; ++j) {
      const int f = i - (kFftWindow - 1) + j;
      window[static_cast<std::size_t>(j)] = f >= 0 ? detrended[static_cast<std::size_t>(f)][d] : 0.0;
    }
    fft.fwd(spec, window);
    for (int b = 0; b < kFftBins; ++b) out[d * kFftBins + static_cast<std::size_t>(b)] = std::abs(spec[static_cast<std::size_t>(b)]);
  }
  return out;
}

// ---- streaming extractor ----

struct FeatureExtractor::Fft {
  Eigen::FFT<double> fft;
  std::vector<double> window = std::vector<double>(kFftWindow);
  std::vector<std::complex<double>> spec;
};

FeatureExtractor::FeatureExtractor(int pool, int frames_per_tick)
    : pool_(pool), frames_per_tick_(frames_per_tick), fft_(std::make_unique<Fft>()) {
  if (pool < 1) throw InvalidArgument("pool size must be at least 1");
  if (frames_per_tick < 1) throw InvalidArgument("frames per tick must be at least 1");
}

FeatureExtractor::~FeatureExtractor() = default;
FeatureExtractor::FeatureExtractor(FeatureExtractor&&) noexcept = default;
FeatureExtractor& FeatureExtractor::operator=(FeatureExtractor&&) noexcept = default;

std::optional<AggregatedFrame> FeatureExtractor::push(const FrameFeatures& raw) {
  const int i = frames_seen_++;
  if (raw[0] != 0.0) {
    held_ = raw;
    have_valid_ = true;
  }
  const FrameFeatures& f = have_valid_ ? held_ : raw;
  const bool zero_hold = !have_valid_;

  FauVector fau{};
  for (int j = 0; j < kFauWidth; ++j) fau[static_cast<std::size_t>(j)] = zero_hold ? 0.0 : f[static_cast<std::size_t>(kAuPresenceOffset + j)];

  HeadVector head{};
  for (std::size_t d = 0; d < kPoseCount; ++d) {
    const double p = zero_hold ? 0.0 : f[static_cast<std::size_t>(kPoseOffset) + d];
    pose_sum_[d] += p;
    history_[d][static_cast<std::size_t>(i % kFftWindow)] = p - pose_sum_[d] / static_cast<double>(i + 1);
    for (int j = 0; j < kFftWindow; ++j) {
      const int frame = i - (kFftWindow - 1) + j;
      fft_->window[static_cast<std::size_t>(j)] = frame >= 0 ? history_[d][static_cast<std::size_t>(frame % kFftWindow)] : 0.0;
    }
    fft_->fft.fwd(fft_->spec, fft_->window);
    for (int b = 0; b < kFftBins; ++b) head[d * kFftBins + static_cast<std::size_t>(b)] = std::abs(fft_->spec[static_cast<std::size_t>(b)]);
  }

  if (block_count_ == 0) {
    block_.fau = fau;
    block_.head = head;
    block_.first_frame = i;
    block_.tick = i / frames_per_tick_;
  } else {
    for (std::size_t j = 0; j < fau.size(); ++j) block_.fau[j] = std::max(block_.fau[j], fau[j]);
    for (std::size_t j = 0; j < head.size(); ++j) block_.head[j] = std::max(block_.head[j], head[j]);
  }
  block_.last_frame = i;
  if (++block_count_ == pool_) {
    block_count_ = 0;
    return block_;
  }
  return std::nullopt;
}

std::optional<AggregatedFrame> FeatureExtractor::flush() {
  if (block_count_ == 0) return std::nullopt;
  block_count_ = 0;
  return block_;
}

std::vector<AggregatedFrame> extract_features(const std::vector<FrameFeatures>& frames, int pool, int frames_per_tick) {
  FeatureExtractor ex(pool, frames_per_tick);
  std::vector<AggregatedFrame> out;
  out.reserve(frames.size() / static_cast<std::size_t>(pool) + 1);
  for (const auto& f : frames) {
    if (auto a = ex.push(f)) out.push_back(*a);
  }
  if (auto a = ex.flush()) out.push_back(*a);
  return out;
}

std::vector<std::vector<double>> max_pool(const std::vector<std::vector<double>>& rows, int pool) {
  if (pool < 1) throw InvalidArgument("pool size must be at least 1");
  std::vector<std::vector<double>> out;
  for (std::size_t start = 0; start < rows.size(); start += static_cast<std::size_t>(pool)) {
    auto block = rows[start];
    for (std::size_t r = start + 1; r < std::min(rows.size(), start + static_cast<std::size_t>(pool)); ++r) {
      for (std::size_t j = 0; j < block.size(); ++j) block[j] = std::max(block[j], rows[r][j]);
    }
    out.push_back(std::move(block));
  }
  return out;
}

std::vector<Annotation> pool_annotations(const std::vector<Annotation>& annotations, int pool) {
  if (pool < 1) throw InvalidArgument("pool size must be at least 1");
  std::vector<Annotation> out;
  for (std::size_t start = 0; start < annotations.size(); start += static_cast<std::size_t>(pool)) {
    Annotation a{};
    for (std::size_t r = start; r < std::min(annotations.size(), start + static_cast<std::size_t>(pool)); ++r) {
      for (std::size_t j = 0; j < a.size(); ++j) a[j] = std::max(a[j], annotations[r][j]);
    }
    out.push_back(a);
  }
  return out;
}

// ---- windows ----

std::optional<WindowSample> window_at(const std::vector<AggregatedFrame>& agg, const std::vector<Annotation>& agg_ann,
                                      int t, const WindowConfig& cfg) {
  if (cfg.k < 0 || cfg.l < 0) throw InvalidArgument("window offsets must be non-negative");
  if (!agg_ann.empty() && agg_ann.size() < agg.size()) throw InvalidArgument("annotation stream shorter than features");
  if (t - cfg.k < 0 || t + cfg.l >= static_cast<int>(agg.size())) return std::nullopt;
  WindowSample s;
  s.fau.reserve(static_cast<std::size_t>(cfg.fau_width()));
  s.head.reserve(static_cast<std::size_t>(cfg.head_width()));
  for (int j = t - cfg.k; j <= t + cfg.l; ++j) {
    const auto& a = agg[static_cast<std::size_t>(j)];
    s.fau.insert(s.fau.end(), a.fau.begin(), a.fau.end());
    s.head.insert(s.head.end(), a.head.begin(), a.head.end());
    if (!agg_ann.empty()) {
      for (auto v : agg_ann[static_cast<std::size_t>(j)]) s.aux.push_back(v);
    }
  }
  s.frame = t;
  s.tick = agg[static_cast<std::size_t>(t)].tick;
  s.half = t < static_cast<int>(agg.size()) / 2 ? 0 : 1;
  return s;
}

std::vector<WindowSample> make_samples(const std::vector<AggregatedFrame>& agg, const std::vector<Annotation>& agg_ann,
                                       const EpisodeLog& log, const WindowConfig& cfg) {
  std::map<int, int> reward_at;
  for (const auto& r : log.records) {
    if (r.reward != 0) reward_at[r.tick] = r.reward;
  }
  std::vector<WindowSample> out;
  for (int t = 0; t < static_cast<int>(agg.size()); ++t) {
    const auto it = reward_at.find(agg[static_cast<std::size_t>(t)].tick);
    if (it == reward_at.end()) continue;
    auto s = window_at(agg, agg_ann, t, cfg);
    if (!s) continue;
    s->label = reward_class_index(it->second);
    s->y_bin = it->second > 0 ? 1 : 0;
    out.push_back(std::move(*s));
  }
  return out;
}

std::vector<WindowSample> make_samples(const SessionRecording& session, const WindowConfig& cfg) {
  const auto agg = extract_features(session.frames, cfg.pool, session.time.frames_per_tick());
  const auto ann = pool_annotations(session.annotations, cfg.pool);
  return make_samples(agg, ann, session.log, cfg);
}

// ---- splits ----

SplitPlan make_splits(const std::vector<int>& episodes_per_subject, std::uint64_t seed) {
  const int n = static_cast<int>(episodes_per_subject.size());
  if (n < 2) throw InvalidArgument("splits need at least 2 subjects");
  for (int s = 0; s < n; ++s) {
    if (episodes_per_subject[static_cast<std::size_t>(s)] != 3) {
      throw InvalidArgument("subject " + std::to_string(s) + " has " +
                            std::to_string(episodes_per_subject[static_cast<std::size_t>(s)]) + " episodes; 3 required");
    }
  }
  Rng rng(seed);
  SplitPlan plan;
  plan.subjects = n;
  for (int s = 0; s < n; ++s) plan.holdout_episode.push_back(rng.uniform_int(3));

  auto remaining = [&](int s) {
    std::array<int, 2> r{};
    int k = 0;
    for (int e = 0; e < 3; ++e)
      if (e != plan.holdout_episode[static_cast<std::size_t>(s)]) r[static_cast<std::size_t>(k++)] = e;
    return r;
  };

  for (int target = 0; target < n; ++target) {
    SplitPlan::Fold f;
    f.target = target;
    const auto rt = remaining(target);
    const int v = rng.uniform_int(2);
    f.validation_episode = rt[static_cast<std::size_t>(v)];
    for (int s = 0; s < n; ++s) {
      const auto r = remaining(s);
      f.test_episode.push_back(s == target ? rt[static_cast<std::size_t>(1 - v)] : r[static_cast<std::size_t>(rng.uniform_int(2))]);
      f.test_half.push_back(rng.uniform_int(2));
    }
    plan.folds.push_back(std::move(f));
  }
  for (int s = 0; s < n; ++s) {
    plan.eval_test_episode.push_back(remaining(s)[static_cast<std::size_t>(rng.uniform_int(2))]);
    plan.eval_test_half.push_back(rng.uniform_int(2));
  }
  return plan;
}

SplitRole fold_role(const SplitPlan& plan, int fold, int subject, int episode, int half) {
  const auto s = static_cast<std::size_t>(subject);
  if (episode == plan.holdout_episode[s]) return SplitRole::Holdout;
  const auto& f = plan.folds[static_cast<std::size_t>(fold)];
  if (subject == f.target && episode == f.validation_episode) return SplitRole::Validation;
  if (episode == f.test_episode[s] && half == f.test_half[s]) return SplitRole::Test;
  return SplitRole::Train;
}

SplitRole eval_role(const SplitPlan& plan, int subject, int episode, int half) {
  const auto s = static_cast<std::size_t>(subject);
  if (episode == plan.holdout_episode[s]) return SplitRole::Holdout;
  if (episode == plan.eval_test_episode[s] && half == plan.eval_test_half[s]) return SplitRole::Test;
  return SplitRole::Train;
}

namespace {

template <typename RoleFn>
IndexSplit assign(const std::vector<WindowSample>& samples, RoleFn role) {
  IndexSplit out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto& s = samples[i];
    switch (role(s)) {
      case SplitRole::Train: out.train.push_back(i); break;
      case SplitRole::Test: out.test.push_back(i); break;
      case SplitRole::Validation: out.validation.push_back(i); break;
      case SplitRole::Holdout: out.holdout.push_back(i); break;
    }
  }
  return out;
}

}  // namespace

IndexSplit fold_indices(const SplitPlan& plan, int fold, const std::vector<WindowSample>& samples) {
  return assign(samples, [&](const WindowSample& s) { return fold_role(plan, fold, s.subject, s.episode, s.half); });
}

IndexSplit eval_indices(const SplitPlan& plan, const std::vector<WindowSample>& samples) {
  return assign(samples, [&](const WindowSample& s) { return eval_role(plan, s.subject, s.episode, s.half); });
}

std::string split_manifest_json(const SplitPlan& plan) {
  nlohmann::ordered_json j;
  j["subjects"] = plan.subjects;
  j["holdout_episode"] = plan.holdout_episode;
  auto folds = nlohmann::ordered_json::array();
  for (const auto& f : plan.folds) {
    folds.push_back({{"target", f.target},
                     {"validation_episode", f.validation_episode},
                     {"test_episode", f.test_episode},
                     {"test_half", f.test_half}});
  }
  j["folds"] = folds;
  j["eval_test_episode"] = plan.eval_test_episode;
  j["eval_test_half"] = plan.eval_test_half;
  return j.dump(2);
}

// ---- CSV ingest ----

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

IngestedStream ingest_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw SchemaError("feature CSV is empty");
  const auto header = split_csv(line);
  const auto& cols = frame_columns();
  std::array<std::size_t, kFrameWidth> index{};
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto it = std::find(header.begin(), header.end(), cols[c]);
    if (it == header.end()) throw SchemaError("missing column " + std::string(cols[c]));
    index[c] = static_cast<std::size_t>(it - header.begin());
  }

  IngestedStream out;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    FrameFeatures f{};
    for (std::size_t c = 0; c < cols.size(); ++c) {
      const auto where = "row " + std::to_string(row) + " column " + std::string(cols[c]);
      if (index[c] >= cells.size()) throw ParseError(where + " is missing");
      const std::string& cell = cells[index[c]];
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (cell.empty() || end != cell.c_str() + cell.size() || !std::isfinite(v)) {
        throw ParseError(where + " is not numeric: '" + cell + "'");
      }
      const int col = static_cast<int>(c);
      const bool binary = col < kAuIntensityOffset;
      if (binary && v != 0.0 && v != 1.0) throw ParseError(where + " must be 0 or 1");
      if (col >= kAuIntensityOffset && col < kPoseOffset && (v < 0.0 || v > 5.0)) {
        throw ParseError(where + " outside [0,5]");
      }
      f[c] = v;
    }
    out.frames.push_back(f);
    out.valid.push_back(f[0] != 0.0 ? 1 : 0);
  }
  return out;
}

IngestedStream ingest_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open feature CSV " + path);
  return ingest_csv(in);
}

}  // namespace empathic
