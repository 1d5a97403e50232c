#include "empathic/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "empathic/error.hpp"
#include "empathic/planning.hpp"
#include "empathic/rng.hpp"

namespace empathic {

using ojson = nlohmann::ordered_json;

namespace {

constexpr std::uint64_t kSpecStream = 0x5EC;
constexpr std::uint64_t kEnvStream = 0xE1;
constexpr std::uint64_t kPolicyStream = 0xBE;
constexpr std::uint64_t kObserverStream = 0x0B5;
constexpr std::uint64_t kSplitStream = 0x5B1;
constexpr std::uint64_t kTrajectoryStream = 0x7A;

void check_model_matches(const TrainConfig& t) {
  if (t.model.fau_in != t.window.fau_width() || t.model.head_in != t.window.head_width() ||
      t.model.aux_out != t.window.aux_width()) {
    throw InvalidArgument("model input widths do not match the window (k=" + std::to_string(t.window.k) +
                          ", l=" + std::to_string(t.window.l) + ")");
  }
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

ojson number_or_null(double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); }

}  // namespace

// ---- data collection ----

ObserverProfile subject_profile(const DatasetConfig& config, int subject, int episode) {
  auto p = config.profile;
  p.seed = hash_mix(config.seed, kObserverStream, static_cast<std::uint64_t>(subject), static_cast<std::uint64_t>(episode));
  return p;
}

SessionRecording synthesize_recording(const DatasetConfig& config, int subject, int episode) {
  const auto s = static_cast<std::uint64_t>(subject);
  const auto e = static_cast<std::uint64_t>(episode);
  RewardSpec spec = RewardSpec::ground_truth();
  if (config.randomize_specs) {
    Rng pick(hash_mix(config.seed, kSpecStream, s, e));
    spec = all_rankings()[pick.uniform_index(kRankingCount)];
  }
  auto state = new_episode(hash_mix(config.seed, kEnvStream, s, e), spec, config.env);
  BehaviorPolicy policy(make_behavior_policy(hash_mix(config.seed, kPolicyStream, s, e), config.switch_probability));
  EpisodeLog log;
  log.spec = spec;
  bool picked = false;
  while (!state.finished()) picked = step_and_record(state, policy.act(state, picked), log).event.has_value();
  return generate_session(subject_profile(config, subject, episode), log, config.time);
}

EpisodeData synthesize_episode(const DatasetConfig& config, int subject, int episode, const WindowConfig& window) {
  auto rec = synthesize_recording(config, subject, episode);
  EpisodeData d;
  d.subject = subject;
  d.episode = episode;
  d.spec = rec.log.spec;
  d.samples = make_samples(rec, window);
  for (auto& s : d.samples) {
    s.subject = subject;
    s.episode = episode;
  }
  d.log = std::move(rec.log);
  return d;
}

std::vector<EpisodeData> synthesize_dataset(const DatasetConfig& config, const WindowConfig& window) {
  if (config.subjects < 1 || config.episodes_per_subject < 1) throw InvalidArgument("dataset needs subjects and episodes");
  std::vector<EpisodeData> out;
  for (int s = 0; s < config.subjects; ++s)
    for (int e = 0; e < config.episodes_per_subject; ++e) out.push_back(synthesize_episode(config, s, e, window));
  return out;
}

std::vector<WindowSample> flatten_samples(const std::vector<EpisodeData>& episodes) {
  std::vector<WindowSample> out;
  for (const auto& e : episodes) out.insert(out.end(), e.samples.begin(), e.samples.end());
  return out;
}

// ---- datasets on disk ----

std::string dataset_config_to_json(const DatasetConfig& c) {
  ojson j;
  j["subjects"] = c.subjects;
  j["episodes_per_subject"] = c.episodes_per_subject;
  j["profile"] = ojson::parse(profile_to_json(c.profile));
  j["randomize_specs"] = c.randomize_specs;
  j["fps"] = c.time.fps;
  j["step_period_s"] = c.time.step_period_s;
  j["env"] = {{"size", c.env.size},
              {"episode_length", c.env.episode_length},
              {"objects_per_type", c.env.objects_per_type},
              {"respawn_delay", c.env.respawn_delay},
              {"respawn", c.env.respawn}};
  j["switch_probability"] = c.switch_probability;
  j["seed"] = c.seed;
  return j.dump();
}

DatasetConfig dataset_config_from_json(const std::string& text) {
  DatasetConfig c;
  try {
    const auto j = nlohmann::json::parse(text);
    c.subjects = j.value("subjects", c.subjects);
    c.episodes_per_subject = j.value("episodes_per_subject", c.episodes_per_subject);
    if (j.contains("profile")) c.profile = profile_from_json(j["profile"].dump());
    c.randomize_specs = j.value("randomize_specs", c.randomize_specs);
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
    c.switch_probability = j.value("switch_probability", c.switch_probability);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("dataset config: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("dataset config: ") + e.what());
  }
  if (c.subjects < 1 || c.episodes_per_subject < 1) throw InvalidArgument("dataset needs subjects and episodes");
  return c;
}

namespace {

std::string episode_stem(int s, int e) { return "s" + std::to_string(s) + "_e" + std::to_string(e); }

std::ofstream open_out(const std::filesystem::path& p) {
  std::ofstream os(p);
  if (!os) throw Error("cannot write " + p.string());
  return os;
}

std::ifstream open_in(const std::filesystem::path& p) {
  std::ifstream is(p);
  if (!is) throw Error("cannot open " + p.string());
  return is;
}

}  // namespace

void write_dataset_dir(const std::string& dir, const DatasetConfig& config) {
  namespace fs = std::filesystem;
  if (config.subjects < 1 || config.episodes_per_subject < 1) throw InvalidArgument("dataset needs subjects and episodes");
  fs::create_directories(dir);
  auto episodes = ojson::array();
  for (int s = 0; s < config.subjects; ++s)
    for (int e = 0; e < config.episodes_per_subject; ++e) {
      const auto rec = synthesize_recording(config, s, e);
      const auto stem = episode_stem(s, e);
      {
        auto os = open_out(fs::path(dir) / (stem + ".log.jsonl"));
        write_episode_jsonl(os, rec.log);
      }
      {
        auto os = open_out(fs::path(dir) / (stem + ".features.csv"));
        write_feature_csv(os, rec.frames);
      }
      {
        auto os = open_out(fs::path(dir) / (stem + ".annotations.csv"));
        write_annotation_csv(os, rec.annotations);
      }
      episodes.push_back({{"subject", s},
                          {"episode", e},
                          {"spec", rec.log.spec.values()},
                          {"return", rec.log.total_reward()},
                          {"pickups", rec.log.pickup_count()},
                          {"log", stem + ".log.jsonl"},
                          {"features", stem + ".features.csv"},
                          {"annotations", stem + ".annotations.csv"}});
    }
  ojson m;
  m["format"] = "empathic-dataset";
  m["version"] = kDatasetFormatVersion;
  m["config"] = ojson::parse(dataset_config_to_json(config));
  m["episodes"] = episodes;
  auto os = open_out(fs::path(dir) / "manifest.json");
  os << m.dump(2) << '\n';
}

std::vector<EpisodeData> load_dataset_dir(const std::string& dir, const WindowConfig& window, DatasetConfig* config_out) {
  namespace fs = std::filesystem;
  const auto manifest_path = fs::path(dir) / "manifest.json";
  if (!fs::exists(manifest_path)) throw IntegrityError("no manifest.json in " + dir);
  nlohmann::json m;
  try {
    auto is = open_in(manifest_path);
    m = nlohmann::json::parse(is);
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("manifest.json: ") + e.what());
  }
  if (m.value("format", "") != "empathic-dataset") throw IntegrityError("manifest.json is not a dataset manifest");
  if (m.value("version", 0) != kDatasetFormatVersion) {
    throw IntegrityError("dataset version " + std::to_string(m.value("version", 0)) + " is not supported");
  }
  const auto config = dataset_config_from_json(m.at("config").dump());
  std::vector<EpisodeData> out;
  try {
    for (const auto& e : m.at("episodes")) {
      const auto v = e.at("spec").get<std::array<int, 3>>();
      SessionRecording rec;
      rec.time = config.time;
      {
        auto is = open_in(fs::path(dir) / e.at("log").get<std::string>());
        rec.log = read_episode_jsonl(is, RewardSpec::from_values(v[0], v[1], v[2]));
      }
      rec.frames = ingest_csv_file((fs::path(dir) / e.at("features").get<std::string>()).string()).frames;
      {
        auto is = open_in(fs::path(dir) / e.at("annotations").get<std::string>());
        rec.annotations = read_annotation_csv(is);
      }
      EpisodeData d;
      d.subject = e.at("subject").get<int>();
      d.episode = e.at("episode").get<int>();
      if (d.subject < 0 || d.subject >= config.subjects || d.episode < 0 || d.episode >= config.episodes_per_subject) {
        throw IntegrityError("manifest episode outside the configured subjects/episodes");
      }
      d.spec = rec.log.spec;
      d.samples = make_samples(rec, window);
      for (auto& s : d.samples) {
        s.subject = d.subject;
        s.episode = d.episode;
      }
      d.log = std::move(rec.log);
      out.push_back(std::move(d));
    }
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("manifest.json: ") + e.what());
  }
  if (out.size() != static_cast<std::size_t>(config.subjects * config.episodes_per_subject)) {
    throw IntegrityError("manifest lists " + std::to_string(out.size()) + " episodes, config expects " +
                         std::to_string(config.subjects * config.episodes_per_subject));
  }
  if (config_out) *config_out = config;
  return out;
}

// ---- ranking experiment ----

SplitPlan split_plan(const DatasetConfig& data) {
  return make_splits(std::vector<int>(static_cast<std::size_t>(data.subjects), data.episodes_per_subject),
                     hash_mix(data.seed, kSplitStream));
}

TrainResult train_on_episodes(const std::vector<EpisodeData>& episodes, const DatasetConfig& data,
                              const TrainConfig& train_config) {
  check_model_matches(train_config);
  const auto samples = flatten_samples(episodes);
  const auto plan = split_plan(data);
  return train(train_config, samples, eval_indices(plan, samples));
}

TrainResult train_on_dataset(const DatasetConfig& data, const TrainConfig& train_config) {
  check_model_matches(train_config);
  return train_on_episodes(synthesize_dataset(data, train_config.window), data, train_config);
}

DatasetRankingReport rank_dataset(const ModelParams& params, const WindowConfig& window,
                                  const std::vector<EpisodeData>& episodes, const DatasetConfig& data, bool all,
                                  EventPooling pooling) {
  if (params.config().fau_in != window.fau_width()) throw InvalidArgument("model input widths do not match the window");
  const auto plan = split_plan(data);
  DatasetRankingReport r;
  std::vector<std::vector<double>> per_subject(static_cast<std::size_t>(data.subjects));
  for (const auto& e : episodes) {
    const bool holdout = e.episode == plan.holdout_episode[static_cast<std::size_t>(e.subject)];
    if (!holdout && !all) continue;
    EpisodeRanking er{e.subject, e.episode, holdout, rank_from_evidence(collect_evidence(params, e.samples, e.log), e.spec, pooling)};
    if (holdout && er.result.evidence) per_subject[static_cast<std::size_t>(e.subject)].push_back(er.result.tau);
    r.episodes.push_back(std::move(er));
  }
  for (const auto& v : per_subject) r.subject_tau.push_back(mean_of(v));
  r.mean_tau = mean_of(r.subject_tau);
  try {
    r.wilcoxon_p = wilcoxon_signed_rank(r.subject_tau, 0.0, true);
    r.wilcoxon_defined = true;
  } catch (const InsufficientData&) {
  }
  return r;
}

std::string dataset_ranking_json(const DatasetRankingReport& r) {
  ojson j;
  j["mean_tau"] = r.mean_tau;
  j["wilcoxon_p_one_sided"] = r.wilcoxon_defined ? ojson(r.wilcoxon_p) : ojson(nullptr);
  j["subject_tau"] = r.subject_tau;
  auto eps = ojson::array();
  for (const auto& e : r.episodes) {
    eps.push_back({{"subject", e.subject},
                   {"episode", e.episode},
                   {"holdout", e.holdout},
                   {"events", e.result.events},
                   {"tau", e.result.evidence ? ojson(e.result.tau) : ojson(nullptr)},
                   {"map", e.result.map.values()},
                   {"posterior", e.result.belief.probabilities()}});
  }
  j["episodes"] = eps;
  return j.dump(2);
}

RankingReport run_holdout_ranking(const RankingExperimentConfig& config) {
  check_model_matches(config.train);
  if (config.repetitions < 1) throw InvalidArgument("need at least one training repetition");
  const auto& data = config.data;
  const auto episodes = synthesize_dataset(data, config.train.window);
  const auto samples = flatten_samples(episodes);
  const auto plan = split_plan(data);
  const auto split = eval_indices(plan, samples);

  // per subject: the holdout episode, then unseen extras
  std::vector<std::vector<const EpisodeData*>> ranked(static_cast<std::size_t>(data.subjects));
  std::vector<EpisodeData> extras;
  extras.reserve(static_cast<std::size_t>(data.subjects * config.extra_eval_episodes));
  for (int s = 0; s < data.subjects; ++s)
    for (int k = 0; k < config.extra_eval_episodes; ++k)
      extras.push_back(synthesize_episode(data, s, data.episodes_per_subject + k, config.train.window));
  for (const auto& e : episodes)
    if (e.episode == plan.holdout_episode[static_cast<std::size_t>(e.subject)]) ranked[static_cast<std::size_t>(e.subject)].push_back(&e);
  for (const auto& e : extras) ranked[static_cast<std::size_t>(e.subject)].push_back(&e);

  RankingReport report;
  report.subject_tau.assign(static_cast<std::size_t>(data.subjects), 0.0);
  for (int r = 0; r < config.repetitions; ++r) {
    auto tc = config.train;
    tc.seed = hash_mix(config.train.seed, static_cast<std::uint64_t>(r));
    const auto trained = train(tc, samples, split);
    RepetitionResult rep;
    rep.seed = tc.seed;
    rep.best_epoch = trained.best_epoch;
    rep.best_test_loss = trained.best_test_loss;
    rep.curves = trained.curves;
    int ranked_count = 0, empty = 0;
    for (const auto& subject_eps : ranked) {
      std::vector<double> taus;
      for (const auto* ep : subject_eps) {
        const auto res = rank_from_evidence(collect_evidence(trained.best, ep->samples, ep->log), ep->spec, config.pooling);
        if (!res.evidence) {
          ++empty;
          continue;
        }
        taus.push_back(res.tau);
        ++ranked_count;
      }
      rep.subject_tau.push_back(mean_of(taus));
    }
    report.ranked_episodes = ranked_count;
    report.no_evidence_episodes = empty;
    for (std::size_t s = 0; s < rep.subject_tau.size(); ++s)
      report.subject_tau[s] += rep.subject_tau[s] / config.repetitions;
    report.repetitions.push_back(std::move(rep));
  }
  report.mean_tau = mean_of(report.subject_tau);
  try {
    report.wilcoxon_p = wilcoxon_signed_rank(report.subject_tau, 0.0, true);
  } catch (const InsufficientData&) {
    report.wilcoxon_defined = false;
    report.wilcoxon_p = 1.0;
  }
  return report;
}

std::string ranking_experiment_json(const RankingReport& r) {
  ojson j;
  j["mean_tau"] = r.mean_tau;
  j["wilcoxon_p_one_sided"] = r.wilcoxon_defined ? ojson(r.wilcoxon_p) : ojson(nullptr);
  j["subject_tau"] = r.subject_tau;
  auto sorted = r.subject_tau;
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  j["subject_tau_sorted"] = sorted;
  j["ranked_episodes_per_repetition"] = r.ranked_episodes;
  j["no_evidence_episodes"] = r.no_evidence_episodes;
  auto reps = ojson::array();
  for (const auto& rep : r.repetitions) {
    reps.push_back({{"seed", rep.seed},
                    {"best_epoch", rep.best_epoch},
                    {"best_test_loss", rep.best_test_loss},
                    {"epochs", rep.curves.size()},
                    {"subject_tau", rep.subject_tau}});
  }
  j["repetitions"] = reps;
  return j.dump(2);
}

void write_subject_tau_csv(std::ostream& os, const RankingReport& r) {
  os << "subject,mean_tau";
  for (std::size_t k = 0; k < r.repetitions.size(); ++k) os << ",rep" << k;
  os << '\n';
  os.precision(10);
  for (std::size_t s = 0; s < r.subject_tau.size(); ++s) {
    os << s << ',' << r.subject_tau[s];
    for (const auto& rep : r.repetitions) os << ',' << rep.subject_tau[s];
    os << '\n';
  }
}

std::vector<NoiseSweepPoint> run_noise_sweep(const RankingExperimentConfig& base, const std::vector<double>& levels) {
  std::vector<NoiseSweepPoint> out;
  for (double c : levels) {
    auto cfg = base;
    cfg.data.profile.confusion_rate = c;
    cfg.data.profile.validate();
    out.push_back({c, run_holdout_ranking(cfg)});
  }
  return out;
}

std::string noise_sweep_json(const std::vector<NoiseSweepPoint>& points) {
  auto arr = ojson::array();
  for (const auto& p : points) {
    arr.push_back({{"confusion", p.confusion},
                   {"mean_tau", p.report.mean_tau},
                   {"wilcoxon_p_one_sided", p.report.wilcoxon_defined ? ojson(p.report.wilcoxon_p) : ojson(nullptr)},
                   {"subject_tau", p.report.subject_tau}});
  }
  return ojson{{"levels", arr}}.dump(2);
}

// ---- trajectories ----

Trajectory trajectory_from_json(const std::string& text) {
  Trajectory t;
  try {
    const auto j = nlohmann::json::parse(text);
    t.name = j.at("name").get<std::string>();
    t.duration_s = j.at("duration_s").get<double>();
    t.return_value = j.at("return").get<int>();
    for (const auto& e : j.at("events")) {
      TrajectoryEvent ev;
      ev.time_s = e.at("time_s").get<double>();
      ev.reaction_class = e.at("reaction").get<int>();
      ev.label = e.value("label", "");
      reward_class_index(ev.reaction_class);  // validates
      if (ev.time_s < 0 || ev.time_s >= t.duration_s) throw InvalidArgument("event outside the trajectory in " + t.name);
      t.events.push_back(ev);
    }
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("trajectory: ") + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("trajectory: ") + e.what());
  }
  if (!(t.duration_s > 0)) throw InvalidArgument("trajectory duration must be positive");
  return t;
}

std::string trajectory_to_json(const Trajectory& t) {
  ojson j;
  j["name"] = t.name;
  j["duration_s"] = t.duration_s;
  j["return"] = t.return_value;
  auto ev = ojson::array();
  for (const auto& e : t.events) ev.push_back({{"time_s", e.time_s}, {"reaction", e.reaction_class}, {"label", e.label}});
  j["events"] = ev;
  return j.dump(2) + "\n";
}

std::vector<Trajectory> load_trajectories(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw Error("trajectory directory not found: " + dir);
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.path().extension() == ".json") files.push_back(entry.path());
  std::sort(files.begin(), files.end());
  std::vector<Trajectory> out;
  for (const auto& f : files) {
    std::ifstream in(f);
    std::stringstream ss;
    ss << in.rdbuf();
    out.push_back(trajectory_from_json(ss.str()));
  }
  if (out.empty()) throw Error("no trajectory files in " + dir);
  return out;
}

std::vector<Trajectory> builtin_trajectories() {
  // reaction 6: outcome the observer likes; -1: mildly wrong move; -5: bad outcome
  return {
      {"t1_can_direct", 20.0, 2, {{4.0, 6, "reach can"}, {13.0, 6, "place can in bin"}}},
      {"t2_can_after_retract", 20.0, 2, {{3.0, -1, "reach bottle"}, {7.0, 6, "retract"}, {14.0, 6, "place can in bin"}}},
      {"t3_can_slow", 20.0, 2, {{6.0, 6, "reach can"}, {16.0, 6, "place can in bin"}}},
      {"t4_wrong_then_retract", 20.0, 0, {{4.0, -1, "reach bottle"}, {9.0, 6, "retract"}}},
      {"t5_can_dropped", 20.0, 0, {{4.0, 6, "reach can"}, {11.0, -1, "drop can on table"}}},
      {"t6_wrong_direct", 20.0, -1, {{4.0, -1, "reach bottle"}, {13.0, -5, "place bottle in bin"}}},
      {"t7_can_then_wrong", 20.0, -1, {{3.0, 6, "reach can"}, {8.0, -1, "switch to bottle"}, {15.0, -5, "place bottle in bin"}}},
      {"t8_wrong_slow", 20.0, -1, {{6.0, -1, "reach bottle"}, {16.0, -5, "place bottle in bin"}}},
  };
}

SessionRecording synthesize_trajectory(const Trajectory& t, const ObserverProfile& profile, const TimeBase& time) {
  profile.validate();
  const int fpt = time.frames_per_tick();
  const int ticks = static_cast<int>(std::ceil(t.duration_s * time.fps / fpt - 1e-9));
  const int total = ticks * fpt;
  SessionRecording rec;
  rec.time = time;
  for (int k = 0; k < ticks; ++k) rec.log.records.push_back(StepRecord{k, {}, {}, Action::Maintain, 0, std::nullopt});
  std::vector<GestureEvent> gestures;
  for (std::size_t i = 0; i < t.events.size(); ++i) {
    const auto& e = t.events[i];
    const RewardEvent ev{static_cast<int>(i), e.reaction_class, static_cast<int>(std::lround(e.time_s * time.fps))};
    for (auto g : event_gestures(profile, ev, time.fps)) gestures.push_back(g);
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

TrainConfig binary_variant(TrainConfig base) {
  base.weights.lambda_ce = 0.0;
  if (base.weights.lambda1 == 0.0) base.weights.lambda1 = 1.0;
  return base;
}

TransferReport evaluate_transfer(const ModelParams& params, const WindowConfig& window, const DatasetConfig& observers,
                                 const std::vector<Trajectory>& trajectories) {
  if (trajectories.size() < 2) throw InvalidArgument("need at least 2 trajectories");
  TransferReport r;
  for (const auto& t : trajectories) {
    r.names.push_back(t.name);
    r.returns.push_back(t.return_value);
  }
  for (int s = 0; s < observers.subjects; ++s) {
    std::vector<double> row;
    for (std::size_t k = 0; k < trajectories.size(); ++k) {
      auto profile = observers.profile;
      profile.seed = hash_mix(observers.seed, kTrajectoryStream, static_cast<std::uint64_t>(s), k);
      const auto rec = synthesize_trajectory(trajectories[k], profile, observers.time);
      row.push_back(trajectory_positivity(params, rec, window));
    }
    const auto st = kendall_tau(row, r.returns, true);
    r.subject_tau.push_back(st.defined ? st.tau : std::numeric_limits<double>::quiet_NaN());
    r.scores.push_back(std::move(row));
  }
  r.ranking = cross_subject_rank(r.scores, r.returns);
  return r;
}

TransferReport run_transfer(const TransferConfig& config) {
  const auto tc = binary_variant(config.train);
  const auto trained = train_on_dataset(config.data, tc);
  return evaluate_transfer(trained.best, tc.window, config.data,
                           config.trajectories.empty() ? builtin_trajectories() : config.trajectories);
}

std::string transfer_json(const TransferReport& r) {
  ojson j;
  auto rows = ojson::array();
  for (int idx : r.ranking.order) {
    const auto k = static_cast<std::size_t>(idx);
    const double ret = r.returns[k];
    rows.push_back({{"trajectory", r.names[k]},
                    {"mean_positivity", r.ranking.mean_score[k]},
                    {"return", ret},
                    {"color", ret > 0 ? "green" : (ret < 0 ? "red" : "yellow")}});
  }
  j["ranking"] = rows;
  j["tau_b"] = number_or_null(r.ranking.statistic.tau);
  j["p_value"] = number_or_null(r.ranking.statistic.p_value);
  auto subj = ojson::array();
  for (double t : r.subject_tau) subj.push_back(number_or_null(t));
  j["subject_tau_b"] = subj;
  return j.dump(2);
}

void write_transfer_csv(std::ostream& os, const TransferReport& r) {
  os << "rank,trajectory,mean_positivity,return\n";
  os.precision(10);
  int rank = 1;
  for (int idx : r.ranking.order) {
    const auto k = static_cast<std::size_t>(idx);
    os << rank++ << ',' << r.names[k] << ',' << r.ranking.mean_score[k] << ',' << r.returns[k] << '\n';
  }
}

}  // namespace empathic
