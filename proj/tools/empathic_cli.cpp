// empathic: command-line front end for simulation, data synthesis, training,
// ranking, online sessions, trajectory scoring and the live service.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "empathic/error.hpp"
#include "empathic/experiments.hpp"
#include "empathic/planning.hpp"
#include "empathic/protocol.hpp"
#include "empathic/server.hpp"
#include "empathic/session.hpp"

using namespace empathic;
namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  out << text;
  if (text.empty() || text.back() != '\n') out << '\n';
}

template <class F>
void write_with(const std::string& path, F&& f) {
  if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path);
  f(out);
}

// "clean", "default" or a profile JSON file
ObserverProfile resolve_profile(const std::string& name) {
  if (name == "clean" || name == "default") return ObserverProfile::named(name);
  return profile_from_json(read_text(name));
}

EventPooling parse_pooling(const std::string& s) {
  if (s == "geometric") return EventPooling::GeometricMean;
  if (s == "per-frame") return EventPooling::PerFrame;
  throw InvalidArgument("unknown pooling '" + s + "' (geometric or per-frame)");
}

// ---- simulate ----

struct SimulateArgs {
  std::uint64_t seed = 0;
  int episodes = 1;
  int length = 200;
  std::string policy = "behavior";
  double switch_probability = 0.1;
  std::string out;
};

int simulate(const SimulateArgs& a) {
  EnvConfig env;
  env.episode_length = a.length;
  fs::create_directories(a.out);
  auto runs = ojson::array();
  for (int i = 0; i < a.episodes; ++i) {
    const auto ep_seed = hash_mix(a.seed, static_cast<std::uint64_t>(i));
    auto state = new_episode(hash_mix(ep_seed, 0xE1), RewardSpec::ground_truth(), env);
    EpisodeLog log;
    log.spec = state.spec;
    std::unique_ptr<Policy> behavior;
    if (a.policy == "behavior") {
      behavior = std::make_unique<BehaviorPolicy>(make_behavior_policy(hash_mix(ep_seed, 0xBE), a.switch_probability));
    } else if (a.policy == "random") {
      behavior = std::make_unique<RandomPolicy>(hash_mix(ep_seed, 0xBE));
    } else if (a.policy != "planner") {
      throw InvalidArgument("unknown policy '" + a.policy + "' (behavior, random or planner)");
    }
    Planner planner;
    bool picked = false;
    while (!state.finished()) {
      const Action act = behavior ? behavior->act(state, picked)
                                  : planner.act(static_snapshot(state), object_rewards(state.spec), state.agent);
      picked = step_and_record(state, act, log).event.has_value();
    }
    const auto name = "episode_" + std::to_string(i) + ".jsonl";
    write_with((fs::path(a.out) / name).string(), [&](std::ostream& os) { write_episode_jsonl(os, log); });
    runs.push_back({{"episode", i}, {"seed", ep_seed}, {"log", name}, {"return", log.total_reward()}, {"pickups", log.pickup_count()}});
  }
  ojson summary{{"policy", a.policy}, {"seed", a.seed}, {"episode_length", a.length}, {"episodes", runs}};
  write_text((fs::path(a.out) / "summary.json").string(), summary.dump(2));
  std::cout << "wrote " << a.episodes << " episode(s) to " << a.out << "\n";
  return 0;
}

// ---- synth-data ----

struct SynthArgs {
  std::uint64_t seed = 0;
  int subjects = 8;
  int episodes = 3;
  int length = 200;
  std::string profile = "clean";
  double confusion = -1.0;
  bool fixed_spec = false;
  std::string out;
};

int synth_data(const SynthArgs& a) {
  DatasetConfig d;
  d.seed = a.seed;
  d.subjects = a.subjects;
  d.episodes_per_subject = a.episodes;
  d.env.episode_length = a.length;
  d.profile = resolve_profile(a.profile);
  if (a.confusion >= 0) d.profile.confusion_rate = a.confusion;
  d.profile.validate();
  d.randomize_specs = !a.fixed_spec;
  write_dataset_dir(a.out, d);
  std::cout << "wrote " << a.subjects * a.episodes << " episodes to " << a.out << "\n";
  return 0;
}

// ---- train ----

struct TrainArgs {
  std::uint64_t seed = 0;
  std::string data;
  std::string config;
  int folds = 0;
  int search = 0;
  bool binary = false;
  std::string out;
  std::string report;
  std::string curves;
};

int train_cmd(const TrainArgs& a) {
  TrainConfig tc;
  if (!a.config.empty()) tc = train_config_from_json(read_text(a.config));
  tc.seed = a.seed;
  if (a.binary) tc = binary_variant(tc);

  DatasetConfig data;
  std::map<std::pair<int, int>, std::vector<WindowSample>> cache;
  auto samples_for = [&](const WindowConfig& w) -> const std::vector<WindowSample>& {
    auto key = std::make_pair(w.k, w.l);
    auto it = cache.find(key);
    if (it == cache.end()) it = cache.emplace(key, flatten_samples(load_dataset_dir(a.data, w, &data))).first;
    return it->second;
  };
  samples_for(tc.window);
  const auto plan = split_plan(data);
  if (a.folds < 0 || a.folds > static_cast<int>(plan.folds.size())) {
    throw InvalidArgument("--folds must be in [0, " + std::to_string(plan.folds.size()) + "]");
  }

  ojson report;
  report["data"] = a.data;
  if (a.search > 0) {
    if (a.folds < 1) throw InvalidArgument("--search needs --folds >= 1");
    const auto space = SearchSpace::around_published(tc.window.pool, data.time.fps);
    const auto res = random_search(
        space, a.search, a.folds, tc,
        [&](const TrainConfig& c, int fold) {
          const auto& s = samples_for(c.window);
          return train(c, s, fold_indices(plan, fold, s)).best_test_loss;
        },
        hash_mix(a.seed, 0x5EA));
    auto draws = ojson::array();
    for (const auto& d : res.draws)
      draws.push_back({{"config", ojson::parse(train_config_to_json(d.config))}, {"fold_losses", d.fold_losses}, {"mean_loss", d.mean_loss}});
    report["search"] = draws;
    tc = res.best;
    tc.seed = a.seed;
  } else if (a.folds > 0) {
    auto folds = ojson::array();
    const auto& s = samples_for(tc.window);
    for (int f = 0; f < a.folds; ++f) {
      const auto r = train(tc, s, fold_indices(plan, f, s));
      folds.push_back({{"fold", f}, {"best_epoch", r.best_epoch}, {"best_test_loss", r.best_test_loss}});
    }
    report["folds"] = folds;
  }

  const auto& s = samples_for(tc.window);
  const auto split = eval_indices(plan, s);
  const auto result = train(tc, s, split);
  const auto ev = evaluate(result.best, s, split.test, tc.weights);
  save_checkpoint_file(a.out, {result.best, tc, kDataSchemaVersion});
  report["config"] = ojson::parse(train_config_to_json(tc));
  report["best_epoch"] = result.best_epoch;
  report["best_test_loss"] = result.best_test_loss;
  report["test_accuracy"] = ev.accuracy;
  report["test_ce"] = ev.ce;
  report["train_samples"] = split.train.size();
  report["test_samples"] = split.test.size();
  report["checkpoint"] = fs::path(a.out).filename().string();
  write_text(a.report.empty() ? a.out + ".json" : a.report, report.dump(2));
  if (!a.curves.empty()) write_with(a.curves, [&](std::ostream& os) { write_curves_csv(os, result.curves); });
  std::cout << "best epoch " << result.best_epoch << ", test loss " << result.best_test_loss << ", accuracy "
            << ev.accuracy << "\n";
  return 0;
}

// ---- rank ----

struct RankArgs {
  std::string model;
  std::string data;
  std::string report;
  std::string pooling = "geometric";
  bool all = false;
};

int rank_cmd(const RankArgs& a) {
  const auto ck = load_checkpoint_file(a.model);
  DatasetConfig data;
  const auto eps = load_dataset_dir(a.data, ck.config.window, &data);
  const auto r = rank_dataset(ck.params, ck.config.window, eps, data, a.all, parse_pooling(a.pooling));
  write_text(a.report, dataset_ranking_json(r));
  std::cout << "mean holdout tau " << r.mean_tau;
  if (r.wilcoxon_defined) std::cout << ", Wilcoxon p " << r.wilcoxon_p;
  std::cout << "\n";
  return 0;
}

// ---- online ----

struct OnlineArgs {
  std::uint64_t seed = 0;
  std::string model;
  std::string profile = "clean";
  std::string live;
  std::string replay;
  int sessions = 10;
  int baseline = 100;
  int length = 200;
  std::string hypotheses = "permutations";
  std::string replan = "update";
  int warmup = 0;
  std::string report;
  std::string metrics_csv;
  std::string record;
};

SessionConfig session_config(const OnlineArgs& a) {
  SessionConfig c;
  c.seed = a.seed;
  c.env.episode_length = a.length;
  c.profile = resolve_profile(a.profile);
  const auto h = parse_hypothesis_space(a.hypotheses);
  if (!h) throw InvalidArgument("unknown hypothesis space '" + a.hypotheses + "'");
  c.hypotheses = *h;
  const auto r = parse_replan_trigger(a.replan);
  if (!r) throw InvalidArgument("unknown replan trigger '" + a.replan + "' (update or pickup)");
  c.replan = *r;
  c.warmup_ticks = a.warmup;
  return c;
}

ojson single_report(const OnlineResult& r) {
  const auto& last = r.metrics.back();
  return {{"final_return", r.log.total_reward()},
          {"final_map", r.final_map.values()},
          {"passenger_highest", r.final_map.reward(ObjectType::Passenger) == 6},
          {"final_posterior", last.posterior},
          {"final_entropy", last.entropy},
          {"final_tau", last.tau},
          {"updates", r.updates.size()},
          {"dropped_updates", r.dropped_updates},
          {"starved_updates", r.starved_updates}};
}

// Script lines: "<tick> <GestureKind>", '#' comments.
std::vector<std::pair<int, GestureKind>> read_gesture_script(std::istream& in) {
  std::vector<std::pair<int, GestureKind>> out;
  std::string line;
  int n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ss(line);
    int tick;
    std::string kind;
    if (!(ss >> tick)) continue;
    if (!(ss >> kind)) throw ParseError("gesture script line " + std::to_string(n) + ": missing gesture");
    const auto k = parse_gesture_kind(kind);
    if (!k) throw ParseError("gesture script line " + std::to_string(n) + ": unknown gesture '" + kind + "'");
    out.emplace_back(tick, *k);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  return out;
}

int online_cmd(const OnlineArgs& a) {
  const auto ck = load_checkpoint_file(a.model);
  auto model = std::make_shared<const ModelParams>(ck.params);
  const auto& window = ck.config.window;

  auto finish_single = [&](const OnlineResult& r) {
    if (!a.metrics_csv.empty()) write_with(a.metrics_csv, [&](std::ostream& os) { write_metrics_csv(os, r.metrics); });
    if (!a.record.empty()) write_with(a.record, [&](std::ostream& os) { write_session_record(os, r.record); });
    write_text(a.report, single_report(r).dump(2));
    std::cout << "return " << r.log.total_reward() << ", MAP " << r.final_map.describe() << "\n";
    return 0;
  };

  if (!a.replay.empty()) {
    std::ifstream in(a.replay);
    if (!in) throw Error("cannot open " + a.replay);
    return finish_single(replay_session(read_session_record(in), model, window));
  }

  auto cfg = session_config(a);
  if (!a.live.empty()) {
    cfg.input = InputMode::Live;
    std::ifstream file;
    if (a.live != "-") {
      file.open(a.live);
      if (!file) throw Error("cannot open " + a.live);
    }
    const auto script = read_gesture_script(a.live == "-" ? std::cin : file);
    OnlineSession s(cfg, model, window);
    std::size_t next = 0;
    while (!s.finished()) {
      while (next < script.size() && script[next].first <= s.state().tick) s.inject_gesture(script[next++].second);
      s.step();
    }
    OnlineResult r{s.log(), s.metrics(), s.updates(), s.belief(), map_ranking(s.belief()), s.pending_updates(),
                   s.starved_updates(), s.record()};
    return finish_single(r);
  }

  const auto rep = run_online_batch(cfg, model, window, a.sessions, a.baseline);
  if (!a.metrics_csv.empty()) write_with(a.metrics_csv, [&](std::ostream& os) { write_metrics_csv(os, rep.metrics.front()); });
  write_text(a.report, online_batch_json(rep));
  std::cout << rep.positive_returns << "/" << a.sessions << " positive returns, " << rep.passenger_highest_count << "/"
            << a.sessions << " with Passenger highest, mean return " << rep.mean_return << " (random "
            << rep.random_baseline_mean << ")\n";
  return 0;
}

// ---- eval-robotic ----

struct RoboticArgs {
  std::uint64_t seed = 0;
  std::string model;
  std::string trajectories;
  std::string profile = "clean";
  int subjects = 8;
  std::string report;
  std::string csv;
};

int eval_robotic(const RoboticArgs& a) {
  const auto ck = load_checkpoint_file(a.model);
  DatasetConfig observers;
  observers.seed = a.seed;
  observers.subjects = a.subjects;
  observers.profile = resolve_profile(a.profile);
  const auto trajectories = a.trajectories.empty() ? builtin_trajectories() : load_trajectories(a.trajectories);
  const auto r = evaluate_transfer(ck.params, ck.config.window, observers, trajectories);
  write_text(a.report, transfer_json(r));
  if (!a.csv.empty()) write_with(a.csv, [&](std::ostream& os) { write_transfer_csv(os, r); });
  std::cout << "cross-subject tau-b " << r.ranking.statistic.tau << "\n";
  return 0;
}

// ---- experiment ----

struct ExperimentArgs {
  std::uint64_t seed = 0;
  std::string kind;
  std::string out;
  int repetitions = 4;
  int extra = 0;
  int sessions = 10;
  std::vector<double> levels{0.0, 0.1, 0.2, 0.3, 0.4, 0.5};
  int subjects = 8;
  int length = 200;
  int max_epochs = 60;
};

int experiment(const ExperimentArgs& a) {
  fs::create_directories(a.out);
  const auto path = [&](const std::string& f) { return (fs::path(a.out) / f).string(); };
  RankingExperimentConfig rc;
  rc.data.seed = a.seed;
  rc.data.subjects = a.subjects;
  rc.data.env.episode_length = a.length;
  rc.train.seed = a.seed;
  rc.train.max_epochs = a.max_epochs;
  rc.repetitions = a.repetitions;
  rc.extra_eval_episodes = a.extra;
  if (a.kind == "holdout") {
    const auto r = run_holdout_ranking(rc);
    write_text(path("holdout.json"), ranking_experiment_json(r));
    write_with(path("subject_tau.csv"), [&](std::ostream& os) { write_subject_tau_csv(os, r); });
    for (std::size_t i = 0; i < r.repetitions.size(); ++i)
      write_with(path("curves_rep" + std::to_string(i) + ".csv"), [&](std::ostream& os) { write_curves_csv(os, r.repetitions[i].curves); });
    std::cout << "mean tau " << r.mean_tau << ", Wilcoxon p " << r.wilcoxon_p << "\n";
  } else if (a.kind == "sweep") {
    const auto pts = run_noise_sweep(rc, a.levels);
    write_text(path("noise_sweep.json"), noise_sweep_json(pts));
    for (const auto& p : pts) std::cout << "confusion " << p.confusion << ": mean tau " << p.report.mean_tau << "\n";
  } else if (a.kind == "online") {
    const auto trained = train_on_dataset(rc.data, rc.train);
    SessionConfig sc;
    sc.seed = a.seed;
    sc.env.episode_length = a.length;
    const auto rep = run_online_batch(sc, std::make_shared<const ModelParams>(trained.best), rc.train.window, a.sessions, 100);
    write_text(path("online.json"), online_batch_json(rep));
    for (std::size_t i = 0; i < rep.metrics.size(); ++i)
      write_with(path("online_metrics_" + std::to_string(i) + ".csv"), [&](std::ostream& os) { write_metrics_csv(os, rep.metrics[i]); });
    std::cout << rep.positive_returns << "/" << a.sessions << " positive, " << rep.passenger_highest_count << "/" << a.sessions
              << " Passenger highest\n";
  } else if (a.kind == "transfer") {
    TransferConfig tc;
    tc.data = rc.data;
    tc.train = rc.train;
    const auto r = run_transfer(tc);
    write_text(path("transfer.json"), transfer_json(r));
    write_with(path("transfer.csv"), [&](std::ostream& os) { write_transfer_csv(os, r); });
    std::cout << "cross-subject tau-b " << r.ranking.statistic.tau << "\n";
  } else {
    throw InvalidArgument("unknown experiment '" + a.kind + "' (holdout, sweep, online, transfer)");
  }
  return 0;
}

// ---- serve ----

struct ServeArgs {
  std::uint64_t seed = 0;
  std::string bind = "127.0.0.1:8765";
  std::string model;
  std::string profile = "clean";
  bool live = false;
  bool external = false;
  double tick = -1.0;
  std::string log;
};

int serve(const ServeArgs& a) {
  const auto ck = load_checkpoint_file(a.model);
  SessionConfig c;
  c.seed = a.seed;
  c.profile = resolve_profile(a.profile);
  c.input = a.live ? InputMode::Live : (a.external ? InputMode::External : InputMode::Synthetic);
  const auto colon = a.bind.rfind(':');
  if (colon == std::string::npos) throw InvalidArgument("--bind expects host:port");
  ServerConfig sc;
  sc.address = a.bind.substr(0, colon);
  sc.port = static_cast<unsigned short>(std::stoi(a.bind.substr(colon + 1)));
  sc.tick_period_s = a.tick;
  auto service = std::make_unique<SessionService>(c, std::make_shared<const ModelParams>(ck.params), ck.config.window);
  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log);
    if (!log) throw Error("cannot write " + a.log);
    service->set_log_stream(&log);
  }
  WebSocketServer server(std::move(service), sc);
  server.start();
  std::cout << "listening on ws://" << sc.address << ":" << server.port() << " (" << to_string(c.input) << " input)"
            << std::endl;
  server.wait();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"empathic: learning from implicit human feedback"};
  app.require_subcommand(1);

  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Run the gridworld under a scripted policy and write episode logs");
  s->add_option("--seed", sim.seed);
  s->add_option("--episodes", sim.episodes)->check(CLI::PositiveNumber);
  s->add_option("--length", sim.length)->check(CLI::PositiveNumber);
  s->add_option("--policy", sim.policy, "behavior, random or planner");
  s->add_option("--switch-prob", sim.switch_probability)->check(CLI::Range(0.0, 1.0));
  s->add_option("--out", sim.out)->required();

  SynthArgs syn;
  auto* sd = app.add_subcommand("synth-data", "Synthesize observer recordings (logs, features, annotations)");
  sd->add_option("--seed", syn.seed);
  sd->add_option("--subjects", syn.subjects)->check(CLI::PositiveNumber);
  sd->add_option("--episodes", syn.episodes)->check(CLI::PositiveNumber);
  sd->add_option("--length", syn.length)->check(CLI::PositiveNumber);
  sd->add_option("--profile", syn.profile, "clean, default or a profile JSON file");
  sd->add_option("--confusion", syn.confusion, "override the profile's confusion rate");
  sd->add_flag("--fixed-spec", syn.fixed_spec, "ground-truth rewards in every episode");
  sd->add_option("--out", syn.out)->required();

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train the reaction model on a synthesized dataset");
  t->add_option("--seed", tr.seed);
  t->add_option("--data", tr.data)->required();
  t->add_option("--config", tr.config, "training config JSON");
  t->add_option("--folds", tr.folds, "cross-validation folds to report (0 = none)");
  t->add_option("--search", tr.search, "random-search draws (needs --folds)");
  t->add_flag("--binary", tr.binary, "binary variant (no 3-class term)");
  t->add_option("--out", tr.out)->required();
  t->add_option("--report", tr.report);
  t->add_option("--curves", tr.curves);

  RankArgs rk;
  auto* r = app.add_subcommand("rank", "Infer reward rankings for dataset episodes");
  r->add_option("--model", rk.model)->required();
  r->add_option("--data", rk.data)->required();
  r->add_option("--report", rk.report)->required();
  r->add_option("--pooling", rk.pooling, "geometric or per-frame");
  r->add_flag("--all", rk.all, "rank every episode, not only holdouts");

  OnlineArgs on;
  auto* o = app.add_subcommand("online", "Run online-learning sessions headless");
  o->add_option("--seed", on.seed);
  o->add_option("--model", on.model)->required();
  auto* prof = o->add_option("--profile", on.profile);
  auto* live = o->add_option("--live", on.live, "gesture script ('<tick> <Gesture>' per line, - for stdin)");
  prof->excludes(live);
  o->add_option("--replay", on.replay, "session record to re-run");
  o->add_option("--seeds", on.sessions, "number of sessions")->check(CLI::PositiveNumber);
  o->add_option("--baseline", on.baseline, "random-policy baseline episodes")->check(CLI::NonNegativeNumber);
  o->add_option("--length", on.length)->check(CLI::PositiveNumber);
  o->add_option("--hypotheses", on.hypotheses, "permutations or mappings");
  o->add_option("--replan", on.replan, "update or pickup");
  o->add_option("--warmup", on.warmup)->check(CLI::NonNegativeNumber);
  o->add_option("--report", on.report)->required();
  o->add_option("--metrics-csv", on.metrics_csv);
  o->add_option("--record", on.record);

  RoboticArgs rb;
  auto* e = app.add_subcommand("eval-robotic", "Score scripted trajectories by mean positivity");
  e->add_option("--seed", rb.seed);
  e->add_option("--model", rb.model)->required();
  e->add_option("--trajectories", rb.trajectories, "directory of trajectory JSON files (default: built-in set)");
  e->add_option("--profile", rb.profile);
  e->add_option("--subjects", rb.subjects)->check(CLI::PositiveNumber);
  e->add_option("--report", rb.report)->required();
  e->add_option("--csv", rb.csv);

  ExperimentArgs ex;
  auto* x = app.add_subcommand("experiment", "Run a full synthetic experiment end to end");
  x->add_option("kind", ex.kind, "holdout, sweep, online or transfer")->required();
  x->add_option("--seed", ex.seed);
  x->add_option("--out", ex.out)->required();
  x->add_option("--reps", ex.repetitions)->check(CLI::PositiveNumber);
  x->add_option("--extra", ex.extra, "unseen episodes per subject ranked as well");
  x->add_option("--sessions", ex.sessions)->check(CLI::PositiveNumber);
  x->add_option("--levels", ex.levels, "confusion levels for the sweep");
  x->add_option("--subjects", ex.subjects)->check(CLI::Range(2, 1000));
  x->add_option("--length", ex.length, "episode length in ticks")->check(CLI::PositiveNumber);
  x->add_option("--max-epochs", ex.max_epochs)->check(CLI::PositiveNumber);

  ServeArgs sv;
  auto* srv = app.add_subcommand("serve", "Run the websocket session service");
  srv->add_option("--seed", sv.seed);
  srv->add_option("--bind", sv.bind, "host:port");
  srv->add_option("--model", sv.model)->required();
  auto* sprof = srv->add_option("--profile", sv.profile);
  auto* slive = srv->add_flag("--live", sv.live, "gestures come from the client");
  auto* sext = srv->add_flag("--external", sv.external, "feature frames come from the client");
  sprof->excludes(slive);
  slive->excludes(sext);
  srv->add_option("--tick", sv.tick, "seconds per tick (default: step period)");
  srv->add_option("--log", sv.log, "JSONL log of every message");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*s) return simulate(sim);
    if (*sd) return synth_data(syn);
    if (*t) return train_cmd(tr);
    if (*r) return rank_cmd(rk);
    if (*o) return online_cmd(on);
    if (*e) return eval_robotic(rb);
    if (*x) return experiment(ex);
    if (*srv) return serve(sv);
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return 1;
  }
  return 0;
}
