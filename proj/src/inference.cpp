#include "empathic/inference.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "empathic/error.hpp"

namespace empathic {

const std::array<RewardSpec, kRankingCount>& all_rankings() {
  static const auto rankings = [] {
    std::array<int, 3> v{-5, -1, 6};
    std::vector<RewardSpec> out;
    do {
      out.push_back(RewardSpec::from_values(v[0], v[1], v[2]));
    } while (std::next_permutation(v.begin(), v.end()));
    return std::array<RewardSpec, kRankingCount>{out[0], out[1], out[2], out[3], out[4], out[5]};
  }();
  return rankings;
}

int ranking_index(const RewardSpec& spec) {
  const auto& r = all_rankings();
  for (int i = 0; i < kRankingCount; ++i)
    if (r[static_cast<std::size_t>(i)] == spec) return i;
  throw InvalidArgument("not a reward ranking: " + spec.describe());
}

std::string_view to_string(HypothesisSpace h) {
  return h == HypothesisSpace::AllPermutations ? "permutations" : "mappings";
}

std::optional<HypothesisSpace> parse_hypothesis_space(std::string_view s) {
  if (s == "permutations" || s == "6") return HypothesisSpace::AllPermutations;
  if (s == "mappings" || s == "3") return HypothesisSpace::PolicyMappings;
  return std::nullopt;
}

// ---- belief ----

Belief::Belief(HypothesisSpace space) : space_(space) {
  if (space == HypothesisSpace::AllPermutations) {
    active_.fill(true);
  } else {
    // the behaviour policy's three mappings: each favours one object type
    for (const auto& spec : {RewardSpec::from_values(6, -1, -5), RewardSpec::from_values(-1, 6, -5),
                             RewardSpec::from_values(-1, -5, 6)}) {
      active_[static_cast<std::size_t>(ranking_index(spec))] = true;
    }
  }
}

std::array<double, kRankingCount> Belief::probabilities() const {
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < log_.size(); ++i)
    if (active_[i]) top = std::max(top, log_[i]);
  std::array<double, kRankingCount> p{};
  double total = 0.0;
  for (std::size_t i = 0; i < log_.size(); ++i) {
    if (!active_[i]) continue;
    p[i] = std::exp(log_[i] - top);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

double Belief::entropy() const {
  double h = 0.0;
  for (double p : probabilities())
    if (p > 0.0) h -= p * std::log(p);
  return h;
}

void Belief::update(ObjectType object, const std::array<double, 3>& class_probabilities, double floor) {
  if (!(floor > 0.0)) throw InvalidArgument("likelihood floor must be positive");
  const auto& rankings = all_rankings();
  for (std::size_t m = 0; m < rankings.size(); ++m) {
    if (!active_[m]) continue;
    const auto cls = static_cast<std::size_t>(reward_class_index(rankings[m].reward(object)));
    log_[m] += std::log(std::max(class_probabilities[cls], floor));
  }
  ++updates_;
}

Belief posterior_update(Belief belief, ObjectType object, const Prediction& pred, double floor) {
  belief.update(object, pred.probabilities, floor);
  return belief;
}

int map_index(const Belief& belief) {
  int best = -1;
  for (int i = 0; i < kRankingCount; ++i) {
    if (!belief.active(i)) continue;
    if (best < 0 || belief.log_weights()[static_cast<std::size_t>(i)] > belief.log_weights()[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

RewardSpec map_ranking(const Belief& belief) { return all_rankings()[static_cast<std::size_t>(map_index(belief))]; }

std::array<double, 3> geometric_pool(const std::vector<std::array<double, 3>>& probabilities) {
  if (probabilities.empty()) throw InvalidArgument("nothing to pool");
  std::array<double, 3> logs{};
  for (const auto& p : probabilities)
    for (std::size_t j = 0; j < 3; ++j) logs[j] += std::log(std::max(p[j], 1e-300));
  const double n = static_cast<double>(probabilities.size());
  const double top = std::max({logs[0], logs[1], logs[2]}) / n;
  std::array<double, 3> out{};
  double total = 0.0;
  for (std::size_t j = 0; j < 3; ++j) {
    out[j] = std::exp(logs[j] / n - top);
    total += out[j];
  }
  for (auto& v : out) v /= total;
  return out;
}

std::vector<EventEvidence> collect_evidence(const ModelParams& params, const std::vector<WindowSample>& samples,
                                            const EpisodeLog& log) {
  std::map<int, ObjectType> object_at;
  for (const auto& r : log.records)
    if (r.event) object_at[r.tick] = *r.event;
  std::vector<EventEvidence> out;
  if (samples.empty()) return out;
  const auto preds = predict(params, make_batch(samples));
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const auto it = object_at.find(samples[i].tick);
    if (it == object_at.end()) continue;
    if (out.empty() || out.back().tick != samples[i].tick) out.push_back({samples[i].tick, it->second, {}});
    out.back().frame_probabilities.push_back(preds[i].probabilities);
  }
  return out;
}

Belief accumulate(const std::vector<EventEvidence>& events, EventPooling pooling, HypothesisSpace space, double floor) {
  Belief b(space);
  for (const auto& e : events) {
    if (e.frame_probabilities.empty()) continue;
    if (pooling == EventPooling::GeometricMean) {
      b.update(e.object, geometric_pool(e.frame_probabilities), floor);
    } else {
      for (const auto& p : e.frame_probabilities) b.update(e.object, p, floor);
    }
  }
  return b;
}

// ---- rank statistics ----

namespace {

struct Pairs {
  long s = 0;          // concordant - discordant
  long untied_a = 0;   // pairs not tied in a
  long untied_b = 0;
};

Pairs pair_counts(const std::vector<double>& a, const std::vector<double>& b, const std::vector<int>& perm) {
  Pairs p;
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double da = a[i] - a[j];
      const double db = b[static_cast<std::size_t>(perm[i])] - b[static_cast<std::size_t>(perm[j])];
      if (da != 0) ++p.untied_a;
      if (db != 0) ++p.untied_b;
      if (da != 0 && db != 0) p.s += (da > 0) == (db > 0) ? 1 : -1;
    }
  return p;
}

std::vector<long> tie_groups(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::vector<long> groups;
  for (std::size_t i = 0; i < v.size();) {
    std::size_t j = i;
    while (j + 1 < v.size() && v[j + 1] == v[i]) ++j;
    groups.push_back(static_cast<long>(j - i + 1));
    i = j + 1;
  }
  return groups;
}

double normal_upper(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

}  // namespace

RankStatistic kendall_tau(const std::vector<double>& a, const std::vector<double>& b, bool tie_corrected, bool one_sided) {
  if (a.size() != b.size()) throw InvalidArgument("rank vectors differ in length");
  if (a.size() < 2) throw InvalidArgument("kendall tau needs at least 2 items");
  const auto n = static_cast<long>(a.size());
  std::vector<int> perm(a.size());
  std::iota(perm.begin(), perm.end(), 0);
  const auto obs = pair_counts(a, b, perm);

  RankStatistic r;
  r.tie_corrected = tie_corrected;
  const double pairs = static_cast<double>(n * (n - 1) / 2);
  if (tie_corrected) {
    const double denom = std::sqrt(static_cast<double>(obs.untied_a) * static_cast<double>(obs.untied_b));
    if (denom == 0.0) {
      r.defined = false;
      r.tau = std::numeric_limits<double>::quiet_NaN();
      r.p_value = std::numeric_limits<double>::quiet_NaN();
      return r;
    }
    r.tau = static_cast<double>(obs.s) / denom;
  } else {
    r.tau = static_cast<double>(obs.s) / pairs;
  }

  if (n <= 8) {
    // permuting b keeps both tie structures, so S orders the statistic
    long hits = 0, total = 0;
    do {
      const long s = pair_counts(a, b, perm).s;
      if (one_sided ? s >= obs.s : std::labs(s) >= std::labs(obs.s)) ++hits;
      ++total;
    } while (std::next_permutation(perm.begin(), perm.end()));
    r.p_value = static_cast<double>(hits) / static_cast<double>(total);
    return r;
  }

  const double nn = static_cast<double>(n);
  double v0 = nn * (nn - 1) * (2 * nn + 5);
  double vt = 0, vu = 0, t1 = 0, u1 = 0, t2 = 0, u2 = 0;
  for (long t : tie_groups(a)) {
    const double x = static_cast<double>(t);
    vt += x * (x - 1) * (2 * x + 5);
    t1 += x * (x - 1);
    t2 += x * (x - 1) * (x - 2);
  }
  for (long u : tie_groups(b)) {
    const double x = static_cast<double>(u);
    vu += x * (x - 1) * (2 * x + 5);
    u1 += x * (x - 1);
    u2 += x * (x - 1) * (x - 2);
  }
  const double var = (v0 - vt - vu) / 18.0 + t1 * u1 / (2 * nn * (nn - 1)) + t2 * u2 / (9 * nn * (nn - 1) * (nn - 2));
  if (var <= 0.0) {
    r.p_value = 1.0;
    return r;
  }
  const double z = static_cast<double>(obs.s) / std::sqrt(var);
  r.p_value = one_sided ? normal_upper(z) : std::min(1.0, 2.0 * normal_upper(std::abs(z)));
  return r;
}

double wilcoxon_signed_rank(const std::vector<double>& values, double null_median, bool one_sided) {
  std::vector<double> d;
  for (double v : values) {
    if (!std::isfinite(v)) throw InvalidArgument("wilcoxon: non-finite value");
    if (v - null_median != 0.0) d.push_back(v - null_median);
  }
  const std::size_t n = d.size();
  if (n < 5) throw InsufficientData("wilcoxon needs at least 5 nonzero differences, got " + std::to_string(n));

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto i, auto j) { return std::abs(d[i]) < std::abs(d[j]); });
  std::vector<long> rank2(n);  // doubled mid-ranks are integers
  std::vector<long> ties;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j + 1 < n && std::abs(d[order[j + 1]]) == std::abs(d[order[i]])) ++j;
    for (std::size_t k = i; k <= j; ++k) rank2[order[k]] = static_cast<long>(i + j + 2);
    ties.push_back(static_cast<long>(j - i + 1));
    i = j + 1;
  }
  long total2 = 0, w2 = 0;
  for (std::size_t i = 0; i < n; ++i) {
    total2 += rank2[i];
    if (d[i] > 0) w2 += rank2[i];
  }

  if (n <= 20) {
    std::vector<double> count(static_cast<std::size_t>(total2 + 1), 0.0);
    count[0] = 1.0;
    long reach = 0;
    for (long r : rank2) {
      for (long s = reach; s >= 0; --s) count[static_cast<std::size_t>(s + r)] += count[static_cast<std::size_t>(s)];
      reach += r;
    }
    double hits = 0.0;
    for (long s = 0; s <= total2; ++s) {
      // compare doubled deviations from the mean total2/2 in integers
      const bool extreme = one_sided ? s >= w2 : std::labs(2 * s - total2) >= std::labs(2 * w2 - total2);
      if (extreme) hits += count[static_cast<std::size_t>(s)];
    }
    return hits / std::ldexp(1.0, static_cast<int>(n));
  }

  const double nn = static_cast<double>(n);
  double tie_term = 0.0;
  for (long t : ties) tie_term += static_cast<double>(t * t * t - t);
  const double var = nn * (nn + 1) * (2 * nn + 1) / 24.0 - tie_term / 48.0;
  const double z = (static_cast<double>(w2) / 2.0 - static_cast<double>(total2) / 4.0) / std::sqrt(var);
  return one_sided ? normal_upper(z) : std::min(1.0, 2.0 * normal_upper(std::abs(z)));
}

namespace {

double binomial_pmf(int j, int n, double p) {
  if (n <= 60) {
    double c = 1.0;
    for (int i = 1; i <= j; ++i) c = c * (n - j + i) / i;
    return c * std::pow(p, j) * std::pow(1 - p, n - j);
  }
  if (p == 0.0) return j == 0 ? 1.0 : 0.0;
  if (p == 1.0) return j == n ? 1.0 : 0.0;
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) + j * std::log(p) +
                  (n - j) * std::log1p(-p));
}

}  // namespace

double binomial_test(int k, int n, double p0, bool one_sided) {
  if (n < 0 || k < 0 || k > n) throw InvalidArgument("binomial test needs 0 <= k <= n");
  if (!(p0 >= 0.0 && p0 <= 1.0)) throw InvalidArgument("binomial test needs p0 in [0,1]");
  if (one_sided && k == 0) return 1.0;
  double total = 0.0;
  if (one_sided) {
    for (int j = k; j <= n; ++j) total += binomial_pmf(j, n, p0);
  } else {
    const double cutoff = binomial_pmf(k, n, p0) * (1.0 + 1e-7);
    for (int j = 0; j <= n; ++j) {
      const double pj = binomial_pmf(j, n, p0);
      if (pj <= cutoff) total += pj;
    }
  }
  return std::min(1.0, total);
}

// ---- episode ranking ----

RankingResult rank_from_evidence(const std::vector<EventEvidence>& events, const RewardSpec& truth, EventPooling pooling) {
  RankingResult r;
  for (const auto& e : events) r.events += e.frame_probabilities.empty() ? 0 : 1;
  r.evidence = r.events > 0;
  r.belief = accumulate(events, pooling);
  r.map = map_ranking(r.belief);
  if (r.evidence) {
    std::vector<double> a, b;
    for (auto t : kObjectTypes) {
      a.push_back(r.map.reward(t));
      b.push_back(truth.reward(t));
    }
    const auto stat = kendall_tau(a, b, false);
    r.tau = stat.tau;
    r.p_value = stat.p_value;
  }
  return r;
}

RankingResult rank_episode(const ModelParams& params, const SessionRecording& session, const RewardSpec& truth,
                           const WindowConfig& window, EventPooling pooling) {
  const auto samples = make_samples(session, window);
  return rank_from_evidence(collect_evidence(params, samples, session.log), truth, pooling);
}

std::string ranking_report_json(const RankingResult& r) {
  nlohmann::ordered_json j;
  j["evidence"] = r.evidence;
  j["events"] = r.events;
  j["posterior"] = r.belief.probabilities();
  j["map_ranking"] = {{"Passenger", r.map.reward(ObjectType::Passenger)},
                      {"Roadblock", r.map.reward(ObjectType::Roadblock)},
                      {"ParkedCar", r.map.reward(ObjectType::ParkedCar)}};
  if (r.evidence) {
    j["tau"] = r.tau;
    j["p_value"] = r.p_value;
  } else {
    j["tau"] = nullptr;
    j["p_value"] = nullptr;
  }
  return j.dump();
}

// ---- trajectory positivity ----

std::vector<double> positivity_series(const ModelParams& params, const SessionRecording& session,
                                      const WindowConfig& window) {
  const auto agg = extract_features(session.frames, window.pool, session.time.frames_per_tick());
  std::vector<WindowSample> samples;
  for (int t = 0; t < static_cast<int>(agg.size()); ++t)
    if (auto s = window_at(agg, {}, t, window)) samples.push_back(std::move(*s));
  std::vector<double> out;
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < samples.size(); start += kChunk) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(samples.size(), start + kChunk); ++i) idx.push_back(i);
    for (const auto& p : predict(params, make_batch(samples, idx))) out.push_back(p.positivity);
  }
  return out;
}

double trajectory_positivity(const std::vector<double>& series) {
  if (series.empty()) throw InvalidArgument("empty trajectory");
  return std::accumulate(series.begin(), series.end(), 0.0) / static_cast<double>(series.size());
}

double trajectory_positivity(const ModelParams& params, const SessionRecording& session, const WindowConfig& window) {
  return trajectory_positivity(positivity_series(params, session, window));
}

CrossSubjectRanking cross_subject_rank(const std::vector<std::vector<double>>& scores, const std::vector<double>& returns) {
  if (scores.empty()) throw InvalidArgument("no subjects");
  const std::size_t m = returns.size();
  if (m < 2) throw InvalidArgument("cross-subject ranking needs at least 2 trajectories");
  CrossSubjectRanking r;
  r.mean_score.assign(m, 0.0);
  for (const auto& row : scores) {
    if (row.size() != m) throw InvalidArgument("score row length differs from the number of trajectories");
    for (std::size_t t = 0; t < m; ++t) r.mean_score[t] += row[t] / static_cast<double>(scores.size());
  }
  r.order.resize(m);
  std::iota(r.order.begin(), r.order.end(), 0);
  std::stable_sort(r.order.begin(), r.order.end(), [&](int a, int b) {
    return r.mean_score[static_cast<std::size_t>(a)] > r.mean_score[static_cast<std::size_t>(b)];
  });
  r.statistic = kendall_tau(r.mean_score, returns, true);
  return r;
}

}  // namespace empathic
