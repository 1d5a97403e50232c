#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "empathic/error.hpp"
#include "empathic/reaction_model.hpp"
#include "empathic/rng.hpp"

using namespace empathic;

namespace {

ModelConfig small_config(double dropout = 0.0) {
  ModelConfig c;
  c.fau_in = 20;
  c.head_in = 20;
  c.fau_enc = 8;
  c.head_enc = 8;
  c.trunk = {16, 8};
  c.aux_out = 10;
  c.dropout = dropout;
  return c;
}

// Class signal lives in the first few FAU columns; `noise` scales the rest.
std::vector<WindowSample> toy_samples(int n, std::uint64_t seed, const ModelConfig& c, bool shuffle_labels = false) {
  Rng rng(seed);
  std::vector<WindowSample> out;
  for (int i = 0; i < n; ++i) {
    WindowSample s;
    s.label = i % 3;
    s.fau.resize(static_cast<std::size_t>(c.fau_in));
    s.head.resize(static_cast<std::size_t>(c.head_in));
    s.aux.resize(static_cast<std::size_t>(c.aux_out));
    for (auto& v : s.fau) v = rng.normal();
    for (auto& v : s.head) v = rng.normal();
    for (auto& v : s.aux) v = rng.bernoulli(0.2) ? 1.0 : 0.0;
    s.fau[static_cast<std::size_t>(s.label)] += 3.0;
    s.aux[static_cast<std::size_t>(s.label)] = 1.0;
    out.push_back(std::move(s));
  }
  if (shuffle_labels) {
    for (std::size_t i = out.size(); i > 1; --i) std::swap(out[i - 1].label, out[rng.uniform_index(i)].label);
  }
  for (auto& s : out) s.y_bin = s.label == 2 ? 1 : 0;
  return out;
}

IndexSplit range_split(int train, int test, int validation) {
  IndexSplit s;
  std::size_t i = 0;
  for (int k = 0; k < train; ++k) s.train.push_back(i++);
  for (int k = 0; k < test; ++k) s.test.push_back(i++);
  for (int k = 0; k < validation; ++k) s.validation.push_back(i++);
  return s;
}

}  // namespace

TEST(ReactionModel, DefaultLayout) {
  const auto p = ModelParams::init(ModelConfig{}, 1);
  const std::size_t expected = (455 * 64 + 64) + (702 * 32 + 32) + (96 * 128 + 128) + 2 * 128 + (128 * 128 + 128) +
                               2 * 128 + (128 * 64 + 64) + 2 * 64 + (64 * 8 + 8) + 2 * 8 + (8 * 3 + 3) + (128 * 130 + 130);
  EXPECT_EQ(p.size(), expected);
  EXPECT_NE(p.describe().find("Dropout(p=0.6314)"), std::string::npos);
}

TEST(ReactionModel, ZeroWeightsGiveUniformOutput) {
  auto p = ModelParams(ModelConfig{});
  p.theta().setZero();
  WindowSample s;
  s.fau.assign(455, 0.3);
  s.head.assign(702, -0.2);
  const auto pred = predict_one(p, s);
  for (double v : pred.probabilities) EXPECT_NEAR(v, 1.0 / 3.0, 1e-12);
  EXPECT_NEAR(pred.positivity, 1.0 / 3.0, 1e-12);
  EXPECT_EQ(pred.o.size(), 130u);
}

TEST(ReactionModel, LossWorkedExample) {
  const auto pred = make_prediction({0.0, 0.0, std::log(2.0)}, {});
  EXPECT_NEAR(pred.probabilities[2], 0.5, 1e-12);
  EXPECT_NEAR(pred.positivity, 0.5, 1e-12);
  const auto t = loss(pred, 2, 1, {}, LossWeights{});
  EXPECT_NEAR(t.ce, std::log(2.0), 1e-12);
  EXPECT_NEAR(t.bin, std::log(2.0), 1e-12);
  EXPECT_NEAR(t.total, 3.0 * std::log(2.0), 1e-12);
  const auto neg = loss(pred, 0, 0, {}, LossWeights{});
  EXPECT_NEAR(neg.ce, std::log(4.0), 1e-12);
  EXPECT_NEAR(neg.bin, std::log(2.0), 1e-12);
}

TEST(ReactionModel, LossIsWeightedSumOfTerms) {
  const auto pred = make_prediction({0.3, -1.2, 0.8}, {0.5, 0.1, -0.4});
  const std::vector<double> a{1.0, 0.0, 0.0};
  const LossWeights w{0.7, 1.9, 0.4};
  const auto t = loss(pred, 1, 0, a, w);
  const double aux = std::sqrt(0.25 + 0.01 + 0.16);
  EXPECT_NEAR(t.aux, aux, 1e-12);
  EXPECT_NEAR(t.total, 0.7 * t.ce + 1.9 * t.bin + 0.4 * aux, 1e-12);
  EXPECT_THROW(loss(pred, 1, 0, {1.0}, w), InvalidArgument);
}

TEST(ReactionModel, PositivityMonotoneInPositiveLogit) {
  double prev = 0.0;
  for (double z2 = -5.0; z2 <= 5.0; z2 += 0.5) {
    const double pos = make_prediction({0.4, -0.3, z2}, {}).positivity;
    EXPECT_GT(pos, prev);
    prev = pos;
  }
}

TEST(ReactionModel, GradientMatchesFiniteDifferences) {
  const auto c = small_config(0.3);
  auto p = ModelParams::init(c, 7);
  const auto samples = toy_samples(6, 11, c);
  const auto batch = make_batch(samples);
  const LossWeights w{1.0, 2.0, 1.0};
  const std::uint64_t mask = 99;
  const auto step = forward_backward(p, batch, w, mask);
  EXPECT_NEAR(step.loss, train_loss(p, batch, w, mask), 1e-12);
  const double h = 1e-6;
  double worst = 0.0;
  for (Eigen::Index i = 0; i < p.theta().size(); ++i) {
    const double keep = p.theta()[i];
    p.theta()[i] = keep + h;
    const double up = train_loss(p, batch, w, mask);
    p.theta()[i] = keep - h;
    const double down = train_loss(p, batch, w, mask);
    p.theta()[i] = keep;
    const double fd = (up - down) / (2 * h);
    const double err = std::abs(fd - step.gradient[i]) / std::max(1.0, std::abs(fd));
    worst = std::max(worst, err);
  }
  EXPECT_LT(worst, 1e-5);
}

TEST(ReactionModel, CrossEntropyOnlyGradientIsSoftmaxMinusOneHot) {
  // Reduced case: the class head's bias gradient is mean(p - e_y).
  const auto c = small_config();
  const auto p = ModelParams::init(c, 3);
  const auto samples = toy_samples(5, 4, c);
  const auto step = forward_backward(p, make_batch(samples), LossWeights{1.0, 0.0, 0.0}, 0);
  std::array<double, 3> expect{};
  for (std::size_t r = 0; r < samples.size(); ++r)
    for (int j = 0; j < 3; ++j)
      expect[static_cast<std::size_t>(j)] +=
          (step.predictions[r].probabilities[static_cast<std::size_t>(j)] - (samples[r].label == j ? 1.0 : 0.0)) / 5.0;
  const auto& bias = p.class_head().bias;
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(step.gradient[static_cast<Eigen::Index>(bias.offset) + j], expect[static_cast<std::size_t>(j)], 1e-12);
  // with lambda2 = 0 the auxiliary head receives nothing
  const auto& aux = p.aux_head().weight;
  EXPECT_EQ(step.gradient.segment(static_cast<Eigen::Index>(aux.offset), aux.rows * aux.cols).norm(), 0.0);
}

TEST(ReactionModel, DuplicatedBatchGivesSameLossAndGradient) {
  const auto c = small_config();
  const auto p = ModelParams::init(c, 5);
  auto samples = toy_samples(4, 6, c);
  const auto once = forward_backward(p, make_batch(samples), LossWeights{}, 0);
  const auto doubled_samples = [&] {
    auto d = samples;
    d.insert(d.end(), samples.begin(), samples.end());
    return d;
  }();
  const auto twice = forward_backward(p, make_batch(doubled_samples), LossWeights{}, 0);
  EXPECT_NEAR(once.loss, twice.loss, 1e-12);
  EXPECT_LT((once.gradient - twice.gradient).norm(), 1e-10);
}

TEST(ReactionModel, DropoutIsUnbiased) {
  auto c = small_config(0.5);
  c.trunk = {8};
  const auto p = ModelParams::init(c, 8);
  auto c0 = c;
  c0.dropout = 0.0;
  ModelParams p0(c0);
  p0.theta() = p.theta();
  const auto batch = make_batch(toy_samples(4, 9, c));
  const auto reference = forward_backward(p0, batch, LossWeights{}, 0).last_hidden;
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(reference.rows(), reference.cols());
  const int draws = 20000;
  for (int s = 0; s < draws; ++s) mean += forward_backward(p, batch, LossWeights{}, static_cast<std::uint64_t>(s)).last_hidden;
  mean /= draws;
  // each unit is a scaled Bernoulli: sd of the mean is |x| / sqrt(draws)
  EXPECT_LT((mean - reference).cwiseAbs().maxCoeff(), 5.0 * reference.cwiseAbs().maxCoeff() / std::sqrt(draws));
}

TEST(ReactionModel, WidthMismatchRejected) {
  const auto p = ModelParams::init(small_config(), 1);
  WindowSample s;
  s.fau.assign(21, 0.0);
  s.head.assign(20, 0.0);
  EXPECT_THROW(predict_one(p, s), InvalidArgument);
}

TEST(ReactionModel, RunningStatsUpdate) {
  const auto c = small_config();
  auto p = ModelParams::init(c, 2);
  const auto step = forward_backward(p, make_batch(toy_samples(6, 1, c)), LossWeights{}, 0);
  update_running_stats(p, step);
  EXPECT_LT((p.running_mean[0] - 0.1 * step.batch_mean[0]).norm(), 1e-12);
  EXPECT_LT((p.running_var[0] - (0.9 * Eigen::VectorXd::Ones(16) + 0.1 * step.batch_var[0])).norm(), 1e-12);
}

TEST(ReactionModel, AdamFirstStepIsLearningRateTimesSign) {
  Adam adam(3, 0.01);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(3);
  Eigen::VectorXd g(3);
  g << 2.0, -0.5, 0.0;
  adam.step(theta, g);
  EXPECT_NEAR(theta[0], -0.01, 1e-9);
  EXPECT_NEAR(theta[1], 0.01, 1e-9);
  EXPECT_EQ(theta[2], 0.0);
}

TEST(Training, LearnsSeparableData) {
  TrainConfig cfg;
  cfg.model = small_config(0.2);
  cfg.learning_rate = 3e-3;
  cfg.max_epochs = 40;
  cfg.seed = 5;
  const auto samples = toy_samples(600, 21, cfg.model);
  const auto result = train(cfg, samples, range_split(360, 120, 120));
  ASSERT_FALSE(result.curves.empty());
  EXPECT_GT(result.curves.front().train_loss, result.curves[static_cast<std::size_t>(result.best_epoch - 1)].train_loss);
  const auto val = evaluate(result.best, samples, range_split(360, 120, 120).validation, cfg.weights);
  EXPECT_GT(val.accuracy, 0.9);
}

TEST(Training, SameSeedSameCurves) {
  TrainConfig cfg;
  cfg.model = small_config(0.4);
  cfg.max_epochs = 5;
  cfg.seed = 12;
  const auto samples = toy_samples(120, 2, cfg.model);
  const auto a = train(cfg, samples, range_split(80, 40, 0));
  const auto b = train(cfg, samples, range_split(80, 40, 0));
  ASSERT_EQ(a.curves.size(), b.curves.size());
  for (std::size_t i = 0; i < a.curves.size(); ++i) {
    EXPECT_EQ(a.curves[i].train_loss, b.curves[i].train_loss);
    EXPECT_EQ(a.curves[i].test_loss, b.curves[i].test_loss);
  }
  EXPECT_EQ(a.best.theta(), b.best.theta());
}

TEST(Training, ShuffledLabelsStayNearChance) {
  TrainConfig cfg;
  cfg.model = small_config(0.5);
  cfg.max_epochs = 30;
  cfg.seed = 3;
  const auto samples = toy_samples(900, 8, cfg.model, true);
  const auto result = train(cfg, samples, range_split(450, 450, 0));
  double best_ce = 1e9;
  for (const auto& r : result.curves) best_ce = std::min(best_ce, r.test_ce);
  EXPECT_GT(best_ce, std::log(3.0) - 0.05);
}

TEST(Training, RejectsDegenerateSplits) {
  TrainConfig cfg;
  cfg.model = small_config();
  const auto samples = toy_samples(10, 1, cfg.model);
  EXPECT_THROW(train(cfg, samples, range_split(1, 5, 0)), InsufficientData);
  EXPECT_THROW(train(cfg, samples, range_split(6, 0, 0)), InsufficientData);
}

TEST(Training, CurvesCsvHeader) {
  std::ostringstream os;
  write_curves_csv(os, {EpochRecord{1, 1.5, 1.4, 1.1}});
  EXPECT_EQ(os.str().substr(0, os.str().find('\n')), "epoch,train_loss,test_loss,test_ce,validation_loss,validation_accuracy");
}

TEST(Checkpoint, RoundTripPreservesPredictions) {
  Checkpoint ck;
  ck.config.model = small_config(0.3);
  ck.config.seed = 77;
  ck.params = ModelParams::init(ck.config.model, 4);
  ck.params.running_mean[1].setConstant(0.25);
  ck.params.running_var[0].setConstant(1.5);
  std::stringstream ss;
  save_checkpoint(ss, ck);
  const auto back = load_checkpoint(ss);
  EXPECT_EQ(back.config, ck.config);
  EXPECT_EQ(back.params.theta(), ck.params.theta());
  const auto samples = toy_samples(3, 5, ck.config.model);
  const auto a = predict(ck.params, make_batch(samples));
  const auto b = predict(back.params, make_batch(samples));
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i].z, b[i].z);
}

TEST(Checkpoint, TruncatedOrCorruptRejected) {
  Checkpoint ck;
  ck.config.model = small_config();
  ck.params = ModelParams::init(ck.config.model, 1);
  std::stringstream ss;
  save_checkpoint(ss, ck);
  const auto bytes = ss.str();
  for (std::size_t cut : {std::size_t{3}, bytes.size() / 2, bytes.size() - 1}) {
    std::istringstream in(bytes.substr(0, cut));
    EXPECT_THROW(load_checkpoint(in), IntegrityError) << cut;
  }
  auto flipped = bytes;
  flipped[bytes.size() / 2] ^= 0x10;
  std::istringstream in(flipped);
  EXPECT_THROW(load_checkpoint(in), IntegrityError);
}

TEST(TrainConfigJson, RoundTripAndDefaults) {
  TrainConfig c;
  c.learning_rate = 3e-4;
  c.window = {2, 7, 9};
  c.model = ModelConfig::for_window(c.window);
  c.model.trunk = {64, 8};
  c.weights.lambda2 = 0.5;
  c.seed = 42;
  EXPECT_EQ(train_config_from_json(train_config_to_json(c)), c);
  const auto d = train_config_from_json("{}");
  EXPECT_EQ(d.model.fau_in, 455);
  EXPECT_EQ(d.weights, LossWeights{});
  EXPECT_THROW(train_config_from_json("{"), ParseError);
  EXPECT_THROW(train_config_from_json(R"({"weights":{"lambda1":-1}})"), InvalidArgument);
}

TEST(RandomSearch, SingletonSpaceReturnsIt) {
  SearchSpace space;
  TrainConfig base;
  int calls = 0;
  const auto r = random_search(space, 3, 2, base, [&](const TrainConfig&, int) { return static_cast<double>(++calls); }, 1);
  EXPECT_EQ(calls, 6);
  EXPECT_EQ(r.draws.size(), 3u);
  EXPECT_EQ(r.best.window.l, 12);
  EXPECT_DOUBLE_EQ(r.draws[0].mean_loss, 1.5);
  EXPECT_EQ(r.best.learning_rate, 1e-3);
}

TEST(RandomSearch, PicksLowestMeanLoss) {
  SearchSpace space;
  space.learning_rate = {1e-4, 1e-3, 1e-2};
  const auto r = random_search(space, 30, 1, TrainConfig{}, [](const TrainConfig& c, int) { return std::abs(std::log10(c.learning_rate) + 3); }, 2);
  EXPECT_EQ(r.best.learning_rate, 1e-3);
  const auto wide = SearchSpace::around_published();
  EXPECT_EQ(wide.window.size(), 11u * 13u);
}

TEST(ReactionModel, FullSizeStepTiming) {
  const ModelConfig c;
  const auto p = ModelParams::init(c, 1);
  const auto samples = toy_samples(8, 1, c);
  const auto batch = make_batch(samples);
  const auto t0 = std::chrono::steady_clock::now();
  for (int i = 0; i < 20; ++i) forward_backward(p, batch, LossWeights{}, static_cast<std::uint64_t>(i));
  const double ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count() / 20;
  RecordProperty("ms_per_step", std::to_string(ms));
  std::cout << "full-size step: " << ms << " ms\n";
}
