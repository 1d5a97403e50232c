#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <string>
#include <vector>

#include "empathic/feature_pipeline.hpp"

namespace empathic {

inline constexpr int kDataSchemaVersion = 1;

struct ModelConfig {
  int fau_in = 455;
  int head_in = 702;
  int fau_enc = 64;
  int head_enc = 32;
  std::vector<int> trunk{128, 128, 64, 8};
  int classes = 3;
  int aux_out = 130;
  double dropout = 0.6314;
  double bn_momentum = 0.1;
  double bn_eps = 1e-5;
  double leaky_slope = 0.01;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;

  // Default architecture for a window config.
  static ModelConfig for_window(const WindowConfig& w);
};

// All trainable tensors live in one flat vector; layers are views into it.
class ModelParams {
 public:
  struct Tensor {
    std::size_t offset;
    int rows;
    int cols;
  };
  struct Layer {
    Tensor weight;  // out x in
    Tensor bias;    // out x 1
  };
  struct Norm {
    Tensor gamma;
    Tensor beta;
  };

  ModelParams() = default;
  explicit ModelParams(ModelConfig config);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases, unit
  // gamma and zero beta for batch norm.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  const ModelConfig& config() const { return config_; }
  Eigen::VectorXd& theta() { return theta_; }
  const Eigen::VectorXd& theta() const { return theta_; }
  std::size_t size() const { return static_cast<std::size_t>(theta_.size()); }

  Eigen::Map<Eigen::MatrixXd> view(const Tensor& t) { return {theta_.data() + t.offset, t.rows, t.cols}; }
  Eigen::Map<const Eigen::MatrixXd> view(const Tensor& t) const { return {theta_.data() + t.offset, t.rows, t.cols}; }

  const Layer& fau_encoder() const { return fau_enc_; }
  const Layer& head_encoder() const { return head_enc_; }
  const std::vector<Layer>& trunk() const { return trunk_; }
  const std::vector<Norm>& norms() const { return norms_; }
  const Layer& class_head() const { return out_; }
  const Layer& aux_head() const { return aux_; }

  // batch-norm running statistics, one pair per trunk block
  std::vector<Eigen::VectorXd> running_mean;
  std::vector<Eigen::VectorXd> running_var;

  // Human-readable layer listing, one line per module.
  std::string describe() const;

 private:
  Tensor add_tensor(int rows, int cols);
  ModelConfig config_;
  Eigen::VectorXd theta_;
  std::size_t used_ = 0;
  Layer fau_enc_{}, head_enc_{}, out_{}, aux_{};
  std::vector<Layer> trunk_;
  std::vector<Norm> norms_;
};

struct Prediction {
  std::array<double, 3> z{};
  std::array<double, 3> probabilities{};
  std::array<double, 2> z_bin{};
  double positivity = 0.0;
  std::vector<double> o;
};

// z_bin = (logsumexp(z_-5, z_-1), z_+6); positivity = softmax(z_bin)[pos].
Prediction make_prediction(const std::array<double, 3>& z, std::vector<double> o);

struct LossWeights {
  double lambda_ce = 1.0;
  double lambda1 = 2.0;
  double lambda2 = 1.0;
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

struct LossTerms {
  double ce = 0.0;
  double bin = 0.0;
  double aux = 0.0;
  double total = 0.0;
};

// lambda_ce * CE(z, y) + lambda1 * CE(z_bin, y_bin) + lambda2 * ||a - o||_2.
// An empty `a` contributes no auxiliary term.
LossTerms loss(const Prediction& pred, int y, int y_bin, const std::vector<double>& a, const LossWeights& w);

// A batch of window samples in matrix form (one row per sample).
struct Batch {
  Eigen::MatrixXd fau;
  Eigen::MatrixXd head;
  Eigen::MatrixXd aux;  // zero columns when samples carry no annotations
  std::vector<int> y;
  std::vector<int> y_bin;
  int size() const { return static_cast<int>(y.size()); }
};

Batch make_batch(const std::vector<WindowSample>& samples, const std::vector<std::size_t>& indices);
Batch make_batch(const std::vector<WindowSample>& samples);

// Eval mode: running statistics, no dropout. Rejects width mismatches.
std::vector<Prediction> predict(const ModelParams& params, const Batch& batch);
Prediction predict_one(const ModelParams& params, const WindowSample& sample);

struct TrainStep {
  double loss = 0.0;                         // mean over the batch
  Eigen::VectorXd gradient;                  // same layout as theta
  std::vector<Eigen::VectorXd> batch_mean;   // per-block batch statistics
  std::vector<Eigen::VectorXd> batch_var;    // unbiased
  std::vector<Prediction> predictions;       // train-mode outputs
  Eigen::MatrixXd last_hidden;               // input to the class head
};

// Train-mode forward + backward of the mean batch loss. Dropout masks come
// from Rng(mask_seed), so repeated calls with one seed are deterministic.
TrainStep forward_backward(const ModelParams& params, const Batch& batch, const LossWeights& w, std::uint64_t mask_seed);

// Mean train-mode loss only (for finite differences).
double train_loss(const ModelParams& params, const Batch& batch, const LossWeights& w, std::uint64_t mask_seed);

// Folds a train step's batch statistics into the running estimates.
void update_running_stats(ModelParams& params, const TrainStep& step);

// ---- optimisation ----

class Adam {
 public:
  explicit Adam(std::size_t n, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(Eigen::VectorXd& theta, const Eigen::VectorXd& grad);
  long steps() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 8;
  WindowConfig window;
  ModelConfig model;
  LossWeights weights;
  int max_epochs = 60;
  int patience = 12;
  std::uint64_t seed = 0;
  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double test_loss = 0.0;
  double test_ce = 0.0;
  double validation_loss = std::numeric_limits<double>::quiet_NaN();
  double validation_accuracy = std::numeric_limits<double>::quiet_NaN();
};

struct TrainResult {
  ModelParams best;
  std::vector<EpochRecord> curves;
  int best_epoch = 0;
  double best_test_loss = 0.0;
};

struct EvalSummary {
  double loss = 0.0;
  double ce = 0.0;
  double accuracy = 0.0;
};
EvalSummary evaluate(const ModelParams& params, const std::vector<WindowSample>& samples,
                     const std::vector<std::size_t>& indices, const LossWeights& w);

// Adam on split.train; after each epoch the test loss is evaluated in eval
// mode and the parameters of the best epoch kept. Stops after `patience`
// epochs without improvement. Throws Error on a non-finite loss.
TrainResult train(const TrainConfig& config, const std::vector<WindowSample>& samples, const IndexSplit& split);

void write_curves_csv(std::ostream& os, const std::vector<EpochRecord>& curves);

// ---- random search ----

struct SearchSpace {
  std::vector<double> learning_rate{1e-3};
  std::vector<int> batch_size{8};
  std::vector<std::pair<int, int>> window{{0, 12}};
  std::vector<double> dropout{0.6314};
  std::vector<double> lambda1{2.0};
  std::vector<double> lambda2{1.0};
  std::vector<std::vector<int>> trunk{{128, 128, 64, 8}};

  // Window candidates span the reaction window (-2.8 s .. +3.6 s) in
  // aggregated frames; the other axes cover a modest range around the
  // published configuration.
  static SearchSpace around_published(int pool = kDefaultPool, double fps = 30.0);
};

struct SearchDraw {
  TrainConfig config;
  std::vector<double> fold_losses;
  double mean_loss = 0.0;
};

struct SearchResult {
  TrainConfig best;
  std::vector<SearchDraw> draws;
};

// `evaluate_fold(config, fold)` returns the fold's test loss.
SearchResult random_search(const SearchSpace& space, int n_draws, int folds, const TrainConfig& base,
                           const std::function<double(const TrainConfig&, int)>& evaluate_fold, std::uint64_t seed);

// ---- checkpoints ----

struct Checkpoint {
  ModelParams params;
  TrainConfig config;
  int data_schema_version = kDataSchemaVersion;
};

void save_checkpoint(std::ostream& os, const Checkpoint& ck);
void save_checkpoint_file(const std::string& path, const Checkpoint& ck);
// Throws IntegrityError on truncation, corruption, version or shape mismatch.
Checkpoint load_checkpoint(std::istream& is);
Checkpoint load_checkpoint_file(const std::string& path);

std::string train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const std::string& text);

}  // namespace empathic
