#include "empathic/reaction_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "empathic/error.hpp"

namespace empathic {

using Eigen::MatrixXd;
using Eigen::RowVectorXd;
using Eigen::VectorXd;
using json = nlohmann::json;

ModelConfig ModelConfig::for_window(const WindowConfig& w) {
  ModelConfig c;
  c.fau_in = w.fau_width();
  c.head_in = w.head_width();
  c.aux_out = w.aux_width();
  return c;
}

// ---- parameters ----

ModelParams::Tensor ModelParams::add_tensor(int rows, int cols) {
  Tensor t{used_, rows, cols};
  used_ += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
  return t;
}

ModelParams::ModelParams(ModelConfig config) : config_(std::move(config)) {
  const auto& c = config_;
  if (c.trunk.empty()) throw InvalidArgument("trunk needs at least one block");
  if (!(c.dropout >= 0.0 && c.dropout < 1.0)) throw InvalidArgument("dropout must lie in [0,1)");
  fau_enc_ = {add_tensor(c.fau_enc, c.fau_in), add_tensor(c.fau_enc, 1)};
  head_enc_ = {add_tensor(c.head_enc, c.head_in), add_tensor(c.head_enc, 1)};
  int in = c.fau_enc + c.head_enc;
  for (int width : c.trunk) {
    trunk_.push_back({add_tensor(width, in), add_tensor(width, 1)});
    norms_.push_back({add_tensor(width, 1), add_tensor(width, 1)});
    running_mean.push_back(VectorXd::Zero(width));
    running_var.push_back(VectorXd::Ones(width));
    in = width;
  }
  out_ = {add_tensor(c.classes, in), add_tensor(c.classes, 1)};
  aux_ = {add_tensor(c.aux_out, c.trunk.front()), add_tensor(c.aux_out, 1)};
  theta_ = VectorXd::Zero(static_cast<Eigen::Index>(used_));
  for (const auto& n : norms_) view(n.gamma).setOnes();
}

ModelParams ModelParams::init(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p(config);
  Rng rng(seed);
  auto fill = [&](const Layer& l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.cols));
    auto w = p.view(l.weight);
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-bound, bound);
    auto b = p.view(l.bias);
    for (Eigen::Index i = 0; i < b.rows(); ++i) b(i, 0) = rng.uniform(-bound, bound);
  };
  fill(p.fau_enc_);
  fill(p.head_enc_);
  for (const auto& l : p.trunk_) fill(l);
  fill(p.out_);
  fill(p.aux_);
  return p;
}

std::string ModelParams::describe() const {
  std::ostringstream os;
  const auto& c = config_;
  os << "(facial_action_unit_input): Linear(in_features=" << c.fau_in << ", out_features=" << c.fau_enc << ")\n";
  os << "(head_pose_input): Linear(in_features=" << c.head_in << ", out_features=" << c.head_enc << ")\n";
  int in = c.fau_enc + c.head_enc;
  for (std::size_t i = 0; i < c.trunk.size(); ++i) {
    os << "(hidden " << i << "): Linear(in_features=" << in << ", out_features=" << c.trunk[i] << ") BatchNorm1d("
       << c.trunk[i] << ", eps=" << c.bn_eps << ", momentum=" << c.bn_momentum << ") LeakyReLU(" << c.leaky_slope
       << ") Dropout(p=" << c.dropout << ")\n";
    in = c.trunk[i];
  }
  os << "(out): Linear(in_features=" << in << ", out_features=" << c.classes << ")\n";
  os << "(aux): Linear(in_features=" << c.trunk.front() << ", out_features=" << c.aux_out << ")\n";
  return os.str();
}

// ---- predictions and loss ----

namespace {

double logsumexp(double a, double b) {
  const double m = std::max(a, b);
  return m + std::log(std::exp(a - m) + std::exp(b - m));
}

double logsumexp3(const std::array<double, 3>& z) {
  const double m = std::max({z[0], z[1], z[2]});
  return m + std::log(std::exp(z[0] - m) + std::exp(z[1] - m) + std::exp(z[2] - m));
}

}  // namespace

Prediction make_prediction(const std::array<double, 3>& z, std::vector<double> o) {
  Prediction p;
  p.z = z;
  const double lse = logsumexp3(z);
  for (std::size_t i = 0; i < 3; ++i) p.probabilities[i] = std::exp(z[i] - lse);
  p.z_bin = {logsumexp(z[0], z[1]), z[2]};
  p.positivity = 1.0 / (1.0 + std::exp(p.z_bin[0] - p.z_bin[1]));
  p.o = std::move(o);
  return p;
}

LossTerms loss(const Prediction& pred, int y, int y_bin, const std::vector<double>& a, const LossWeights& w) {
  LossTerms t;
  const double lse = logsumexp3(pred.z);
  t.ce = lse - pred.z[static_cast<std::size_t>(y)];
  t.bin = y_bin ? lse - pred.z[2] : lse - pred.z_bin[0];
  if (!a.empty()) {
    if (a.size() != pred.o.size()) throw InvalidArgument("auxiliary label width mismatch");
    double ss = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ss += (a[i] - pred.o[i]) * (a[i] - pred.o[i]);
    t.aux = std::sqrt(ss);
  }
  t.total = w.lambda_ce * t.ce + w.lambda1 * t.bin + w.lambda2 * t.aux;
  return t;
}

Batch make_batch(const std::vector<WindowSample>& samples, const std::vector<std::size_t>& indices) {
  Batch b;
  const auto n = static_cast<Eigen::Index>(indices.size());
  if (indices.empty()) return b;
  const auto& first = samples[indices.front()];
  b.fau.resize(n, static_cast<Eigen::Index>(first.fau.size()));
  b.head.resize(n, static_cast<Eigen::Index>(first.head.size()));
  bool with_aux = true;
  for (auto i : indices) with_aux &= samples[i].aux.size() == first.aux.size() && !samples[i].aux.empty();
  b.aux.resize(n, with_aux ? static_cast<Eigen::Index>(first.aux.size()) : 0);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& s = samples[indices[static_cast<std::size_t>(r)]];
    if (s.fau.size() != first.fau.size() || s.head.size() != first.head.size()) {
      throw InvalidArgument("samples in one batch have different window widths");
    }
    b.fau.row(r) = Eigen::Map<const RowVectorXd>(s.fau.data(), static_cast<Eigen::Index>(s.fau.size()));
    b.head.row(r) = Eigen::Map<const RowVectorXd>(s.head.data(), static_cast<Eigen::Index>(s.head.size()));
    if (with_aux) b.aux.row(r) = Eigen::Map<const RowVectorXd>(s.aux.data(), static_cast<Eigen::Index>(s.aux.size()));
    b.y.push_back(s.label);
    b.y_bin.push_back(s.y_bin);
  }
  return b;
}

Batch make_batch(const std::vector<WindowSample>& samples) {
  std::vector<std::size_t> idx(samples.size());
  std::iota(idx.begin(), idx.end(), 0);
  return make_batch(samples, idx);
}

// ---- forward / backward ----

namespace {

struct BlockCache {
  MatrixXd input;   // H_i
  MatrixXd xhat;
  MatrixXd y;       // after affine batch norm, before the activation
  MatrixXd mask;    // inverted-dropout scale per unit (empty when no dropout)
  VectorXd inv_std;
  VectorXd mean;
  VectorXd var_unbiased;
};

struct Forward {
  MatrixXd h0;
  std::vector<BlockCache> blocks;
  MatrixXd aux_input;  // output of block 0
  MatrixXd last;       // output of the final block
  MatrixXd z;
  MatrixXd o;
};

void check_widths(const ModelParams& p, const Batch& b) {
  const auto& c = p.config();
  if (b.fau.cols() != c.fau_in || b.head.cols() != c.head_in) {
    throw InvalidArgument("input widths " + std::to_string(b.fau.cols()) + "/" + std::to_string(b.head.cols()) +
                          " do not match the model's " + std::to_string(c.fau_in) + "/" + std::to_string(c.head_in));
  }
  if (b.aux.cols() != 0 && b.aux.cols() != c.aux_out) throw InvalidArgument("auxiliary label width mismatch");
}

MatrixXd affine(const ModelParams& p, const ModelParams::Layer& l, const MatrixXd& x) {
  MatrixXd y = x * p.view(l.weight).transpose();
  y.rowwise() += p.view(l.bias).col(0).transpose();
  return y;
}

Forward run_forward(const ModelParams& p, const Batch& b, bool train, Rng* masks) {
  const auto& c = p.config();
  const Eigen::Index n = b.fau.rows();
  Forward f;
  f.h0.resize(n, c.fau_enc + c.head_enc);
  f.h0.leftCols(c.fau_enc) = affine(p, p.fau_encoder(), b.fau);
  f.h0.rightCols(c.head_enc) = affine(p, p.head_encoder(), b.head);
  MatrixXd h = f.h0;
  for (std::size_t i = 0; i < p.trunk().size(); ++i) {
    BlockCache bc;
    bc.input = h;
    const MatrixXd a = affine(p, p.trunk()[i], h);
    if (train) {
      bc.mean = a.colwise().mean().transpose();
      const MatrixXd centered = a.rowwise() - bc.mean.transpose();
      const VectorXd var = centered.array().square().colwise().sum().transpose() / static_cast<double>(n);
      bc.var_unbiased = n > 1 ? VectorXd(var * (static_cast<double>(n) / static_cast<double>(n - 1))) : var;
      bc.inv_std = (var.array() + c.bn_eps).rsqrt();
      bc.xhat = centered * bc.inv_std.asDiagonal();
    } else {
      bc.inv_std = (p.running_var[i].array() + c.bn_eps).rsqrt();
      bc.xhat = (a.rowwise() - p.running_mean[i].transpose()) * bc.inv_std.asDiagonal();
    }
    const auto& norm = p.norms()[i];
    bc.y = bc.xhat * p.view(norm.gamma).col(0).asDiagonal();
    bc.y.rowwise() += p.view(norm.beta).col(0).transpose();
    h = bc.y.unaryExpr([&](double v) { return v > 0 ? v : c.leaky_slope * v; });
    if (train && c.dropout > 0.0) {
      bc.mask.resize(h.rows(), h.cols());
      const double keep = 1.0 - c.dropout;
      for (Eigen::Index col = 0; col < h.cols(); ++col)
        for (Eigen::Index row = 0; row < h.rows(); ++row) bc.mask(row, col) = masks->bernoulli(keep) ? 1.0 / keep : 0.0;
      h = h.cwiseProduct(bc.mask);
    }
    if (i == 0) f.aux_input = h;
    f.blocks.push_back(std::move(bc));
  }
  f.last = h;
  f.z = affine(p, p.class_head(), h);
  f.o = affine(p, p.aux_head(), f.aux_input);
  return f;
}

Prediction row_prediction(const Forward& f, Eigen::Index r) {
  std::array<double, 3> z{f.z(r, 0), f.z(r, 1), f.z(r, 2)};
  std::vector<double> o(static_cast<std::size_t>(f.o.cols()));
  for (Eigen::Index j = 0; j < f.o.cols(); ++j) o[static_cast<std::size_t>(j)] = f.o(r, j);
  return make_prediction(z, std::move(o));
}

void add_linear_grad(const ModelParams& p, VectorXd& g, const ModelParams::Layer& l, const MatrixXd& d_out,
                     const MatrixXd& input) {
  Eigen::Map<MatrixXd>(g.data() + l.weight.offset, l.weight.rows, l.weight.cols) += d_out.transpose() * input;
  Eigen::Map<MatrixXd>(g.data() + l.bias.offset, l.bias.rows, 1) += d_out.colwise().sum().transpose();
  (void)p;
}

}  // namespace

std::vector<Prediction> predict(const ModelParams& params, const Batch& batch) {
  check_widths(params, batch);
  const auto f = run_forward(params, batch, false, nullptr);
  std::vector<Prediction> out;
  out.reserve(static_cast<std::size_t>(batch.fau.rows()));
  for (Eigen::Index r = 0; r < batch.fau.rows(); ++r) out.push_back(row_prediction(f, r));
  return out;
}

Prediction predict_one(const ModelParams& params, const WindowSample& sample) {
  return predict(params, make_batch({sample}, {0})).front();
}

TrainStep forward_backward(const ModelParams& p, const Batch& b, const LossWeights& w, std::uint64_t mask_seed) {
  check_widths(p, b);
  const auto& c = p.config();
  const Eigen::Index n = b.fau.rows();
  if (n == 0) throw InvalidArgument("empty batch");
  Rng masks(mask_seed);
  auto f = run_forward(p, b, true, &masks);

  TrainStep step;
  step.gradient = VectorXd::Zero(static_cast<Eigen::Index>(p.size()));
  MatrixXd dz = MatrixXd::Zero(n, 3);
  MatrixXd d_o = MatrixXd::Zero(n, c.aux_out);
  const double inv_n = 1.0 / static_cast<double>(n);
  const bool with_aux = b.aux.cols() > 0;

  for (Eigen::Index r = 0; r < n; ++r) {
    auto pred = row_prediction(f, r);
    std::vector<double> a;
    if (with_aux) a = std::vector<double>(b.aux.row(r).begin(), b.aux.row(r).end());
    const auto terms = loss(pred, b.y[static_cast<std::size_t>(r)], b.y_bin[static_cast<std::size_t>(r)], a, w);
    step.loss += terms.total * inv_n;

    const auto& pr = pred.probabilities;
    const int y = b.y[static_cast<std::size_t>(r)];
    std::array<double, 3> q{};  // binary-head target distribution over the 3 logits
    if (b.y_bin[static_cast<std::size_t>(r)]) {
      q[2] = 1.0;
    } else {
      const double neg = pr[0] + pr[1];
      q[0] = pr[0] / neg;
      q[1] = pr[1] / neg;
    }
    for (int j = 0; j < 3; ++j) {
      const double ce = pr[static_cast<std::size_t>(j)] - (j == y ? 1.0 : 0.0);
      const double bin = pr[static_cast<std::size_t>(j)] - q[static_cast<std::size_t>(j)];
      dz(r, j) = (w.lambda_ce * ce + w.lambda1 * bin) * inv_n;
    }
    if (with_aux && terms.aux > 0.0 && w.lambda2 != 0.0) {
      d_o.row(r) = (f.o.row(r) - b.aux.row(r)) * (w.lambda2 / terms.aux * inv_n);
    }
    step.predictions.push_back(std::move(pred));
  }

  VectorXd& g = step.gradient;
  add_linear_grad(p, g, p.class_head(), dz, f.last);
  MatrixXd dh = dz * p.view(p.class_head().weight);
  add_linear_grad(p, g, p.aux_head(), d_o, f.aux_input);
  const MatrixXd dh_aux = d_o * p.view(p.aux_head().weight);

  for (std::size_t i = p.trunk().size(); i-- > 0;) {
    const auto& bc = f.blocks[i];
    if (i == 0) dh += dh_aux;
    if (bc.mask.size() > 0) dh = dh.cwiseProduct(bc.mask);
    const MatrixXd dy = dh.cwiseProduct(bc.y.unaryExpr([&](double v) { return v > 0 ? 1.0 : c.leaky_slope; }));
    const auto& norm = p.norms()[i];
    Eigen::Map<MatrixXd>(g.data() + norm.gamma.offset, norm.gamma.rows, 1) += dy.cwiseProduct(bc.xhat).colwise().sum().transpose();
    Eigen::Map<MatrixXd>(g.data() + norm.beta.offset, norm.beta.rows, 1) += dy.colwise().sum().transpose();
    const MatrixXd dxhat = dy * p.view(norm.gamma).col(0).asDiagonal();
    const RowVectorXd sum_dxhat = dxhat.colwise().sum();
    const RowVectorXd sum_dxhat_xhat = dxhat.cwiseProduct(bc.xhat).colwise().sum();
    MatrixXd da = (dxhat * static_cast<double>(n)).rowwise() - sum_dxhat;
    da -= bc.xhat * sum_dxhat_xhat.asDiagonal();
    da = da * (bc.inv_std * inv_n).asDiagonal();
    add_linear_grad(p, g, p.trunk()[i], da, bc.input);
    dh = da * p.view(p.trunk()[i].weight);
  }
  add_linear_grad(p, g, p.fau_encoder(), dh.leftCols(c.fau_enc), b.fau);
  add_linear_grad(p, g, p.head_encoder(), dh.rightCols(c.head_enc), b.head);

  for (auto& bc : f.blocks) {
    step.batch_mean.push_back(bc.mean);
    step.batch_var.push_back(bc.var_unbiased);
  }
  step.last_hidden = std::move(f.last);
  return step;
}

double train_loss(const ModelParams& p, const Batch& b, const LossWeights& w, std::uint64_t mask_seed) {
  check_widths(p, b);
  Rng masks(mask_seed);
  const auto f = run_forward(p, b, true, &masks);
  double total = 0.0;
  for (Eigen::Index r = 0; r < b.fau.rows(); ++r) {
    std::vector<double> a;
    if (b.aux.cols() > 0) a = std::vector<double>(b.aux.row(r).begin(), b.aux.row(r).end());
    total += loss(row_prediction(f, r), b.y[static_cast<std::size_t>(r)], b.y_bin[static_cast<std::size_t>(r)], a, w).total;
  }
  return total / static_cast<double>(b.fau.rows());
}

void update_running_stats(ModelParams& params, const TrainStep& step) {
  const double m = params.config().bn_momentum;
  for (std::size_t i = 0; i < step.batch_mean.size(); ++i) {
    params.running_mean[i] = (1.0 - m) * params.running_mean[i] + m * step.batch_mean[i];
    params.running_var[i] = (1.0 - m) * params.running_var[i] + m * step.batch_var[i];
  }
}

// ---- Adam ----

Adam::Adam(std::size_t n, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(VectorXd::Zero(static_cast<Eigen::Index>(n))),
      v_(VectorXd::Zero(static_cast<Eigen::Index>(n))) {}

void Adam::step(VectorXd& theta, const VectorXd& grad) {
  ++t_;
  m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
  v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  theta.array() -= lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

// ---- training ----

EvalSummary evaluate(const ModelParams& params, const std::vector<WindowSample>& samples,
                     const std::vector<std::size_t>& indices, const LossWeights& w) {
  EvalSummary s;
  if (indices.empty()) {
    s.loss = s.ce = s.accuracy = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  constexpr std::size_t kChunk = 256;
  int correct = 0;
  for (std::size_t start = 0; start < indices.size(); start += kChunk) {
    const std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                         indices.begin() + static_cast<std::ptrdiff_t>(std::min(indices.size(), start + kChunk)));
    const auto preds = predict(params, make_batch(samples, chunk));
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto& smp = samples[chunk[i]];
      const auto t = loss(preds[i], smp.label, smp.y_bin, smp.aux, w);
      s.loss += t.total;
      s.ce += t.ce;
      const auto& pr = preds[i].probabilities;
      const int arg = static_cast<int>(std::max_element(pr.begin(), pr.end()) - pr.begin());
      if (arg == smp.label) ++correct;
    }
  }
  const double n = static_cast<double>(indices.size());
  s.loss /= n;
  s.ce /= n;
  s.accuracy = correct / n;
  return s;
}

TrainResult train(const TrainConfig& config, const std::vector<WindowSample>& samples, const IndexSplit& split) {
  if (split.train.size() < 2) throw InsufficientData("training split has fewer than 2 samples");
  if (split.test.empty()) throw InsufficientData("test split is empty; early stopping needs it");
  if (config.batch_size < 2) throw InvalidArgument("batch size must be at least 2 (batch norm)");
  Rng rng(config.seed);
  auto params = ModelParams::init(config.model, rng.fork_seed());
  Adam adam(params.size(), config.learning_rate);

  TrainResult result;
  result.best = params;
  result.best_test_loss = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order = split.train;
  int since_best = 0;
  const auto bs = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.uniform_index(i)]);
    double total = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += bs) {
      const std::size_t end = std::min(order.size(), start + bs);
      if (end - start < 2) break;  // a lone sample gives batch norm nothing to normalise
      const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
      const auto step = forward_backward(params, make_batch(samples, idx), config.weights, rng.next_u64());
      if (!std::isfinite(step.loss) || !step.gradient.allFinite()) {
        throw Error("training diverged at epoch " + std::to_string(epoch) + ", batch starting at " +
                    std::to_string(start) + " (loss " + std::to_string(step.loss) + ")");
      }
      adam.step(params.theta(), step.gradient);
      update_running_stats(params, step);
      total += step.loss * static_cast<double>(end - start);
      seen += end - start;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = seen ? total / static_cast<double>(seen) : 0.0;
    const auto test = evaluate(params, samples, split.test, config.weights);
    rec.test_loss = test.loss;
    rec.test_ce = test.ce;
    if (!split.validation.empty()) {
      const auto val = evaluate(params, samples, split.validation, config.weights);
      rec.validation_loss = val.loss;
      rec.validation_accuracy = val.accuracy;
    }
    if (!std::isfinite(rec.test_loss)) throw Error("non-finite test loss at epoch " + std::to_string(epoch));
    result.curves.push_back(rec);
    if (rec.test_loss < result.best_test_loss) {
      result.best_test_loss = rec.test_loss;
      result.best_epoch = epoch;
      result.best = params;
      since_best = 0;
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  return result;
}

void write_curves_csv(std::ostream& os, const std::vector<EpochRecord>& curves) {
  os << "epoch,train_loss,test_loss,test_ce,validation_loss,validation_accuracy\n";
  os.precision(10);
  for (const auto& r : curves) {
    os << r.epoch << ',' << r.train_loss << ',' << r.test_loss << ',' << r.test_ce << ',';
    if (std::isfinite(r.validation_loss)) os << r.validation_loss;
    os << ',';
    if (std::isfinite(r.validation_accuracy)) os << r.validation_accuracy;
    os << '\n';
  }
}

// ---- random search ----

SearchSpace SearchSpace::around_published(int pool, double fps) {
  SearchSpace s;
  const double frame_s = pool / fps;
  const int k_max = static_cast<int>(std::ceil(2.8 / frame_s - 1e-9));
  const int l_max = static_cast<int>(std::ceil(3.6 / frame_s - 1e-9));
  s.window.clear();
  for (int k = 0; k <= k_max; ++k)
    for (int l = 0; l <= l_max; ++l) s.window.emplace_back(k, l);
  s.learning_rate = {1e-4, 3e-4, 1e-3, 3e-3};
  s.batch_size = {8, 16, 32};
  s.dropout = {0.2, 0.4, 0.6314};
  s.lambda1 = {0.0, 1.0, 2.0, 4.0};
  s.lambda2 = {0.0, 0.5, 1.0, 2.0};
  s.trunk = {{128, 128, 64, 8}, {128, 64, 8}, {64, 8}, {128, 128, 64, 32}};
  return s;
}

SearchResult random_search(const SearchSpace& space, int n_draws, int folds, const TrainConfig& base,
                           const std::function<double(const TrainConfig&, int)>& evaluate_fold, std::uint64_t seed) {
  if (n_draws < 1) throw InvalidArgument("random search needs at least one draw");
  if (folds < 1) throw InvalidArgument("random search needs at least one fold");
  Rng rng(seed);
  auto pick = [&](const auto& v) {
    if (v.empty()) throw InvalidArgument("empty search axis");
    return v[rng.uniform_index(v.size())];
  };
  SearchResult result;
  double best = std::numeric_limits<double>::infinity();
  for (int d = 0; d < n_draws; ++d) {
    TrainConfig c = base;
    c.learning_rate = pick(space.learning_rate);
    c.batch_size = pick(space.batch_size);
    const auto [k, l] = pick(space.window);
    c.window.k = k;
    c.window.l = l;
    const double dropout = pick(space.dropout);
    c.weights.lambda1 = pick(space.lambda1);
    c.weights.lambda2 = pick(space.lambda2);
    const auto trunk = pick(space.trunk);
    c.model = ModelConfig::for_window(c.window);
    c.model.dropout = dropout;
    c.model.trunk = trunk;
    SearchDraw draw;
    draw.config = c;
    for (int f = 0; f < folds; ++f) draw.fold_losses.push_back(evaluate_fold(c, f));
    draw.mean_loss = std::accumulate(draw.fold_losses.begin(), draw.fold_losses.end(), 0.0) / folds;
    if (draw.mean_loss < best) {
      best = draw.mean_loss;
      result.best = c;
    }
    result.draws.push_back(std::move(draw));
  }
  return result;
}

// ---- serialisation ----

std::string train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["window"] = {{"k", c.window.k}, {"l", c.window.l}, {"pool", c.window.pool}};
  j["model"] = {{"fau_in", c.model.fau_in},     {"head_in", c.model.head_in},         {"fau_enc", c.model.fau_enc},
                {"head_enc", c.model.head_enc}, {"trunk", c.model.trunk},             {"classes", c.model.classes},
                {"aux_out", c.model.aux_out},   {"dropout", c.model.dropout},         {"bn_momentum", c.model.bn_momentum},
                {"bn_eps", c.model.bn_eps},     {"leaky_slope", c.model.leaky_slope}};
  j["weights"] = {{"lambda_ce", c.weights.lambda_ce}, {"lambda1", c.weights.lambda1}, {"lambda2", c.weights.lambda2}};
  j["max_epochs"] = c.max_epochs;
  j["patience"] = c.patience;
  j["seed"] = c.seed;
  return j.dump(2);
}

TrainConfig train_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("train config: ") + e.what());
  }
  // every field optional; absent ones keep their defaults
  TrainConfig c;
  try {
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    if (j.contains("window")) {
      const auto& w = j["window"];
      c.window.k = w.value("k", c.window.k);
      c.window.l = w.value("l", c.window.l);
      c.window.pool = w.value("pool", c.window.pool);
    }
    c.model = ModelConfig::for_window(c.window);
    if (j.contains("model")) {
      const auto& m = j["model"];
      c.model.fau_in = m.value("fau_in", c.model.fau_in);
      c.model.head_in = m.value("head_in", c.model.head_in);
      c.model.fau_enc = m.value("fau_enc", c.model.fau_enc);
      c.model.head_enc = m.value("head_enc", c.model.head_enc);
      c.model.trunk = m.value("trunk", c.model.trunk);
      c.model.classes = m.value("classes", c.model.classes);
      c.model.aux_out = m.value("aux_out", c.model.aux_out);
      c.model.dropout = m.value("dropout", c.model.dropout);
      c.model.bn_momentum = m.value("bn_momentum", c.model.bn_momentum);
      c.model.bn_eps = m.value("bn_eps", c.model.bn_eps);
      c.model.leaky_slope = m.value("leaky_slope", c.model.leaky_slope);
    }
    if (j.contains("weights")) {
      const auto& w = j["weights"];
      c.weights.lambda_ce = w.value("lambda_ce", c.weights.lambda_ce);
      c.weights.lambda1 = w.value("lambda1", c.weights.lambda1);
      c.weights.lambda2 = w.value("lambda2", c.weights.lambda2);
    }
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.patience = j.value("patience", c.patience);
    c.seed = j.value("seed", c.seed);
  } catch (const json::exception& e) {
    throw SchemaError(std::string("train config: ") + e.what());
  }
  if (c.weights.lambda1 < 0 || c.weights.lambda2 < 0 || c.weights.lambda_ce < 0) {
    throw InvalidArgument("loss weights must be non-negative");
  }
  return c;
}

namespace {

constexpr char kMagic[4] = {'E', 'M', 'P', 'C'};
constexpr std::uint32_t kFormatVersion = 1;

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  return h;
}

template <typename T>
void put(std::string& out, const T& v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

class Reader {
 public:
  explicit Reader(const std::string& s) : s_(s) {}
  template <typename T>
  T get() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, s_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string bytes(std::size_t n) {
    need(n);
    auto out = s_.substr(pos_, n);
    pos_ += n;
    return out;
  }
  std::size_t pos() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > s_.size()) throw IntegrityError("checkpoint truncated");
  }
  const std::string& s_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(std::ostream& os, const Checkpoint& ck) {
  nlohmann::ordered_json header;
  header["config"] = json::parse(train_config_to_json(ck.config));
  header["data_schema_version"] = ck.data_schema_version;
  header["parameters"] = ck.params.size();
  header["architecture"] = ck.params.describe();
  // the architecture that actually shaped the weights
  header["config"]["model"]["trunk"] = ck.params.config().trunk;
  const std::string h = header.dump();

  std::string body;
  body.append(kMagic, 4);
  put(body, kFormatVersion);
  put(body, static_cast<std::uint32_t>(ck.data_schema_version));
  put(body, static_cast<std::uint64_t>(h.size()));
  body += h;
  put(body, static_cast<std::uint64_t>(ck.params.size()));
  body.append(reinterpret_cast<const char*>(ck.params.theta().data()), ck.params.size() * sizeof(double));
  for (std::size_t i = 0; i < ck.params.running_mean.size(); ++i) {
    const auto& m = ck.params.running_mean[i];
    const auto& v = ck.params.running_var[i];
    body.append(reinterpret_cast<const char*>(m.data()), static_cast<std::size_t>(m.size()) * sizeof(double));
    body.append(reinterpret_cast<const char*>(v.data()), static_cast<std::size_t>(v.size()) * sizeof(double));
  }
  put(body, fnv1a(body));
  os.write(body.data(), static_cast<std::streamsize>(body.size()));
  if (!os) throw Error("failed to write checkpoint");
}

void save_checkpoint_file(const std::string& path, const Checkpoint& ck) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  save_checkpoint(out, ck);
}

Checkpoint load_checkpoint(std::istream& is) {
  const std::string data((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (data.size() < 4 + 4 + 4 + 8 + 8) throw IntegrityError("checkpoint truncated");
  if (std::memcmp(data.data(), kMagic, 4) != 0) throw IntegrityError("not a checkpoint file");
  std::uint64_t stored = 0;
  std::memcpy(&stored, data.data() + data.size() - 8, 8);
  const std::string body = data.substr(0, data.size() - 8);

  Reader r(body);
  r.bytes(4);
  const auto version = r.get<std::uint32_t>();
  if (version != kFormatVersion) throw IntegrityError("unsupported checkpoint version " + std::to_string(version));
  const auto schema = r.get<std::uint32_t>();
  if (schema != static_cast<std::uint32_t>(kDataSchemaVersion)) {
    throw IntegrityError("checkpoint data schema " + std::to_string(schema) + " does not match " +
                         std::to_string(kDataSchemaVersion));
  }
  const auto header_len = r.get<std::uint64_t>();
  if (header_len > body.size()) throw IntegrityError("checkpoint truncated");
  const auto header_text = r.bytes(static_cast<std::size_t>(header_len));
  if (fnv1a(body) != stored) throw IntegrityError("checksum mismatch (file truncated or corrupted)");

  Checkpoint ck;
  json header;
  try {
    header = json::parse(header_text);
    ck.config = train_config_from_json(header.at("config").dump());
  } catch (const Error&) {
    throw IntegrityError("unreadable checkpoint header");
  } catch (const json::exception&) {
    throw IntegrityError("unreadable checkpoint header");
  }
  ck.data_schema_version = static_cast<int>(schema);
  ModelParams params(ck.config.model);
  const auto n = r.get<std::uint64_t>();
  if (n != params.size()) {
    throw IntegrityError("checkpoint holds " + std::to_string(n) + " parameters; architecture needs " +
                         std::to_string(params.size()));
  }
  const auto theta = r.bytes(static_cast<std::size_t>(n) * sizeof(double));
  std::memcpy(params.theta().data(), theta.data(), theta.size());
  for (std::size_t i = 0; i < params.running_mean.size(); ++i) {
    auto& m = params.running_mean[i];
    auto& v = params.running_var[i];
    const auto mb = r.bytes(static_cast<std::size_t>(m.size()) * sizeof(double));
    std::memcpy(m.data(), mb.data(), mb.size());
    const auto vb = r.bytes(static_cast<std::size_t>(v.size()) * sizeof(double));
    std::memcpy(v.data(), vb.data(), vb.size());
  }
  if (r.pos() != body.size()) throw IntegrityError("trailing bytes in checkpoint");
  ck.params = std::move(params);
  return ck;
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint " + path);
  return load_checkpoint(in);
}

}  // namespace empathic
