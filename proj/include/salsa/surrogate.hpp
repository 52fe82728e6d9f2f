#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <istream>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "salsa/errors.hpp"
#include "salsa/rng.hpp"
#include "salsa/space.hpp"

namespace salsa {

struct GaussianPrediction {
  double mean = 0.0;
  double std = 1.0;
};

// Gaussian negative log likelihood of one observation:
//   L = log(2*pi)/2 + log(sigma) + ((y - mu)/sigma)^2 / 2
inline double mve_loss(double y, const GaussianPrediction& p) {
  if (!(p.std > 0)) {
    throw ConfigError("mve_loss requires std > 0");
  }
  const double z = (y - p.mean) / p.std;
  return 0.5 * std::log(2.0 * std::numbers::pi) + std::log(p.std) +
         0.5 * z * z;
}

// One datapoint per constituent synthon of every scored molecule. An item
// appears once per molecule it participated in; the spread across complements
// is the aleatoric part of its score distribution.
struct SynthonObservation {
  int vector_index;
  std::uint32_t item_index;
  double y;
};

struct SynthonDataset {
  std::vector<SynthonObservation> observations;

  static SynthonDataset from_entries(
      const std::vector<std::pair<Candidate, double>>& entries) {
    SynthonDataset ds;
    ds.observations.reserve(entries.size() * 2);
    for (const auto& [cand, y] : entries) {
      for (std::size_t v = 0; v < cand.indices.size(); ++v) {
        ds.observations.push_back(
            {static_cast<int>(v), cand.indices[v], y});
      }
    }
    return ds;
  }

  std::size_t size() const { return observations.size(); }
};

// Appends a one-hot vector tag; output dim = d + n_vectors.
inline std::vector<double> attach_vector_onehot(std::span<const double> features,
                                                int vector_index,
                                                int n_vectors) {
  if (vector_index < 0 || vector_index >= n_vectors) {
    throw ConfigError("one-hot vector index out of range");
  }
  std::vector<double> out(features.begin(), features.end());
  out.resize(features.size() + static_cast<std::size_t>(n_vectors), 0.0);
  out[features.size() + static_cast<std::size_t>(vector_index)] = 1.0;
  return out;
}

struct FitReport {
  std::vector<double> train_loss;  // per epoch, on the training split
  std::vector<double> val_loss;    // per epoch, on the holdout split
  int stopped_epoch = 0;           // 1-based epoch of the best model
  double best_val = 0.0;
};

enum class UncertaintyMode { mve, dropout };

struct MveRegressorConfig {
  int hidden_width = 300;
  int hidden_layers = 2;
  int max_epochs = 50;
  int batch_size = 64;
  double holdout_fraction = 0.20;
  int patience = 10;
  double lr_warmup = 1e-4;
  double lr_peak = 1e-3;
  double lr_final = 1e-4;
  double weight_decay = 0.0;
  double variance_floor = 1e-6;
  UncertaintyMode uncertainty = UncertaintyMode::mve;
  double dropout_p = 0.2;
  int dropout_passes = 10;

  void validate() const {
    if (hidden_width < 1 || hidden_layers < 1) {
      throw ConfigError("regressor needs >= 1 hidden layer of width >= 1");
    }
    if (!(holdout_fraction > 0 && holdout_fraction < 1)) {
      throw ConfigError("holdout fraction must lie in (0,1)");
    }
    if (patience < 1) throw ConfigError("patience must be >= 1");
    if (max_epochs < 1) throw ConfigError("max epochs must be >= 1");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (variance_floor <= 0) throw ConfigError("variance floor must be > 0");
    if (uncertainty == UncertaintyMode::dropout &&
        (dropout_p <= 0 || dropout_p >= 1 || dropout_passes < 2)) {
      throw ConfigError("dropout mode needs p in (0,1) and >= 2 passes");
    }
  }
};

namespace detail {

inline double softplus(double x) {
  // log(1 + e^x), stable for both tails.
  if (x > 30) return x;
  if (x < -30) return std::exp(x);
  return std::log1p(std::exp(x));
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

// Feed-forward regressor over item feature vectors with a two-output MVE head
// (mean and raw variance) or a one-output head trained on MSE when dropout
// uncertainty is selected. Rectifier activations; trained with
// adaptive-moment gradient descent, linear warmup over the first epoch then
// exponential decay to the final rate; 20% holdout early stopping.
class MveRegressor {
 public:
  MveRegressor(int input_dim, MveRegressorConfig config)
      : input_dim_(input_dim), config_(config) {
    config_.validate();
    if (input_dim_ < 1) throw ConfigError("input dim must be >= 1");
  }

  int input_dim() const { return input_dim_; }
  const MveRegressorConfig& config() const { return config_; }
  bool trained() const { return trained_; }
  const FitReport& report() const { return report_; }
  std::uint64_t inference_passes() const { return inference_passes_; }

  // X: one row per sample. Retrains from scratch (fresh init) every call.
  FitReport fit(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                RngStream stream) {
    if (X.rows() != y.size()) throw ConfigError("fit: X/y size mismatch");
    if (X.cols() != input_dim_) throw ConfigError("fit: feature dim mismatch");
    const std::int64_t n = X.rows();
    std::int64_t holdout =
        std::max<std::int64_t>(1, std::llround(config_.holdout_fraction *
                                               static_cast<double>(n)));
    std::int64_t train_n = n - holdout;
    if (train_n < 2) {
      throw ConfigError("dataset too small after holdout split (" +
                        std::to_string(train_n) + " training points)");
    }

    init_params(stream.child("init"));

    // Seeded random split.
    std::vector<std::uint32_t> order(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < order.size(); ++i)
      order[i] = static_cast<std::uint32_t>(i);
    Sampler split_sampler(stream.child("split"));
    split_sampler.shuffle(order);
    std::vector<std::uint32_t> train_idx(order.begin(),
                                         order.begin() + train_n);
    std::vector<std::uint32_t> val_idx(order.begin() + train_n, order.end());

    Eigen::MatrixXd Xtr = rows_of(X, train_idx);
    Eigen::VectorXd ytr = elems_of(y, train_idx);
    Eigen::MatrixXd Xval = rows_of(X, val_idx);
    Eigen::VectorXd yval = elems_of(y, val_idx);

    // Standardize targets on train-split statistics; predictions are mapped
    // back. Centering the targets is what lets 50 epochs suffice.
    y_mean_ = ytr.mean();
    y_scale_ = std::sqrt((ytr.array() - y_mean_).square().sum() /
                         static_cast<double>(train_n));
    if (!(y_scale_ > 1e-12)) y_scale_ = 1.0;
    ytr = (ytr.array() - y_mean_) / y_scale_;
    yval = (yval.array() - y_mean_) / y_scale_;

    const std::int64_t steps_per_epoch =
        (train_n + config_.batch_size - 1) / config_.batch_size;
    const std::int64_t total_steps = steps_per_epoch * config_.max_epochs;

    AdamState adam(params_);
    report_ = FitReport{};
    std::vector<Eigen::MatrixXd> best_params = params_;
    double best_val = std::numeric_limits<double>::infinity();
    int best_epoch = 0;
    int since_best = 0;
    std::int64_t step = 0;

    std::vector<std::uint32_t> pos(static_cast<std::size_t>(train_n));
    for (std::size_t i = 0; i < pos.size(); ++i) {
      pos[i] = static_cast<std::uint32_t>(i);
    }
    RngStream epoch_stream = stream.child("epochs");
    RngStream dropout_stream = stream.child("dropout-train");
    for (int epoch = 1; epoch <= config_.max_epochs; ++epoch) {
      Sampler shuf(epoch_stream.child_index(epoch));
      shuf.shuffle(pos);
      double epoch_loss = 0;
      for (std::int64_t b = 0; b < steps_per_epoch; ++b) {
        const std::int64_t lo = b * config_.batch_size;
        const std::int64_t hi =
            std::min<std::int64_t>(lo + config_.batch_size, train_n);
        std::vector<std::uint32_t> batch(pos.begin() + lo, pos.begin() + hi);
        Eigen::MatrixXd Xb = rows_of(Xtr, batch);
        Eigen::VectorXd yb = elems_of(ytr, batch);
        std::vector<Eigen::MatrixXd> grads;
        double loss;
        if (config_.uncertainty == UncertaintyMode::dropout) {
          loss = loss_and_grad(Xb, yb, grads,
                               dropout_stream.child("epoch", epoch)
                                   .child_index(static_cast<std::uint64_t>(b)));
        } else {
          loss = loss_and_grad(Xb, yb, grads, std::nullopt);
        }
        epoch_loss += loss * static_cast<double>(hi - lo);
        adam.step(params_, grads, schedule_lr(step, total_steps,
                                              steps_per_epoch),
                  config_.weight_decay);
        ++step;
      }
      report_.train_loss.push_back(epoch_loss / static_cast<double>(train_n));
      const double vloss = eval_loss(Xval, yval);
      report_.val_loss.push_back(vloss);
      if (vloss < best_val) {
        best_val = vloss;
        best_epoch = epoch;
        best_params = params_;
        since_best = 0;
      } else if (++since_best >= config_.patience) {
        break;
      }
    }
    params_ = std::move(best_params);
    report_.stopped_epoch = best_epoch;
    report_.best_val = best_val;
    trained_ = true;
    prediction_stream_ = stream.child("dropout-predict");
    return report_;
  }

  // One Gaussian per row of X. MVE mode: a single deterministic pass.
  // Dropout mode: `dropout_passes` stochastic passes; mean/std are the sample
  // statistics of those passes.
  std::vector<GaussianPrediction> predict(const Eigen::MatrixXd& X) {
    if (!trained_) throw Error("predict on untrained model");
    if (X.cols() != input_dim_) {
      throw ConfigError("predict: feature dim mismatch");
    }
    const std::int64_t n = X.rows();
    std::vector<GaussianPrediction> out(static_cast<std::size_t>(n));
    const double sigma_floor = std::sqrt(config_.variance_floor);
    if (config_.uncertainty == UncertaintyMode::mve) {
      Eigen::MatrixXd heads = forward(X, std::nullopt);
      for (std::int64_t i = 0; i < n; ++i) {
        const double v =
            (detail::softplus(heads(i, 1)) + config_.variance_floor) *
            y_scale_ * y_scale_;
        out[static_cast<std::size_t>(i)] = {
            y_mean_ + y_scale_ * heads(i, 0),
            std::max(std::sqrt(v), sigma_floor)};
      }
      inference_passes_ += static_cast<std::uint64_t>(n);
    } else {
      Eigen::MatrixXd passes = dropout_passes_matrix(X);
      const int P = config_.dropout_passes;
      for (std::int64_t i = 0; i < n; ++i) {
        double mean = 0;
        for (int p = 0; p < P; ++p) mean += passes(i, p);
        mean /= P;
        double ss = 0;
        for (int p = 0; p < P; ++p) {
          const double dlt = passes(i, p) - mean;
          ss += dlt * dlt;
        }
        const double sd = std::sqrt(ss / (P - 1));
        out[static_cast<std::size_t>(i)] = {mean, std::max(sd, sigma_floor)};
      }
    }
    return out;
  }

  // All stochastic dropout passes, one column per pass. Exposed so the
  // prediction statistics can be recomputed externally.
  Eigen::MatrixXd dropout_passes_matrix(const Eigen::MatrixXd& X) {
    if (!trained_) throw Error("predict on untrained model");
    const int P = config_.dropout_passes;
    Eigen::MatrixXd passes(X.rows(), P);
    for (int p = 0; p < P; ++p) {
      passes.col(p) = (forward(X, prediction_stream_.child_index(p)).col(0) *
                       y_scale_).array() + y_mean_;
      inference_passes_ += static_cast<std::uint64_t>(X.rows());
    }
    return passes;
  }

  // Mean batch loss at the current parameters (no dropout); the quantity the
  // finite-difference gradient oracle perturbs.
  double eval_loss(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) const {
    return const_cast<MveRegressor*>(this)->loss_only(X, y);
  }

  double loss_with_grad(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        std::vector<Eigen::MatrixXd>& grads) {
    return loss_and_grad(X, y, grads, std::nullopt);
  }

  // Parameters as (W, b) pairs packed per layer: params[2k] is the weight
  // matrix (in x out), params[2k+1] the bias row vector.
  std::vector<Eigen::MatrixXd>& params() { return params_; }
  const std::vector<Eigen::MatrixXd>& params() const { return params_; }
  void set_params(std::vector<Eigen::MatrixXd> p) {
    params_ = std::move(p);
    trained_ = true;
  }
  void mark_trained() { trained_ = true; }

  int output_dim() const {
    return config_.uncertainty == UncertaintyMode::mve ? 2 : 1;
  }

 private:
  struct AdamState {
    std::vector<Eigen::MatrixXd> m, v;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    std::int64_t t = 0;

    explicit AdamState(const std::vector<Eigen::MatrixXd>& params) {
      for (const auto& p : params) {
        m.emplace_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
        v.emplace_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      }
    }

    void step(std::vector<Eigen::MatrixXd>& params,
              const std::vector<Eigen::MatrixXd>& grads, double lr,
              double weight_decay) {
      ++t;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
      for (std::size_t i = 0; i < params.size(); ++i) {
        Eigen::MatrixXd g = grads[i];
        if (weight_decay > 0) g += weight_decay * params[i];
        m[i] = beta1 * m[i] + (1 - beta1) * g;
        v[i] = beta2 * v[i] + (1 - beta2) * g.cwiseProduct(g);
        Eigen::MatrixXd mhat = m[i] / bc1;
        Eigen::MatrixXd vhat = v[i] / bc2;
        params[i] -=
            lr * (mhat.array() / (vhat.array().sqrt() + eps)).matrix();
      }
    }
  };

  double schedule_lr(std::int64_t step, std::int64_t total_steps,
                     std::int64_t steps_per_epoch) const {
    // Linear warmup to the peak over the first epoch, then exponential decay
    // to the final rate at the last scheduled step.
    if (step < steps_per_epoch) {
      const double f = steps_per_epoch <= 1
                           ? 1.0
                           : static_cast<double>(step) /
                                 static_cast<double>(steps_per_epoch);
      return config_.lr_warmup + f * (config_.lr_peak - config_.lr_warmup);
    }
    const std::int64_t decay_steps = total_steps - steps_per_epoch;
    if (decay_steps <= 1) return config_.lr_final;
    const double f = static_cast<double>(step - steps_per_epoch) /
                     static_cast<double>(decay_steps);
    return config_.lr_peak *
           std::pow(config_.lr_final / config_.lr_peak, std::min(1.0, f));
  }

  void init_params(RngStream stream) {
    params_.clear();
    std::vector<int> dims;
    dims.push_back(input_dim_);
    for (int l = 0; l < config_.hidden_layers; ++l) {
      dims.push_back(config_.hidden_width);
    }
    dims.push_back(output_dim());
    std::uint64_t ctr = 0;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
      const int fan_in = dims[l];
      const int fan_out = dims[l + 1];
      const double scale = std::sqrt(6.0 / (fan_in + fan_out));
      Eigen::MatrixXd W(fan_in, fan_out);
      for (int r = 0; r < fan_in; ++r) {
        for (int c = 0; c < fan_out; ++c) {
          W(r, c) = (2.0 * stream.uniform01(ctr++) - 1.0) * scale;
        }
      }
      Eigen::MatrixXd b = Eigen::MatrixXd::Zero(1, fan_out);
      params_.push_back(std::move(W));
      params_.push_back(std::move(b));
    }
    // Start the raw-variance head near softplus^-1(1) so early batches see
    // unit predicted variance instead of a loss singularity.
    if (config_.uncertainty == UncertaintyMode::mve) {
      params_.back()(0, 1) = std::log(std::numbers::e - 1.0);
    }
    trained_ = false;
  }

  static Eigen::MatrixXd rows_of(const Eigen::MatrixXd& X,
                                 const std::vector<std::uint32_t>& idx) {
    Eigen::MatrixXd out(static_cast<std::int64_t>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = X.row(idx[i]);
    return out;
  }
  static Eigen::VectorXd elems_of(const Eigen::VectorXd& y,
                                  const std::vector<std::uint32_t>& idx) {
    Eigen::VectorXd out(static_cast<std::int64_t>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out(i) = y(idx[i]);
    return out;
  }

  // Forward pass. With a dropout stream, inverted dropout is applied to every
  // hidden activation (mask keyed by layer and unit so results are
  // independent of batch partitioning).
  Eigen::MatrixXd forward(const Eigen::MatrixXd& X,
                          std::optional<RngStream> dropout) const {
    Eigen::MatrixXd h = X;
    const std::size_t n_layers = params_.size() / 2;
    for (std::size_t l = 0; l < n_layers; ++l) {
      Eigen::MatrixXd z =
          (h * params_[2 * l]).rowwise() + params_[2 * l + 1].row(0);
      if (l + 1 < n_layers) {
        z = z.cwiseMax(0.0);
        if (dropout) {
          apply_dropout(z, *dropout, l);
        }
      }
      h = std::move(z);
    }
    return h;
  }

  void apply_dropout(Eigen::MatrixXd& z, const RngStream& stream,
                     std::size_t layer) const {
    const double keep = 1.0 - config_.dropout_p;
    RngStream ls = stream.child("layer").child_index(layer);
    for (std::int64_t r = 0; r < z.rows(); ++r) {
      for (std::int64_t c = 0; c < z.cols(); ++c) {
        const std::uint64_t ctr =
            static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(z.cols()) +
            static_cast<std::uint64_t>(c);
        if (ls.uniform01(ctr) < config_.dropout_p) {
          z(r, c) = 0.0;
        } else {
          z(r, c) /= keep;
        }
      }
    }
  }

  double loss_only(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
    Eigen::MatrixXd heads = forward(X, std::nullopt);
    const std::int64_t n = X.rows();
    double loss = 0;
    if (config_.uncertainty == UncertaintyMode::mve) {
      for (std::int64_t i = 0; i < n; ++i) {
        const double v =
            detail::softplus(heads(i, 1)) + config_.variance_floor;
        const double r = y(i) - heads(i, 0);
        loss += 0.5 * std::log(2.0 * std::numbers::pi) + 0.5 * std::log(v) +
                0.5 * r * r / v;
      }
    } else {
      for (std::int64_t i = 0; i < n; ++i) {
        const double r = y(i) - heads(i, 0);
        loss += 0.5 * r * r;
      }
    }
    return loss / static_cast<double>(n);
  }

  // Mean loss over the batch plus gradients wrt every parameter.
  double loss_and_grad(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                       std::vector<Eigen::MatrixXd>& grads,
                       std::optional<RngStream> dropout) {
    const std::int64_t n = X.rows();
    const std::size_t n_layers = params_.size() / 2;

    // Forward, caching activations.
    std::vector<Eigen::MatrixXd> acts;  // acts[l] = input to layer l
    acts.reserve(n_layers + 1);
    acts.push_back(X);
    std::vector<Eigen::MatrixXd> masks;  // dropout scale masks per hidden layer
    for (std::size_t l = 0; l < n_layers; ++l) {
      Eigen::MatrixXd z =
          (acts.back() * params_[2 * l]).rowwise() + params_[2 * l + 1].row(0);
      if (l + 1 < n_layers) {
        z = z.cwiseMax(0.0);
        if (dropout) {
          Eigen::MatrixXd before = z;
          apply_dropout(z, *dropout, l);
          // Combined backward mask: dropout scale (0 or 1/keep) fused with
          // the ReLU gate. Where the pre-dropout activation was zero the
          // ReLU gradient is zero anyway, so recording 0 there is exact.
          Eigen::MatrixXd mask = Eigen::MatrixXd::Zero(z.rows(), z.cols());
          for (std::int64_t r = 0; r < z.rows(); ++r) {
            for (std::int64_t c = 0; c < z.cols(); ++c) {
              if (before(r, c) != 0.0) mask(r, c) = z(r, c) / before(r, c);
            }
          }
          masks.push_back(std::move(mask));
        }
      }
      acts.push_back(std::move(z));
    }
    Eigen::MatrixXd& heads = acts.back();

    // Loss and head-gradient.
    Eigen::MatrixXd dhead(n, output_dim());
    double loss = 0;
    if (config_.uncertainty == UncertaintyMode::mve) {
      for (std::int64_t i = 0; i < n; ++i) {
        const double raw = heads(i, 1);
        const double v = detail::softplus(raw) + config_.variance_floor;
        const double r = y(i) - heads(i, 0);
        loss += 0.5 * std::log(2.0 * std::numbers::pi) + 0.5 * std::log(v) +
                0.5 * r * r / v;
        const double dmu = -r / v;
        const double dv = 0.5 / v - 0.5 * r * r / (v * v);
        dhead(i, 0) = dmu / static_cast<double>(n);
        dhead(i, 1) = dv * detail::sigmoid(raw) / static_cast<double>(n);
      }
    } else {
      for (std::int64_t i = 0; i < n; ++i) {
        const double r = y(i) - heads(i, 0);
        loss += 0.5 * r * r;
        dhead(i, 0) = -r / static_cast<double>(n);
      }
    }
    loss /= static_cast<double>(n);

    // Backward.
    grads.assign(params_.size(), Eigen::MatrixXd());
    Eigen::MatrixXd delta = dhead;
    for (std::size_t l = n_layers; l-- > 0;) {
      grads[2 * l] = acts[l].transpose() * delta;
      grads[2 * l + 1] = delta.colwise().sum();
      if (l > 0) {
        Eigen::MatrixXd dprev = delta * params_[2 * l].transpose();
        if (dropout) {
          dprev = dprev.cwiseProduct(masks[l - 1]);
        } else {
          dprev = (acts[l].array() > 0.0).cast<double>().matrix().cwiseProduct(
              dprev);
        }
        delta = std::move(dprev);
      }
    }
    return loss;
  }

  int input_dim_;
  MveRegressorConfig config_;
  std::vector<Eigen::MatrixXd> params_;
  bool trained_ = false;
  FitReport report_;
  RngStream prediction_stream_{0};
  std::uint64_t inference_passes_ = 0;
  double y_mean_ = 0.0;
  double y_scale_ = 1.0;

 public:
  // Dropout prediction stream key, serialized with checkpoints so stochastic
  // inference replays identically after a resume.
  std::uint64_t prediction_key() const { return prediction_stream_.key(); }
  void set_prediction_key(std::uint64_t k) { prediction_stream_ = RngStream(k); }
  double target_mean() const { return y_mean_; }
  double target_scale() const { return y_scale_; }
  void set_target_stats(double mean, double scale) {
    y_mean_ = mean;
    y_scale_ = scale;
  }
};

enum class SurrogateMode { per_vector, one_model };

inline std::string to_string(SurrogateMode m) {
  return m == SurrogateMode::per_vector ? "per-vector" : "one-model";
}

struct SurrogateConfig {
  SurrogateMode mode = SurrogateMode::per_vector;
  MveRegressorConfig regressor;
};

// Uniform driver-facing interface: retrain from scratch on the current
// ledger-derived dataset, then predict a Gaussian for every item of a vector.
// Swapping per-vector for one-model changes no driver code.
class SynthonSurrogate {
 public:
  virtual ~SynthonSurrogate() = default;

  virtual void fit(const ProductSpace& space, const SynthonDataset& data,
                   RngStream stream) = 0;
  virtual std::vector<GaussianPrediction> predict_all(const ProductSpace& space,
                                                      int vector_index) = 0;
  virtual bool trained() const = 0;
  // Cumulative single-item forward passes across all predict_all calls.
  virtual std::uint64_t inference_passes() const = 0;
  virtual const std::vector<FitReport>& reports() const = 0;
  virtual void save(std::ostream& os) const = 0;
  virtual void load(std::istream& is) = 0;
  virtual SurrogateMode mode() const = 0;
};

namespace detail {

constexpr std::int64_t kPredictChunk = 8192;

inline void save_matrices(std::ostream& os, const MveRegressor& reg) {
  os << "input_dim " << reg.input_dim() << "\n";
  os << "prediction_key " << reg.prediction_key() << "\n";
  os.precision(17);
  os << "target_stats " << reg.target_mean() << " " << reg.target_scale()
     << "\n";
  os << "params " << reg.params().size() << "\n";
  os.precision(17);
  for (const Eigen::MatrixXd& p : reg.params()) {
    os << "matrix " << p.rows() << " " << p.cols() << "\n";
    for (std::int64_t r = 0; r < p.rows(); ++r) {
      for (std::int64_t c = 0; c < p.cols(); ++c) {
        if (c) os << " ";
        os << p(r, c);
      }
      os << "\n";
    }
  }
}

inline void load_matrices(std::istream& is, MveRegressor& reg) {
  std::string tag;
  int input_dim = 0;
  std::uint64_t pred_key = 0;
  std::size_t n_params = 0;
  if (!(is >> tag >> input_dim) || tag != "input_dim") {
    throw IoError("surrogate checkpoint: bad input_dim line");
  }
  if (input_dim != reg.input_dim()) {
    throw ConfigError("surrogate checkpoint input dim " +
                      std::to_string(input_dim) + " != configured " +
                      std::to_string(reg.input_dim()));
  }
  if (!(is >> tag >> pred_key) || tag != "prediction_key") {
    throw IoError("surrogate checkpoint: bad prediction_key line");
  }
  double y_mean = 0, y_scale = 1;
  if (!(is >> tag >> y_mean >> y_scale) || tag != "target_stats") {
    throw IoError("surrogate checkpoint: bad target_stats line");
  }
  if (!(is >> tag >> n_params) || tag != "params") {
    throw IoError("surrogate checkpoint: bad params line");
  }
  std::vector<Eigen::MatrixXd> params;
  params.reserve(n_params);
  for (std::size_t i = 0; i < n_params; ++i) {
    std::int64_t rows = 0, cols = 0;
    if (!(is >> tag >> rows >> cols) || tag != "matrix" || rows < 1 ||
        cols < 1) {
      throw IoError("surrogate checkpoint: bad matrix header");
    }
    Eigen::MatrixXd m(rows, cols);
    for (std::int64_t r = 0; r < rows; ++r) {
      for (std::int64_t c = 0; c < cols; ++c) {
        if (!(is >> m(r, c))) {
          throw IoError("surrogate checkpoint: truncated matrix");
        }
      }
    }
    params.push_back(std::move(m));
  }
  reg.set_params(std::move(params));
  reg.set_prediction_key(pred_key);
  reg.set_target_stats(y_mean, y_scale);
}

}  // namespace detail

// One regressor per vector, each trained on that vector's slice of the
// dataset over raw item features.
class PerVectorSurrogate final : public SynthonSurrogate {
 public:
  PerVectorSurrogate(const ProductSpace& space, MveRegressorConfig config) {
    for (int v = 0; v < static_cast<int>(space.n_vectors()); ++v) {
      regressors_.emplace_back(space.set(v).feature_dim, config);
    }
  }

  void fit(const ProductSpace& space, const SynthonDataset& data,
           RngStream stream) override {
    reports_.clear();
    for (int v = 0; v < static_cast<int>(space.n_vectors()); ++v) {
      std::vector<const SynthonObservation*> slice;
      for (const auto& obs : data.observations) {
        if (obs.vector_index == v) slice.push_back(&obs);
      }
      const SynthonSet& set = space.set(v);
      Eigen::MatrixXd X(static_cast<std::int64_t>(slice.size()),
                        set.feature_dim);
      Eigen::VectorXd y(static_cast<std::int64_t>(slice.size()));
      for (std::size_t i = 0; i < slice.size(); ++i) {
        auto f = set.features_of(slice[i]->item_index);
        for (std::size_t k = 0; k < f.size(); ++k) {
          X(static_cast<std::int64_t>(i), static_cast<std::int64_t>(k)) = f[k];
        }
        y(static_cast<std::int64_t>(i)) = slice[i]->y;
      }
      reports_.push_back(regressors_[static_cast<std::size_t>(v)].fit(
          X, y, stream.child("vector", static_cast<std::uint64_t>(v))));
    }
  }

  std::vector<GaussianPrediction> predict_all(const ProductSpace& space,
                                              int vector_index) override {
    const SynthonSet& set = space.set(vector_index);
    MveRegressor& reg = regressors_.at(static_cast<std::size_t>(vector_index));
    const std::int64_t n = static_cast<std::int64_t>(set.size());
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                   Eigen::RowMajor>>
        all(set.features.data(), n, set.feature_dim);
    std::vector<GaussianPrediction> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t lo = 0; lo < n; lo += detail::kPredictChunk) {
      const std::int64_t m = std::min(detail::kPredictChunk, n - lo);
      Eigen::MatrixXd chunk = all.middleRows(lo, m);
      auto preds = reg.predict(chunk);
      out.insert(out.end(), preds.begin(), preds.end());
    }
    return out;
  }

  bool trained() const override {
    return std::all_of(regressors_.begin(), regressors_.end(),
                       [](const MveRegressor& r) { return r.trained(); });
  }
  std::uint64_t inference_passes() const override {
    std::uint64_t total = 0;
    for (const auto& r : regressors_) total += r.inference_passes();
    return total;
  }
  const std::vector<FitReport>& reports() const override { return reports_; }
  SurrogateMode mode() const override { return SurrogateMode::per_vector; }

  void save(std::ostream& os) const override {
    os << "salsa-surrogate v1 per-vector " << regressors_.size() << "\n";
    for (const auto& r : regressors_) detail::save_matrices(os, r);
  }
  void load(std::istream& is) override {
    std::string magic, version, mode;
    std::size_t n = 0;
    if (!(is >> magic >> version >> mode >> n) || magic != "salsa-surrogate" ||
        version != "v1") {
      throw IoError("unrecognized surrogate checkpoint header");
    }
    if (mode != "per-vector" || n != regressors_.size()) {
      throw ConfigError("surrogate checkpoint mode/shape mismatch");
    }
    for (auto& r : regressors_) detail::load_matrices(is, r);
  }

  MveRegressor& regressor(int v) {
    return regressors_.at(static_cast<std::size_t>(v));
  }

 private:
  std::vector<MveRegressor> regressors_;
  std::vector<FitReport> reports_;
};

// A single regressor shared across vectors; inputs carry a vector one-hot so
// the model can tell the pools apart.
class OneModelSurrogate final : public SynthonSurrogate {
 public:
  OneModelSurrogate(const ProductSpace& space, MveRegressorConfig config)
      : n_vectors_(static_cast<int>(space.n_vectors())),
        feature_dim_(space.feature_dim()),
        regressor_(space.feature_dim() + space.n_vectors(), config) {}

  void fit(const ProductSpace& space, const SynthonDataset& data,
           RngStream stream) override {
    reports_.clear();
    const std::int64_t n = static_cast<std::int64_t>(data.size());
    Eigen::MatrixXd X(n, feature_dim_ + n_vectors_);
    Eigen::VectorXd y(n);
    for (std::int64_t i = 0; i < n; ++i) {
      const auto& obs = data.observations[static_cast<std::size_t>(i)];
      auto f = space.set(obs.vector_index).features_of(obs.item_index);
      for (std::size_t k = 0; k < f.size(); ++k) {
        X(i, static_cast<std::int64_t>(k)) = f[k];
      }
      X.row(i).tail(n_vectors_).setZero();
      X(i, feature_dim_ + obs.vector_index) = 1.0;
      y(i) = obs.y;
    }
    reports_.push_back(regressor_.fit(X, y, stream.child("one-model")));
  }

  std::vector<GaussianPrediction> predict_all(const ProductSpace& space,
                                              int vector_index) override {
    const SynthonSet& set = space.set(vector_index);
    const std::int64_t n = static_cast<std::int64_t>(set.size());
    std::vector<GaussianPrediction> out;
    out.reserve(static_cast<std::size_t>(n));
    for (std::int64_t lo = 0; lo < n; lo += detail::kPredictChunk) {
      const std::int64_t m = std::min(detail::kPredictChunk, n - lo);
      Eigen::MatrixXd chunk =
          Eigen::MatrixXd::Zero(m, feature_dim_ + n_vectors_);
      for (std::int64_t i = 0; i < m; ++i) {
        auto f = set.features_of(static_cast<std::uint32_t>(lo + i));
        for (std::size_t k = 0; k < f.size(); ++k) {
          chunk(i, static_cast<std::int64_t>(k)) = f[k];
        }
        chunk(i, feature_dim_ + vector_index) = 1.0;
      }
      auto preds = regressor_.predict(chunk);
      out.insert(out.end(), preds.begin(), preds.end());
    }
    return out;
  }

  bool trained() const override { return regressor_.trained(); }
  std::uint64_t inference_passes() const override {
    return regressor_.inference_passes();
  }
  const std::vector<FitReport>& reports() const override { return reports_; }
  SurrogateMode mode() const override { return SurrogateMode::one_model; }

  void save(std::ostream& os) const override {
    os << "salsa-surrogate v1 one-model 1\n";
    detail::save_matrices(os, regressor_);
  }
  void load(std::istream& is) override {
    std::string magic, version, mode;
    std::size_t n = 0;
    if (!(is >> magic >> version >> mode >> n) || magic != "salsa-surrogate" ||
        version != "v1") {
      throw IoError("unrecognized surrogate checkpoint header");
    }
    if (mode != "one-model" || n != 1) {
      throw ConfigError("surrogate checkpoint mode/shape mismatch");
    }
    detail::load_matrices(is, regressor_);
  }

  MveRegressor& regressor() { return regressor_; }

 private:
  int n_vectors_;
  int feature_dim_;
  MveRegressor regressor_;
  std::vector<FitReport> reports_;
};

inline std::unique_ptr<SynthonSurrogate> make_surrogate(
    const ProductSpace& space, const SurrogateConfig& config) {
  if (config.mode == SurrogateMode::per_vector) {
    return std::make_unique<PerVectorSurrogate>(space, config.regressor);
  }
  return std::make_unique<OneModelSurrogate>(space, config.regressor);
}

// Exact conjugate-normal posteriors per item, for enumerable tabular spaces.
// With known observation variance the posterior after n observations
// summing to S is
//   precision = 1/sigma0^2 + n/sigma_obs^2
//   mean      = (mu0/sigma0^2 + S/sigma_obs^2) / precision
// Order-invariant by construction (only n and S enter).
class TabularGaussianModel {
 public:
  struct Prior {
    double mean = 0.0;
    double var = 1.0;
    double obs_var = 1.0;
  };

  // Auto mode: prior mean/variance and observation variance are computed
  // from the first fitted dataset (warm-up) and frozen thereafter.
  TabularGaussianModel() = default;
  explicit TabularGaussianModel(Prior prior)
      : prior_(prior), prior_frozen_(true) {
    if (prior.var <= 0) throw ConfigError("prior variance must be > 0");
    if (prior.obs_var < 0) {
      throw ConfigError("observation variance must be >= 0");
    }
  }

  bool fitted() const { return fitted_; }
  const Prior& prior() const {
    if (!prior_frozen_) throw Error("prior not yet frozen (no fit)");
    return prior_;
  }

  // Rebuild sufficient statistics from the full dataset.
  void fit(const ProductSpace& space, const SynthonDataset& data) {
    if (data.observations.empty()) {
      throw ConfigError("tabular fit on empty dataset");
    }
    if (!prior_frozen_) {
      double mean = 0;
      for (const auto& o : data.observations) mean += o.y;
      mean /= static_cast<double>(data.size());
      double ss = 0;
      for (const auto& o : data.observations) {
        ss += (o.y - mean) * (o.y - mean);
      }
      const double var =
          data.size() > 1 ? ss / static_cast<double>(data.size() - 1) : 1.0;
      prior_ = {mean, var > 0 ? var : 1.0, var > 0 ? var : 1.0};
      prior_frozen_ = true;
    }
    counts_.assign(static_cast<std::size_t>(space.n_vectors()), {});
    sums_.assign(static_cast<std::size_t>(space.n_vectors()), {});
    for (int v = 0; v < static_cast<int>(space.n_vectors()); ++v) {
      counts_[static_cast<std::size_t>(v)].assign(space.set(v).size(), 0);
      sums_[static_cast<std::size_t>(v)].assign(space.set(v).size(), 0.0);
    }
    for (const auto& o : data.observations) observe(o.vector_index, o.item_index, o.y);
    fitted_ = true;
  }

  void observe(int vector_index, std::uint32_t item, double y) {
    auto& n = counts_.at(static_cast<std::size_t>(vector_index)).at(item);
    auto& s = sums_.at(static_cast<std::size_t>(vector_index)).at(item);
    n += 1;
    s += y;
  }

  GaussianPrediction posterior(int vector_index, std::uint32_t item) const {
    const std::uint64_t n =
        counts_.at(static_cast<std::size_t>(vector_index)).at(item);
    const double s = sums_.at(static_cast<std::size_t>(vector_index)).at(item);
    if (!prior_frozen_) throw Error("posterior query before fit");
    if (prior_.obs_var == 0.0) {
      // Observations are exact: any observation pins the posterior.
      if (n == 0) return {prior_.mean, std::sqrt(prior_.var)};
      return {s / static_cast<double>(n), 0.0};
    }
    const double precision = 1.0 / prior_.var +
                             static_cast<double>(n) / prior_.obs_var;
    const double mean =
        (prior_.mean / prior_.var + s / prior_.obs_var) / precision;
    return {mean, std::sqrt(1.0 / precision)};
  }

  std::vector<GaussianPrediction> predict_all(int vector_index) const {
    const auto& cnt = counts_.at(static_cast<std::size_t>(vector_index));
    std::vector<GaussianPrediction> out(cnt.size());
    for (std::uint32_t i = 0; i < cnt.size(); ++i) {
      out[i] = posterior(vector_index, i);
    }
    return out;
  }

 private:
  Prior prior_;
  bool prior_frozen_ = false;
  bool fitted_ = false;
  std::vector<std::vector<std::uint64_t>> counts_;
  std::vector<std::vector<double>> sums_;
};

}  // namespace salsa
