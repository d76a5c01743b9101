#include "fcnpose/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fcnpose/errors.hpp"
#include "fcnpose/rng.hpp"
#include "ftz.hpp"

namespace fcnpose {
namespace {

constexpr std::uint64_t kShuffleStream = 0x53485546;  // "SHUF"

struct AdamState {
  ModelWeights m;
  ModelWeights v;
  std::size_t step = 0;
};

template <typename Fn>
void for_each_param(ModelWeights& w, const ModelWeights& g, ModelWeights& m, ModelWeights& v, Fn&& fn) {
  for (std::size_t k = 0; k < w.kernels.size(); ++k) {
    auto wv = w.kernels[k].weights.values();
    auto gv = g.kernels[k].weights.values();
    auto mv = m.kernels[k].weights.values();
    auto vv = v.kernels[k].weights.values();
    for (std::size_t i = 0; i < wv.size(); ++i) fn(wv[i], gv[i], mv[i], vv[i]);
    auto& wb = w.kernels[k].biases;
    const auto& gb = g.kernels[k].biases;
    auto& mb = m.kernels[k].biases;
    auto& vb = v.kernels[k].biases;
    for (std::size_t i = 0; i < wb.size(); ++i) fn(wb[i], gb[i], mb[i], vb[i]);
  }
}

void adam_update(ModelWeights& weights, const ModelWeights& grads, AdamState& state, const TrainConfig& config) {
  const detail::FlushDenormals ftz;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double step_size =
      config.learning_rate * std::sqrt(1.0 - std::pow(config.beta2, t)) / (1.0 - std::pow(config.beta1, t));
  const auto b1 = static_cast<float>(config.beta1);
  const auto b2 = static_cast<float>(config.beta2);
  const auto lr = static_cast<float>(step_size);
  const auto eps = static_cast<float>(config.adam_epsilon);
  for_each_param(weights, grads, state.m, state.v, [&](float& w, float g, float& m, float& v) {
    m = b1 * m + (1.0f - b1) * g;
    v = b2 * v + (1.0f - b2) * g * g;
    w -= lr * m / (std::sqrt(v) + eps);
  });
}

void clear(ModelWeights& grads) {
  for (ConvKernel& k : grads.kernels) {
    k.weights.fill(0.0f);
    std::fill(k.biases.begin(), k.biases.end(), 0.0f);
  }
}

void check_finite(double loss, std::size_t epoch, const char* what) {
  if (!std::isfinite(loss)) {
    throw NumericError(std::string("training diverged: non-finite ") + what + " at epoch " + std::to_string(epoch));
  }
}

bool all_finite(const ModelWeights& weights) {
  for (const ConvKernel& k : weights.kernels) {
    for (float v : k.weights.values())
      if (!std::isfinite(v)) return false;
    for (float v : k.biases)
      if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw ContractViolation("TrainConfig: batch_size must be at least 1");
  if (patience == 0) throw ContractViolation("TrainConfig: patience must be at least 1");
  if (!(learning_rate >= 0.0)) throw ContractViolation("TrainConfig: learning rate must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) {
    throw ContractViolation("TrainConfig: Adam decays must lie in [0, 1)");
  }
  if (!(adam_epsilon > 0.0) || !(min_delta >= 0.0)) {
    throw ContractViolation("TrainConfig: epsilon must be positive and min_delta non-negative");
  }
}

double mean_loss(const Model& model, const std::vector<Sample>& samples) {
  if (samples.empty()) throw ContractViolation("mean_loss: empty sample set");
  double total = 0.0;
  for (const Sample& s : samples) total += bce_loss(forward(model, s.image), s.masks).loss;
  return total / static_cast<double>(samples.size());
}

TrainResult train(const Model& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  model.spec.validate();
  check_weights(model.spec, model.weights);
  if (train_set.empty()) throw ContractViolation("train: empty training set");
  for (const Sample& s : train_set) check_input_shape(model.spec, s.image);

  TrainResult result{model, {}};
  result.model.weights.dtype = DType::fp32;
  if (config.max_epochs == 0) {
    result.model = model;
    return result;
  }

  Model current = result.model;
  ModelWeights grads = zero_like(current.weights);
  AdamState adam{zero_like(current.weights), zero_like(current.weights), 0};

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  double best_loss = std::numeric_limits<double>::infinity();
  double reference_loss = std::numeric_limits<double>::infinity();
  std::size_t since_improvement = 0;
  TrainHistory& history = result.history;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng rng(child_seed(config.seed, kShuffleStream, epoch));
    rng.shuffle(order.begin(), order.end());

    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      const auto batch = static_cast<double>(end - start);
      clear(grads);
      for (std::size_t i = start; i < end; ++i) {
        const Sample& sample = train_set[order[i]];
        const ForwardTrace trace = forward_trace(current.spec, current.weights, sample.image);
        const Tensor& pred = trace.activations.back();
        epoch_loss += bce_loss(pred, sample.masks).loss;

        // d(mean BCE)/d(logit) for a sigmoid output is (p - y) / n.
        Tensor logit_grad(pred.shape());
        const float scale = static_cast<float>(1.0 / (static_cast<double>(pred.size()) * batch));
        for (std::size_t j = 0; j < pred.size(); ++j) {
          logit_grad.data()[j] = (pred.data()[j] - sample.masks.data()[j]) * scale;
        }
        backward(current.spec, current.weights, trace, logit_grad, grads);
      }
      adam_update(current.weights, grads, adam, config);
    }
    const double train_loss = epoch_loss / static_cast<double>(train_set.size());
    check_finite(train_loss, epoch, "training loss");
    if (!all_finite(current.weights)) {
      throw NumericError("training diverged: non-finite weights at epoch " + std::to_string(epoch));
    }
    const double monitored = val_set.empty() ? mean_loss(current, train_set) : mean_loss(current, val_set);
    check_finite(monitored, epoch, "validation loss");

    history.train_loss.push_back(train_loss);
    history.val_loss.push_back(monitored);
    if (on_epoch) on_epoch(epoch, train_loss, monitored);

    if (monitored < best_loss) {
      best_loss = monitored;
      history.best_epoch = epoch;
      result.model.weights = current.weights;
    }
    if (monitored < reference_loss - config.min_delta) {
      reference_loss = monitored;
      since_improvement = 0;
    } else if (++since_improvement >= config.patience) {
      history.stop_reason = StopReason::converged;
      break;
    }
  }
  return result;
}

TrainResult retrain_after_prune(const Model& pruned, const std::vector<Sample>& train_set,
                                const std::vector<Sample>& val_set, const TrainConfig& config) {
  TrainResult result = train(pruned, train_set, val_set, config);
  if (result.model.spec != pruned.spec || count_params(result.model.spec) != count_params(pruned.spec)) {
    throw ContractViolation("retrain_after_prune: topology changed during retraining");
  }
  return result;
}

std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw ContractViolation("kfold_split: K must be at least 2");
  if (n < k) {
    throw ContractViolation("kfold_split: cannot split " + std::to_string(n) + " samples into " + std::to_string(k) +
                            " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());

  std::vector<Fold> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].test.assign(order.begin() + static_cast<std::ptrdiff_t>(pos),
                         order.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(folds[f].test.begin(), folds[f].test.end());
    pos += size;
  }
  for (std::size_t f = 0; f < k; ++f) {
    for (std::size_t g = 0; g < k; ++g) {
      if (g != f) folds[f].train.insert(folds[f].train.end(), folds[g].test.begin(), folds[g].test.end());
    }
    std::sort(folds[f].train.begin(), folds[f].train.end());
  }
  return folds;
}

std::string history_csv(const TrainHistory& history) {
  std::ostringstream out;
  out.precision(9);
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t i = 0; i < history.epochs(); ++i) {
    out << (i + 1) << "," << history.train_loss[i] << "," << history.val_loss[i] << "\n";
  }
  return out.str();
}

void write_history_csv(const TrainHistory& history, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << history_csv(history);
}

const char* to_string(StopReason reason) { return reason == StopReason::converged ? "converged" : "max_epochs"; }

}  // namespace fcnpose
