#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "fcnpose/dataset.hpp"
#include "fcnpose/network.hpp"

namespace fcnpose {

struct TrainConfig {
  std::size_t max_epochs = 500;  // 0 returns the model untouched
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-7;
  std::size_t patience = 20;
  double min_delta = 1e-4;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class StopReason { max_epochs, converged };

struct TrainHistory {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  std::size_t best_epoch = 0;  // 1-based; 0 when no epoch ran
  StopReason stop_reason = StopReason::max_epochs;

  std::size_t epochs() const noexcept { return train_loss.size(); }
  bool operator==(const TrainHistory&) const = default;
};

struct TrainResult {
  Model model;
  TrainHistory history;
};

/// Called after every epoch with (epoch, train_loss, monitored_loss).
using EpochCallback = std::function<void(std::size_t, double, double)>;

/// Minimizes mean binary cross-entropy over the 9 output maps with Adam and
/// returns the weights from the epoch with the lowest validation loss. Stops
/// early once validation loss has not improved by min_delta for `patience`
/// epochs. With an empty validation set the training loss is monitored.
TrainResult train(const Model& model, const std::vector<Sample>& train_set, const std::vector<Sample>& val_set,
                  const TrainConfig& config, const EpochCallback& on_epoch = {});

/// Mean per-sample BCE of the model on a set.
double mean_loss(const Model& model, const std::vector<Sample>& samples);

/// Retraining budget after pruning.
inline constexpr std::size_t kRetrainEpochs = 100;

/// Fine-tunes a pruned model; the topology is never changed.
TrainResult retrain_after_prune(const Model& pruned, const std::vector<Sample>& train_set,
                                const std::vector<Sample>& val_set, const TrainConfig& config);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// K disjoint test folds of near-equal size (the first n % K folds hold one
/// extra index) over a seeded permutation of [0, n).
std::vector<Fold> kfold_split(std::size_t n, std::size_t k, std::uint64_t seed);

template <typename T>
std::vector<T> gather(const std::vector<T>& items, const std::vector<std::size_t>& indices) {
  std::vector<T> out;
  out.reserve(indices.size());
  for (std::size_t i : indices) out.push_back(items.at(i));
  return out;
}

/// CSV with header "epoch,train_loss,val_loss".
void write_history_csv(const TrainHistory& history, const std::filesystem::path& path);
std::string history_csv(const TrainHistory& history);

const char* to_string(StopReason reason);

}  // namespace fcnpose
