#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "tsf/autodiff.hpp"
#include "tsf/data.hpp"
#include "tsf/models.hpp"

namespace tsf {

struct LrSchedule {
  double lr_start = 1e-3;
  double lr_end = 1e-6;
  std::size_t n_epochs = 50;

  void validate() const;
};

// Geometric interpolation from lr_start (epoch 0) to lr_end (last epoch).
double lr_at_epoch(const LrSchedule& schedule, std::size_t epoch);

struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState for_parameters(const ParameterSet& params);
};

// One Adam update of every parameter from its grad. Throws NumericError on a
// non-finite gradient before touching any state.
void adam_step(AdamState& state, ParameterSet& params, double lr);

// l1 * sum|w| + l2 * sum w^2 over weight matrices; biases and norm
// parameters are excluded.
Var elastic_net_penalty(Graph& g, ParameterSet& params, double l1, double l2);

enum class LossKind { kMae, kMse };

struct TrainConfig {
  LrSchedule schedule;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  LossKind loss = LossKind::kMae;
  // Elastic-net strengths; applied to the MLP only.
  double l1 = 1e-5;
  double l2 = 1e-4;
  std::size_t eval_chunk = 256;
  // When set, one CSV line is appended per epoch as training progresses.
  std::optional<std::filesystem::path> log_path;
};

struct EpochLog {
  std::size_t epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_mae = 0.0;
};

struct TrainReport {
  std::vector<EpochLog> epochs;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  double seconds = 0.0;
};

// Index of the smallest validation MAE; earliest on ties.
std::size_t select_best_epoch(const std::vector<EpochLog>& epochs);

/// Runs schedule.n_epochs epochs of shuffled mini-batch Adam on the training
/// loss (plus elastic net for the MLP), measures validation MAE after each
/// epoch, and leaves the model holding the parameters of the best epoch.
TrainReport train_model(Forecaster& model, const WindowDataset& train, const WindowDataset& val,
                        const TrainConfig& config);

// CSV with columns epoch,lr,train_loss,val_mae.
void write_training_log(const TrainReport& report, const std::filesystem::path& path);

}  // namespace tsf
