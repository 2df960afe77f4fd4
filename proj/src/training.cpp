#include "tsf/training.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "tsf/error.hpp"
#include "tsf/evaluation.hpp"

namespace tsf {

void LrSchedule::validate() const {
  if (!(lr_start > lr_end && lr_end > 0.0)) throw ConfigError("learning rate schedule needs lr_start > lr_end > 0");
  if (n_epochs < 2) throw ConfigError("learning rate schedule needs at least 2 epochs");
}

double lr_at_epoch(const LrSchedule& schedule, std::size_t epoch) {
  schedule.validate();
  if (epoch >= schedule.n_epochs) {
    throw ContractError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(schedule.n_epochs) + ")");
  }
  if (epoch == 0) return schedule.lr_start;
  if (epoch == schedule.n_epochs - 1) return schedule.lr_end;
  const double frac = static_cast<double>(epoch) / static_cast<double>(schedule.n_epochs - 1);
  return schedule.lr_start * std::pow(schedule.lr_end / schedule.lr_start, frac);
}

AdamState AdamState::for_parameters(const ParameterSet& params) {
  AdamState s;
  for (const auto& p : params) {
    s.m.push_back(Tensor::zeros(p.value.shape()));
    s.v.push_back(Tensor::zeros(p.value.shape()));
  }
  return s;
}

void adam_step(AdamState& state, ParameterSet& params, double lr) {
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw ContractError("adam state does not match the parameter set");
  }
  std::size_t k = 0;
  for (const auto& p : params) {
    if (p.grad.shape() != p.value.shape() || state.m[k].shape() != p.value.shape()) {
      throw DimensionError("adam_step: shape mismatch for '" + p.name + "'");
    }
    if (!p.grad.all_finite()) throw NumericError("non-finite gradient for '" + p.name + "'");
    ++k;
  }
  state.t += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  k = 0;
  for (auto& p : params) {
    auto w = p.value.mutable_data();
    auto m = state.m[k].mutable_data();
    auto v = state.v[k].mutable_data();
    const auto g = p.grad.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      w[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
    ++k;
  }
}

Var elastic_net_penalty(Graph& g, ParameterSet& params, double l1, double l2) {
  if (l1 < 0.0 || l2 < 0.0) throw ContractError("elastic net strengths must be non-negative");
  Var total = g.constant(Tensor::scalar(0.0));
  for (auto& p : params) {
    if (p.role != ParamRole::kWeight) continue;
    Var w = g.parameter(p);
    if (l1 > 0.0) total = ad::add(total, ad::scale(ad::sum(ad::abs(w)), l1));
    if (l2 > 0.0) total = ad::add(total, ad::scale(ad::sum(ad::square(w)), l2));
  }
  return total;
}

std::size_t select_best_epoch(const std::vector<EpochLog>& epochs) {
  if (epochs.empty()) throw ContractError("no epochs to select from");
  std::size_t best = 0;
  for (std::size_t i = 1; i < epochs.size(); ++i)
    if (epochs[i].val_mae < epochs[best].val_mae) best = i;
  return best;
}

namespace {

std::string format_log_line(const EpochLog& e) {
  std::ostringstream os;
  os << e.epoch << ',' << std::setprecision(17) << e.lr << ',' << e.train_loss << ',' << e.val_mae;
  return os.str();
}

constexpr const char* kLogHeader = "epoch,lr,train_loss,val_mae";

}  // namespace

TrainReport train_model(Forecaster& model, const WindowDataset& train, const WindowDataset& val,
                        const TrainConfig& config) {
  if (!model.trainable()) throw ContractError("non-trainable model: " + model.name());
  if (train.empty() || val.empty()) throw ContractError("training needs non-empty train and validation windows");
  config.schedule.validate();
  if (config.batch_size == 0) throw ContractError("batch_size must be >= 1");

  const auto started = std::chrono::steady_clock::now();
  const bool regularize = model.variant() == Variant::kMLP;
  ParameterSet& params = model.parameters();
  AdamState adam = AdamState::for_parameters(params);

  std::ofstream log;
  if (config.log_path) {
    log.open(*config.log_path, std::ios::trunc);
    if (!log) throw DataError("cannot write training log '" + config.log_path->string() + "'");
    log << kLogHeader << '\n';
  }

  TrainReport report;
  std::vector<Tensor> best_params = params.snapshot();
  double best_val = std::numeric_limits<double>::infinity();

  for (std::size_t epoch = 0; epoch < config.schedule.n_epochs; ++epoch) {
    const double lr = lr_at_epoch(config.schedule, epoch);
    const auto order = batches(train, config.batch_size, config.seed * 1000003ULL + epoch);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < order.size(); ++b) {
      const Batch batch = train.gather(order[b]);
      Graph g;
      Var pred = model.forward(g, batch.inputs);
      Var target = g.constant(to_channel_rows(batch.targets));
      Var diff = ad::sub(pred, target);
      Var data_loss = ad::mean(config.loss == LossKind::kMae ? ad::abs(diff) : ad::square(diff));
      Var loss = regularize ? ad::add(data_loss, elastic_net_penalty(g, params, config.l1, config.l2)) : data_loss;
      const double value = loss.value().item();
      if (!std::isfinite(value)) {
        throw NumericError(model.name() + ": non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b));
      }
      g.backward(loss);
      try {
        adam_step(adam, params, lr);
      } catch (const NumericError& e) {
        throw NumericError(model.name() + ": " + e.what() + " at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(b));
      }
      loss_sum += data_loss.value().item() * static_cast<double>(order[b].size());
      seen += order[b].size();
    }

    const double val_mae = dataset_mae(model, val, config.eval_chunk);
    EpochLog entry{epoch, lr, loss_sum / static_cast<double>(seen), val_mae};
    report.epochs.push_back(entry);
    if (log) log << format_log_line(entry) << '\n' << std::flush;
    if (val_mae < best_val) {
      best_val = val_mae;
      best_params = params.snapshot();
    }
  }

  report.best_epoch = select_best_epoch(report.epochs);
  report.best_val_mae = report.epochs[report.best_epoch].val_mae;
  params.restore(best_params);
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return report;
}

void write_training_log(const TrainReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write training log '" + path.string() + "'");
  out << kLogHeader << '\n';
  for (const auto& e : report.epochs) out << format_log_line(e) << '\n';
}

}  // namespace tsf
