#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "tsf/data.hpp"
#include "tsf/evaluation.hpp"
#include "tsf/models.hpp"
#include "tsf/synthetic.hpp"
#include "tsf/training.hpp"

namespace tsf {

inline constexpr const char* kToolVersion = "0.3.0";

// Where the series comes from: a CSV file or the synthetic generator.
struct DataSource {
  std::string name;
  std::optional<std::filesystem::path> csv_path;
  std::optional<std::string> timestamp_column;
  std::optional<SyntheticSpec> synthetic;
};

struct TuningGrid {
  // Empty means {L, 2L, 336, 720}.
  std::vector<std::size_t> input_lens;
  std::vector<double> train_portions{0.5, 1.0};
  // Epochs per grid point; 0 uses the experiment's epoch count.
  std::size_t epochs = 0;
};

struct ExperimentConfig {
  DataSource data;
  SplitSpec split;
  std::size_t batch_size = 32;
  std::vector<std::size_t> horizons;
  // input_len == 0 means "same as the horizon". horizon is set per run.
  std::vector<ModelConfig> models;
  std::optional<TuningGrid> tuning;
  std::size_t epochs = 50;
  double lr_start = 1e-3;
  double lr_end = 1e-6;
  LossKind loss = LossKind::kMae;
  // Window strides. Training and per-epoch validation may subsample; the
  // test set normally uses 1. A stride sharing a factor with a dominant
  // period shows the model only a few phases, so prefer coprime values.
  std::size_t train_stride = 1;
  std::size_t val_stride = 1;
  std::size_t eval_stride = 1;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs";
  std::size_t memory_budget_bytes = std::size_t{2} << 30;
  std::size_t workers = 1;
  bool save_checkpoints = true;
  // Optional published-values file rendered as extra report columns.
  std::optional<std::filesystem::path> reference_path;

  // Throws ConfigError. Does not touch the filesystem.
  void validate() const;
};

// Parses the JSON config format. Relative csv paths resolve against
// `base_dir`.
ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
// Canonical JSON (sorted keys) used for hashing and the manifest.
std::string experiment_config_to_json(const ExperimentConfig& config);
// FNV-1a 64 of the canonical JSON, as 16 hex digits.
std::string config_hash(const ExperimentConfig& config);

// Standardized splits ready for windowing.
struct PreparedData {
  std::string dataset;
  Splits splits;
  StandardizationStats stats;
};

PreparedData prepare_data(const ExperimentConfig& config);

// Tail fraction of the training split used for fitting. The most recent
// rows are kept.
TimeSeriesTable train_portion(const TimeSeriesTable& train, double fraction);

struct TuneCandidate {
  std::size_t input_len = 0;
  double train_portion = 1.0;
  double val_mae = 0.0;
};

struct TuneResult {
  std::size_t input_len = 0;
  double train_portion = 1.0;
  double val_mae = 0.0;
  std::vector<TuneCandidate> candidates;
};

// Candidate input lengths for horizon L: the grid (or its default),
// deduplicated, sorted, restricted to those whose windows fit in the train
// portion and the validation split.
std::vector<std::size_t> candidate_input_lens(const TuningGrid& grid, std::size_t horizon);

/// Trains one model per grid point and returns the pair with the lowest
/// validation MAE; ties go to the smaller input_len, then the larger portion.
/// Throws ConfigError when no grid point is feasible.
TuneResult tune(const ExperimentConfig& config, const PreparedData& data, const ModelConfig& model_template,
                std::size_t horizon);
TuneResult tune(const ExperimentConfig& config, const ModelConfig& model_template, std::size_t horizon);

enum class RunStatus { kOk, kSkipped, kFailed };
std::string_view run_status_name(RunStatus s);

struct RunRecord {
  std::string model;
  std::size_t horizon = 0;
  RunStatus status = RunStatus::kOk;
  std::string message;
  std::size_t input_len = 0;
  double train_portion = 1.0;
  bool tuned = false;
  std::optional<EvalResult> result;
  std::optional<double> improvement;  // vs Persistence at the same horizon
  std::optional<std::size_t> best_epoch;
  double seconds = 0.0;
};

struct RunManifest {
  std::string dataset;
  std::string config_hash;
  std::string tool_version;
  std::string started_at;
  std::string finished_at;
  std::uint64_t seed = 0;
  std::vector<RunRecord> runs;
  std::vector<std::string> notes;

  bool all_ok() const;
  // Completed EvalResults, Persistence included.
  std::vector<EvalResult> results() const;
};

std::string manifest_to_json(const RunManifest& manifest);
RunManifest manifest_from_json(const std::string& text);
RunManifest load_manifest(const std::filesystem::path& path);

struct RunOptions {
  bool write_outputs = true;
  // Progress lines to stderr.
  bool verbose = false;
};

/// Runs every (horizon, model) pair. Persistence is evaluated first at every
/// horizon and acts as the baseline. Per-run problems are recorded in the
/// manifest and the grid continues. Writes results.csv, results.md,
/// manifest.json, logs/ and checkpoints/ under config.output_dir.
RunManifest run_experiment(const ExperimentConfig& config, const RunOptions& options = {});

// File stem used for logs and checkpoints of one run.
std::string run_stem(const std::string& dataset, const std::string& model, std::size_t horizon);

// ---------------------------------------------------------------------------
// Reports

enum class ReportFormat { kCsv, kMarkdown };
ReportFormat parse_report_format(std::string_view name);

// Published MAE values for models this project does not reimplement.
struct ReferenceTable {
  std::vector<std::string> models;
  // (dataset, horizon, model) -> mae
  struct Entry {
    std::string dataset;
    std::size_t horizon = 0;
    std::string model;
    double mae = 0.0;
  };
  std::vector<Entry> entries;
  std::string label;
};

ReferenceTable load_reference_table(const std::filesystem::path& path);

/// CSV: dataset,model,horizon,input_len,seed,mae,improvement_vs_persistence
/// for each completed run. Markdown: one row per (dataset, horizon), one
/// column per model; cells beating Persistence carry (+), cells losing to it
/// (-), and the lowest MAE in each row is bold. Reference columns, when
/// given, are appended for matching datasets and never bolded.
std::string render_report(const RunManifest& manifest, ReportFormat format,
                          const ReferenceTable* reference = nullptr);
void emit_report(const RunManifest& manifest, ReportFormat format, const std::filesystem::path& out,
                 const ReferenceTable* reference = nullptr);

// SVG line chart of ground truth and forecast for one test window, channel
// `channel`. Both polylines have exactly L points.
std::string render_forecast_svg(const Forecaster& model, const WindowDataset& test, std::size_t window_index,
                                std::size_t channel = 0);
void emit_forecast_plot(const Forecaster& model, const WindowDataset& test, std::size_t window_index,
                        const std::filesystem::path& out, std::size_t channel = 0);

}  // namespace tsf
