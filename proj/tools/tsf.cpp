// Command-line driver: run experiment grids, tune, render reports and plots.

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "tsf/error.hpp"
#include "tsf/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRunFailure = 1;
constexpr int kExitConfigError = 2;

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

// Precedence for the output directory: --out, then TSF_OUTPUT_DIR, then the config.
tsf::ExperimentConfig load_config(const CommonOptions& o) {
  tsf::ExperimentConfig cfg = tsf::load_experiment_config(o.config);
  if (const char* env = std::getenv("TSF_OUTPUT_DIR"); env && *env) cfg.output_dir = env;
  if (o.out) cfg.output_dir = *o.out;
  if (o.seed) cfg.seed = *o.seed;
  return cfg;
}

const tsf::ModelConfig& find_model(const tsf::ExperimentConfig& cfg, tsf::Variant v, tsf::ModelConfig& fallback) {
  for (const auto& m : cfg.models)
    if (m.variant == v) return m;
  fallback.variant = v;
  fallback.input_len = 0;
  return fallback;
}

int cmd_run(const CommonOptions& o, std::optional<std::size_t> workers, bool verbose) {
  tsf::ExperimentConfig cfg = load_config(o);
  if (workers) cfg.workers = *workers;
  cfg.validate();
  const tsf::RunManifest m = tsf::run_experiment(cfg, {true, verbose});
  for (const auto& r : m.runs) {
    std::cout << r.model << " L=" << r.horizon << " " << tsf::run_status_name(r.status);
    if (r.result) std::cout << " mae=" << r.result->mae;
    if (r.improvement) std::cout << " improvement=" << *r.improvement;
    if (!r.message.empty()) std::cout << " (" << r.message << ")";
    std::cout << "\n";
  }
  std::cout << "results written to " << cfg.output_dir.string() << "\n";
  return m.all_ok() ? kExitOk : kExitRunFailure;
}

int cmd_tune(const CommonOptions& o, const std::string& model, std::size_t horizon) {
  const tsf::ExperimentConfig cfg = load_config(o);
  tsf::ModelConfig fallback;
  const tsf::ModelConfig& tmpl = find_model(cfg, tsf::parse_variant(model), fallback);
  const tsf::TuneResult t = tsf::tune(cfg, tmpl, horizon);
  std::cout << "input_len,train_portion,val_mae\n";
  for (const auto& c : t.candidates) std::cout << c.input_len << "," << c.train_portion << "," << c.val_mae << "\n";
  std::cout << "chosen input_len=" << t.input_len << " train_portion=" << t.train_portion << " val_mae=" << t.val_mae
            << "\n";
  return kExitOk;
}

int cmd_report(const std::string& manifest_path, const std::string& format, const std::optional<std::string>& out,
               const std::optional<std::string>& reference) {
  const tsf::RunManifest m = tsf::load_manifest(manifest_path);
  std::optional<tsf::ReferenceTable> ref;
  if (reference) ref = tsf::load_reference_table(*reference);
  const auto fmt = tsf::parse_report_format(format);
  if (out) {
    tsf::emit_report(m, fmt, *out, ref ? &*ref : nullptr);
  } else {
    std::cout << tsf::render_report(m, fmt, ref ? &*ref : nullptr);
  }
  return kExitOk;
}

int cmd_plot(const CommonOptions& o, const std::string& model_name, std::optional<std::size_t> horizon,
             std::size_t window_index, const std::optional<std::string>& checkpoint, const std::string& out) {
  const tsf::ExperimentConfig cfg = load_config(o);
  const tsf::PreparedData data = tsf::prepare_data(cfg);
  const tsf::Variant variant = tsf::parse_variant(model_name);

  std::optional<tsf::Forecaster> model;
  if (checkpoint) {
    model.emplace(tsf::load_checkpoint(*checkpoint));
  } else {
    if (!horizon) throw tsf::ConfigError("plot needs --horizon or --checkpoint");
    if (variant == tsf::Variant::kPersistence) {
      tsf::ModelConfig mc{variant, *horizon, *horizon, data.splits.test.channels()};
      model.emplace(mc);
    } else {
      const auto path =
          cfg.output_dir / "checkpoints" / (tsf::run_stem(data.dataset, std::string(tsf::variant_name(variant)), *horizon) + ".json");
      model.emplace(tsf::load_checkpoint(path));
    }
  }
  const auto& mc = model->config();
  const tsf::WindowDataset test = tsf::make_windows(data.splits.test, mc.input_len, mc.horizon, cfg.eval_stride);
  tsf::emit_forecast_plot(*model, test, window_index, out);
  std::cout << "wrote " << out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Time-series forecasting benchmark harness"};
  app.require_subcommand(1);

  CommonOptions run_opts, tune_opts, plot_opts;
  std::optional<std::size_t> workers;
  bool verbose = false;
  auto* run = app.add_subcommand("run", "Run every (horizon, model) pair of a config");
  run->add_option("--config", run_opts.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", run_opts.seed, "Override the config seed");
  run->add_option("--out", run_opts.out, "Output directory");
  run->add_option("--workers", workers, "Parallel runs")->check(CLI::PositiveNumber);
  run->add_flag("-v,--verbose", verbose, "Progress on stderr");

  std::string tune_model;
  std::size_t tune_horizon = 0;
  auto* tune = app.add_subcommand("tune", "Search input length and train portion for one model");
  tune->add_option("--config", tune_opts.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  tune->add_option("--model", tune_model, "Model variant")->required();
  tune->add_option("--horizon", tune_horizon, "Forecast horizon")->required()->check(CLI::PositiveNumber);
  tune->add_option("--seed", tune_opts.seed, "Override the config seed");

  std::string manifest, format = "markdown";
  std::optional<std::string> report_out, reference;
  auto* report = app.add_subcommand("report", "Render a run manifest as CSV or Markdown");
  report->add_option("--manifest", manifest, "manifest.json of a run")->required()->check(CLI::ExistingFile);
  report->add_option("--format", format, "csv or markdown");
  report->add_option("--out", report_out, "Output file (stdout when omitted)");
  report->add_option("--reference", reference, "Published reference values (JSON)")->check(CLI::ExistingFile);

  std::string plot_model, plot_out = "forecast.svg";
  std::optional<std::size_t> plot_horizon;
  std::optional<std::string> checkpoint;
  std::size_t window_index = 0;
  auto* plot = app.add_subcommand("plot", "SVG of truth and forecast for one test window");
  plot->add_option("--config", plot_opts.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  plot->add_option("--model", plot_model, "Model variant")->required();
  plot->add_option("--horizon", plot_horizon, "Horizon of the trained run");
  plot->add_option("--window-index", window_index, "Test window to plot");
  plot->add_option("--checkpoint", checkpoint, "Checkpoint file (defaults to the run directory)");
  plot->add_option("--run-dir", plot_opts.out, "Run output directory holding checkpoints/");
  plot->add_option("--svg", plot_out, "Output SVG path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfigError;
  }

  try {
    if (*run) return cmd_run(run_opts, workers, verbose);
    if (*tune) return cmd_tune(tune_opts, tune_model, tune_horizon);
    if (*report) return cmd_report(manifest, format, report_out, reference);
    if (*plot) return cmd_plot(plot_opts, plot_model, plot_horizon, window_index, checkpoint, plot_out);
  } catch (const tsf::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const tsf::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRunFailure;
  }
  return kExitOk;
}
