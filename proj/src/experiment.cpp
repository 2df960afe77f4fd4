#include "tsf/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include "json_io.hpp"
#include "tsf/error.hpp"

namespace tsf {

using nlohmann::json;

namespace {

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config key '") + key + "': " + e.what());
  }
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& item : j.items()) {
    bool ok = false;
    for (const char* k : known) ok = ok || item.key() == k;
    if (!ok) throw ConfigError("unknown key '" + item.key() + "' in " + where);
  }
}

SyntheticSpec parse_synthetic(const json& j) {
  if (!j.is_object()) throw ConfigError("'synthetic' must be an object");
  reject_unknown_keys(j, {"preset", "length", "components", "trend_per_step", "noise_std", "seed", "frequency"},
                      "synthetic");
  const auto length = get_or<std::size_t>(j, "length", 1000);
  const auto seed = get_or<std::uint64_t>(j, "seed", 0);
  SyntheticSpec spec;
  const auto preset = get_or<std::string>(j, "preset", "");
  if (preset == "venice") {
    spec = venice_like_spec(length, seed);
  } else if (!preset.empty()) {
    throw ConfigError("unknown synthetic preset '" + preset + "'");
  }
  spec.length = length;
  spec.seed = seed;
  if (j.contains("components")) {
    spec.components.clear();
    for (const auto& c : j.at("components")) {
      spec.components.push_back(SineComponent{get_or<double>(c, "period", 24.0), get_or<double>(c, "amplitude", 1.0),
                                              get_or<double>(c, "phase", 0.0)});
    }
  }
  spec.trend_per_step = get_or<double>(j, "trend_per_step", spec.trend_per_step);
  spec.noise_std = get_or<double>(j, "noise_std", spec.noise_std);
  spec.frequency_label = get_or<std::string>(j, "frequency", spec.frequency_label);
  return spec;
}

json synthetic_to_json(const SyntheticSpec& s) {
  json comps = json::array();
  for (const auto& c : s.components) comps.push_back({{"period", c.period}, {"amplitude", c.amplitude}, {"phase", c.phase}});
  return json{{"length", s.length},       {"components", comps}, {"trend_per_step", s.trend_per_step},
              {"noise_std", s.noise_std}, {"seed", s.seed},      {"frequency", s.frequency_label}};
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string read_file(const std::filesystem::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError(std::string("cannot open ") + what + " '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void ExperimentConfig::validate() const {
  if (data.name.empty()) throw ConfigError("dataset name is empty");
  if (data.csv_path.has_value() == data.synthetic.has_value()) {
    throw ConfigError("dataset needs exactly one of 'csv' or 'synthetic'");
  }
  split.validate();
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (horizons.empty()) throw ConfigError("at least one horizon is required");
  for (auto h : horizons)
    if (h == 0) throw ConfigError("horizons must be positive");
  if (models.empty()) throw ConfigError("at least one model is required");
  if (epochs < 2) throw ConfigError("epochs must be >= 2");
  LrSchedule{lr_start, lr_end, epochs}.validate();
  if (train_stride == 0 || val_stride == 0 || eval_stride == 0) throw ConfigError("strides must be >= 1");
  if (workers == 0) throw ConfigError("workers must be >= 1");
  if (tuning) {
    if (tuning->train_portions.empty()) throw ConfigError("tuning grid has no train portions");
    for (double p : tuning->train_portions)
      if (!(p > 0.0 && p <= 1.0)) throw ConfigError("train portions must lie in (0, 1]");
    if (tuning->epochs == 1) throw ConfigError("tuning epochs must be 0 or >= 2");
  }
}

ExperimentConfig parse_experiment_config(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  reject_unknown_keys(j,
                      {"dataset", "split", "batch_size", "horizons", "models", "tuning", "epochs", "lr_start",
                       "lr_end", "loss", "train_stride", "val_stride", "eval_stride", "seed", "output_dir", "memory_budget_bytes",
                       "workers", "save_checkpoints", "reference"},
                      "config");

  ExperimentConfig c;
  if (!j.contains("dataset") || !j.at("dataset").is_object()) throw ConfigError("config needs a 'dataset' object");
  const json& d = j.at("dataset");
  reject_unknown_keys(d, {"name", "csv", "timestamp_column", "synthetic"}, "dataset");
  c.data.name = get_or<std::string>(d, "name", "");
  if (d.contains("csv")) {
    std::filesystem::path p = get_or<std::string>(d, "csv", "");
    c.data.csv_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }
  if (d.contains("timestamp_column")) c.data.timestamp_column = get_or<std::string>(d, "timestamp_column", "");
  if (d.contains("synthetic")) {
    c.data.synthetic = parse_synthetic(d.at("synthetic"));
    c.data.synthetic->name = c.data.name;
  }

  if (j.contains("split")) {
    const json& s = j.at("split");
    if (!s.is_array() || s.size() != 3) throw ConfigError("'split' must be [train, val, test] fractions");
    c.split = SplitSpec{s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
  }
  c.batch_size = get_or<std::size_t>(j, "batch_size", c.batch_size);
  c.horizons = get_or<std::vector<std::size_t>>(j, "horizons", {});

  ModelConfig defaults;
  defaults.input_len = 0;
  if (j.contains("models")) {
    for (const auto& m : j.at("models")) {
      if (m.is_string()) {
        ModelConfig mc = defaults;
        mc.variant = parse_variant(m.get<std::string>());
        c.models.push_back(mc);
      } else {
        reject_unknown_keys(m, {"variant", "input_len", "d_model", "n_heads", "ffn_dim", "ma_kernel"}, "model");
        if (!m.contains("variant")) throw ConfigError("model entry needs a 'variant'");
        c.models.push_back(model_config_from_json(m, defaults));
      }
    }
  }

  if (j.contains("tuning") && !j.at("tuning").is_null()) {
    const json& t = j.at("tuning");
    reject_unknown_keys(t, {"input_lens", "train_portions", "epochs"}, "tuning");
    TuningGrid grid;
    grid.input_lens = get_or<std::vector<std::size_t>>(t, "input_lens", {});
    grid.train_portions = get_or<std::vector<double>>(t, "train_portions", grid.train_portions);
    grid.epochs = get_or<std::size_t>(t, "epochs", 0);
    c.tuning = grid;
  }
  c.epochs = get_or<std::size_t>(j, "epochs", c.epochs);
  c.lr_start = get_or<double>(j, "lr_start", c.lr_start);
  c.lr_end = get_or<double>(j, "lr_end", c.lr_end);
  const auto loss = get_or<std::string>(j, "loss", "mae");
  if (loss == "mae") {
    c.loss = LossKind::kMae;
  } else if (loss == "mse") {
    c.loss = LossKind::kMse;
  } else {
    throw ConfigError("loss must be 'mae' or 'mse', got '" + loss + "'");
  }
  c.train_stride = get_or<std::size_t>(j, "train_stride", c.train_stride);
  c.val_stride = get_or<std::size_t>(j, "val_stride", c.val_stride);
  c.eval_stride = get_or<std::size_t>(j, "eval_stride", c.eval_stride);
  c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
  c.output_dir = get_or<std::string>(j, "output_dir", c.output_dir.string());
  c.memory_budget_bytes = get_or<std::size_t>(j, "memory_budget_bytes", c.memory_budget_bytes);
  c.workers = get_or<std::size_t>(j, "workers", c.workers);
  c.save_checkpoints = get_or<bool>(j, "save_checkpoints", c.save_checkpoints);
  if (j.contains("reference")) {
    std::filesystem::path p = get_or<std::string>(j, "reference", "");
    c.reference_path = p.is_relative() && !base_dir.empty() ? base_dir / p : p;
  }
  c.validate();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  return parse_experiment_config(read_file(path, "config"), path.parent_path());
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json d{{"name", c.data.name}};
  if (c.data.csv_path) d["csv"] = c.data.csv_path->string();
  if (c.data.timestamp_column) d["timestamp_column"] = *c.data.timestamp_column;
  if (c.data.synthetic) d["synthetic"] = synthetic_to_json(*c.data.synthetic);
  json models = json::array();
  for (const auto& m : c.models) {
    json mj = model_config_to_json(m);
    mj.erase("horizon");
    mj.erase("channels");
    mj.erase("seed");
    models.push_back(mj);
  }
  // output_dir and workers do not influence results and stay out of the hash.
  json j{{"dataset", d},
         {"split", {c.split.train_frac, c.split.val_frac, c.split.test_frac}},
         {"batch_size", c.batch_size},
         {"horizons", c.horizons},
         {"models", models},
         {"epochs", c.epochs},
         {"lr_start", c.lr_start},
         {"lr_end", c.lr_end},
         {"loss", c.loss == LossKind::kMae ? "mae" : "mse"},
         {"train_stride", c.train_stride},
         {"val_stride", c.val_stride},
         {"eval_stride", c.eval_stride},
         {"seed", c.seed},
         {"memory_budget_bytes", c.memory_budget_bytes}};
  if (c.tuning) {
    j["tuning"] = {{"input_lens", c.tuning->input_lens},
                   {"train_portions", c.tuning->train_portions},
                   {"epochs", c.tuning->epochs}};
  }
  return j.dump();
}

std::string config_hash(const ExperimentConfig& config) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : experiment_config_to_json(config)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ---------------------------------------------------------------------------
// Data

PreparedData prepare_data(const ExperimentConfig& config) {
  TimeSeriesTable table;
  if (config.data.csv_path) {
    if (!std::filesystem::exists(*config.data.csv_path)) {
      throw ConfigError("dataset file '" + config.data.csv_path->string() + "' does not exist");
    }
    table = load_csv(*config.data.csv_path, config.data.timestamp_column);
  } else {
    table = generate_synthetic(*config.data.synthetic);
  }
  table.name = config.data.name;
  Splits raw = split(table, config.split);
  PreparedData out;
  out.dataset = config.data.name;
  out.stats = fit_standardizer(raw.train);
  out.splits.train = apply_standardizer(raw.train, out.stats);
  out.splits.val = apply_standardizer(raw.val, out.stats);
  out.splits.test = apply_standardizer(raw.test, out.stats);
  return out;
}

TimeSeriesTable train_portion(const TimeSeriesTable& train, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ContractError("train portion must lie in (0, 1]");
  const auto keep = static_cast<std::size_t>(std::floor(static_cast<double>(train.length()) * fraction));
  if (keep < 2) throw DataError("train portion keeps fewer than 2 rows");
  return train.slice(train.length() - keep, train.length());
}

// ---------------------------------------------------------------------------
// Tuning

std::vector<std::size_t> candidate_input_lens(const TuningGrid& grid, std::size_t horizon) {
  std::vector<std::size_t> raw = grid.input_lens;
  if (raw.empty()) raw = {horizon, 2 * horizon, 336, 720};
  std::set<std::size_t> unique;
  // Shorter inputs than the horizon would leave Persistence undefined.
  for (auto i : raw)
    if (i >= horizon) unique.insert(i);
  return {unique.begin(), unique.end()};
}

namespace {

TrainConfig train_config_for(const ExperimentConfig& config, std::size_t epochs) {
  TrainConfig tc;
  tc.schedule = LrSchedule{config.lr_start, config.lr_end, epochs};
  tc.batch_size = config.batch_size;
  tc.seed = config.seed;
  tc.loss = config.loss;
  return tc;
}

// Evaluation chunk that keeps Transformer attention maps within budget.
std::size_t eval_chunk_for(const ModelConfig& cfg, std::size_t budget) {
  const std::size_t per_row = estimate_attention_bytes(cfg, 1);
  if (per_row == 0) return 256;
  return std::clamp<std::size_t>(budget / per_row, 1, 256);
}

bool fits(const TimeSeriesTable& t, std::size_t input_len, std::size_t horizon) {
  return t.length() >= input_len + horizon;
}

}  // namespace

TuneResult tune(const ExperimentConfig& config, const PreparedData& data, const ModelConfig& model_template,
                std::size_t horizon) {
  const TuningGrid grid = config.tuning.value_or(TuningGrid{});
  if (grid.train_portions.empty()) throw ConfigError("tuning grid has no train portions");
  std::vector<double> portions = grid.train_portions;
  std::sort(portions.begin(), portions.end(), std::greater<>());
  portions.erase(std::unique(portions.begin(), portions.end()), portions.end());

  TuneResult best;
  bool found = false;
  const std::size_t epochs = grid.epochs ? grid.epochs : config.epochs;
  for (std::size_t input_len : candidate_input_lens(grid, horizon)) {
    if (!fits(data.splits.val, input_len, horizon) || !fits(data.splits.test, input_len, horizon)) continue;
    for (double portion : portions) {
      const TimeSeriesTable part = train_portion(data.splits.train, portion);
      if (!fits(part, input_len, horizon)) continue;
      ModelConfig cfg = model_template;
      cfg.input_len = input_len;
      cfg.horizon = horizon;
      cfg.channels = part.channels();
      cfg.seed = config.seed;
      Forecaster model(cfg);
      TuneCandidate cand{input_len, portion, 0.0};
      if (model.trainable()) {
        TrainConfig tc = train_config_for(config, epochs);
        tc.eval_chunk = eval_chunk_for(cfg, config.memory_budget_bytes);
        const auto report = train_model(model, make_windows(part, input_len, horizon, config.train_stride),
                                        make_windows(data.splits.val, input_len, horizon, config.val_stride), tc);
        cand.val_mae = report.best_val_mae;
      } else {
        cand.val_mae = dataset_mae(model, make_windows(data.splits.val, input_len, horizon, config.val_stride));
      }
      best.candidates.push_back(cand);
      // Candidates arrive in (input_len ascending, portion descending) order,
      // so strict improvement implements the tie-break.
      if (!found || cand.val_mae < best.val_mae) {
        best.input_len = cand.input_len;
        best.train_portion = cand.train_portion;
        best.val_mae = cand.val_mae;
        found = true;
      }
    }
  }
  if (!found) {
    throw ConfigError("no feasible tuning grid point for " + std::string(variant_name(model_template.variant)) +
                      " at horizon " + std::to_string(horizon));
  }
  return best;
}

TuneResult tune(const ExperimentConfig& config, const ModelConfig& model_template, std::size_t horizon) {
  return tune(config, prepare_data(config), model_template, horizon);
}

// ---------------------------------------------------------------------------
// Manifest

std::string_view run_status_name(RunStatus s) {
  switch (s) {
    case RunStatus::kOk:
      return "ok";
    case RunStatus::kSkipped:
      return "skipped";
    case RunStatus::kFailed:
      return "failed";
  }
  return "?";
}

namespace {

RunStatus parse_run_status(const std::string& s) {
  if (s == "ok") return RunStatus::kOk;
  if (s == "skipped") return RunStatus::kSkipped;
  if (s == "failed") return RunStatus::kFailed;
  throw DataError("unknown run status '" + s + "'");
}

}  // namespace

bool RunManifest::all_ok() const {
  return std::none_of(runs.begin(), runs.end(), [](const RunRecord& r) { return r.status == RunStatus::kFailed; });
}

std::vector<EvalResult> RunManifest::results() const {
  std::vector<EvalResult> out;
  for (const auto& r : runs)
    if (r.result) out.push_back(*r.result);
  return out;
}

std::string manifest_to_json(const RunManifest& m) {
  json runs = json::array();
  for (const auto& r : m.runs) {
    json jr{{"model", r.model},
            {"horizon", r.horizon},
            {"status", run_status_name(r.status)},
            {"message", r.message},
            {"input_len", r.input_len},
            {"train_portion", r.train_portion},
            {"tuned", r.tuned},
            {"seconds", r.seconds}};
    if (r.result) {
      jr["result"] = {{"dataset", r.result->dataset}, {"model", r.result->model},
                      {"horizon", r.result->horizon}, {"input_len", r.result->input_len},
                      {"mae", r.result->mae},         {"n_windows", r.result->n_windows},
                      {"seed", r.result->seed}};
    }
    if (r.improvement) jr["improvement"] = *r.improvement;
    if (r.best_epoch) jr["best_epoch"] = *r.best_epoch;
    runs.push_back(jr);
  }
  json j{{"dataset", m.dataset},         {"config_hash", m.config_hash}, {"tool_version", m.tool_version},
         {"started_at", m.started_at},   {"finished_at", m.finished_at}, {"seed", m.seed},
         {"runs", runs},                 {"notes", m.notes}};
  return j.dump(1) + "\n";
}

RunManifest manifest_from_json(const std::string& text) {
  RunManifest m;
  try {
    const json j = json::parse(text);
    m.dataset = j.at("dataset").get<std::string>();
    m.config_hash = j.value("config_hash", "");
    m.tool_version = j.value("tool_version", "");
    m.started_at = j.value("started_at", "");
    m.finished_at = j.value("finished_at", "");
    m.seed = j.value("seed", std::uint64_t{0});
    m.notes = j.value("notes", std::vector<std::string>{});
    for (const auto& jr : j.at("runs")) {
      RunRecord r;
      r.model = jr.at("model").get<std::string>();
      r.horizon = jr.at("horizon").get<std::size_t>();
      r.status = parse_run_status(jr.at("status").get<std::string>());
      r.message = jr.value("message", "");
      r.input_len = jr.value("input_len", std::size_t{0});
      r.train_portion = jr.value("train_portion", 1.0);
      r.tuned = jr.value("tuned", false);
      r.seconds = jr.value("seconds", 0.0);
      if (jr.contains("result")) {
        const json& e = jr.at("result");
        r.result = EvalResult{e.at("dataset").get<std::string>(),  e.at("model").get<std::string>(),
                              e.at("horizon").get<std::size_t>(),  e.at("input_len").get<std::size_t>(),
                              e.at("mae").get<double>(),           e.at("n_windows").get<std::size_t>(),
                              e.at("seed").get<std::uint64_t>()};
      }
      if (jr.contains("improvement")) r.improvement = jr.at("improvement").get<double>();
      if (jr.contains("best_epoch")) r.best_epoch = jr.at("best_epoch").get<std::size_t>();
      m.runs.push_back(std::move(r));
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed manifest: ") + e.what());
  }
  return m;
}

RunManifest load_manifest(const std::filesystem::path& path) {
  return manifest_from_json(read_file(path, "manifest"));
}

std::string run_stem(const std::string& dataset, const std::string& model, std::size_t horizon) {
  std::string clean;
  for (char ch : dataset) clean += std::isalnum(static_cast<unsigned char>(ch)) ? ch : '_';
  return clean + "_" + model + "_L" + std::to_string(horizon);
}

// ---------------------------------------------------------------------------
// Driver

namespace {

struct Job {
  ModelConfig model;
  std::size_t horizon;
};

RunRecord execute(const ExperimentConfig& config, const PreparedData& data, const Job& job,
                  const std::filesystem::path* out_dir) {
  const auto started = std::chrono::steady_clock::now();
  RunRecord rec;
  rec.model = std::string(variant_name(job.model.variant));
  rec.horizon = job.horizon;

  ModelConfig cfg = job.model;
  cfg.horizon = job.horizon;
  cfg.channels = data.splits.train.channels();
  cfg.seed = config.seed;
  cfg.input_len = cfg.variant == Variant::kPersistence || cfg.input_len == 0 ? job.horizon : cfg.input_len;
  rec.input_len = cfg.input_len;

  try {
    if (is_transformer(cfg.variant)) {
      const std::size_t need = estimate_attention_bytes(cfg, config.batch_size);
      if (need > config.memory_budget_bytes) {
        rec.status = RunStatus::kSkipped;
        rec.message = "intractable at this horizon: attention needs " + std::to_string(need >> 20) +
                      " MiB per batch, budget " + std::to_string(config.memory_budget_bytes >> 20) + " MiB";
        return rec;
      }
    }

    TimeSeriesTable train = data.splits.train;
    if (config.tuning && cfg.variant != Variant::kPersistence) {
      const TuneResult t = tune(config, data, cfg, job.horizon);
      cfg.input_len = t.input_len;
      rec.input_len = t.input_len;
      rec.train_portion = t.train_portion;
      rec.tuned = true;
      train = train_portion(data.splits.train, t.train_portion);
    }
    cfg.validate();

    const std::size_t span = cfg.input_len + cfg.horizon;
    const std::pair<const TimeSeriesTable*, const char*> parts[] = {
        {&train, "train"}, {&data.splits.val, "validation"}, {&data.splits.test, "test"}};
    for (const auto& [part, name] : parts) {
      if (part->length() < span) {
        throw DataError("horizon " + std::to_string(cfg.horizon) + " infeasible: " + name + " split has " +
                        std::to_string(part->length()) + " rows, needs " + std::to_string(span));
      }
    }

    Forecaster model(cfg);
    const std::string stem = run_stem(data.dataset, rec.model, job.horizon);
    if (model.trainable()) {
      TrainConfig tc = train_config_for(config, config.epochs);
      tc.eval_chunk = eval_chunk_for(cfg, config.memory_budget_bytes);
      if (out_dir) tc.log_path = *out_dir / "logs" / (stem + ".csv");
      const auto report = train_model(model, make_windows(train, cfg.input_len, cfg.horizon, config.train_stride),
                                      make_windows(data.splits.val, cfg.input_len, cfg.horizon, config.val_stride),
                                      tc);
      rec.best_epoch = report.best_epoch;
      if (out_dir && config.save_checkpoints) save_checkpoint(model, *out_dir / "checkpoints" / (stem + ".json"));
    }
    const WindowDataset test = make_windows(data.splits.test, cfg.input_len, cfg.horizon, config.eval_stride);
    EvalResult res{data.dataset, rec.model, cfg.horizon, cfg.input_len,
                   dataset_mae(model, test, eval_chunk_for(cfg, config.memory_budget_bytes)), test.size(),
                   config.seed};
    rec.result = res;
  } catch (const Error& e) {
    rec.status = RunStatus::kFailed;
    rec.message = e.what();
  } catch (const std::bad_alloc&) {
    rec.status = RunStatus::kFailed;
    rec.message = "out of memory";
  }
  rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return rec;
}

std::vector<std::string> standard_notes(const ExperimentConfig& config) {
  std::vector<std::string> notes{
      "MAE is computed in standardized units (train-split mean and std per channel).",
      "Persistence uses an input window equal to the horizon."};
  if (config.data.name.rfind("ETT", 0) == 0) {
    notes.push_back("Split fractions are 60/20/20; the 14/5/5-month calendar split differs slightly.");
  }
  return notes;
}

}  // namespace

RunManifest run_experiment(const ExperimentConfig& config, const RunOptions& options) {
  config.validate();
  RunManifest manifest;
  manifest.dataset = config.data.name;
  manifest.config_hash = config_hash(config);
  manifest.tool_version = kToolVersion;
  manifest.started_at = utc_now();
  manifest.seed = config.seed;
  manifest.notes = standard_notes(config);

  const PreparedData data = prepare_data(config);

  std::filesystem::path out_dir = config.output_dir;
  const std::filesystem::path* out = nullptr;
  if (options.write_outputs) {
    std::filesystem::create_directories(out_dir / "logs");
    if (config.save_checkpoints) std::filesystem::create_directories(out_dir / "checkpoints");
    out = &out_dir;
  }

  // Persistence first at every horizon, then the configured models in order.
  std::vector<ModelConfig> models{ModelConfig{Variant::kPersistence}};
  for (const auto& m : config.models)
    if (m.variant != Variant::kPersistence) models.push_back(m);

  std::vector<Job> baseline_jobs, model_jobs;
  for (std::size_t h : config.horizons) {
    baseline_jobs.push_back({models[0], h});
    for (std::size_t k = 1; k < models.size(); ++k) model_jobs.push_back({models[k], h});
  }

  std::mutex log_mutex;
  auto report = [&](const RunRecord& r) {
    if (!options.verbose) return;
    std::lock_guard lock(log_mutex);
    std::cerr << "[" << run_status_name(r.status) << "] " << r.model << " L=" << r.horizon;
    if (r.result) std::cerr << " mae=" << r.result->mae;
    if (!r.message.empty()) std::cerr << " (" << r.message << ")";
    std::cerr << "\n";
  };

  std::vector<RunRecord> baseline(baseline_jobs.size());
  for (std::size_t i = 0; i < baseline_jobs.size(); ++i) {
    baseline[i] = execute(config, data, baseline_jobs[i], out);
    report(baseline[i]);
  }

  std::vector<RunRecord> trained(model_jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < model_jobs.size(); i = next++) {
      trained[i] = execute(config, data, model_jobs[i], out);
      report(trained[i]);
    }
  };
  const std::size_t n_threads = std::min(config.workers, std::max<std::size_t>(1, model_jobs.size()));
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }

  // Assemble per horizon: baseline row, then models in config order.
  const std::size_t per_h = models.size() - 1;
  for (std::size_t hi = 0; hi < config.horizons.size(); ++hi) {
    const RunRecord& base = baseline[hi];
    manifest.runs.push_back(base);
    const bool have_base = base.result && base.result->mae > 0.0;
    if (base.result) manifest.runs.back().improvement = have_base ? std::optional(0.0) : std::nullopt;
    for (std::size_t k = 0; k < per_h; ++k) {
      RunRecord r = trained[hi * per_h + k];
      if (r.result && have_base) r.improvement = improvement(base.result->mae, r.result->mae);
      manifest.runs.push_back(std::move(r));
    }
  }
  manifest.finished_at = utc_now();

  if (options.write_outputs) {
    std::optional<ReferenceTable> reference;
    if (config.reference_path) reference = load_reference_table(*config.reference_path);
    const ReferenceTable* ref = reference ? &*reference : nullptr;
    emit_report(manifest, ReportFormat::kCsv, out_dir / "results.csv");
    emit_report(manifest, ReportFormat::kMarkdown, out_dir / "results.md", ref);
    write_file(out_dir / "manifest.json", manifest_to_json(manifest));
  }
  return manifest;
}

}  // namespace tsf
