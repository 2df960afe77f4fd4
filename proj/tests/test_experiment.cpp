#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <vector>

#include "helpers.hpp"
#include "tsf/error.hpp"
#include "tsf/experiment.hpp"

using namespace tsf;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count(const std::string& s, const std::string& what) {
  std::size_t n = 0;
  for (auto pos = s.find(what); pos != std::string::npos; pos = s.find(what, pos + what.size())) ++n;
  return n;
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

// Sine of period 24; `extra` is spliced into the top-level object.
std::string sine_config(const std::string& models, const std::string& horizons, const std::string& extra = "",
                        std::size_t length = 2400, double noise = 0.0) {
  return R"({"dataset": {"name": "sine24", "synthetic": {"length": )" + std::to_string(length) +
         R"(, "noise_std": )" + std::to_string(noise) + R"(, "components": [{"period": 24}]}},
            "split": [0.6, 0.2, 0.2], "horizons": )" +
         horizons + R"(, "models": )" + models + R"(, "epochs": 3)" + extra + "}";
}

ExperimentConfig config_in(const std::string& text, const std::string& dir_name) {
  auto c = parse_experiment_config(text);
  c.output_dir = test::scratch_dir(dir_name);
  return c;
}

// Minimal well-formedness check: balanced tags under a single root.
bool well_formed_single_root(const std::string& xml) {
  std::vector<std::string> stack;
  std::size_t roots = 0;
  for (std::size_t i = xml.find('<'); i != std::string::npos; i = xml.find('<', i + 1)) {
    const auto end = xml.find('>', i);
    if (end == std::string::npos) return false;
    const std::string tag = xml.substr(i + 1, end - i - 1);
    if (tag.empty() || tag[0] == '?' || tag[0] == '!') continue;
    if (tag[0] == '/') {
      if (stack.empty() || stack.back() != tag.substr(1)) return false;
      stack.pop_back();
      continue;
    }
    const std::string name = tag.substr(0, tag.find_first_of(" /"));
    if (stack.empty()) ++roots;
    if (tag.back() != '/') stack.push_back(name);
  }
  return stack.empty() && roots == 1;
}

std::vector<std::string> polyline_points(const std::string& svg, const std::string& cls) {
  const auto at = svg.find("class=\"" + cls + "\"");
  const auto start = svg.find("points=\"", at) + 8;
  const std::string pts = svg.substr(start, svg.find('"', start) - start);
  std::vector<std::string> out;
  std::istringstream in(pts);
  for (std::string p; in >> p;) out.push_back(p);
  return out;
}

}  // namespace

TEST_CASE("config parsing") {
  const auto c = parse_experiment_config(sine_config(R"(["SLP", {"variant": "Sencoder", "d_model": 8, "n_heads": 2}])",
                                                     "[24, 48]", R"(, "tuning": {"train_portions": [1.0]})"));
  CHECK(c.data.name == "sine24");
  REQUIRE(c.models.size() == 2);
  CHECK(c.models[1].variant == Variant::kSencoder);
  CHECK(c.models[1].d_model == 8);
  CHECK(c.horizons == std::vector<std::size_t>{24, 48});
  REQUIRE(c.tuning.has_value());
  CHECK(c.tuning->train_portions == std::vector<double>{1.0});

  CHECK_THROWS_AS(parse_experiment_config("{not json"), ConfigError);
  CHECK_THROWS_WITH_AS(parse_experiment_config(sine_config("[\"SLP\"]", "[24]", R"(, "epoch": 5)")),
                       doctest::Contains("unknown key 'epoch'"), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(sine_config("[\"SLP\"]", "[24]", R"(, "loss": "huber")")), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(sine_config("[\"Autoformer\"]", "[24]")), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(sine_config("[\"SLP\"]", "[]")).validate(), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(sine_config("[]", "[24]")).validate(), ConfigError);
  CHECK_THROWS_AS(parse_experiment_config(R"({"horizons": [24], "models": ["SLP"]})"), ConfigError);

  auto missing = parse_experiment_config(R"({"dataset": {"name": "x", "csv": "/no/such/file.csv"},
                                             "horizons": [24], "models": ["SLP"]})");
  CHECK_THROWS_AS(prepare_data(missing), ConfigError);
}

TEST_CASE("config hash") {
  const auto a = parse_experiment_config(sine_config("[\"SLP\"]", "[24]"));
  auto b = a;
  b.output_dir = "elsewhere";
  b.workers = 4;
  CHECK(config_hash(a) == config_hash(b));
  CHECK(config_hash(a).size() == 16);
  b.seed = 1;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(parse_experiment_config(experiment_config_to_json(a))) == config_hash(a));
}

TEST_CASE("shipped configs parse") {
  std::size_t n = 0;
  for (const auto& e : std::filesystem::directory_iterator(std::string(TSF_SOURCE_DIR) + "/configs")) {
    if (e.path().extension() != ".json") continue;
    CAPTURE(e.path().string());
    const auto c = load_experiment_config(e.path());
    CHECK_NOTHROW(c.validate());
    ++n;
  }
  CHECK(n >= 5);
}

TEST_CASE("train portion keeps the most recent rows") {
  TimeSeriesTable t;
  t.name = "t";
  t.columns = {"v"};
  t.values = Tensor({10, 1}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
  const auto half = train_portion(t, 0.5);
  CHECK(half.values == Tensor({5, 1}, {5, 6, 7, 8, 9}));
  CHECK(train_portion(t, 1.0).values == t.values);
  CHECK_THROWS_AS(train_portion(t, 0.0), ContractError);
}

TEST_CASE("candidate input lengths") {
  TuningGrid g;
  CHECK(candidate_input_lens(g, 96) == std::vector<std::size_t>{96, 192, 336, 720});
  CHECK(candidate_input_lens(g, 336) == std::vector<std::size_t>{336, 672, 720});
  g.input_lens = {48, 24, 24, 12};
  CHECK(candidate_input_lens(g, 24) == std::vector<std::size_t>{24, 48});
}

TEST_CASE("Persistence-only run on periodic data") {
  const auto c = config_in(sine_config("[\"Persistence\"]", "[96]"), "exp_persist");
  const auto m = run_experiment(c);
  REQUIRE(m.runs.size() == 1);
  REQUIRE(m.runs[0].result.has_value());
  CHECK(m.runs[0].result->mae == 0.0);
  CHECK_FALSE(m.runs[0].improvement.has_value());
  CHECK(m.all_ok());
  CHECK(m.config_hash == config_hash(c));

  const auto csv = lines(slurp(c.output_dir / "results.csv"));
  REQUIRE(csv.size() == 2);
  CHECK(csv[0] == "dataset,model,horizon,input_len,seed,mae,improvement_vs_persistence");
  CHECK(csv[1] == "sine24,Persistence,96,96,0,0,");
  CHECK(std::filesystem::exists(c.output_dir / "manifest.json"));
  CHECK(std::filesystem::exists(c.output_dir / "results.md"));
}

TEST_CASE("grid run: reports, manifest and determinism") {
  const std::string text = sine_config(R"(["Linear", "NLinear"])", "[24, 48]", R"(, "seed": 5, "train_stride": 5)", 2400, 0.2);
  auto c = config_in(text, "exp_grid_a");
  const auto m = run_experiment(c);
  REQUIRE(m.runs.size() == 6);
  CHECK(m.runs[0].model == "Persistence");
  CHECK(m.runs[3].model == "Persistence");
  CHECK(m.runs[3].horizon == 48);
  for (const auto& r : m.runs) {
    CHECK(r.status == RunStatus::kOk);
    REQUIRE(r.improvement.has_value());
    CHECK(*r.improvement == improvement(m.runs[r.horizon == 24 ? 0 : 3].result->mae, r.result->mae));
  }
  CHECK(std::filesystem::exists(c.output_dir / "logs" / (run_stem("sine24", "Linear", 24) + ".csv")));
  CHECK(std::filesystem::exists(c.output_dir / "checkpoints" / (run_stem("sine24", "NLinear", 48) + ".json")));

  // A second run reproduces the results byte for byte.
  auto c2 = config_in(text, "exp_grid_b");
  c2.workers = 2;
  run_experiment(c2);
  CHECK(slurp(c.output_dir / "results.csv") == slurp(c2.output_dir / "results.csv"));
  CHECK(slurp(c.output_dir / "logs" / "sine24_NLinear_L48.csv") == slurp(c2.output_dir / "logs" / "sine24_NLinear_L48.csv"));

  // The manifest determines the reports.
  const auto loaded = load_manifest(c.output_dir / "manifest.json");
  CHECK(manifest_to_json(loaded) == slurp(c.output_dir / "manifest.json"));
  const std::string md = render_report(loaded, ReportFormat::kMarkdown);
  CHECK(md == slurp(c.output_dir / "results.md"));
  CHECK(md == render_report(loaded, ReportFormat::kMarkdown));
  CHECK(render_report(loaded, ReportFormat::kCsv) == slurp(c.output_dir / "results.csv"));

  for (const auto& l : lines(md)) {
    if (l.rfind("| sine24", 0) != 0) continue;
    CHECK(count(l, "**") == 2);
    CHECK(count(l, "(+)") + count(l, "(-)") + count(l, "(=)") == 2);
  }
  CHECK_THROWS_AS(render_report(RunManifest{}, ReportFormat::kCsv), ContractError);
}

TEST_CASE("one-row manifest renders a header and one line") {
  RunManifest m;
  m.dataset = "d";
  RunRecord r;
  r.model = "Persistence";
  r.horizon = 96;
  r.result = EvalResult{"d", "Persistence", 96, 96, 0.5, 10, 0};
  m.runs.push_back(r);
  CHECK(lines(render_report(m, ReportFormat::kCsv)).size() == 2);
  const auto md = render_report(m, ReportFormat::kMarkdown);
  CHECK(count(md, "**0.5000**") == 1);
}

TEST_CASE("reference columns are labeled and never bold") {
  RunManifest m;
  m.dataset = "ETTh1";
  RunRecord r;
  r.model = "Persistence";
  r.horizon = 96;
  r.result = EvalResult{"ETTh1", "Persistence", 96, 96, 0.6, 10, 0};
  m.runs.push_back(r);
  const auto ref = load_reference_table(std::string(TSF_SOURCE_DIR) + "/data/reference_mae.json");
  const auto md = render_report(m, ReportFormat::kMarkdown, &ref);
  CHECK(md.find("Informer* |") != std::string::npos);
  CHECK(md.find("0.7130") != std::string::npos);
  CHECK(md.find("published values, not reproduced") != std::string::npos);
  CHECK(count(md, "**") == 2);
}

TEST_CASE("memory guard skips intractable Transformer runs") {
  auto c = config_in(sine_config(R"([{"variant": "Sinformer", "d_model": 8, "n_heads": 2}])", "[2880]",
                                 R"(, "memory_budget_bytes": 2147483648)", 30000),
                     "exp_guard");
  const auto m = run_experiment(c);
  REQUIRE(m.runs.size() == 2);
  CHECK(m.runs[0].status == RunStatus::kOk);
  CHECK(m.runs[1].status == RunStatus::kSkipped);
  CHECK(m.runs[1].message.find("intractable at this horizon") != std::string::npos);
  CHECK(m.all_ok());
  CHECK(slurp(c.output_dir / "results.md").find("Skipped or failed runs") != std::string::npos);
}

TEST_CASE("an infeasible horizon is recorded and the grid continues") {
  auto c = config_in(sine_config("[\"Linear\"]", "[24, 600]", "", 2400), "exp_infeasible");
  const auto m = run_experiment(c);
  REQUIRE(m.runs.size() == 4);
  CHECK(m.runs[1].status == RunStatus::kOk);
  CHECK(m.runs[2].status == RunStatus::kFailed);
  CHECK(m.runs[3].status == RunStatus::kFailed);
  CHECK(m.runs[3].message.find("infeasible") != std::string::npos);
  CHECK_FALSE(m.all_ok());
  CHECK(lines(slurp(c.output_dir / "results.csv")).size() == 3);
}

TEST_CASE("tuning") {
  auto c = parse_experiment_config(sine_config("[\"Linear\"]", "[24]"));
  c.epochs = 3;
  const auto data = prepare_data(c);
  ModelConfig tmpl{Variant::kLinear, 0};

  c.tuning = TuningGrid{{48}, {0.5}, 0};
  const auto single = tune(c, data, tmpl, 24);
  CHECK(single.input_len == 48);
  CHECK(single.train_portion == 0.5);
  CHECK(single.candidates.size() == 1);

  // A negligible learning rate leaves the initial weights, so both portions
  // score identically and the larger one wins the tie.
  c.lr_start = 1e-250;
  c.lr_end = 1e-260;
  c.tuning = TuningGrid{{24}, {0.5, 1.0}, 0};
  const auto tie = tune(c, data, tmpl, 24);
  REQUIRE(tie.candidates.size() == 2);
  CHECK(tie.candidates[0].val_mae == tie.candidates[1].val_mae);
  CHECK(tie.train_portion == 1.0);

  c.tuning = TuningGrid{{5000}, {1.0}, 0};
  CHECK_THROWS_AS(tune(c, data, tmpl, 24), ConfigError);
}

TEST_CASE("tuning prefers the longer window when the period exceeds the horizon") {
  // A random pattern of period 40 tiled over the series: with I = 48 every
  // target is a copy of an input, with I = 24 the first 16 steps are not.
  std::mt19937_64 rng(12);
  std::normal_distribution<double> nd;
  std::vector<double> pattern(40);
  for (auto& v : pattern) v = nd(rng);
  const auto dir = test::scratch_dir("exp_longrange");
  {
    std::ofstream f(dir / "tiled.csv");
    f << "v\n";
    for (int t = 0; t < 3000; ++t) f << pattern[t % 40] << "\n";
  }
  auto c = parse_experiment_config(R"({"dataset": {"name": "tiled", "csv": "tiled.csv"},
      "split": [0.6, 0.2, 0.2], "horizons": [24], "models": ["Linear"], "epochs": 30,
      "lr_start": 0.01, "lr_end": 0.0001, "tuning": {"input_lens": [24, 48], "train_portions": [1.0]}})",
                                   dir);
  const auto data = prepare_data(c);
  const auto r = tune(c, data, ModelConfig{Variant::kLinear, 0}, 24);
  REQUIRE(r.candidates.size() == 2);
  MESSAGE("val MAE I=24: " << r.candidates[0].val_mae << ", I=48: " << r.candidates[1].val_mae);
  CHECK(r.input_len == 48);
}

TEST_CASE("forecast plot") {
  SyntheticSpec spec;
  spec.length = 600;
  const auto table = generate_synthetic(spec);
  const auto test_ds = make_windows(table, 48, 48, 1);
  Forecaster p(ModelConfig{Variant::kPersistence, 48, 48, 1});
  const std::string svg = render_forecast_svg(p, test_ds, 7);
  CHECK(well_formed_single_root(svg));
  CHECK(svg.find("forecast step") != std::string::npos);
  CHECK(svg.find("standardized value") != std::string::npos);
  const auto truth = polyline_points(svg, "truth"), fc = polyline_points(svg, "forecast");
  CHECK(truth.size() == 48);
  CHECK(truth == fc);

  Forecaster lin(ModelConfig{Variant::kLinear, 48, 48, 1});
  CHECK(polyline_points(render_forecast_svg(lin, test_ds, 0), "forecast").size() == 48);
  CHECK_THROWS_AS(render_forecast_svg(p, test_ds, test_ds.size()), ContractError);

  const auto out = test::scratch_dir("plot") / "f.svg";
  emit_forecast_plot(p, test_ds, 0, out);
  CHECK(well_formed_single_root(slurp(out)));
}

TEST_CASE("command line exit codes") {
  const auto dir = test::scratch_dir("cli");
  auto write = [&](const std::string& name, const std::string& text) {
    std::ofstream(dir / name) << text;
    return (dir / name).string();
  };
  auto run = [&](const std::string& args) {
    const std::string cmd = std::string(TSF_CLI_PATH) + " " + args + " >" + (dir / "out.txt").string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  };
  const auto ok = write("ok.json", sine_config("[\"Persistence\"]", "[96]"));
  const auto infeasible = write("bad_h.json", sine_config("[\"Persistence\"]", "[2000]"));
  const auto broken = write("broken.json", sine_config("[\"Persistence\"]", "[96]", R"(, "nope": 1)"));

  CHECK(run("run --config " + ok + " --out " + (dir / "r1").string()) == 0);
  CHECK(std::filesystem::exists(dir / "r1" / "results.csv"));
  CHECK(run("run --config " + infeasible + " --out " + (dir / "r2").string()) == 1);
  CHECK(run("run --config " + broken) == 2);
  CHECK(run("run") == 2);
  CHECK(run("report --manifest " + (dir / "r1" / "manifest.json").string() + " --format csv --out " +
            (dir / "r1.csv").string()) == 0);
  CHECK(slurp(dir / "r1.csv") == slurp(dir / "r1" / "results.csv"));
  CHECK(run("report --manifest " + (dir / "r1" / "manifest.json").string() + " --format xml") == 2);
  CHECK(run("plot --config " + ok + " --model Persistence --horizon 96 --window-index 3 --svg " +
            (dir / "p.svg").string()) == 0);
  CHECK(well_formed_single_root(slurp(dir / "p.svg")));

  const std::string env_cmd = "TSF_OUTPUT_DIR=" + (dir / "r3").string() + " " + std::string(TSF_CLI_PATH) +
                              " run --config " + ok + " >/dev/null 2>&1";
  CHECK(std::system(env_cmd.c_str()) == 0);
  CHECK(std::filesystem::exists(dir / "r3" / "results.csv"));
}
