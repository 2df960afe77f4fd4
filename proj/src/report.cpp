#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "tsf/error.hpp"
#include "tsf/experiment.hpp"

namespace tsf {

using nlohmann::json;

namespace {

// Shortest decimal that round-trips.
std::string shortest(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string render_csv(const RunManifest& m) {
  std::ostringstream os;
  os << "dataset,model,horizon,input_len,seed,mae,improvement_vs_persistence\n";
  for (const auto& r : m.runs) {
    if (!r.result) continue;
    const auto& e = *r.result;
    os << e.dataset << ',' << e.model << ',' << e.horizon << ',' << e.input_len << ',' << e.seed << ','
       << shortest(e.mae) << ',';
    if (r.improvement) os << shortest(*r.improvement);
    os << '\n';
  }
  return os.str();
}

std::string render_markdown(const RunManifest& m, const ReferenceTable* ref) {
  std::vector<std::string> models;
  std::vector<std::pair<std::string, std::size_t>> rows;
  std::map<std::pair<std::string, std::size_t>, std::map<std::string, const RunRecord*>> cells;
  for (const auto& r : m.runs) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
    const std::string dataset = r.result ? r.result->dataset : m.dataset;
    const std::pair key{dataset, r.horizon};
    if (std::find(rows.begin(), rows.end(), key) == rows.end()) rows.push_back(key);
    cells[key][r.model] = &r;
  }

  std::vector<std::string> ref_models;
  std::map<std::tuple<std::string, std::size_t, std::string>, double> ref_values;
  if (ref) {
    for (const auto& e : ref->entries) ref_values[{lower(e.dataset), e.horizon, e.model}] = e.mae;
    for (const auto& name : ref->models) {
      const bool used = std::any_of(rows.begin(), rows.end(), [&](const auto& row) {
        return ref_values.count({lower(row.first), row.second, name}) > 0;
      });
      if (used) ref_models.push_back(name);
    }
  }

  std::ostringstream os;
  os << "# Test MAE: " << m.dataset << "\n\n";
  os << "| Dataset | Horizon |";
  for (const auto& name : models) os << ' ' << name << " |";
  for (const auto& name : ref_models) os << ' ' << name << "* |";
  os << "\n|---|---:|";
  for (std::size_t i = 0; i < models.size() + ref_models.size(); ++i) os << "---:|";
  os << '\n';

  for (const auto& key : rows) {
    const auto& row = cells[key];
    const RunRecord* best = nullptr;
    for (const auto& name : models) {
      auto it = row.find(name);
      if (it == row.end() || !it->second->result) continue;
      if (!best || it->second->result->mae < best->result->mae) best = it->second;
    }
    os << "| " << key.first << " | " << key.second << " |";
    for (const auto& name : models) {
      auto it = row.find(name);
      std::string cell;
      if (it != row.end()) {
        const RunRecord& r = *it->second;
        if (r.result) {
          cell = fixed4(r.result->mae);
          if (&r == best) cell = "**" + cell + "**";
          if (r.model != "Persistence" && r.improvement) {
            cell += *r.improvement > 0.0 ? " (+)" : (*r.improvement < 0.0 ? " (-)" : " (=)");
          }
        } else {
          cell = std::string(run_status_name(r.status));
        }
      }
      os << ' ' << cell << " |";
    }
    for (const auto& name : ref_models) {
      auto it = ref_values.find({lower(key.first), key.second, name});
      os << ' ' << (it == ref_values.end() ? std::string() : fixed4(it->second)) << " |";
    }
    os << '\n';
  }

  os << "\n(+) beats Persistence, (-) loses to it; bold marks the lowest MAE in each row.\n";
  if (!ref_models.empty()) os << "\n\\* " << (ref ? ref->label : "") << "\n";
  bool any_issue = false;
  for (const auto& r : m.runs) {
    if (r.status == RunStatus::kOk) continue;
    if (!any_issue) os << "\n## Skipped or failed runs\n\n";
    any_issue = true;
    os << "- " << r.model << " at horizon " << r.horizon << ": " << run_status_name(r.status) << ", " << r.message
       << '\n';
  }
  if (!m.notes.empty()) {
    os << "\n## Notes\n\n";
    for (const auto& n : m.notes) os << "- " << n << '\n';
  }
  return os.str();
}

}  // namespace

ReportFormat parse_report_format(std::string_view name) {
  const std::string n = lower(std::string(name));
  if (n == "csv") return ReportFormat::kCsv;
  if (n == "markdown" || n == "md") return ReportFormat::kMarkdown;
  throw ConfigError("unknown report format '" + std::string(name) + "' (expected csv or markdown)");
}

ReferenceTable load_reference_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open reference table '" + path.string() + "'");
  ReferenceTable t;
  try {
    const json j = json::parse(in);
    t.label = j.value("note", "published values, not reproduced");
    t.models = j.at("reference_only_models").get<std::vector<std::string>>();
    for (const auto& row : j.at("rows")) {
      const auto dataset = row.at("dataset").get<std::string>();
      const auto horizon = row.at("horizon").get<std::size_t>();
      for (const auto& [model, mae] : row.at("mae").items()) {
        t.entries.push_back({dataset, horizon, model, mae.get<double>()});
      }
    }
  } catch (const json::exception& e) {
    throw DataError("malformed reference table '" + path.string() + "': " + e.what());
  }
  return t;
}

std::string render_report(const RunManifest& manifest, ReportFormat format, const ReferenceTable* reference) {
  if (manifest.runs.empty()) throw ContractError("cannot report an empty manifest");
  return format == ReportFormat::kCsv ? render_csv(manifest) : render_markdown(manifest, reference);
}

void emit_report(const RunManifest& manifest, ReportFormat format, const std::filesystem::path& out,
                 const ReferenceTable* reference) {
  const std::string text = render_report(manifest, format, reference);
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write report '" + out.string() + "'");
  f << text;
}

// ---------------------------------------------------------------------------
// Forecast plot

std::string render_forecast_svg(const Forecaster& model, const WindowDataset& test, std::size_t window_index,
                                std::size_t channel) {
  if (window_index >= test.size()) {
    throw ContractError("window index " + std::to_string(window_index) + " out of range (" +
                        std::to_string(test.size()) + " windows)");
  }
  if (channel >= test.channels()) throw ContractError("channel " + std::to_string(channel) + " out of range");
  const Batch b = test.gather({window_index});
  const Tensor pred = model.predict(b.inputs);
  const std::size_t L = test.horizon();
  const std::size_t C = test.channels();
  if (pred.shape() != b.targets.shape()) throw DimensionError("model horizon does not match the test windows");

  std::vector<double> truth(L), fc(L);
  for (std::size_t t = 0; t < L; ++t) {
    truth[t] = b.targets[t * C + channel];
    fc[t] = pred[t * C + channel];
  }
  double lo = std::min(*std::min_element(truth.begin(), truth.end()), *std::min_element(fc.begin(), fc.end()));
  double hi = std::max(*std::max_element(truth.begin(), truth.end()), *std::max_element(fc.begin(), fc.end()));
  if (hi - lo < 1e-9) {
    lo -= 1.0;
    hi += 1.0;
  }

  constexpr double W = 800, H = 400, ml = 60, mr = 20, mt = 30, mb = 50;
  const double pw = W - ml - mr, ph = H - mt - mb;
  auto px = [&](std::size_t t) { return ml + (L > 1 ? pw * static_cast<double>(t) / static_cast<double>(L - 1) : 0.0); };
  auto py = [&](double v) { return mt + ph * (hi - v) / (hi - lo); };
  auto polyline = [&](const std::vector<double>& ys, const char* cls, const char* color) {
    std::ostringstream os;
    os << "  <polyline class=\"" << cls << "\" fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    char buf[64];
    for (std::size_t t = 0; t < ys.size(); ++t) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", t ? " " : "", px(t), py(ys[t]));
      os << buf;
    }
    os << "\"/>\n";
    return os.str();
  };

  std::ostringstream os;
  char buf[128];
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"800\" height=\"400\" viewBox=\"0 0 800 400\">\n";
  os << "  <title>" << model.name() << " forecast, window " << window_index << ", horizon " << L << "</title>\n";
  os << "  <rect x=\"0\" y=\"0\" width=\"800\" height=\"400\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "  <line x1=\"%.0f\" y1=\"%.0f\" x2=\"%.0f\" y2=\"%.0f\" stroke=\"black\"/>\n", ml,
                mt + ph, ml + pw, mt + ph);
  os << buf;
  std::snprintf(buf, sizeof buf, "  <line x1=\"%.0f\" y1=\"%.0f\" x2=\"%.0f\" y2=\"%.0f\" stroke=\"black\"/>\n", ml, mt,
                ml, mt + ph);
  os << buf;
  std::snprintf(buf, sizeof buf, "  <text x=\"%.0f\" y=\"%.0f\" font-size=\"10\" text-anchor=\"end\">%.3f</text>\n",
                ml - 4, mt + 4, hi);
  os << buf;
  std::snprintf(buf, sizeof buf, "  <text x=\"%.0f\" y=\"%.0f\" font-size=\"10\" text-anchor=\"end\">%.3f</text>\n",
                ml - 4, mt + ph, lo);
  os << buf;
  os << "  <text x=\"430\" y=\"390\" font-size=\"12\" text-anchor=\"middle\">forecast step</text>\n";
  os << "  <text x=\"15\" y=\"190\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 15 190)\">"
        "standardized value</text>\n";
  os << polyline(truth, "truth", "#222222");
  os << polyline(fc, "forecast", "#d62728");
  os << "  <text x=\"700\" y=\"20\" font-size=\"11\" fill=\"#222222\">truth</text>\n";
  os << "  <text x=\"740\" y=\"20\" font-size=\"11\" fill=\"#d62728\">" << model.name() << "</text>\n";
  os << "</svg>\n";
  return os.str();
}

void emit_forecast_plot(const Forecaster& model, const WindowDataset& test, std::size_t window_index,
                        const std::filesystem::path& out, std::size_t channel) {
  const std::string svg = render_forecast_svg(model, test, window_index, channel);
  std::ofstream f(out, std::ios::binary | std::ios::trunc);
  if (!f) throw DataError("cannot write plot '" + out.string() + "'");
  f << svg;
}

}  // namespace tsf
