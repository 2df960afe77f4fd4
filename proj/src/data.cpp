#include "tsf/data.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "tsf/error.hpp"

namespace tsf {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      cells.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  cells.push_back(std::move(cur));
  return cells;
}

std::string trim(std::string s) {
  const auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

bool parse_double(const std::string& text, double& out) {
  const char* first = text.data();
  const char* last = text.data() + text.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

}  // namespace

TimeSeriesTable TimeSeriesTable::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > length()) {
    throw ContractError("table slice [" + std::to_string(begin) + ", " + std::to_string(end) + ") out of range for " +
                        std::to_string(length()) + " rows");
  }
  const auto c = channels();
  std::vector<double> data(values.data().begin() + static_cast<std::ptrdiff_t>(begin * c),
                           values.data().begin() + static_cast<std::ptrdiff_t>(end * c));
  TimeSeriesTable out{name, columns, std::nullopt, make_unchecked({end - begin, c}, std::move(data)), frequency_label};
  if (timestamps) {
    out.timestamps = std::vector<std::string>(timestamps->begin() + static_cast<std::ptrdiff_t>(begin),
                                              timestamps->begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

void validate_table(const TimeSeriesTable& table) {
  if (table.values.rank() != 2) throw DataError("table values must be [T x C]");
  if (table.length() < 2) throw DataError("table '" + table.name + "' needs at least 2 rows");
}

TimeSeriesTable load_csv(const std::filesystem::path& path, const std::optional<std::string>& timestamp_column) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    header = split_csv_line(line);
    break;
  }
  if (header.empty()) throw DataError("'" + path.string() + "' is empty");
  for (auto& h : header) h = trim(h);

  std::optional<std::size_t> ts_index;
  if (timestamp_column) {
    auto it = std::find(header.begin(), header.end(), *timestamp_column);
    if (it == header.end()) {
      throw DataError("timestamp column '" + *timestamp_column + "' not found in '" + path.string() + "'");
    }
    ts_index = static_cast<std::size_t>(it - header.begin());
  }

  TimeSeriesTable table;
  table.name = path.stem().string();
  for (std::size_t j = 0; j < header.size(); ++j)
    if (j != ts_index) table.columns.push_back(header[j]);
  if (table.columns.empty()) throw DataError("'" + path.string() + "' has no numeric columns");
  if (ts_index) table.timestamps.emplace();

  std::vector<double> data;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("'" + path.string() + "' line " + std::to_string(line_no) + ": expected " +
                      std::to_string(header.size()) + " cells, found " + std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < cells.size(); ++j) {
      if (j == ts_index) {
        table.timestamps->push_back(trim(cells[j]));
        continue;
      }
      double v = 0.0;
      const std::string cell = trim(cells[j]);
      if (!parse_double(cell, v)) {
        throw DataError("'" + path.string() + "' line " + std::to_string(line_no) + ", column '" + header[j] +
                        "': cannot parse '" + cell + "' as a number");
      }
      data.push_back(v);
    }
    ++rows;
  }
  if (rows == 0) throw DataError("'" + path.string() + "' is empty (header only)");
  table.values = Tensor({rows, table.columns.size()}, std::move(data));
  validate_table(table);
  return table;
}

void SplitSpec::validate() const {
  for (double f : {train_frac, val_frac, test_frac}) {
    if (!(f > 0.0 && f < 1.0)) throw ConfigError("split fractions must lie in (0, 1)");
  }
  if (std::fabs(train_frac + val_frac + test_frac - 1.0) > 1e-9) {
    throw ConfigError("split fractions must sum to 1");
  }
}

Splits split(const TimeSeriesTable& table, const SplitSpec& spec) {
  spec.validate();
  const auto t = table.length();
  const auto b1 = static_cast<std::size_t>(std::floor(static_cast<double>(t) * spec.train_frac));
  const auto b2 = static_cast<std::size_t>(std::floor(static_cast<double>(t) * (spec.train_frac + spec.val_frac)));
  if (b1 == 0 || b2 <= b1 || b2 >= t) {
    throw DataError("split of " + std::to_string(t) + " rows leaves an empty segment");
  }
  return Splits{table.slice(0, b1), table.slice(b1, b2), table.slice(b2, t)};
}

StandardizationStats fit_standardizer(const TimeSeriesTable& train) {
  const auto t = train.length(), c = train.channels();
  if (t < 2) throw DataError("standardizer needs at least 2 rows");
  StandardizationStats stats{std::vector<double>(c, 0.0), std::vector<double>(c, 0.0)};
  for (std::size_t j = 0; j < c; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < t; ++i) mean += train.values.at(i, j);
    mean /= static_cast<double>(t);
    double var = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      const double d = train.values.at(i, j) - mean;
      var += d * d;
    }
    var /= static_cast<double>(t);
    const double sd = std::sqrt(var);
    if (!(sd > 0.0)) {
      const std::string label = j < train.columns.size() ? train.columns[j] : std::to_string(j);
      throw DataError("channel '" + label + "' is constant in the training segment");
    }
    stats.mean[j] = mean;
    stats.std[j] = sd;
  }
  return stats;
}

namespace {

TimeSeriesTable affine_channels(const TimeSeriesTable& table, const StandardizationStats& stats, bool forward) {
  const auto c = table.channels();
  if (stats.mean.size() != c || stats.std.size() != c) {
    throw ContractError("standardizer has " + std::to_string(stats.mean.size()) + " channels, table has " +
                        std::to_string(c));
  }
  std::vector<double> out(table.values.data().begin(), table.values.data().end());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto j = i % c;
    out[i] = forward ? (out[i] - stats.mean[j]) / stats.std[j] : out[i] * stats.std[j] + stats.mean[j];
  }
  TimeSeriesTable result = table;
  result.values = make_unchecked(table.values.shape(), std::move(out));
  return result;
}

}  // namespace

TimeSeriesTable apply_standardizer(const TimeSeriesTable& table, const StandardizationStats& stats) {
  return affine_channels(table, stats, true);
}

TimeSeriesTable invert_standardizer(const TimeSeriesTable& table, const StandardizationStats& stats) {
  return affine_channels(table, stats, false);
}

std::size_t window_count(std::size_t length, std::size_t input_len, std::size_t horizon, std::size_t stride) {
  if (length < input_len + horizon) return 0;
  return (length - input_len - horizon) / stride + 1;
}

WindowDataset::WindowDataset(const TimeSeriesTable& table, std::size_t input_len, std::size_t horizon,
                             std::size_t stride)
    : series_(std::make_shared<const Tensor>(table.values)),
      input_len_(input_len),
      horizon_(horizon),
      stride_(stride),
      channels_(table.channels()),
      count_(window_count(table.length(), input_len, horizon, stride)) {
  if (input_len == 0 || horizon == 0 || stride == 0) {
    throw ContractError("make_windows: input_len, horizon and stride must be >= 1");
  }
}

Batch WindowDataset::gather(const std::vector<std::size_t>& indices) const {
  if (indices.empty()) throw ContractError("gather: empty index list");
  const auto b = indices.size(), c = channels_;
  std::vector<double> in(b * input_len_ * c), out(b * horizon_ * c);
  const double* src = series_->data().data();
  for (std::size_t n = 0; n < b; ++n) {
    const auto k = indices[n];
    if (k >= count_) throw ContractError("window index " + std::to_string(k) + " out of range");
    std::copy_n(src + input_start(k) * c, input_len_ * c, in.data() + n * input_len_ * c);
    std::copy_n(src + target_start(k) * c, horizon_ * c, out.data() + n * horizon_ * c);
  }
  return Batch{make_unchecked({b, input_len_, c}, std::move(in)), make_unchecked({b, horizon_, c}, std::move(out))};
}

Batch WindowDataset::gather_range(std::size_t begin, std::size_t end) const {
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  return gather(idx);
}

Tensor WindowDataset::inputs() const {
  if (empty()) throw ContractError("inputs() on empty window dataset");
  return gather_range(0, count_).inputs;
}

Tensor WindowDataset::targets() const {
  if (empty()) throw ContractError("targets() on empty window dataset");
  return gather_range(0, count_).targets;
}

WindowDataset make_windows(const TimeSeriesTable& table, std::size_t input_len, std::size_t horizon,
                           std::size_t stride) {
  return WindowDataset(table, input_len, horizon, stride);
}

std::vector<std::vector<std::size_t>> batches(const WindowDataset& ds, std::size_t batch_size,
                                              std::optional<std::uint64_t> shuffle_seed) {
  if (batch_size == 0) throw ContractError("batch_size must be >= 1");
  std::vector<std::size_t> order(ds.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (shuffle_seed && order.size() > 1) {
    std::mt19937_64 rng(*shuffle_seed);
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      const auto j = static_cast<std::size_t>(rng() % (i + 1));
      std::swap(order[i], order[j]);
    }
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    const auto end = std::min(order.size(), i + batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

}  // namespace tsf
