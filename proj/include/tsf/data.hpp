#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tsf/tensor.hpp"

namespace tsf {

// A loaded dataset: T chronological samples of C numeric channels.
struct TimeSeriesTable {
  std::string name;
  std::vector<std::string> columns;
  std::optional<std::vector<std::string>> timestamps;
  Tensor values;  // [T x C]
  std::string frequency_label;

  std::size_t length() const { return values.dim(0); }
  std::size_t channels() const { return values.dim(1); }

  // Rows [begin, end) as a new table.
  TimeSeriesTable slice(std::size_t begin, std::size_t end) const;
};

// Checks T >= 2 and C >= 1; throws DataError otherwise.
void validate_table(const TimeSeriesTable& table);

/// Reads a comma-separated file with a header line. Every column except the
/// optional timestamp column must hold decimal numbers; empty or malformed
/// cells are load errors naming the row and column.
TimeSeriesTable load_csv(const std::filesystem::path& path,
                         const std::optional<std::string>& timestamp_column = std::nullopt);

struct SplitSpec {
  double train_frac = 0.6;
  double val_frac = 0.2;
  double test_frac = 0.2;

  void validate() const;
};

struct Splits {
  TimeSeriesTable train;
  TimeSeriesTable val;
  TimeSeriesTable test;
};

// Boundaries at floor(T * train_frac) and floor(T * (train_frac + val_frac)).
Splits split(const TimeSeriesTable& table, const SplitSpec& spec);

struct StandardizationStats {
  std::vector<double> mean;
  std::vector<double> std;
};

// Per-channel mean and population std of the training segment.
StandardizationStats fit_standardizer(const TimeSeriesTable& train);
TimeSeriesTable apply_standardizer(const TimeSeriesTable& table, const StandardizationStats& stats);
TimeSeriesTable invert_standardizer(const TimeSeriesTable& table, const StandardizationStats& stats);

struct Batch {
  Tensor inputs;   // [B x I x C]
  Tensor targets;  // [B x L x C]
};

/// Supervised (input, target) windows cut from one series.
///
/// Pair k reads rows [k*stride, k*stride + I) as input and the following L
/// rows as target. Windows are materialized on demand by gather(), so long
/// horizons do not require N*(I+L)*C doubles up front.
class WindowDataset {
 public:
  WindowDataset() = default;
  WindowDataset(const TimeSeriesTable& table, std::size_t input_len, std::size_t horizon, std::size_t stride);

  std::size_t size() const { return count_; }
  bool empty() const { return count_ == 0; }
  std::size_t input_len() const { return input_len_; }
  std::size_t horizon() const { return horizon_; }
  std::size_t stride() const { return stride_; }
  std::size_t channels() const { return channels_; }

  // First row of the input and of the target for pair k.
  std::size_t input_start(std::size_t k) const { return k * stride_; }
  std::size_t target_start(std::size_t k) const { return k * stride_ + input_len_; }

  Batch gather(const std::vector<std::size_t>& indices) const;
  Batch gather_range(std::size_t begin, std::size_t end) const;
  Tensor inputs() const;   // [N x I x C]
  Tensor targets() const;  // [N x L x C]

 private:
  std::shared_ptr<const Tensor> series_;
  std::size_t input_len_ = 0;
  std::size_t horizon_ = 0;
  std::size_t stride_ = 1;
  std::size_t channels_ = 0;
  std::size_t count_ = 0;
};

// floor((T - I - L) / stride) + 1 when T >= I + L, else 0.
std::size_t window_count(std::size_t length, std::size_t input_len, std::size_t horizon, std::size_t stride);

WindowDataset make_windows(const TimeSeriesTable& table, std::size_t input_len, std::size_t horizon,
                           std::size_t stride = 1);

/// Epoch ordering of window indices split into batches. Without a seed the
/// order is file order; with one it is a Fisher-Yates shuffle driven by
/// mt19937_64, reproducible across standard libraries.
std::vector<std::vector<std::size_t>> batches(const WindowDataset& ds, std::size_t batch_size,
                                              std::optional<std::uint64_t> shuffle_seed = std::nullopt);

}  // namespace tsf
