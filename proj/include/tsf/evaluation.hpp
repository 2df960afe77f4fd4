#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "tsf/data.hpp"
#include "tsf/models.hpp"

namespace tsf {

// Mean of |pred - truth| over every element.
double mae(const Tensor& pred, const Tensor& truth);

// MAE of the model over every window of `ds`, evaluated in chunks.
double dataset_mae(const Forecaster& model, const WindowDataset& ds, std::size_t chunk = 256);

struct EvalResult {
  std::string dataset;
  std::string model;
  std::size_t horizon = 0;
  std::size_t input_len = 0;
  double mae = 0.0;
  std::size_t n_windows = 0;
  std::uint64_t seed = 0;
};

EvalResult evaluate(const Forecaster& model, const WindowDataset& test, const std::string& dataset,
                    std::uint64_t seed = 0);

// (baseline - model) / baseline; positive means the model beats the baseline.
double improvement(double baseline_mae, double model_mae);

struct ImprovementRow {
  std::string model;
  std::size_t horizon = 0;
  double mean_improvement = 0.0;
  std::size_t n_datasets = 0;

  bool beats_baseline() const { return mean_improvement > 0.0; }
};

/// Mean improvement over datasets for each (model, horizon). Rows are ordered
/// by horizon, then by first appearance of the model in `results`. Every
/// (dataset, horizon) in `results` must have a baseline entry.
std::vector<ImprovementRow> aggregate_improvements(const std::vector<EvalResult>& results,
                                                   const std::vector<EvalResult>& baseline_results);

}  // namespace tsf
