#include "tsf/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "tsf/error.hpp"

namespace tsf {

double mae(const Tensor& pred, const Tensor& truth) {
  if (pred.shape() != truth.shape()) {
    throw DimensionError("mae: shapes differ, " + shape_to_string(pred.shape()) + " vs " +
                         shape_to_string(truth.shape()));
  }
  if (pred.empty()) throw ContractError("mae of empty tensors");
  double sum = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) sum += std::fabs(pred[i] - truth[i]);
  return sum / static_cast<double>(pred.size());
}

double dataset_mae(const Forecaster& model, const WindowDataset& ds, std::size_t chunk) {
  if (ds.empty()) throw ContractError("evaluation on an empty window dataset");
  if (chunk == 0) chunk = 1;
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t begin = 0; begin < ds.size(); begin += chunk) {
    const auto end = std::min(ds.size(), begin + chunk);
    const Batch batch = ds.gather_range(begin, end);
    const Tensor pred = model.predict(batch.inputs);
    for (std::size_t i = 0; i < pred.size(); ++i) sum += std::fabs(pred[i] - batch.targets[i]);
    count += pred.size();
  }
  return sum / static_cast<double>(count);
}

EvalResult evaluate(const Forecaster& model, const WindowDataset& test, const std::string& dataset,
                    std::uint64_t seed) {
  if (test.empty()) throw ContractError("evaluate: test set has no windows");
  return EvalResult{dataset,          model.name(),           model.config().horizon, model.config().input_len,
                    dataset_mae(model, test), test.size(), seed};
}

double improvement(double baseline_mae, double model_mae) {
  if (!(baseline_mae > 0.0)) throw ContractError("improvement: baseline MAE must be positive");
  return (baseline_mae - model_mae) / baseline_mae;
}

std::vector<ImprovementRow> aggregate_improvements(const std::vector<EvalResult>& results,
                                                   const std::vector<EvalResult>& baseline_results) {
  std::map<std::pair<std::string, std::size_t>, double> baseline;
  for (const auto& b : baseline_results) baseline[{b.dataset, b.horizon}] = b.mae;

  struct Acc {
    double sum = 0.0;
    std::size_t n = 0;
    std::size_t order = 0;
  };
  std::map<std::pair<std::size_t, std::string>, Acc> acc;
  std::map<std::string, std::size_t> first_seen;
  for (const auto& r : results) {
    auto it = baseline.find({r.dataset, r.horizon});
    if (it == baseline.end()) {
      throw ContractError("no baseline result for dataset '" + r.dataset + "' at horizon " + std::to_string(r.horizon));
    }
    first_seen.emplace(r.model, first_seen.size());
    auto& a = acc[{r.horizon, r.model}];
    a.sum += improvement(it->second, r.mae);
    a.n += 1;
    a.order = first_seen.at(r.model);
  }

  std::vector<std::pair<std::pair<std::size_t, std::size_t>, ImprovementRow>> rows;
  for (const auto& [key, a] : acc) {
    rows.push_back({{key.first, a.order}, ImprovementRow{key.second, key.first, a.sum / static_cast<double>(a.n), a.n}});
  }
  std::sort(rows.begin(), rows.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
  std::vector<ImprovementRow> out;
  out.reserve(rows.size());
  for (auto& r : rows) out.push_back(std::move(r.second));
  return out;
}

}  // namespace tsf
