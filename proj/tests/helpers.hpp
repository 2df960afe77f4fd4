#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tsf/synthetic.hpp"
#include "tsf/tensor.hpp"

namespace tsf::test {

inline Tensor random_tensor(Shape shape, std::uint64_t seed, double scale = 1.0) {
  GaussianSource g(seed);
  std::vector<double> d(shape_numel(shape));
  for (auto& x : d) x = scale * g.next();
  return Tensor(std::move(shape), std::move(d));
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("tsf_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace tsf::test
