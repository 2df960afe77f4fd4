#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "tsf/data.hpp"

namespace tsf {

struct SineComponent {
  double period = 24.0;
  double amplitude = 1.0;
  double phase = 0.0;  // radians
};

/// Univariate generator: sum of sinusoids + linear trend + Gaussian noise.
///
/// Phases are computed from fmod(t, period), so a component whose period
/// divides a lag repeats bit-for-bit at that lag.
struct SyntheticSpec {
  std::string name = "synthetic";
  std::size_t length = 1000;
  std::vector<SineComponent> components{{24.0, 1.0, 0.0}};
  double trend_per_step = 0.0;
  double noise_std = 0.0;
  std::uint64_t seed = 0;
  std::string frequency_label = "1h";
};

TimeSeriesTable generate_synthetic(const SyntheticSpec& spec);

// Four principal tidal constituents (M2, S2, K1, O1) in hours plus noise;
// a stand-in for an hourly sea-level record.
SyntheticSpec venice_like_spec(std::size_t length, std::uint64_t seed);

// Standard normal draws from mt19937_64 via Box-Muller; identical on every
// standard library.
class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed);
  double next();
  double uniform();  // [0, 1)

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tsf
