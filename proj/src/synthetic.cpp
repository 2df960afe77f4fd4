#include "tsf/synthetic.hpp"

#include <cmath>
#include <numbers>

#include "tsf/error.hpp"

namespace tsf {

GaussianSource::GaussianSource(std::uint64_t seed) : engine_(seed) {}

double GaussianSource::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double GaussianSource::next() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

TimeSeriesTable generate_synthetic(const SyntheticSpec& spec) {
  if (spec.length < 2) throw ConfigError("synthetic series needs at least 2 samples");
  for (const auto& c : spec.components) {
    if (!(c.period > 0.0)) throw ConfigError("synthetic component period must be positive");
  }
  GaussianSource noise(spec.seed);
  std::vector<double> values(spec.length);
  for (std::size_t t = 0; t < spec.length; ++t) {
    const double td = static_cast<double>(t);
    double v = spec.trend_per_step * td;
    for (const auto& c : spec.components) {
      v += c.amplitude * std::sin(2.0 * std::numbers::pi * std::fmod(td, c.period) / c.period + c.phase);
    }
    if (spec.noise_std > 0.0) v += spec.noise_std * noise.next();
    values[t] = v;
  }
  TimeSeriesTable table;
  table.name = spec.name;
  table.columns = {"value"};
  table.values = Tensor({spec.length, 1}, std::move(values));
  table.frequency_label = spec.frequency_label;
  return table;
}

SyntheticSpec venice_like_spec(std::size_t length, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.name = "venice_like";
  spec.length = length;
  spec.components = {
      {12.4206, 1.00, 0.0},  // M2
      {12.0000, 0.55, 1.1},  // S2
      {23.9345, 0.60, 2.3},  // K1
      {25.8193, 0.20, 0.7},  // O1
  };
  spec.noise_std = 0.15;
  spec.seed = seed;
  spec.frequency_label = "1h";
  return spec;
}

}  // namespace tsf
