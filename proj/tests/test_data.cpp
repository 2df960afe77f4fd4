#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "helpers.hpp"
#include "tsf/data.hpp"
#include "tsf/error.hpp"
#include "tsf/synthetic.hpp"

using namespace tsf;

namespace {

std::filesystem::path write_text(const std::string& name, const std::string& text) {
  const auto dir = test::scratch_dir("data");
  const auto p = dir / name;
  std::ofstream(p, std::ios::binary) << text;
  return p;
}

TimeSeriesTable table_from(std::vector<std::vector<double>> rows) {
  const std::size_t c = rows.front().size();
  std::vector<double> flat;
  for (auto& r : rows) flat.insert(flat.end(), r.begin(), r.end());
  TimeSeriesTable t;
  t.name = "t";
  for (std::size_t j = 0; j < c; ++j) t.columns.push_back("c" + std::to_string(j));
  t.values = Tensor({rows.size(), c}, flat);
  return t;
}

TimeSeriesTable ramp(std::size_t n, std::size_t c = 1) {
  std::vector<std::vector<double>> rows(n, std::vector<double>(c));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) rows[i][j] = static_cast<double>(i) + 1000.0 * static_cast<double>(j);
  return table_from(rows);
}

}  // namespace

TEST_CASE("load_csv reads numeric columns and skips the timestamp") {
  const auto p = write_text("ok.csv", "date,a,b\n2020-01-01,1.5,2\r\n2020-01-02,-3,4e-1\n2020-01-03,5,6\n");
  const auto t = load_csv(p, "date");
  CHECK(t.length() == 3);
  CHECK(t.channels() == 2);
  CHECK(t.columns == std::vector<std::string>{"a", "b"});
  CHECK(t.values.at(1, 1) == 0.4);
  REQUIRE(t.timestamps.has_value());
  CHECK(t.timestamps->at(2) == "2020-01-03");
}

TEST_CASE("load_csv errors") {
  CHECK_THROWS_WITH_AS(load_csv(write_text("h.csv", "a,b\n")), doctest::Contains("empty"), DataError);
  CHECK_THROWS_WITH_AS(load_csv(write_text("e.csv", "")), doctest::Contains("empty"), DataError);
  CHECK_THROWS_WITH_AS(load_csv(write_text("bad.csv", "a,b\n1,2\n3,x\n")), doctest::Contains("line 3"), DataError);
  CHECK_THROWS_WITH_AS(load_csv(write_text("miss.csv", "a,b\n1,2\n3,\n")), doctest::Contains("column 'b'"), DataError);
  CHECK_THROWS_AS(load_csv(write_text("ts.csv", "a,b\n1,2\n3,4\n"), std::string("date")), DataError);
  CHECK_THROWS_AS(load_csv("/nonexistent/file.csv"), DataError);
}

TEST_CASE("split boundaries use floor of cumulative fractions") {
  auto sizes = [](std::size_t n, SplitSpec s) {
    const auto sp = split(ramp(n), s);
    return std::vector<std::size_t>{sp.train.length(), sp.val.length(), sp.test.length()};
  };
  CHECK(sizes(10, {0.6, 0.2, 0.2}) == std::vector<std::size_t>{6, 2, 2});
  CHECK(sizes(100, {0.7, 0.1, 0.2}) == std::vector<std::size_t>{70, 10, 20});
  // floor(7360 * 0.66) = 4857, floor(7360 * 0.83) = 6108.
  CHECK(sizes(7360, {0.66, 0.17, 0.17}) == std::vector<std::size_t>{4857, 1251, 1252});
  CHECK_THROWS_AS(split(ramp(2), {0.6, 0.2, 0.2}), DataError);
  CHECK_THROWS_AS((SplitSpec{0.5, 0.5, 0.0}.validate()), ConfigError);
  CHECK_THROWS_AS((SplitSpec{0.5, 0.3, 0.3}.validate()), ConfigError);
}

TEST_CASE("split segments reconstruct the table") {
  for (std::size_t n : {10, 57, 1000}) {
    const auto t = ramp(n, 2);
    const auto sp = split(t, {0.6, 0.2, 0.2});
    std::vector<double> joined;
    for (const auto* seg : {&sp.train, &sp.val, &sp.test})
      joined.insert(joined.end(), seg->values.data().begin(), seg->values.data().end());
    CHECK(joined == std::vector<double>(t.values.data().begin(), t.values.data().end()));
  }
}

TEST_CASE("standardizer") {
  const auto stats = fit_standardizer(table_from({{0}, {2}}));
  CHECK(stats.mean[0] == 1.0);
  CHECK(stats.std[0] == 1.0);
  CHECK_THROWS_WITH_AS(fit_standardizer(table_from({{5, 1}, {5, 2}, {5, 3}})), doctest::Contains("c0"), DataError);

  StandardizationStats s{{1.0}, {2.0}};
  CHECK(apply_standardizer(table_from({{3}, {1}}), s).values[0] == 1.0);
  StandardizationStats identity{{0.0}, {1.0}};
  const auto t = table_from({{3.5}, {-1}});
  CHECK(apply_standardizer(t, identity).values == t.values);
  CHECK_THROWS_AS(apply_standardizer(ramp(4, 2), s), ContractError);

  SyntheticSpec spec;
  spec.length = 500;
  spec.noise_std = 0.3;
  spec.seed = 2;
  auto raw = generate_synthetic(spec);
  const auto fit = fit_standardizer(raw);
  const auto z = apply_standardizer(raw, fit);
  double mean = 0.0, var = 0.0;
  for (std::size_t i = 0; i < z.length(); ++i) mean += z.values[i];
  mean /= static_cast<double>(z.length());
  for (std::size_t i = 0; i < z.length(); ++i) var += (z.values[i] - mean) * (z.values[i] - mean);
  var /= static_cast<double>(z.length());
  CHECK(std::abs(mean) < 1e-10);
  CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-10);
  const auto back = invert_standardizer(z, fit);
  CHECK(test::max_abs_diff(back.values, raw.values) < 1e-12);
}

TEST_CASE("standardization statistics ignore validation and test rows") {
  SyntheticSpec spec;
  spec.length = 300;
  spec.noise_std = 0.2;
  auto t = generate_synthetic(spec);
  const auto before = fit_standardizer(split(t, {0.6, 0.2, 0.2}).train);
  auto data = std::vector<double>(t.values.data().begin(), t.values.data().end());
  for (std::size_t i = 180; i < data.size(); ++i) data[i] += 1e6;
  t.values = Tensor(t.values.shape(), data);
  const auto after = fit_standardizer(split(t, {0.6, 0.2, 0.2}).train);
  CHECK(before.mean == after.mean);
  CHECK(before.std == after.std);
}

TEST_CASE("windows") {
  const auto t = ramp(5);
  const auto ds = make_windows(t, 2, 1, 1);
  REQUIRE(ds.size() == 3);
  const auto b = ds.gather({0});
  CHECK(b.inputs == Tensor({1, 2, 1}, {0, 1}));
  CHECK(b.targets == Tensor({1, 1, 1}, {2}));
  CHECK(make_windows(t, 3, 3, 1).size() == 0);
  CHECK(make_windows(ramp(100), 10, 5, 2).size() == 43);
  CHECK_THROWS_AS(make_windows(t, 0, 1, 1), ContractError);
}

TEST_CASE("window count formula and contiguity hold for random shapes") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t T = 2 + rng() % 80, I = 1 + rng() % 20, L = 1 + rng() % 20, stride = 1 + rng() % 6;
    const std::size_t expect = T >= I + L ? (T - I - L) / stride + 1 : 0;
    CHECK(window_count(T, I, L, stride) == expect);
    const auto t = ramp(T, 2);
    const auto ds = make_windows(t, I, L, stride);
    REQUIRE(ds.size() == expect);
    if (expect == 0) continue;
    const std::size_t k = rng() % expect;
    const auto b = ds.gather({k});
    // Channel 0 holds the row index, so targets continue the input by one step.
    CHECK(b.inputs[0] == static_cast<double>(k * stride));
    CHECK(b.targets[0] == b.inputs[(I - 1) * 2] + 1.0);
    CHECK(b.targets[(L - 1) * 2] + 1.0 <= static_cast<double>(T));
    CHECK(b.inputs[1] == 1000.0 + b.inputs[0]);
  }
}

TEST_CASE("batches") {
  const auto ds = make_windows(ramp(13), 2, 2, 1);
  REQUIRE(ds.size() == 10);
  auto sizes = [](const auto& bs) {
    std::vector<std::size_t> s;
    for (const auto& b : bs) s.push_back(b.size());
    return s;
  };
  const auto plain = batches(ds, 4);
  CHECK(sizes(plain) == std::vector<std::size_t>{4, 4, 2});
  CHECK(plain[0] == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK(batches(ds, 4, 9) == batches(ds, 4, 9));
  CHECK(batches(ds, 4, 9) != batches(ds, 4, 10));
  std::multiset<std::size_t> seen;
  for (const auto& b : batches(ds, 3, 5)) seen.insert(b.begin(), b.end());
  CHECK(seen.size() == 10);
  CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 10);
  CHECK_THROWS_AS(batches(ds, 0), ContractError);
}

TEST_CASE("synthetic series") {
  SyntheticSpec spec;
  spec.length = 480;
  const auto t = generate_synthetic(spec);
  for (std::size_t i = 0; i + 96 < t.length(); ++i) CHECK(t.values[i] == t.values[i + 96]);
  CHECK(generate_synthetic(venice_like_spec(1000, 3)).values == generate_synthetic(venice_like_spec(1000, 3)).values);
  GaussianSource g(4);
  double sum = 0.0, sq = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double x = g.next();
    sum += x;
    sq += x * x;
  }
  CHECK(std::abs(sum / n) < 0.03);
  CHECK(std::abs(sq / n - 1.0) < 0.05);
}
