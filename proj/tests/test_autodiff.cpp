#include <doctest.h>

#include <cmath>
#include <functional>
#include <string>

#include "helpers.hpp"
#include "tsf/autodiff.hpp"
#include "tsf/error.hpp"
#include "tsf/models.hpp"

using namespace tsf;
using tsf::test::random_tensor;

TEST_CASE("backward of elementary losses") {
  ParameterSet ps;
  Parameter& x = ps.add("x", ParamRole::kWeight, Tensor::vector({0.0}));
  {
    Graph g;
    g.backward(ad::sum(ad::sin(g.parameter(x))));
    CHECK(x.grad[0] == 1.0);
  }
  x.value = Tensor::vector({1.0, 2.0});
  {
    Graph g;
    g.backward(ad::sum(ad::square(g.parameter(x))));
    CHECK(x.grad == Tensor::vector({2.0, 4.0}));
  }
}

TEST_CASE("backward requires a scalar loss and zeroes grads each call") {
  ParameterSet ps;
  Parameter& w = ps.add("w", ParamRole::kWeight, random_tensor({3, 2}, 4));
  Graph g;
  Var y = ad::matmul(g.constant(random_tensor({2, 3}, 5)), g.parameter(w));
  CHECK_THROWS_AS(g.backward(y), ContractError);
  Var loss = ad::mean(ad::abs(y));
  g.backward(loss);
  const Tensor first = w.grad;
  g.backward(loss);
  CHECK(w.grad == first);
}

TEST_CASE("mean |Wx - y| matches finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    ParameterSet ps;
    Parameter& w = ps.add("w", ParamRole::kWeight, random_tensor({4, 3}, seed));
    const Tensor x = random_tensor({3, 5}, seed + 50), y = random_tensor({4, 5}, seed + 60);
    const double err = grad_check(
        [&](Graph& g) { return ad::mean(ad::abs(ad::sub(ad::matmul(g.parameter(w), g.constant(x)), g.constant(y)))); },
        ps, 1e-5);
    CHECK(err < 1e-6);
  }
}

TEST_CASE("grad_check contract") {
  ParameterSet ps;
  Parameter& w = ps.add("w", ParamRole::kWeight, random_tensor({2, 2}, 1));
  auto linear = [&](Graph& g) { return ad::sum(ad::matmul(g.parameter(w), g.constant(random_tensor({2, 2}, 2)))); };
  CHECK(grad_check(linear, ps, 1e-5) < 1e-9);
  CHECK_THROWS_AS(grad_check(linear, ps, 0.0), ContractError);
  CHECK_THROWS_AS(grad_check(linear, ps, 1e-2), ContractError);
  auto blowup = [&](Graph& g) {
    return ad::scale(ad::sum(ad::square(g.parameter(w))), std::numeric_limits<double>::max());
  };
  CHECK_THROWS_AS(grad_check(blowup, ps, 1e-5), NumericError);
}

namespace {

// Every op is checked as loss = sum(op(params) .* R) with a fixed random R so
// that each output coordinate contributes a distinct weight.
struct OpCase {
  std::string name;
  std::vector<Shape> inputs;
  std::function<Var(Graph&, std::vector<Var>&)> op;
};

std::vector<OpCase> op_cases() {
  return {
      {"matmul", {{3, 4}, {4, 2}}, [](Graph&, auto& v) { return ad::matmul(v[0], v[1]); }},
      {"matmul_nt", {{3, 4}, {2, 4}}, [](Graph&, auto& v) { return ad::matmul_nt(v[0], v[1]); }},
      {"transpose", {{3, 4}}, [](Graph&, auto& v) { return ad::transpose(v[0]); }},
      {"add", {{3, 4}, {3, 4}}, [](Graph&, auto& v) { return ad::add(v[0], v[1]); }},
      {"sub", {{3, 4}, {3, 4}}, [](Graph&, auto& v) { return ad::sub(v[0], v[1]); }},
      {"mul", {{3, 4}, {3, 4}}, [](Graph&, auto& v) { return ad::mul(v[0], v[1]); }},
      {"scale", {{3, 4}}, [](Graph&, auto& v) { return ad::scale(v[0], -1.7); }},
      {"add_row_bias", {{3, 4}, {4}}, [](Graph&, auto& v) { return ad::add_row_bias(v[0], v[1]); }},
      {"sin", {{3, 4}}, [](Graph&, auto& v) { return ad::sin(v[0]); }},
      {"relu", {{3, 4}}, [](Graph&, auto& v) { return ad::relu(v[0]); }},
      {"abs", {{3, 4}}, [](Graph&, auto& v) { return ad::abs(v[0]); }},
      {"square", {{3, 4}}, [](Graph&, auto& v) { return ad::square(v[0]); }},
      {"sum", {{3, 4}}, [](Graph&, auto& v) { return ad::sum(v[0]); }},
      {"mean", {{3, 4}}, [](Graph&, auto& v) { return ad::mean(v[0]); }},
      {"softmax_rows", {{3, 4}}, [](Graph&, auto& v) { return ad::softmax_rows(v[0]); }},
      {"softmax_rows causal", {{4, 4}}, [](Graph&, auto& v) { return ad::softmax_rows(v[0], true); }},
      {"layer_norm_rows", {{3, 5}, {5}, {5}}, [](Graph&, auto& v) { return ad::layer_norm_rows(v[0], v[1], v[2]); }},
      {"reshape", {{3, 4}}, [](Graph&, auto& v) { return ad::reshape(v[0], {2, 6}); }},
      {"slice_cols", {{3, 5}}, [](Graph&, auto& v) { return ad::slice_cols(v[0], 1, 3); }},
      {"concat_cols", {{3, 2}, {3, 3}}, [](Graph&, auto& v) { return ad::concat_cols({v[0], v[1]}); }},
      {"row", {{3, 4}}, [](Graph&, auto& v) { return ad::row(v[0], 2); }},
      {"concat_rows", {{1, 4}, {2, 4}}, [](Graph&, auto& v) { return ad::concat_rows({v[0], v[1]}); }},
      {"attention", {{3, 4}, {5, 4}, {5, 4}}, [](Graph&, auto& v) { return attention(v[0], v[1], v[2]); }},
      {"attention causal", {{4, 2}, {4, 2}, {4, 2}}, [](Graph&, auto& v) { return attention(v[0], v[1], v[2], true); }},
      {"stacked_attention", {{6, 4}, {6, 4}, {6, 4}},
       [](Graph&, auto& v) { return stacked_attention(v[0], v[1], v[2], 3, 2, false); }},
      {"stacked_attention causal", {{6, 4}, {6, 4}, {6, 4}},
       [](Graph&, auto& v) { return stacked_attention(v[0], v[1], v[2], 3, 2, true); }},
  };
}

}  // namespace

TEST_CASE("every op matches central differences over 100 seeds") {
  for (const auto& c : op_cases()) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      ParameterSet ps;
      for (std::size_t i = 0; i < c.inputs.size(); ++i) {
        ps.add("in" + std::to_string(i), ParamRole::kWeight, random_tensor(c.inputs[i], seed * 31 + i));
      }
      // Pointers are taken after the last add; the set may reallocate.
      std::vector<Parameter*> ins;
      for (auto& p : ps) ins.push_back(&p);
      Tensor weights;
      auto loss = [&](Graph& g) {
        std::vector<Var> vars;
        for (auto* p : ins) vars.push_back(g.parameter(*p));
        Var out = c.op(g, vars);
        if (weights.empty()) weights = random_tensor(out.shape(), seed + 7777);
        return ad::sum(ad::mul(out, g.constant(weights)));
      };
      worst = std::max(worst, grad_check(loss, ps, 1e-5));
    }
    INFO(c.name);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("stacked attention equals per-sequence, per-head composition") {
  const std::size_t L = 5, d = 6, heads = 3, n_seq = 4, dh = d / heads;
  for (bool causal : {false, true}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const Tensor q = random_tensor({n_seq * L, d}, seed), k = random_tensor({n_seq * L, d}, seed + 1),
                   v = random_tensor({n_seq * L, d}, seed + 2);
      Graph g;
      const Tensor fused = stacked_attention(g.constant(q), g.constant(k), g.constant(v), L, heads, causal).value();
      auto block = [&](const Tensor& t, std::size_t s, std::size_t h) {
        std::vector<double> out(L * dh);
        for (std::size_t i = 0; i < L; ++i)
          for (std::size_t j = 0; j < dh; ++j) out[i * dh + j] = t.at(s * L + i, h * dh + j);
        return Tensor({L, dh}, out);
      };
      double diff = 0.0;
      for (std::size_t s = 0; s < n_seq; ++s) {
        for (std::size_t h = 0; h < heads; ++h) {
          const Tensor ref = attention(block(q, s, h), block(k, s, h), block(v, s, h), causal);
          for (std::size_t i = 0; i < L; ++i)
            for (std::size_t j = 0; j < dh; ++j)
              diff = std::max(diff, std::abs(ref.at(i, j) - fused.at(s * L + i, h * dh + j)));
        }
      }
      CHECK(diff < 1e-12);
    }
  }
}

TEST_CASE("parameter sets") {
  ParameterSet ps;
  ps.add("a", ParamRole::kWeight, Tensor::zeros({2, 2}));
  CHECK_THROWS_AS(ps.add("a", ParamRole::kBias, Tensor::zeros({2})), ContractError);
  CHECK(ps.contains("a"));
  CHECK_FALSE(ps.contains("b"));
  CHECK(ps.numel() == 4);
  const auto snap = ps.snapshot();
  ps["a"].value.mutable_data()[0] = 5.0;
  ps.restore(snap);
  CHECK(ps["a"].value[0] == 0.0);
}
