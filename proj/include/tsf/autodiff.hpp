#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "tsf/tensor.hpp"

namespace tsf {

enum class ParamRole { kWeight, kBias, kNorm };

struct Parameter {
  std::string name;
  ParamRole role = ParamRole::kWeight;
  Tensor value;
  Tensor grad;
};

/// Named, ordered parameter collection owned by one model.
///
/// Elements are never added after a graph has referenced them; graphs hold raw
/// pointers into the underlying storage.
class ParameterSet {
 public:
  Parameter& add(std::string name, ParamRole role, Tensor value);

  Parameter& operator[](std::string_view name);
  const Parameter& operator[](std::string_view name) const;
  bool contains(std::string_view name) const;

  std::size_t size() const { return params_.size(); }
  bool empty() const { return params_.empty(); }
  std::size_t numel() const;

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();

  // Deep copy of the values only; used for best-epoch snapshots.
  std::vector<Tensor> snapshot() const;
  void restore(const std::vector<Tensor>& values);

 private:
  std::vector<Parameter> params_;
};

class Graph;

// Handle to a node recorded on a Graph.
struct Var {
  Graph* graph = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Reverse-mode tape. Nodes are appended in evaluation order, so replaying
/// them backwards visits every node after all of its consumers.
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, std::uint32_t self)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor value);
  // Leaf bound to a trainable parameter; repeated calls return the same node.
  Var parameter(Parameter& p);

  // Records an op output. `backward` receives the node id and must push
  // adjoints into parents via accumulate().
  Var record(Tensor value, std::vector<std::uint32_t> parents, BackwardFn backward);

  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }
  const Tensor& grad(std::uint32_t id) const { return nodes_[id].grad; }
  bool requires_grad(std::uint32_t id) const { return nodes_[id].requires_grad; }
  void accumulate(std::uint32_t id, const Tensor& g);
  void accumulate(std::uint32_t id, std::span<const double> g);

  // Zeroes every parameter grad bound to this graph, then propagates d(loss)
  // to them. Calling twice yields identical grads.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    std::vector<std::uint32_t> parents;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::uint32_t> param_nodes_;
};

namespace ad {

Var matmul(Var a, Var b);
Var matmul_nt(Var a, Var b);  // a * b^T
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // elementwise
Var scale(Var a, double s);
Var add_row_bias(Var x, Var bias);  // x [m x n] + bias [n] on every row
Var sin(Var a);
Var relu(Var a);
Var abs(Var a);  // subgradient 0 at 0
Var square(Var a);
Var sum(Var a);
Var mean(Var a);
Var softmax_rows(Var x, bool causal = false);
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);
Var reshape(Var a, Shape shape);
Var slice_cols(Var x, std::size_t start, std::size_t width);
Var concat_cols(const std::vector<Var>& parts);
Var row(Var x, std::size_t r);  // [1 x n]
Var concat_rows(const std::vector<Var>& parts);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }

}  // namespace ad

/// Compares analytic gradients with central differences over the given
/// parameters. Returns max |g_a - g_n| / max(1, |g_a|, |g_n|).
///
/// `max_coords_per_param` = 0 checks every coordinate; otherwise a
/// deterministic, evenly spaced subset (always including the first and last
/// coordinate) is checked for each parameter tensor.
double grad_check(const std::function<Var(Graph&)>& loss_fn, ParameterSet& params, double h,
                  std::size_t max_coords_per_param = 0);

}  // namespace tsf
