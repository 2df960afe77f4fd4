#include "tsf/autodiff.hpp"

#include <algorithm>
#include <cmath>

#include "tsf/error.hpp"

namespace tsf {

// ---------------------------------------------------------------------------
// ParameterSet

Parameter& ParameterSet::add(std::string name, ParamRole role, Tensor value) {
  if (contains(name)) throw ContractError("duplicate parameter name '" + name + "'");
  Tensor grad = Tensor::zeros(value.shape());
  params_.push_back(Parameter{std::move(name), role, std::move(value), std::move(grad)});
  return params_.back();
}

Parameter& ParameterSet::operator[](std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  throw ContractError("unknown parameter '" + std::string(name) + "'");
}

const Parameter& ParameterSet::operator[](std::string_view name) const {
  for (const auto& p : params_)
    if (p.name == name) return p;
  throw ContractError("unknown parameter '" + std::string(name) + "'");
}

bool ParameterSet::contains(std::string_view name) const {
  return std::any_of(params_.begin(), params_.end(), [&](const Parameter& p) { return p.name == name; });
}

std::size_t ParameterSet::numel() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

void ParameterSet::zero_grad() {
  for (auto& p : params_) {
    if (p.grad.shape() != p.value.shape()) {
      p.grad = Tensor::zeros(p.value.shape());
    } else {
      std::fill(p.grad.mutable_data().begin(), p.grad.mutable_data().end(), 0.0);
    }
  }
}

std::vector<Tensor> ParameterSet::snapshot() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.value);
  return out;
}

void ParameterSet::restore(const std::vector<Tensor>& values) {
  if (values.size() != params_.size()) throw ContractError("snapshot size mismatch");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (values[i].shape() != params_[i].value.shape()) {
      throw DimensionError("snapshot shape mismatch for '" + params_[i].name + "'");
    }
    params_[i].value = values[i];
  }
}

// ---------------------------------------------------------------------------
// Graph

const Tensor& Var::value() const { return graph->value(id); }

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, {}, nullptr, false});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Graph::parameter(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var{this, it->second};
  nodes_.push_back(Node{p.value, {}, {}, {}, &p, true});
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  param_nodes_.emplace(&p, id);
  return Var{this, id};
}

Var Graph::record(Tensor value, std::vector<std::uint32_t> parents, BackwardFn backward) {
  const bool needs = std::any_of(parents.begin(), parents.end(),
                                 [&](std::uint32_t p) { return nodes_[p].requires_grad; });
  Node node{std::move(value), {}, std::move(parents), {}, nullptr, needs};
  if (needs) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

void Graph::accumulate(std::uint32_t id, std::span<const double> g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.empty()) n.grad = Tensor::zeros(n.value.shape());
  if (g.size() != n.grad.size()) throw DimensionError("adjoint size mismatch");
  auto dst = n.grad.mutable_data();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
}

void Graph::accumulate(std::uint32_t id, const Tensor& g) { accumulate(id, g.data()); }

void Graph::backward(Var loss) {
  if (loss.graph != this) throw ContractError("loss belongs to a different graph");
  if (value(loss.id).size() != 1) {
    throw ContractError("backward requires a scalar loss, got " + shape_to_string(value(loss.id).shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  for (auto& [param, id] : param_nodes_) {
    if (param->grad.shape() != param->value.shape()) {
      param->grad = Tensor::zeros(param->value.shape());
    } else {
      std::fill(param->grad.mutable_data().begin(), param->grad.mutable_data().end(), 0.0);
    }
  }
  if (!nodes_[loss.id].requires_grad) return;
  nodes_[loss.id].grad = Tensor::full(value(loss.id).shape(), 1.0);
  for (std::uint32_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.grad.empty()) continue;
    if (n.backward) n.backward(*this, i);
  }
  for (auto& [param, id] : param_nodes_) {
    const Tensor& g = nodes_[id].grad;
    if (g.empty()) continue;
    auto dst = param->grad.mutable_data();
    for (std::size_t k = 0; k < g.size(); ++k) dst[k] += g[k];
  }
}

// ---------------------------------------------------------------------------
// Ops

namespace ad {

namespace {

void same_shape(Var a, Var b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shapes differ, " + shape_to_string(a.shape()) + " vs " +
                         shape_to_string(b.shape()));
  }
  if (a.graph != b.graph) throw ContractError(std::string(op) + ": operands on different graphs");
}

template <typename F>
Tensor map(const Tensor& t, F f) {
  std::vector<double> out(t.size());
  const auto in = t.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  return make_unchecked(t.shape(), std::move(out));
}

}  // namespace

Var matmul(Var a, Var b) {
  Graph& g = *a.graph;
  return g.record(tsf::matmul(a.value(), b.value()), {a.id, b.id}, [a = a.id, b = b.id](Graph& g, std::uint32_t self) {
    const Tensor& dc = g.grad(self);
    if (g.requires_grad(a)) g.accumulate(a, tsf::matmul_nt(dc, g.value(b)));
    if (g.requires_grad(b)) g.accumulate(b, tsf::matmul_tn(g.value(a), dc));
  });
}

Var matmul_nt(Var a, Var b) {
  Graph& g = *a.graph;
  return g.record(tsf::matmul_nt(a.value(), b.value()), {a.id, b.id},
                  [a = a.id, b = b.id](Graph& g, std::uint32_t self) {
                    const Tensor& dc = g.grad(self);
                    if (g.requires_grad(a)) g.accumulate(a, tsf::matmul(dc, g.value(b)));
                    if (g.requires_grad(b)) g.accumulate(b, tsf::matmul_tn(dc, g.value(a)));
                  });
}

Var transpose(Var a) {
  Graph& g = *a.graph;
  return g.record(tsf::transpose(a.value()), {a.id}, [a = a.id](Graph& g, std::uint32_t self) {
    g.accumulate(a, tsf::transpose(g.grad(self)));
  });
}

Var add(Var a, Var b) {
  same_shape(a, b, "add");
  std::vector<double> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  Graph& g = *a.graph;
  return g.record(make_unchecked(a.shape(), std::move(out)), {a.id, b.id},
                  [a = a.id, b = b.id](Graph& g, std::uint32_t self) {
                    g.accumulate(a, g.grad(self));
                    g.accumulate(b, g.grad(self));
                  });
}

Var sub(Var a, Var b) {
  same_shape(a, b, "sub");
  std::vector<double> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  Graph& g = *a.graph;
  return g.record(make_unchecked(a.shape(), std::move(out)), {a.id, b.id},
                  [a = a.id, b = b.id](Graph& g, std::uint32_t self) {
                    g.accumulate(a, g.grad(self));
                    if (g.requires_grad(b)) {
                      const Tensor& d = g.grad(self);
                      g.accumulate(b, map(d, [](double v) { return -v; }));
                    }
                  });
}

Var mul(Var a, Var b) {
  same_shape(a, b, "mul");
  std::vector<double> out(a.value().size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  Graph& g = *a.graph;
  return g.record(make_unchecked(a.shape(), std::move(out)), {a.id, b.id},
                  [a = a.id, b = b.id](Graph& g, std::uint32_t self) {
                    const Tensor& d = g.grad(self);
                    const std::size_t n = d.size();
                    if (g.requires_grad(a)) {
                      std::vector<double> da(n);
                      for (std::size_t i = 0; i < n; ++i) da[i] = d[i] * g.value(b)[i];
                      g.accumulate(a, da);
                    }
                    if (g.requires_grad(b)) {
                      std::vector<double> db(n);
                      for (std::size_t i = 0; i < n; ++i) db[i] = d[i] * g.value(a)[i];
                      g.accumulate(b, db);
                    }
                  });
}

Var scale(Var a, double s) {
  Graph& g = *a.graph;
  return g.record(map(a.value(), [s](double v) { return v * s; }), {a.id},
                  [a = a.id, s](Graph& g, std::uint32_t self) {
                    g.accumulate(a, map(g.grad(self), [s](double v) { return v * s; }));
                  });
}

Var add_row_bias(Var x, Var bias) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "add_row_bias");
  const auto m = xv.rows(), n = xv.cols();
  if (bias.value().size() != n) {
    throw DimensionError("add_row_bias: bias " + shape_to_string(bias.shape()) + " does not match " +
                         shape_to_string(xv.shape()));
  }
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] = xv[i * n + j] + bias.value()[j];
  Graph& g = *x.graph;
  return g.record(make_unchecked(xv.shape(), std::move(out)), {x.id, bias.id},
                  [x = x.id, b = bias.id, m, n](Graph& g, std::uint32_t self) {
                    const Tensor& d = g.grad(self);
                    g.accumulate(x, d);
                    if (g.requires_grad(b)) {
                      std::vector<double> db(n, 0.0);
                      for (std::size_t i = 0; i < m; ++i)
                        for (std::size_t j = 0; j < n; ++j) db[j] += d[i * n + j];
                      g.accumulate(b, db);
                    }
                  });
}

Var sin(Var a) {
  Graph& g = *a.graph;
  return g.record(map(a.value(), [](double v) { return std::sin(v); }), {a.id},
                  [a = a.id](Graph& g, std::uint32_t self) {
                    const Tensor& d = g.grad(self);
                    std::vector<double> da(d.size());
                    for (std::size_t i = 0; i < da.size(); ++i) da[i] = d[i] * std::cos(g.value(a)[i]);
                    g.accumulate(a, da);
                  });
}

Var relu(Var a) {
  Graph& g = *a.graph;
  return g.record(map(a.value(), [](double v) { return v > 0.0 ? v : 0.0; }), {a.id},
                  [a = a.id](Graph& g, std::uint32_t self) {
                    const Tensor& d = g.grad(self);
                    std::vector<double> da(d.size());
                    for (std::size_t i = 0; i < da.size(); ++i) da[i] = g.value(a)[i] > 0.0 ? d[i] : 0.0;
                    g.accumulate(a, da);
                  });
}

Var abs(Var a) {
  Graph& g = *a.graph;
  return g.record(map(a.value(), [](double v) { return std::fabs(v); }), {a.id},
                  [a = a.id](Graph& g, std::uint32_t self) {
                    const Tensor& d = g.grad(self);
                    std::vector<double> da(d.size());
                    for (std::size_t i = 0; i < da.size(); ++i) {
                      const double v = g.value(a)[i];
                      da[i] = v > 0.0 ? d[i] : (v < 0.0 ? -d[i] : 0.0);
                    }
                    g.accumulate(a, da);
                  });
}

Var square(Var a) {
  Graph& g = *a.graph;
  return g.record(map(a.value(), [](double v) { return v * v; }), {a.id},
                  [a = a.id](Graph& g, std::uint32_t self) {
                    const Tensor& d = g.grad(self);
                    std::vector<double> da(d.size());
                    for (std::size_t i = 0; i < da.size(); ++i) da[i] = 2.0 * g.value(a)[i] * d[i];
                    g.accumulate(a, da);
                  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  Graph& g = *a.graph;
  return g.record(make_unchecked({1}, {s}), {a.id}, [a = a.id](Graph& g, std::uint32_t self) {
    g.accumulate(a, Tensor::full(g.value(a).shape(), g.grad(self)[0]));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var softmax_rows(Var x, bool causal) {
  Graph& g = *x.graph;
  return g.record(tsf::softmax_rows(x.value(), causal), {x.id}, [x = x.id](Graph& g, std::uint32_t self) {
    // dx_ij = y_ij * (dy_ij - sum_k dy_ik y_ik); masked entries have y = 0.
    const Tensor& y = g.value(self);
    const Tensor& dy = g.grad(self);
    const auto m = y.rows(), n = y.cols();
    std::vector<double> dx(m * n);
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += dy[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) dx[i * n + j] = y[i * n + j] * (dy[i * n + j] - dot);
    }
    g.accumulate(x, dx);
  });
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  Graph& g = *x.graph;
  return g.record(tsf::layer_norm_rows(x.value(), gamma.value(), beta.value(), eps), {x.id, gamma.id, beta.id},
                  [x = x.id, gm = gamma.id, bt = beta.id, eps](Graph& g, std::uint32_t self) {
                    const Tensor& xv = g.value(x);
                    const Tensor& gv = g.value(gm);
                    const Tensor& dy = g.grad(self);
                    const auto m = xv.rows(), n = xv.cols();
                    const double dn = static_cast<double>(n);
                    std::vector<double> dx(m * n), dgamma(n, 0.0), dbeta(n, 0.0), xhat(n), dxhat(n);
                    for (std::size_t i = 0; i < m; ++i) {
                      const double* row = xv.data().data() + i * n;
                      double mu = 0.0;
                      for (std::size_t j = 0; j < n; ++j) mu += row[j];
                      mu /= dn;
                      double var = 0.0;
                      for (std::size_t j = 0; j < n; ++j) var += (row[j] - mu) * (row[j] - mu);
                      var /= dn;
                      const double inv = 1.0 / std::sqrt(var + eps);
                      double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                      for (std::size_t j = 0; j < n; ++j) {
                        xhat[j] = (row[j] - mu) * inv;
                        const double d = dy[i * n + j];
                        dgamma[j] += d * xhat[j];
                        dbeta[j] += d;
                        dxhat[j] = d * gv[j];
                        mean_dxhat += dxhat[j];
                        mean_dxhat_xhat += dxhat[j] * xhat[j];
                      }
                      mean_dxhat /= dn;
                      mean_dxhat_xhat /= dn;
                      for (std::size_t j = 0; j < n; ++j) {
                        dx[i * n + j] = inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                      }
                    }
                    g.accumulate(x, dx);
                    g.accumulate(gm, dgamma);
                    g.accumulate(bt, dbeta);
                  });
}

Var reshape(Var a, Shape shape) {
  Graph& g = *a.graph;
  return g.record(a.value().reshaped(std::move(shape)), {a.id},
                  [a = a.id](Graph& g, std::uint32_t self) { g.accumulate(a, g.grad(self).data()); });
}

Var slice_cols(Var x, std::size_t start, std::size_t width) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "slice_cols");
  const auto m = xv.rows(), n = xv.cols();
  if (width == 0 || start + width > n) {
    throw DimensionError("slice_cols: [" + std::to_string(start) + ", " + std::to_string(start + width) +
                         ") out of range for " + shape_to_string(xv.shape()));
  }
  std::vector<double> out(m * width);
  for (std::size_t i = 0; i < m; ++i)
    std::copy_n(xv.data().data() + i * n + start, width, out.data() + i * width);
  Graph& g = *x.graph;
  return g.record(make_unchecked({m, width}, std::move(out)), {x.id},
                  [x = x.id, start, width, m, n](Graph& g, std::uint32_t self) {
                    const Tensor& d = g.grad(self);
                    std::vector<double> dx(m * n, 0.0);
                    for (std::size_t i = 0; i < m; ++i)
                      std::copy_n(d.data().data() + i * width, width, dx.data() + i * n + start);
                    g.accumulate(x, dx);
                  });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const auto m = parts.front().value().rows();
  std::size_t n = 0;
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> widths;
  for (const Var& p : parts) {
    require_rank(p.value(), 2, "concat_cols");
    if (p.value().rows() != m) throw DimensionError("concat_cols: row counts differ");
    n += p.value().cols();
    ids.push_back(p.id);
    widths.push_back(p.value().cols());
  }
  std::vector<double> out(m * n);
  std::size_t offset = 0;
  for (const Var& p : parts) {
    const auto w = p.value().cols();
    for (std::size_t i = 0; i < m; ++i) std::copy_n(p.value().data().data() + i * w, w, out.data() + i * n + offset);
    offset += w;
  }
  Graph& g = *parts.front().graph;
  return g.record(make_unchecked({m, n}, std::move(out)), ids,
                  [ids, widths, m, n](Graph& g, std::uint32_t self) {
                    const Tensor& d = g.grad(self);
                    std::size_t offset = 0;
                    for (std::size_t k = 0; k < ids.size(); ++k) {
                      const auto w = widths[k];
                      if (g.requires_grad(ids[k])) {
                        std::vector<double> dp(m * w);
                        for (std::size_t i = 0; i < m; ++i)
                          std::copy_n(d.data().data() + i * n + offset, w, dp.data() + i * w);
                        g.accumulate(ids[k], dp);
                      }
                      offset += w;
                    }
                  });
}

Var row(Var x, std::size_t r) {
  const Tensor& xv = x.value();
  require_rank(xv, 2, "row");
  const auto m = xv.rows(), n = xv.cols();
  if (r >= m) throw DimensionError("row index " + std::to_string(r) + " out of range for " + shape_to_string(xv.shape()));
  std::vector<double> out(xv.data().begin() + static_cast<std::ptrdiff_t>(r * n),
                          xv.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * n));
  Graph& g = *x.graph;
  return g.record(make_unchecked({1, n}, std::move(out)), {x.id}, [x = x.id, r, m, n](Graph& g, std::uint32_t self) {
    std::vector<double> dx(m * n, 0.0);
    std::copy_n(g.grad(self).data().data(), n, dx.data() + r * n);
    g.accumulate(x, dx);
  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const auto n = parts.front().value().cols();
  std::size_t m = 0;
  std::vector<std::uint32_t> ids;
  std::vector<double> out;
  for (const Var& p : parts) {
    require_rank(p.value(), 2, "concat_rows");
    if (p.value().cols() != n) throw DimensionError("concat_rows: column counts differ");
    m += p.value().rows();
    ids.push_back(p.id);
    out.insert(out.end(), p.value().data().begin(), p.value().data().end());
  }
  Graph& g = *parts.front().graph;
  return g.record(make_unchecked({m, n}, std::move(out)), ids, [ids](Graph& g, std::uint32_t self) {
    const Tensor& d = g.grad(self);
    std::size_t offset = 0;
    for (auto id : ids) {
      const auto sz = g.value(id).size();
      if (g.requires_grad(id)) g.accumulate(id, d.data().subspan(offset, sz));
      offset += sz;
    }
  });
}

}  // namespace ad

// ---------------------------------------------------------------------------
// Gradient check

double grad_check(const std::function<Var(Graph&)>& loss_fn, ParameterSet& params, double h,
                  std::size_t max_coords_per_param) {
  if (!(h > 0.0 && h <= 1e-3)) throw ContractError("grad_check: h must lie in (0, 1e-3]");

  auto evaluate = [&]() {
    Graph g;
    const double v = loss_fn(g).value().item();
    if (!std::isfinite(v)) throw NumericError("grad_check: non-finite loss at perturbed point");
    return v;
  };

  params.zero_grad();
  {
    Graph g;
    Var loss = loss_fn(g);
    if (!std::isfinite(loss.value().item())) throw NumericError("grad_check: non-finite loss");
    g.backward(loss);
  }

  double worst = 0.0;
  for (auto& p : params) {
    const Tensor analytic = p.grad;
    const std::size_t n = p.value.size();
    std::vector<std::size_t> coords;
    if (max_coords_per_param == 0 || n <= max_coords_per_param) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (std::size_t k = 0; k < max_coords_per_param; ++k) {
        coords.push_back(k * (n - 1) / (max_coords_per_param - 1));
      }
    }
    for (auto i : coords) {
      double& w = p.value.mutable_data()[i];
      const double saved = w;
      w = saved + h;
      const double up = evaluate();
      w = saved - h;
      const double down = evaluate();
      w = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double ga = analytic[i];
      const double denom = std::max({1.0, std::fabs(ga), std::fabs(numeric)});
      worst = std::max(worst, std::fabs(ga - numeric) / denom);
    }
  }
  return worst;
}

}  // namespace tsf
