#include "tsf/models.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <functional>
#include <memory>
#include <random>

#include <Eigen/Dense>

#include "tsf/error.hpp"

namespace tsf {

namespace {

constexpr std::array<std::pair<Variant, std::string_view>, 8> kVariantNames{{
    {Variant::kPersistence, "Persistence"},
    {Variant::kLinear, "Linear"},
    {Variant::kNLinear, "NLinear"},
    {Variant::kDLinear, "DLinear"},
    {Variant::kSLP, "SLP"},
    {Variant::kMLP, "MLP"},
    {Variant::kSencoder, "Sencoder"},
    {Variant::kSinformer, "Sinformer"},
}};

using Binder = std::function<Var(std::string_view)>;

}  // namespace

std::string_view variant_name(Variant v) {
  for (const auto& [variant, name] : kVariantNames)
    if (variant == v) return name;
  return "Unknown";
}

Variant parse_variant(std::string_view name) {
  for (const auto& [variant, label] : kVariantNames) {
    if (label.size() != name.size()) continue;
    bool same = true;
    for (std::size_t i = 0; i < name.size(); ++i) {
      if (std::tolower(static_cast<unsigned char>(label[i])) != std::tolower(static_cast<unsigned char>(name[i]))) {
        same = false;
        break;
      }
    }
    if (same) return variant;
  }
  throw ConfigError("unknown model variant '" + std::string(name) + "'");
}

bool is_transformer(Variant v) { return v == Variant::kSencoder || v == Variant::kSinformer; }

bool has_sine_head(Variant v) { return v == Variant::kSLP || is_transformer(v); }

void ModelConfig::validate() const {
  if (input_len == 0 || horizon == 0) throw ConfigError("input_len and horizon must be >= 1");
  if (channels == 0) throw ConfigError("channels must be >= 1");
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw ConfigError("d_model (" + std::to_string(d_model) + ") must be divisible by n_heads (" +
                      std::to_string(n_heads) + ")");
  }
  if (ffn_dim == 0) throw ConfigError("ffn_dim must be >= 1");
  if (ma_kernel < 3 || ma_kernel % 2 == 0) {
    throw ConfigError("ma_kernel must be odd and >= 3, got " + std::to_string(ma_kernel));
  }
  if (variant == Variant::kPersistence && input_len < horizon) {
    throw ContractError("persistence requires input_len >= horizon");
  }
}

// ---------------------------------------------------------------------------
// Blocks

Var addt2v(const AddT2VVars& p, Var x) {
  Var linear = ad::add_row_bias(ad::matmul_nt(x, p.w_lin), p.b_lin);
  Var periodic = ad::sin(ad::add_row_bias(ad::matmul_nt(x, p.w_per), p.b_per));
  return ad::add(linear, periodic);
}

Tensor addt2v_forward(const AddT2VParams& p, const Tensor& x) {
  require_rank(x, 2, "addt2v_forward input");
  if (x.cols() != p.w_lin.cols()) {
    throw DimensionError("addt2v_forward: input " + shape_to_string(x.shape()) + " does not match W_lin " +
                         shape_to_string(p.w_lin.shape()));
  }
  Graph g;
  AddT2VVars v{g.constant(p.w_lin), g.constant(p.b_lin), g.constant(p.w_per), g.constant(p.b_per)};
  return addt2v(v, g.constant(x)).value();
}

Tensor moving_average(const Tensor& x, std::size_t kernel) {
  if (kernel < 3 || kernel % 2 == 0) {
    throw ConfigError("moving average kernel must be odd and >= 3, got " + std::to_string(kernel));
  }
  if (x.rank() != 1 && x.rank() != 2) throw DimensionError("moving_average expects [I] or [R x I]");
  const auto rows = x.rows(), n = x.cols();
  const auto half = static_cast<std::ptrdiff_t>(kernel / 2);
  const auto last = static_cast<std::ptrdiff_t>(n) - 1;
  std::vector<double> out(rows * n);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* src = x.data().data() + r * n;
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::ptrdiff_t k = -half; k <= half; ++k) {
        acc += src[std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(i) + k, 0, last)];
      }
      out[r * n + i] = acc / static_cast<double>(kernel);
    }
  }
  return make_unchecked(x.shape(), std::move(out));
}

Var attention(Var q, Var k, Var v, bool causal) {
  const auto& qs = q.shape();
  const auto& ks = k.shape();
  const auto& vs = v.shape();
  if (qs.size() != 2 || ks.size() != 2 || vs.size() != 2 || qs[1] != ks[1] || ks[0] != vs[0]) {
    throw DimensionError("attention: incompatible Q " + shape_to_string(qs) + ", K " + shape_to_string(ks) + ", V " +
                         shape_to_string(vs));
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(qs[1]));
  Var scores = ad::scale(ad::matmul_nt(q, k), inv_sqrt_d);
  return ad::matmul(ad::softmax_rows(scores, causal), v);
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, bool causal) {
  Graph g;
  return attention(g.constant(q), g.constant(k), g.constant(v), causal).value();
}

Var stacked_attention(Var q, Var k, Var v, std::size_t seq_len, std::size_t n_heads, bool causal) {
  const auto& qs = q.shape();
  if (qs.size() != 2 || k.shape() != qs || v.shape() != qs) {
    throw DimensionError("stacked_attention: Q, K, V must share one [N x d] shape, got " + shape_to_string(qs) + ", " +
                         shape_to_string(k.shape()) + ", " + shape_to_string(v.shape()));
  }
  const std::size_t n = qs[0], d = qs[1];
  if (seq_len == 0 || n % seq_len != 0) throw DimensionError("stacked_attention: rows not a multiple of seq_len");
  if (n_heads == 0 || d % n_heads != 0) throw DimensionError("stacked_attention: width not divisible by heads");
  const std::size_t n_seq = n / seq_len, dh = d / n_heads, L = seq_len;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CBlock = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;
  using Block = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
  auto probs = std::make_shared<std::vector<double>>(n_seq * n_heads * L * L);
  std::vector<double> out(n * d);
  const double* qp = q.value().data().data();
  const double* kp = k.value().data().data();
  const double* vp = v.value().data().data();
  for (std::size_t s = 0; s < n_seq; ++s) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      const std::size_t off = s * L * d + h * dh;
      CBlock Q(qp + off, L, dh, Eigen::OuterStride<>(d));
      CBlock K(kp + off, L, dh, Eigen::OuterStride<>(d));
      CBlock V(vp + off, L, dh, Eigen::OuterStride<>(d));
      Eigen::Map<RowMat> P(probs->data() + (s * n_heads + h) * L * L, L, L);
      P.noalias() = Q * K.transpose();
      P *= scale;
      for (std::size_t i = 0; i < L; ++i) {
        const std::size_t valid = causal ? i + 1 : L;
        double mx = P(i, 0);
        for (std::size_t j = 1; j < valid; ++j) mx = std::max(mx, P(i, j));
        double sum = 0.0;
        for (std::size_t j = 0; j < valid; ++j) sum += (P(i, j) = std::exp(P(i, j) - mx));
        for (std::size_t j = 0; j < valid; ++j) P(i, j) /= sum;
        for (std::size_t j = valid; j < L; ++j) P(i, j) = 0.0;
      }
      Block O(out.data() + off, L, dh, Eigen::OuterStride<>(d));
      O.noalias() = P * V;
    }
  }

  Graph& g = *q.graph;
  return g.record(
      make_unchecked({n, d}, std::move(out)), {q.id, k.id, v.id},
      [qi = q.id, ki = k.id, vi = v.id, probs, n, d, n_seq, n_heads, dh, L, scale](Graph& g, std::uint32_t self) {
        const double* qp = g.value(qi).data().data();
        const double* kp = g.value(ki).data().data();
        const double* vp = g.value(vi).data().data();
        const double* dop = g.grad(self).data().data();
        std::vector<double> dq(n * d, 0.0), dk(n * d, 0.0), dv(n * d, 0.0);
        RowMat dP(L, L);
        for (std::size_t s = 0; s < n_seq; ++s) {
          for (std::size_t h = 0; h < n_heads; ++h) {
            const std::size_t off = s * L * d + h * dh;
            CBlock Q(qp + off, L, dh, Eigen::OuterStride<>(d));
            CBlock K(kp + off, L, dh, Eigen::OuterStride<>(d));
            CBlock V(vp + off, L, dh, Eigen::OuterStride<>(d));
            CBlock dO(dop + off, L, dh, Eigen::OuterStride<>(d));
            Eigen::Map<const RowMat> P(probs->data() + (s * n_heads + h) * L * L, L, L);
            Block dQ(dq.data() + off, L, dh, Eigen::OuterStride<>(d));
            Block dK(dk.data() + off, L, dh, Eigen::OuterStride<>(d));
            Block dV(dv.data() + off, L, dh, Eigen::OuterStride<>(d));
            dV.noalias() = P.transpose() * dO;
            dP.noalias() = dO * V.transpose();
            // Softmax backward; masked entries have P = 0 and get no gradient.
            const Eigen::VectorXd dot = (dP.array() * P.array()).rowwise().sum();
            dP = (P.array() * (dP.array().colwise() - dot.array())).matrix() * scale;
            dQ.noalias() = dP * K;
            dK.noalias() = dP.transpose() * Q;
          }
        }
        g.accumulate(qi, dq);
        g.accumulate(ki, dk);
        g.accumulate(vi, dv);
      });
}

Var multi_head_attention(const MultiHeadVars& p, Var query_src, Var kv_src, std::size_t n_heads, bool causal,
                         std::size_t seq_len) {
  const auto d = query_src.shape().at(1);
  if (kv_src.shape().at(1) != d || p.wq.shape() != Shape{d, d} || kv_src.shape() != query_src.shape()) {
    throw DimensionError("multi_head_attention: width mismatch, query " + shape_to_string(query_src.shape()) +
                         ", memory " + shape_to_string(kv_src.shape()) + ", W_q " + shape_to_string(p.wq.shape()));
  }
  if (seq_len == 0) seq_len = query_src.shape()[0];
  Var q = ad::matmul_nt(query_src, p.wq);
  Var k = ad::matmul_nt(kv_src, p.wk);
  Var v = ad::matmul_nt(kv_src, p.wv);
  return ad::matmul_nt(stacked_attention(q, k, v, seq_len, n_heads, causal), p.wo);
}

Var feed_forward(const FeedForwardVars& p, Var x) {
  Var hidden = ad::relu(ad::add_row_bias(ad::matmul_nt(x, p.w1), p.b1));
  return ad::add_row_bias(ad::matmul_nt(hidden, p.w2), p.b2);
}

Var encoder_block(const EncoderBlockVars& p, Var x, std::size_t n_heads, std::size_t seq_len) {
  Var y = ad::layer_norm_rows(ad::add(x, multi_head_attention(p.self_attn, x, x, n_heads, false, seq_len)), p.norm1.gamma,
                              p.norm1.beta);
  return ad::layer_norm_rows(ad::add(y, feed_forward(p.ffn, y)), p.norm2.gamma, p.norm2.beta);
}

Var decoder_block(const DecoderBlockVars& p, Var y, Var memory, std::size_t n_heads, std::size_t seq_len) {
  Var a = ad::layer_norm_rows(ad::add(y, multi_head_attention(p.self_attn, y, y, n_heads, true, seq_len)), p.norm1.gamma,
                              p.norm1.beta);
  Var b = ad::layer_norm_rows(ad::add(a, multi_head_attention(p.cross_attn, a, memory, n_heads, false, seq_len)),
                              p.norm2.gamma, p.norm2.beta);
  return ad::layer_norm_rows(ad::add(b, feed_forward(p.ffn, b)), p.norm3.gamma, p.norm3.beta);
}

Tensor encoder_block(const AttentionBlockParams& p, const Tensor& x, std::size_t n_heads) {
  require_rank(x, 2, "encoder_block input");
  if (x.cols() != p.wq.cols()) {
    throw DimensionError("encoder_block: input " + shape_to_string(x.shape()) + " does not match d_model " +
                         std::to_string(p.wq.cols()));
  }
  if (n_heads == 0 || x.cols() % n_heads != 0) throw ConfigError("d_model must be divisible by n_heads");
  Graph g;
  auto c = [&](const Tensor& t) { return g.constant(t); };
  EncoderBlockVars v{{c(p.wq), c(p.wk), c(p.wv), c(p.wo)},
                     {c(p.w1), c(p.b1), c(p.w2), c(p.b2)},
                     {c(p.gamma1), c(p.beta1)},
                     {c(p.gamma2), c(p.beta2)}};
  return encoder_block(v, c(x), n_heads).value();
}

// ---------------------------------------------------------------------------
// Layout

Tensor to_channel_rows(const Tensor& x) {
  require_rank(x, 3, "to_channel_rows");
  const auto b = x.dim(0), t = x.dim(1), c = x.dim(2);
  std::vector<double> out(b * c * t);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t s = 0; s < t; ++s)
      for (std::size_t j = 0; j < c; ++j) out[(i * c + j) * t + s] = x[(i * t + s) * c + j];
  return make_unchecked({b * c, t}, std::move(out));
}

Tensor from_channel_rows(const Tensor& rows, std::size_t batch, std::size_t channels) {
  require_rank(rows, 2, "from_channel_rows");
  if (rows.rows() != batch * channels) {
    throw DimensionError("from_channel_rows: " + shape_to_string(rows.shape()) + " is not " + std::to_string(batch) +
                         "x" + std::to_string(channels) + " rows");
  }
  const auto t = rows.cols();
  std::vector<double> out(batch * t * channels);
  for (std::size_t i = 0; i < batch; ++i)
    for (std::size_t j = 0; j < channels; ++j)
      for (std::size_t s = 0; s < t; ++s) out[(i * t + s) * channels + j] = rows[(i * channels + j) * t + s];
  return make_unchecked({batch, t, channels}, std::move(out));
}

Tensor persistence_forecast(const Tensor& x, std::size_t horizon) {
  require_rank(x, 3, "persistence_forecast");
  const auto b = x.dim(0), in = x.dim(1), c = x.dim(2);
  if (horizon == 0) throw ContractError("horizon must be >= 1");
  if (in < horizon) throw ContractError("persistence requires input_len >= horizon");
  std::vector<double> out(b * horizon * c);
  for (std::size_t i = 0; i < b; ++i) {
    const double* src = x.data().data() + (i * in + (in - horizon)) * c;
    std::copy_n(src, horizon * c, out.data() + i * horizon * c);
  }
  return make_unchecked({b, horizon, c}, std::move(out));
}

// ---------------------------------------------------------------------------
// Forecaster

namespace {

struct Initializer {
  explicit Initializer(std::uint64_t seed) : engine(seed) {}

  Tensor uniform(Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> data(shape_numel(shape));
    for (auto& v : data) {
      const double u = static_cast<double>(engine() >> 11) * 0x1.0p-53;
      v = (2.0 * u - 1.0) * bound;
    }
    return Tensor(std::move(shape), std::move(data));
  }

  std::mt19937_64 engine;
};

void add_dense(ParameterSet& ps, Initializer& init, const std::string& prefix, std::size_t out, std::size_t in) {
  ps.add(prefix + ".weight", ParamRole::kWeight, init.uniform({out, in}, in));
  ps.add(prefix + ".bias", ParamRole::kBias, Tensor::zeros({out}));
}

void add_t2v(ParameterSet& ps, Initializer& init, std::size_t horizon, std::size_t input_len) {
  ps.add("t2v.w_lin", ParamRole::kWeight, init.uniform({horizon, input_len}, input_len));
  ps.add("t2v.b_lin", ParamRole::kBias, Tensor::zeros({horizon}));
  ps.add("t2v.w_per", ParamRole::kWeight, init.uniform({horizon, input_len}, input_len));
  ps.add("t2v.b_per", ParamRole::kBias, Tensor::zeros({horizon}));
}

void add_mha(ParameterSet& ps, Initializer& init, const std::string& prefix, std::size_t d) {
  for (const char* w : {"wq", "wk", "wv", "wo"}) ps.add(prefix + "." + w, ParamRole::kWeight, init.uniform({d, d}, d));
}

void add_norm(ParameterSet& ps, const std::string& prefix, std::size_t d) {
  ps.add(prefix + ".gamma", ParamRole::kNorm, Tensor::full({d}, 1.0));
  ps.add(prefix + ".beta", ParamRole::kNorm, Tensor::zeros({d}));
}

void add_ffn(ParameterSet& ps, Initializer& init, const std::string& prefix, std::size_t d, std::size_t ffn) {
  add_dense(ps, init, prefix + ".ffn1", ffn, d);
  add_dense(ps, init, prefix + ".ffn2", d, ffn);
}

AddT2VVars bind_t2v(const Binder& bind) {
  return {bind("t2v.w_lin"), bind("t2v.b_lin"), bind("t2v.w_per"), bind("t2v.b_per")};
}

MultiHeadVars bind_mha(const Binder& bind, const std::string& prefix) {
  return {bind(prefix + ".wq"), bind(prefix + ".wk"), bind(prefix + ".wv"), bind(prefix + ".wo")};
}

FeedForwardVars bind_ffn(const Binder& bind, const std::string& prefix) {
  return {bind(prefix + ".ffn1.weight"), bind(prefix + ".ffn1.bias"), bind(prefix + ".ffn2.weight"),
          bind(prefix + ".ffn2.bias")};
}

NormVars bind_norm(const Binder& bind, const std::string& prefix) {
  return {bind(prefix + ".gamma"), bind(prefix + ".beta")};
}

Var dense(const Binder& bind, const std::string& prefix, Var x) {
  return ad::add_row_bias(ad::matmul_nt(x, bind(prefix + ".weight")), bind(prefix + ".bias"));
}

Var transformer_forward(const ModelConfig& cfg, const Binder& bind, Var rows) {
  const auto horizon = cfg.horizon;
  Var embedded = addt2v(bind_t2v(bind), rows);  // [R x L]
  Var embed_w = bind("embed.weight");           // [1 x d]
  Var embed_b = bind("embed.bias");
  Var head_w = bind("head.weight");  // [d x 1]
  Var head_b = bind("head.bias");
  EncoderBlockVars enc{bind_mha(bind, "enc.self"), bind_ffn(bind, "enc"), bind_norm(bind, "enc.norm1"),
                       bind_norm(bind, "enc.norm2")};
  const bool with_decoder = cfg.variant == Variant::kSinformer;
  DecoderBlockVars dec{};
  if (with_decoder) {
    dec = {bind_mha(bind, "dec.self"),   bind_mha(bind, "dec.cross"),  bind_ffn(bind, "dec"),
           bind_norm(bind, "dec.norm1"), bind_norm(bind, "dec.norm2"), bind_norm(bind, "dec.norm3")};
  }
  // Every row becomes a sequence of L scalar tokens; position-wise layers run
  // on all R*L tokens at once and only attention looks within a sequence.
  const auto n_rows = embedded.shape()[0];
  Var tokens = ad::reshape(embedded, {n_rows * horizon, 1});
  Var seq = ad::add_row_bias(ad::matmul(tokens, embed_w), embed_b);  // [R*L x d]
  Var z = encoder_block(enc, seq, cfg.n_heads, horizon);
  if (with_decoder) z = decoder_block(dec, seq, z, cfg.n_heads, horizon);
  Var projected = ad::add_row_bias(ad::matmul(z, head_w), head_b);  // [R*L x 1]
  return ad::sin(ad::reshape(projected, {n_rows, horizon}));
}

Var forward_impl(const ModelConfig& cfg, const Binder& bind, Graph& g, const Tensor& x) {
  require_rank(x, 3, "forecaster input");
  if (x.dim(1) != cfg.input_len || x.dim(2) != cfg.channels) {
    throw DimensionError("forecaster expects [B x " + std::to_string(cfg.input_len) + " x " +
                         std::to_string(cfg.channels) + "], got " + shape_to_string(x.shape()));
  }
  const Tensor rows = to_channel_rows(x);
  const auto n_rows = rows.rows(), in = cfg.input_len, horizon = cfg.horizon;

  switch (cfg.variant) {
    case Variant::kPersistence:
      return g.constant(to_channel_rows(persistence_forecast(x, horizon)));
    case Variant::kLinear:
      return dense(bind, "linear", g.constant(rows));
    case Variant::kNLinear: {
      std::vector<double> centered(rows.data().begin(), rows.data().end());
      std::vector<double> last(n_rows * horizon);
      for (std::size_t r = 0; r < n_rows; ++r) {
        const double anchor = rows[r * in + in - 1];
        for (std::size_t i = 0; i < in; ++i) centered[r * in + i] -= anchor;
        std::fill_n(last.begin() + static_cast<std::ptrdiff_t>(r * horizon), horizon, anchor);
      }
      Var out = dense(bind, "linear", g.constant(make_unchecked(rows.shape(), std::move(centered))));
      return ad::add(out, g.constant(make_unchecked({n_rows, horizon}, std::move(last))));
    }
    case Variant::kDLinear: {
      Tensor trend = moving_average(rows, cfg.ma_kernel);
      std::vector<double> seasonal(rows.size());
      for (std::size_t i = 0; i < seasonal.size(); ++i) seasonal[i] = rows[i] - trend[i];
      Var t = ad::matmul_nt(g.constant(std::move(trend)), bind("trend.weight"));
      Var s = ad::matmul_nt(g.constant(make_unchecked(rows.shape(), std::move(seasonal))), bind("seasonal.weight"));
      return ad::add_row_bias(ad::add(t, s), bind("bias"));
    }
    case Variant::kSLP: {
      Var h = addt2v(bind_t2v(bind), g.constant(rows));
      return ad::sin(dense(bind, "dense", h));
    }
    case Variant::kMLP: {
      Var h1 = ad::relu(dense(bind, "fc1", g.constant(rows)));
      Var h2 = ad::relu(dense(bind, "fc2", h1));
      return dense(bind, "fc3", h2);
    }
    case Variant::kSencoder:
    case Variant::kSinformer:
      return transformer_forward(cfg, bind, g.constant(rows));
  }
  throw ContractError("unhandled variant");
}

}  // namespace

Forecaster::Forecaster(ModelConfig config) : config_(config) {
  config_.validate();
  init_parameters();
}

void Forecaster::init_parameters() {
  Initializer init(config_.seed);
  const auto in = config_.input_len, horizon = config_.horizon, d = config_.d_model;
  switch (config_.variant) {
    case Variant::kPersistence:
      break;
    case Variant::kLinear:
    case Variant::kNLinear:
      add_dense(params_, init, "linear", horizon, in);
      break;
    case Variant::kDLinear:
      params_.add("trend.weight", ParamRole::kWeight, init.uniform({horizon, in}, in));
      params_.add("seasonal.weight", ParamRole::kWeight, init.uniform({horizon, in}, in));
      params_.add("bias", ParamRole::kBias, Tensor::zeros({horizon}));
      break;
    case Variant::kSLP:
      add_t2v(params_, init, horizon, in);
      add_dense(params_, init, "dense", horizon, horizon);
      break;
    case Variant::kMLP:
      add_dense(params_, init, "fc1", horizon, in);
      add_dense(params_, init, "fc2", horizon, horizon);
      add_dense(params_, init, "fc3", horizon, horizon);
      break;
    case Variant::kSencoder:
    case Variant::kSinformer:
      add_t2v(params_, init, horizon, in);
      params_.add("embed.weight", ParamRole::kWeight, init.uniform({1, d}, 1));
      params_.add("embed.bias", ParamRole::kBias, Tensor::zeros({d}));
      add_mha(params_, init, "enc.self", d);
      add_ffn(params_, init, "enc", d, config_.ffn_dim);
      add_norm(params_, "enc.norm1", d);
      add_norm(params_, "enc.norm2", d);
      if (config_.variant == Variant::kSinformer) {
        add_mha(params_, init, "dec.self", d);
        add_mha(params_, init, "dec.cross", d);
        add_ffn(params_, init, "dec", d, config_.ffn_dim);
        add_norm(params_, "dec.norm1", d);
        add_norm(params_, "dec.norm2", d);
        add_norm(params_, "dec.norm3", d);
      }
      params_.add("head.weight", ParamRole::kWeight, init.uniform({d, 1}, d));
      params_.add("head.bias", ParamRole::kBias, Tensor::zeros({1}));
      break;
  }
}

Var Forecaster::forward(Graph& g, const Tensor& x) {
  Binder bind = [&](std::string_view name) { return g.parameter(params_[name]); };
  return forward_impl(config_, bind, g, x);
}

Tensor Forecaster::predict(const Tensor& x) const {
  Graph g;
  Binder bind = [&](std::string_view name) { return g.constant(params_[name].value); };
  Var rows = forward_impl(config_, bind, g, x);
  return from_channel_rows(rows.value(), x.dim(0), config_.channels);
}

std::size_t estimate_attention_bytes(const ModelConfig& config, std::size_t batch_size) {
  if (!is_transformer(config.variant)) return 0;
  // Score and probability matrices are both retained for the backward pass.
  const std::size_t maps = config.variant == Variant::kSinformer ? 3 : 1;
  const std::size_t per_map = config.horizon * config.horizon * config.n_heads * sizeof(double) * 2;
  return batch_size * config.channels * maps * per_map;
}

std::size_t Forecaster::attention_memory_bytes(std::size_t batch_size) const {
  return estimate_attention_bytes(config_, batch_size);
}

}  // namespace tsf
