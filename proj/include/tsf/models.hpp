#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "tsf/autodiff.hpp"
#include "tsf/tensor.hpp"

namespace tsf {

enum class Variant { kPersistence, kLinear, kNLinear, kDLinear, kSLP, kMLP, kSencoder, kSinformer };

std::string_view variant_name(Variant v);
Variant parse_variant(std::string_view name);
bool is_transformer(Variant v);
// Models whose forecast passes through a final sine.
bool has_sine_head(Variant v);

struct ModelConfig {
  Variant variant = Variant::kLinear;
  std::size_t input_len = 96;
  std::size_t horizon = 96;
  std::size_t channels = 1;
  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t ffn_dim = 64;
  std::size_t ma_kernel = 25;
  std::uint64_t seed = 0;

  void validate() const;
};

// ---------------------------------------------------------------------------
// Building blocks. Each has a graph form (Var) used for training and a
// tensor form for direct evaluation.

struct AddT2VParams {
  Tensor w_lin;  // [L x I]
  Tensor b_lin;  // [L]
  Tensor w_per;  // [L x I]
  Tensor b_per;  // [L]
};

struct AddT2VVars {
  Var w_lin, b_lin, w_per, b_per;
};

// Rows of x [B x I] map to (W_lin x + b_lin) + sin(W_per x + b_per), [B x L].
Var addt2v(const AddT2VVars& p, Var x);
Tensor addt2v_forward(const AddT2VParams& p, const Tensor& x);

// Centered moving average with edge replication along each row of x
// ([I] or [R x I]); output has the same shape. kernel must be odd and >= 3.
Tensor moving_average(const Tensor& x, std::size_t kernel);

// softmax(Q K^T / sqrt(d)) V; causal masks keys after the query position.
Var attention(Var q, Var k, Var v, bool causal = false);
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, bool causal = false);

struct MultiHeadVars {
  Var wq, wk, wv, wo;  // [d x d], applied as x W^T
};
struct FeedForwardVars {
  Var w1, b1, w2, b2;  // w1 [ffn x d], w2 [d x ffn]
};
struct NormVars {
  Var gamma, beta;
};
struct EncoderBlockVars {
  MultiHeadVars self_attn;
  FeedForwardVars ffn;
  NormVars norm1, norm2;
};
struct DecoderBlockVars {
  MultiHeadVars self_attn;
  MultiHeadVars cross_attn;
  FeedForwardVars ffn;
  NormVars norm1, norm2, norm3;
};

// Attention over S stacked sequences: q, k, v are [S*seq_len x d], already
// projected, and the columns split into n_heads heads. Recorded as a single
// node; the probability maps are kept for the backward pass.
Var stacked_attention(Var q, Var k, Var v, std::size_t seq_len, std::size_t n_heads, bool causal);

// The inputs hold S sequences of seq_len rows each; seq_len 0 means one
// sequence spanning every row.
Var multi_head_attention(const MultiHeadVars& p, Var query_src, Var kv_src, std::size_t n_heads, bool causal,
                         std::size_t seq_len = 0);
Var feed_forward(const FeedForwardVars& p, Var x);

// y = LN(x + MHA(x)); out = LN(y + FFN(y)).
Var encoder_block(const EncoderBlockVars& p, Var x, std::size_t n_heads, std::size_t seq_len = 0);
// a = LN(y + causal MHA(y)); b = LN(a + MHA(a, memory)); out = LN(b + FFN(b)).
Var decoder_block(const DecoderBlockVars& p, Var y, Var memory, std::size_t n_heads, std::size_t seq_len = 0);

struct AttentionBlockParams {
  Tensor wq, wk, wv, wo;
  Tensor w1, b1, w2, b2;
  Tensor gamma1, beta1, gamma2, beta2;
};

Tensor encoder_block(const AttentionBlockParams& p, const Tensor& x, std::size_t n_heads);

// ---------------------------------------------------------------------------
// Layout helpers. Models are channel independent: a [B x T x C] batch is
// processed as B*C rows of length T with shared weights.

Tensor to_channel_rows(const Tensor& x);  // [B x T x C] -> [B*C x T]
Tensor from_channel_rows(const Tensor& rows, std::size_t batch, std::size_t channels);

// Last L steps of the input window, per batch element and channel.
Tensor persistence_forecast(const Tensor& x, std::size_t horizon);

/// A forecaster of any variant: config plus named parameters.
class Forecaster {
 public:
  explicit Forecaster(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  Variant variant() const { return config_.variant; }
  std::string name() const { return std::string(variant_name(config_.variant)); }
  bool trainable() const { return config_.variant != Variant::kPersistence; }

  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

  // Graph for x [B x I x C]; result is [B*C x L] in channel-row layout.
  Var forward(Graph& g, const Tensor& x);
  // [B x I x C] -> [B x L x C] without touching parameter grads.
  Tensor predict(const Tensor& x) const;

  // Bytes held by attention score matrices for one training batch. Zero for
  // non-Transformer variants.
  std::size_t attention_memory_bytes(std::size_t batch_size) const;

 private:
  void init_parameters();

  ModelConfig config_;
  ParameterSet params_;
};

std::size_t estimate_attention_bytes(const ModelConfig& config, std::size_t batch_size);

// JSON checkpoint: config plus name -> {shape, data}. Doubles round-trip
// exactly.
void save_checkpoint(const Forecaster& model, const std::filesystem::path& path);
Forecaster load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_string(const Forecaster& model);
Forecaster checkpoint_from_string(const std::string& text);

}  // namespace tsf
