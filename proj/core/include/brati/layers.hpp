#ifndef BRATI_LAYERS_HPP
#define BRATI_LAYERS_HPP

#include <cstdint>
#include <utility>
#include <vector>

#include "brati/rng.hpp"
#include "brati/tensor.hpp"

namespace brati {

// Per-head projections; d_k = d_v = d_model here (heads are full-width
// re-projections, not slices). Bias vectors are empty tensors when the
// layer is configured without biases.
struct MultiHeadAttentionParams {
  std::vector<Tensor> w_q, w_k, w_v;  // each [d_model x d_k]
  std::vector<Tensor> b_q, b_k, b_v;  // each [d_k], optional
  Tensor w_o;                         // [h*d_v x d_model]
  Tensor b_o;                         // [d_model], optional

  std::size_t heads() const { return w_q.size(); }
  bool has_bias() const { return !b_q.empty() && b_q[0].defined(); }
};

struct GruParams {
  Tensor w_ir, w_iz, w_in;  // [d_in x d_h]
  Tensor w_hr, w_hz, w_hn;  // [d_h x d_h]
  Tensor b_ir, b_iz, b_in, b_hr, b_hz, b_hn;  // [d_h], optional

  bool has_bias() const { return b_ir.defined(); }
};

struct FfnParams {
  Tensor w1;  // [d_model x d_ffn]
  Tensor b1;  // [d_ffn]
  Tensor w2;  // [d_ffn x d_model]
  Tensor b2;  // [d_model]
};

struct EmbeddingParams {
  Tensor weight;  // [2D x d_model]
  Tensor bias;    // [d_model]
};

struct LayerNormParams {
  Tensor gain;  // [d]
  Tensor bias;  // [d]
};

// Fixed sinusoidal code: entry (pos, 2i) = sin(pos / 10000^(2i/d_model)),
// entry (pos, 2i+1) = cos of the same argument. Throws ConfigError on odd
// d_model.
Tensor positional_encoding(std::size_t length, std::size_t d_model);

// e  = concat(x_hat, m_hat) W + b + PosEnc, the input of the forward chain;
// e' = e reversed along time, the input of the backward chain.
std::pair<Tensor, Tensor> embed(const Tensor& x_hat, const Tensor& m_hat,
                                const EmbeddingParams& p);

struct AttentionResult {
  Tensor output;
  Tensor weights;  // row-stochastic [T_q x T_k]
};

// softmax(Q K^T / sqrt(d_k)) V with max-subtracted softmax.
AttentionResult scaled_dot_product_attention(const Tensor& q, const Tensor& k,
                                             const Tensor& v);

// Heads run scaled dot-product attention on their own projections; outputs
// are concatenated and re-projected. `weights` is the head-averaged
// attention matrix before dropout (so it stays row-stochastic); dropout is
// applied to the per-head weights used for the value product, train mode
// only.
AttentionResult multi_head_attention(const Tensor& q, const Tensor& k,
                                     const Tensor& v,
                                     const MultiHeadAttentionParams& p,
                                     double dropout_rate, bool train,
                                     SplitMix64* rng);

// Standard GRU over the time axis; h0 defaults to zeros when undefined.
// Returns all T hidden states.
Tensor gru_forward(const Tensor& x, const GruParams& p,
                   const Tensor& h0 = Tensor());

// ELU(x W1 + b1) W2 + b2, applied to every time step independently.
Tensor ffn(const Tensor& x, const FfnParams& p);

// Per-row normalization to zero mean / unit variance (epsilon 1e-5 inside
// the square root), then elementwise gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias);

// Inverted dropout: keeps are scaled by 1/(1-rate) at train time, identity
// otherwise. rng must be provided when it can fire.
Tensor dropout(const Tensor& x, double rate, bool train, SplitMix64* rng);

}  // namespace brati

#endif
