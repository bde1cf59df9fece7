#ifndef BRATI_MODEL_HPP
#define BRATI_MODEL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "brati/layers.hpp"
#include "brati/tensor.hpp"

namespace brati {

enum class Variant { full, single_block, average_combine };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct BratiConfig {
  std::size_t features = 0;   // D
  std::size_t window = 0;     // T
  std::size_t d_model = 64;
  std::size_t d_ffn = 128;
  std::size_t heads = 2;
  std::size_t blocks = 1;     // N
  double dropout = 0.0;
  bool bias = true;           // bias vectors in GRU and attention layers
  Variant variant = Variant::full;

  void validate() const;
  bool operator==(const BratiConfig&) const = default;
};

// One imputation block: self-attention, GRU, cross-attention, feed-forward,
// with post-norm residual wrapping. The GRU hidden width equals d_model so
// the residual around it is well-typed.
struct BlockParams {
  MultiHeadAttentionParams self_attn;   // produces alpha
  GruParams gru;                        // produces beta
  MultiHeadAttentionParams cross_attn;  // produces gamma, gamma_w
  FfnParams ffn;                        // produces delta
  LayerNormParams norm_alpha, norm_beta, norm_delta;
};

struct DirectionParams {
  std::vector<BlockParams> blocks;
  Tensor reduce_w;  // [d_model x D]
  Tensor reduce_b;  // [D]
};

// All learnables. Which pieces exist depends on the variant:
//   full            - both directions + combining weights
//   single_block    - forward direction only
//   average_combine - both directions, no combining weights
struct BratiParams {
  EmbeddingParams embedding;
  DirectionParams fwd;
  DirectionParams bwd;  // empty blocks when single_block
  Tensor combine_w;     // [(2T+D) x D], full variant only
  Tensor combine_b;     // [D]

  // Deterministic (name, tensor) listing; this order defines the
  // checkpoint manifest and the optimizer state layout.
  std::vector<std::pair<std::string, Tensor>> named() const;
  std::vector<Tensor> tensors() const;
  void zero_grads() const;

  static BratiParams init(const BratiConfig& config, std::uint64_t seed);
};

struct BratiOutput {
  Tensor x_fwd;       // [T x D] forward-chain representation
  Tensor x_bwd;       // [T x D] backward-chain representation, forward time order
  Tensor x_joint;     // [T x D] combined representation
  Tensor imputation;  // [T x D] observed values passed through, holes filled
  Tensor omega;       // [T x D] combining weights in (0,1)
};

struct BlockResult {
  Tensor delta;    // [T x d_model]
  Tensor gamma_w;  // [T x T] head-averaged cross-attention weights
};

// alpha = LN(e + SelfAttn(e)); beta = LN(alpha + GRU(alpha));
// gamma, gamma_w = CrossAttn(beta, alpha, alpha);
// delta = LN(beta + FFN(gamma + beta)).
BlockResult imputation_block(const Tensor& e, const BlockParams& p,
                             double dropout_rate, bool train, SplitMix64* rng);

// Full forward pass. x_hat must have missing entries zero-filled and m_hat
// must be binary. Throws ConfigError when params and config disagree.
BratiOutput brati_forward(const Tensor& x_hat, const Tensor& m_hat,
                          const BratiParams& params, const BratiConfig& config,
                          bool train, SplitMix64* rng);

// The pipeline after the embedding: the forward chain consumes `e`, the
// backward chain consumes `e` reversed in time. brati_forward delegates
// here; exposed so the directional symmetry can be exercised directly.
BratiOutput brati_forward_from_embedding(const Tensor& e, const Tensor& x_hat,
                                         const Tensor& m_hat,
                                         const BratiParams& params,
                                         const BratiConfig& config, bool train,
                                         SplitMix64* rng);

// Exact number of scalar learnables for the configuration.
std::size_t parameter_count(const BratiConfig& config);

}  // namespace brati

#endif
