#include "brati/model.hpp"

#include <cmath>

#include "brati/errors.hpp"
#include "brati/rng.hpp"

namespace brati {

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::full: return "full";
    case Variant::single_block: return "single_block";
    case Variant::average_combine: return "average_combine";
  }
  throw ConfigError("unknown variant");
}

Variant variant_from_name(const std::string& name) {
  if (name == "full") return Variant::full;
  if (name == "single_block") return Variant::single_block;
  if (name == "average_combine") return Variant::average_combine;
  throw ConfigError("unknown model variant '" + name + "'");
}

void BratiConfig::validate() const {
  if (features == 0) throw ConfigError("config: features must be >= 1");
  if (window == 0) throw ConfigError("config: window must be >= 1");
  if (d_model == 0 || d_model % 2 != 0)
    throw ConfigError("config: d_model must be even and >= 2, got " +
                      std::to_string(d_model));
  if (d_ffn == 0) throw ConfigError("config: d_ffn must be >= 1");
  if (heads == 0) throw ConfigError("config: heads must be >= 1");
  if (blocks == 0) throw ConfigError("config: blocks must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0)
    throw ConfigError("config: dropout must lie in [0, 1)");
}

namespace {

// Uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)) for weight matrices, zeros for
// biases, ones for layer-norm gains.
Tensor init_weight(Shape shape, std::size_t fan_in, SplitMix64& rng) {
  const double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
  std::vector<double> data(shape_product(shape));
  for (auto& v : data) v = bound * (2.0 * rng.next_double() - 1.0);
  return Tensor::from(std::move(shape), std::move(data), true);
}

Tensor init_zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }

Tensor init_ones(Shape shape) {
  return Tensor::from(std::move(shape),
                      std::vector<double>(shape_product(shape), 1.0), true);
}

MultiHeadAttentionParams init_mha(const BratiConfig& c, SplitMix64& rng) {
  MultiHeadAttentionParams p;
  const std::size_t dm = c.d_model;
  for (std::size_t i = 0; i < c.heads; ++i) {
    p.w_q.push_back(init_weight({dm, dm}, dm, rng));
    p.w_k.push_back(init_weight({dm, dm}, dm, rng));
    p.w_v.push_back(init_weight({dm, dm}, dm, rng));
    if (c.bias) {
      p.b_q.push_back(init_zeros({dm}));
      p.b_k.push_back(init_zeros({dm}));
      p.b_v.push_back(init_zeros({dm}));
    }
  }
  p.w_o = init_weight({c.heads * dm, dm}, c.heads * dm, rng);
  if (c.bias) p.b_o = init_zeros({dm});
  return p;
}

GruParams init_gru(const BratiConfig& c, SplitMix64& rng) {
  GruParams p;
  const std::size_t dm = c.d_model;
  p.w_ir = init_weight({dm, dm}, dm, rng);
  p.w_iz = init_weight({dm, dm}, dm, rng);
  p.w_in = init_weight({dm, dm}, dm, rng);
  p.w_hr = init_weight({dm, dm}, dm, rng);
  p.w_hz = init_weight({dm, dm}, dm, rng);
  p.w_hn = init_weight({dm, dm}, dm, rng);
  if (c.bias) {
    p.b_ir = init_zeros({dm});
    p.b_iz = init_zeros({dm});
    p.b_in = init_zeros({dm});
    p.b_hr = init_zeros({dm});
    p.b_hz = init_zeros({dm});
    p.b_hn = init_zeros({dm});
  }
  return p;
}

BlockParams init_block(const BratiConfig& c, SplitMix64& rng) {
  BlockParams b;
  b.self_attn = init_mha(c, rng);
  b.gru = init_gru(c, rng);
  b.cross_attn = init_mha(c, rng);
  b.ffn.w1 = init_weight({c.d_model, c.d_ffn}, c.d_model, rng);
  b.ffn.b1 = init_zeros({c.d_ffn});
  b.ffn.w2 = init_weight({c.d_ffn, c.d_model}, c.d_ffn, rng);
  b.ffn.b2 = init_zeros({c.d_model});
  b.norm_alpha = {init_ones({c.d_model}), init_zeros({c.d_model})};
  b.norm_beta = {init_ones({c.d_model}), init_zeros({c.d_model})};
  b.norm_delta = {init_ones({c.d_model}), init_zeros({c.d_model})};
  return b;
}

DirectionParams init_direction(const BratiConfig& c, SplitMix64& rng) {
  DirectionParams d;
  for (std::size_t k = 0; k < c.blocks; ++k) d.blocks.push_back(init_block(c, rng));
  d.reduce_w = init_weight({c.d_model, c.features}, c.d_model, rng);
  d.reduce_b = init_zeros({c.features});
  return d;
}

void name_mha(std::vector<std::pair<std::string, Tensor>>& out,
              const std::string& prefix, const MultiHeadAttentionParams& p) {
  for (std::size_t i = 0; i < p.heads(); ++i) {
    const std::string h = prefix + ".head" + std::to_string(i);
    out.emplace_back(h + ".wq", p.w_q[i]);
    out.emplace_back(h + ".wk", p.w_k[i]);
    out.emplace_back(h + ".wv", p.w_v[i]);
    if (p.has_bias()) {
      out.emplace_back(h + ".bq", p.b_q[i]);
      out.emplace_back(h + ".bk", p.b_k[i]);
      out.emplace_back(h + ".bv", p.b_v[i]);
    }
  }
  out.emplace_back(prefix + ".wo", p.w_o);
  if (p.b_o.defined()) out.emplace_back(prefix + ".bo", p.b_o);
}

void name_direction(std::vector<std::pair<std::string, Tensor>>& out,
                    const std::string& dir, const DirectionParams& d) {
  for (std::size_t k = 0; k < d.blocks.size(); ++k) {
    const BlockParams& b = d.blocks[k];
    const std::string pre = dir + ".block" + std::to_string(k);
    name_mha(out, pre + ".self_attn", b.self_attn);
    out.emplace_back(pre + ".gru.w_ir", b.gru.w_ir);
    out.emplace_back(pre + ".gru.w_iz", b.gru.w_iz);
    out.emplace_back(pre + ".gru.w_in", b.gru.w_in);
    out.emplace_back(pre + ".gru.w_hr", b.gru.w_hr);
    out.emplace_back(pre + ".gru.w_hz", b.gru.w_hz);
    out.emplace_back(pre + ".gru.w_hn", b.gru.w_hn);
    if (b.gru.has_bias()) {
      out.emplace_back(pre + ".gru.b_ir", b.gru.b_ir);
      out.emplace_back(pre + ".gru.b_iz", b.gru.b_iz);
      out.emplace_back(pre + ".gru.b_in", b.gru.b_in);
      out.emplace_back(pre + ".gru.b_hr", b.gru.b_hr);
      out.emplace_back(pre + ".gru.b_hz", b.gru.b_hz);
      out.emplace_back(pre + ".gru.b_hn", b.gru.b_hn);
    }
    name_mha(out, pre + ".cross_attn", b.cross_attn);
    out.emplace_back(pre + ".ffn.w1", b.ffn.w1);
    out.emplace_back(pre + ".ffn.b1", b.ffn.b1);
    out.emplace_back(pre + ".ffn.w2", b.ffn.w2);
    out.emplace_back(pre + ".ffn.b2", b.ffn.b2);
    out.emplace_back(pre + ".norm_alpha.gain", b.norm_alpha.gain);
    out.emplace_back(pre + ".norm_alpha.bias", b.norm_alpha.bias);
    out.emplace_back(pre + ".norm_beta.gain", b.norm_beta.gain);
    out.emplace_back(pre + ".norm_beta.bias", b.norm_beta.bias);
    out.emplace_back(pre + ".norm_delta.gain", b.norm_delta.gain);
    out.emplace_back(pre + ".norm_delta.bias", b.norm_delta.bias);
  }
  out.emplace_back(dir + ".reduce.weight", d.reduce_w);
  out.emplace_back(dir + ".reduce.bias", d.reduce_b);
}

}  // namespace

BratiParams BratiParams::init(const BratiConfig& config, std::uint64_t seed) {
  config.validate();
  SplitMix64 rng(seed);
  BratiParams p;
  p.embedding.weight =
      init_weight({2 * config.features, config.d_model}, 2 * config.features, rng);
  p.embedding.bias = init_zeros({config.d_model});
  p.fwd = init_direction(config, rng);
  if (config.variant != Variant::single_block)
    p.bwd = init_direction(config, rng);
  if (config.variant == Variant::full) {
    const std::size_t in = 2 * config.window + config.features;
    p.combine_w = init_weight({in, config.features}, in, rng);
    p.combine_b = init_zeros({config.features});
  }
  return p;
}

std::vector<std::pair<std::string, Tensor>> BratiParams::named() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("embedding.weight", embedding.weight);
  out.emplace_back("embedding.bias", embedding.bias);
  name_direction(out, "fwd", fwd);
  if (!bwd.blocks.empty()) name_direction(out, "bwd", bwd);
  if (combine_w.defined()) {
    out.emplace_back("combine.weight", combine_w);
    out.emplace_back("combine.bias", combine_b);
  }
  return out;
}

std::vector<Tensor> BratiParams::tensors() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named()) out.push_back(t);
  return out;
}

void BratiParams::zero_grads() const {
  for (auto& [name, t] : named()) const_cast<Tensor&>(t).zero_grad();
}

BlockResult imputation_block(const Tensor& e, const BlockParams& p,
                             double dropout_rate, bool train, SplitMix64* rng) {
  AttentionResult self =
      multi_head_attention(e, e, e, p.self_attn, dropout_rate, train, rng);
  Tensor alpha =
      layer_norm(add(e, self.output), p.norm_alpha.gain, p.norm_alpha.bias);

  Tensor gru_out = gru_forward(alpha, p.gru);
  Tensor beta =
      layer_norm(add(alpha, gru_out), p.norm_beta.gain, p.norm_beta.bias);

  AttentionResult cross = multi_head_attention(beta, alpha, alpha, p.cross_attn,
                                               dropout_rate, train, rng);
  Tensor delta = layer_norm(add(beta, ffn(add(cross.output, beta), p.ffn)),
                            p.norm_delta.gain, p.norm_delta.bias);
  return {delta, cross.weights};
}

namespace {

void validate_against(const BratiParams& p, const BratiConfig& c) {
  c.validate();
  auto expect = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("params/config mismatch: " + what);
  };
  expect(p.embedding.weight.defined() &&
             p.embedding.weight.shape() == Shape{2 * c.features, c.d_model},
         "embedding weight shape");
  expect(p.fwd.blocks.size() == c.blocks, "forward block count");
  const bool want_bwd = c.variant != Variant::single_block;
  expect(p.bwd.blocks.empty() == !want_bwd, "backward direction presence");
  if (want_bwd) expect(p.bwd.blocks.size() == c.blocks, "backward block count");
  const bool want_combine = c.variant == Variant::full;
  expect(p.combine_w.defined() == want_combine, "combining weights presence");
  if (want_combine)
    expect(p.combine_w.shape() == Shape{2 * c.window + c.features, c.features},
           "combining weight shape");
  for (const auto& dir : {&p.fwd, &p.bwd}) {
    for (const auto& b : dir->blocks) {
      expect(b.self_attn.heads() == c.heads && b.cross_attn.heads() == c.heads,
             "attention head count");
      expect(b.self_attn.has_bias() == c.bias && b.gru.has_bias() == c.bias,
             "bias flag");
      expect(b.ffn.w1.shape() == Shape{c.d_model, c.d_ffn}, "ffn width");
    }
    if (dir->blocks.empty()) break;  // bwd absent for single_block
    expect(dir->reduce_w.shape() == Shape{c.d_model, c.features},
           "reduction shape");
  }
}

Tensor run_chain(const Tensor& e0, const DirectionParams& dir, double dropout,
                 bool train, SplitMix64* rng, Tensor* last_gamma_w) {
  Tensor e = e0;
  BlockResult r;
  for (const auto& block : dir.blocks) {
    r = imputation_block(e, block, dropout, train, rng);
    e = r.delta;
  }
  *last_gamma_w = r.gamma_w;
  return add_rowvec(matmul(e, dir.reduce_w), dir.reduce_b);
}

}  // namespace

BratiOutput brati_forward_from_embedding(const Tensor& e, const Tensor& x_hat,
                                         const Tensor& m_hat,
                                         const BratiParams& params,
                                         const BratiConfig& config, bool train,
                                         SplitMix64* rng) {
  validate_against(params, config);
  if (x_hat.shape() != Shape{config.window, config.features} ||
      m_hat.shape() != x_hat.shape())
    throw ConfigError("input " + shape_str(x_hat.shape()) +
                      " does not match configured window " +
                      shape_str({config.window, config.features}));

  BratiOutput out;
  Tensor gamma_w;
  out.x_fwd = run_chain(e, params.fwd, config.dropout, train, rng, &gamma_w);

  if (config.variant == Variant::single_block) {
    out.x_bwd = out.x_fwd;
    out.x_joint = out.x_fwd;
    out.omega = Tensor::full({config.window, config.features}, 0.5);
  } else {
    Tensor gamma_w_bwd;
    Tensor x_bwd_raw = run_chain(reverse_timeaxis(e), params.bwd,
                                 config.dropout, train, rng, &gamma_w_bwd);
    out.x_bwd = reverse_timeaxis(x_bwd_raw);
    // Re-align the backward attention matrix to forward time order on both
    // axes before it feeds the combining weights.
    Tensor gamma_w_aligned = reverse_lastaxis(reverse_timeaxis(gamma_w_bwd));

    if (config.variant == Variant::full) {
      out.omega = sigmoid(add_rowvec(
          matmul(concat_lastaxis({m_hat, gamma_w, gamma_w_aligned}),
                 params.combine_w),
          params.combine_b));
    } else {
      out.omega = Tensor::full({config.window, config.features}, 0.5);
    }
    out.x_joint = add(mul(out.x_fwd, out.omega),
                      mul(out.x_bwd, sub(Tensor::ones(out.omega.shape()),
                                         out.omega)));
  }

  // Observed positions pass the model input through unchanged.
  out.imputation =
      add(mul(x_hat, m_hat),
          mul(out.x_joint, sub(Tensor::ones(m_hat.shape()), m_hat)));
  return out;
}

BratiOutput brati_forward(const Tensor& x_hat, const Tensor& m_hat,
                          const BratiParams& params, const BratiConfig& config,
                          bool train, SplitMix64* rng) {
  auto [e, e_rev] = embed(x_hat, m_hat, params.embedding);
  (void)e_rev;  // the backward chain re-derives it from e
  return brati_forward_from_embedding(e, x_hat, m_hat, params, config, train,
                                      rng);
}

std::size_t parameter_count(const BratiConfig& c) {
  c.validate();
  const std::size_t dm = c.d_model;
  auto mha = [&] {
    std::size_t n = c.heads * 3 * dm * dm + c.heads * dm * dm;  // per-head + W_O
    if (c.bias) n += c.heads * 3 * dm + dm;
    return n;
  };
  std::size_t block = 2 * mha();
  block += 6 * dm * dm + (c.bias ? 6 * dm : 0);        // GRU
  block += dm * c.d_ffn + c.d_ffn + c.d_ffn * dm + dm; // FFN
  block += 3 * 2 * dm;                                 // three layer norms
  std::size_t direction = c.blocks * block + dm * c.features + c.features;

  std::size_t total = 2 * c.features * dm + dm;  // embedding
  total += direction * (c.variant == Variant::single_block ? 1 : 2);
  if (c.variant == Variant::full)
    total += (2 * c.window + c.features) * c.features + c.features;
  return total;
}

}  // namespace brati
