#include "brati/layers.hpp"

#include <cmath>

#include "brati/errors.hpp"

namespace brati {

Tensor positional_encoding(std::size_t length, std::size_t d_model) {
  if (d_model == 0 || d_model % 2 != 0)
    throw ConfigError("positional encoding needs an even d_model, got " +
                      std::to_string(d_model));
  if (length == 0) throw ConfigError("positional encoding needs length >= 1");
  std::vector<double> pe(length * d_model);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double freq =
          std::pow(10000.0, -(2.0 * static_cast<double>(i)) /
                                static_cast<double>(d_model));
      const double arg = static_cast<double>(pos) * freq;
      pe[pos * d_model + 2 * i] = std::sin(arg);
      pe[pos * d_model + 2 * i + 1] = std::cos(arg);
    }
  }
  return Tensor::from({length, d_model}, std::move(pe));
}

std::pair<Tensor, Tensor> embed(const Tensor& x_hat, const Tensor& m_hat,
                                const EmbeddingParams& p) {
  if (x_hat.shape() != m_hat.shape())
    throw ShapeError("embed: values " + shape_str(x_hat.shape()) +
                     " and mask " + shape_str(m_hat.shape()) + " disagree");
  const std::size_t d = x_hat.cols();
  if (p.weight.rows() != 2 * d)
    throw ShapeError("embed: weight " + shape_str(p.weight.shape()) +
                     " does not accept concat width " + std::to_string(2 * d));
  Tensor projected =
      add_rowvec(matmul(concat_lastaxis({x_hat, m_hat}), p.weight), p.bias);
  Tensor e = add(projected, positional_encoding(x_hat.rows(), p.weight.cols()));
  return {e, reverse_timeaxis(e)};
}

AttentionResult scaled_dot_product_attention(const Tensor& q, const Tensor& k,
                                             const Tensor& v) {
  const std::size_t d_k = q.cols();
  if (d_k == 0) throw ConfigError("attention: d_k must be >= 1");
  if (k.cols() != d_k)
    throw ShapeError("attention: query " + shape_str(q.shape()) + " and key " +
                     shape_str(k.shape()) + " widths disagree");
  if (v.rows() != k.rows())
    throw ShapeError("attention: key " + shape_str(k.shape()) + " and value " +
                     shape_str(v.shape()) + " lengths disagree");
  Tensor scores = mul_scalar(matmul(q, transpose_last2(k)),
                             1.0 / std::sqrt(static_cast<double>(d_k)));
  Tensor weights = softmax_lastaxis(scores);
  return {matmul(weights, v), weights};
}

AttentionResult multi_head_attention(const Tensor& q, const Tensor& k,
                                     const Tensor& v,
                                     const MultiHeadAttentionParams& p,
                                     double dropout_rate, bool train,
                                     SplitMix64* rng) {
  const std::size_t h = p.heads();
  if (h == 0) throw ConfigError("multi_head_attention: no heads");

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(h);
  Tensor weight_sum;
  for (std::size_t i = 0; i < h; ++i) {
    Tensor qi = matmul(q, p.w_q[i]);
    Tensor ki = matmul(k, p.w_k[i]);
    Tensor vi = matmul(v, p.w_v[i]);
    if (p.has_bias()) {
      qi = add_rowvec(qi, p.b_q[i]);
      ki = add_rowvec(ki, p.b_k[i]);
      vi = add_rowvec(vi, p.b_v[i]);
    }
    AttentionResult head = scaled_dot_product_attention(qi, ki, vi);
    Tensor w = dropout(head.weights, dropout_rate, train, rng);
    head_outputs.push_back(matmul(w, vi));
    weight_sum =
        weight_sum.defined() ? add(weight_sum, head.weights) : head.weights;
  }

  Tensor concat = h == 1 ? head_outputs[0] : concat_lastaxis(head_outputs);
  if (concat.cols() != p.w_o.rows())
    throw ShapeError("multi_head_attention: head concat " +
                     shape_str(concat.shape()) +
                     " does not match output projection " +
                     shape_str(p.w_o.shape()));
  Tensor out = matmul(concat, p.w_o);
  if (p.b_o.defined()) out = add_rowvec(out, p.b_o);
  Tensor avg = h == 1 ? weight_sum
                      : mul_scalar(weight_sum, 1.0 / static_cast<double>(h));
  return {out, avg};
}

Tensor gru_forward(const Tensor& x, const GruParams& p, const Tensor& h0) {
  const std::size_t t_len = x.rows();
  const std::size_t d_in = x.cols();
  const std::size_t d_h = p.w_ir.cols();
  if (p.w_ir.rows() != d_in)
    throw ShapeError("gru_forward: input width " + std::to_string(d_in) +
                     " does not match weights " + shape_str(p.w_ir.shape()));

  Tensor h = h0.defined() ? reshape(h0, {1, d_h}) : Tensor::zeros({1, d_h});
  const bool bias = p.has_bias();

  auto gate_pre = [&](const Tensor& xt, const Tensor& wi, const Tensor& bi,
                      const Tensor& wh, const Tensor& bh) {
    Tensor ix = matmul(xt, wi);
    Tensor hh = matmul(h, wh);
    if (bias) {
      ix = add_rowvec(ix, bi);
      hh = add_rowvec(hh, bh);
    }
    return std::pair<Tensor, Tensor>(ix, hh);
  };

  std::vector<Tensor> states;
  states.reserve(t_len);
  for (std::size_t t = 0; t < t_len; ++t) {
    Tensor xt = slice_timeaxis(x, t, t + 1);
    auto [r_ix, r_hh] = gate_pre(xt, p.w_ir, p.b_ir, p.w_hr, p.b_hr);
    Tensor r = sigmoid(add(r_ix, r_hh));
    auto [z_ix, z_hh] = gate_pre(xt, p.w_iz, p.b_iz, p.w_hz, p.b_hz);
    Tensor z = sigmoid(add(z_ix, z_hh));
    auto [n_ix, n_hh] = gate_pre(xt, p.w_in, p.b_in, p.w_hn, p.b_hn);
    Tensor n = tanh_op(add(n_ix, mul(r, n_hh)));
    // h_t = (1 - z) .* n + z .* h_{t-1}
    h = add(mul(sub(Tensor::ones({1, d_h}), z), n), mul(z, h));
    states.push_back(h);
  }
  return t_len == 1 ? states[0] : concat_timeaxis(states);
}

Tensor ffn(const Tensor& x, const FfnParams& p) {
  Tensor hidden = elu(add_rowvec(matmul(x, p.w1), p.b1));
  return add_rowvec(matmul(hidden, p.w2), p.b2);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias) {
  constexpr double kEps = 1e-5;
  Tensor mu = mean_lastaxis(x);
  Tensor centered = sub(x, mu);
  Tensor var = mean_lastaxis(mul(centered, centered));
  Tensor normalized = div(centered, sqrt_op(add_scalar(var, kEps)));
  return add_rowvec(mul_rowvec(normalized, gain), bias);
}

Tensor dropout(const Tensor& x, double rate, bool train, SplitMix64* rng) {
  if (!train || rate == 0.0) return x;
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout rate must lie in [0, 1), got " +
                      std::to_string(rate));
  if (rng == nullptr)
    throw ConfigError("dropout in train mode needs a random generator");
  const double scale = 1.0 / (1.0 - rate);
  std::vector<double> keep(x.size());
  for (auto& v : keep) v = rng->next_double() < rate ? 0.0 : scale;
  return mul(x, Tensor::from(x.shape(), std::move(keep)));
}

}  // namespace brati
