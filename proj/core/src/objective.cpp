#include "brati/objective.hpp"

#include <cmath>

#include "brati/errors.hpp"

namespace brati {

void LossWeights::validate() const {
  for (double v : {lambda_mil, lambda_orl, lambda_cons, rho})
    if (!std::isfinite(v) || v < 0.0)
      throw ConfigError("loss weights must be finite and nonnegative");
}

Tensor masked_mae(const Tensor& prediction, const Tensor& target,
                  const Tensor& mask) {
  if (prediction.shape() != target.shape() ||
      prediction.shape() != mask.shape())
    throw ShapeError("masked_mae: shapes disagree: prediction " +
                     shape_str(prediction.shape()) + ", target " +
                     shape_str(target.shape()) + ", mask " +
                     shape_str(mask.shape()));
  double support = 0.0;
  for (double v : mask.data()) support += v;
  if (support == 0.0)
    throw UndefinedLossError("masked_mae over an all-zero mask is undefined");
  Tensor num = sum_all(abs_op(mul(sub(prediction, target), mask)));
  return mul_scalar(num, 1.0 / support);
}

Tensor mil_loss(const Tensor& x_joint, const Tensor& x,
                const Tensor& indicating) {
  return masked_mae(x_joint, x, indicating);
}

Tensor orl_loss(const Tensor& x_joint, const Tensor& x_fwd,
                const Tensor& x_bwd, const Tensor& x, const Tensor& m_hat,
                bool single_block) {
  Tensor first = mul_scalar(masked_mae(x_joint, x, m_hat), 0.5);
  if (single_block) return first;
  return add(first, add(mul_scalar(masked_mae(x_fwd, x, m_hat), 0.25),
                        mul_scalar(masked_mae(x_bwd, x, m_hat), 0.25)));
}

Tensor consistency_loss(const Tensor& x_fwd, const Tensor& x_bwd, double rho) {
  if (x_fwd.shape() != x_bwd.shape())
    throw ShapeError("consistency_loss: " + shape_str(x_fwd.shape()) +
                     " vs " + shape_str(x_bwd.shape()));
  Tensor mae = mul_scalar(sum_all(abs_op(sub(x_fwd, x_bwd))),
                          1.0 / static_cast<double>(x_fwd.size()));
  return mul_scalar(mae, rho);
}

LossBreakdown total_loss(const Tensor& mil, const Tensor& orl,
                         const Tensor& cons, const LossWeights& weights) {
  weights.validate();
  for (const auto* part : {&mil, &orl, &cons})
    if (std::isnan(part->item()))
      throw DivergenceError("loss diverged: NaN component");
  LossBreakdown out;
  out.mil = mil;
  out.orl = orl;
  out.cons = cons;
  out.total = add(mul_scalar(mil, weights.lambda_mil),
                  add(mul_scalar(orl, weights.lambda_orl),
                      mul_scalar(cons, weights.lambda_cons)));
  return out;
}

}  // namespace brati
