#ifndef BRATI_OBJECTIVE_HPP
#define BRATI_OBJECTIVE_HPP

#include "brati/tensor.hpp"

namespace brati {

struct LossWeights {
  double lambda_mil = 1.0;
  double lambda_orl = 1.0;
  double lambda_cons = 1.0;
  double rho = 0.1;  // consistency factor

  void validate() const;
};

struct LossBreakdown {
  Tensor mil;
  Tensor orl;
  Tensor cons;
  Tensor total;
};

// Sum |prediction - target| over mask == 1 cells divided by the mask count.
// Throws UndefinedLossError on an all-zero mask rather than returning 0/0.
Tensor masked_mae(const Tensor& prediction, const Tensor& target,
                  const Tensor& mask);

// Imputation loss: masked MAE of the joint representation at the
// artificially hidden cells.
Tensor mil_loss(const Tensor& x_joint, const Tensor& x, const Tensor& indicating);

// Reconstruction loss over the model-visible cells:
//   1/2 MAE(x_joint) + 1/4 MAE(x_fwd) + 1/4 MAE(x_bwd),
// reduced to its first term (coefficient kept) for the single-block variant.
Tensor orl_loss(const Tensor& x_joint, const Tensor& x_fwd,
                const Tensor& x_bwd, const Tensor& x, const Tensor& m_hat,
                bool single_block = false);

// rho times the plain (unmasked) MAE between the two direction
// representations, both in forward time order.
Tensor consistency_loss(const Tensor& x_fwd, const Tensor& x_bwd, double rho);

// Weighted sum; throws DivergenceError when any part is NaN.
LossBreakdown total_loss(const Tensor& mil, const Tensor& orl,
                         const Tensor& cons, const LossWeights& weights);

}  // namespace brati

#endif
