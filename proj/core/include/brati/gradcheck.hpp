#ifndef BRATI_GRADCHECK_HPP
#define BRATI_GRADCHECK_HPP

#include <functional>
#include <string>
#include <vector>

#include "brati/tensor.hpp"

namespace brati {

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::size_t checked = 0;
  std::string worst;  // "leaf k element i" of the worst element
};

// Compares the analytic gradients of `build_loss` (a pure function of the
// leaf values, evaluated through the autodiff graph) against central finite
// differences. The numeric side never touches the reverse pass, so it is an
// independent oracle for it.
//
// rel = |analytic - numeric| / max(|analytic|, |numeric|, 1e-6)
GradCheckResult check_gradients(const std::vector<Tensor>& leaves,
                                const std::function<Tensor()>& build_loss,
                                double h = 1e-5);

// Per-layer and end-to-end checks used by the `gradcheck` CLI subcommand.
// Returns (name, result) pairs; a layer passes at `layer_tol`, the
// end-to-end entry at `model_tol`.
struct GradCheckReport {
  std::vector<std::pair<std::string, GradCheckResult>> entries;
  bool passed = false;
};

GradCheckReport run_gradcheck_suite(double layer_tol = 1e-4,
                                    double model_tol = 1e-3,
                                    std::uint64_t seed = 17);

}  // namespace brati

#endif
