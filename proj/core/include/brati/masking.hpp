#ifndef BRATI_MASKING_HPP
#define BRATI_MASKING_HPP

#include <cstdint>
#include <vector>

#include "brati/tensor.hpp"

namespace brati {

enum class Scenario { mcar, fixed_seq, random_seq };

std::string scenario_name(Scenario s);
Scenario scenario_from_name(const std::string& name);

// The three artificial-missingness protocols at a configurable rate.
// fixed_len applies to fixed_seq; [min_len, max_len] to random_seq.
struct ScenarioSpec {
  Scenario kind = Scenario::mcar;
  double rate = 0.1;
  std::size_t fixed_len = 5;
  std::size_t min_len = 3;
  std::size_t max_len = 10;
  std::uint64_t seed = 0;

  void validate() const;
};

// One masked run placed by a sequence generator.
struct MaskRun {
  std::size_t col = 0;
  std::size_t start = 0;
  std::size_t len = 0;
};

// The generated indicating mask plus the decision log that makes the
// protocol auditable: which runs were placed, which cells came from the
// MCAR fallback, and whether the final run was truncated to the budget.
struct MaskGenResult {
  Tensor indicator;                     // binary [T x D]
  std::size_t target = 0;               // round-half-even(rate * observed)
  bool empty = false;                   // target was 0; indicator is all zero
  std::vector<MaskRun> runs;            // sequence scenarios only
  std::vector<std::size_t> fallback;    // flat row-major cell indices
  bool truncated_final_run = false;
};

// Deterministic half-to-even rounding of the double product, independent of
// the process floating-point rounding mode.
std::size_t mask_target_count(double rate, std::size_t observed);

// Select target observed cells uniformly without replacement.
MaskGenResult generate_mcar(const Tensor& observed_mask, double rate,
                            std::uint64_t seed);

// Remove runs of `run_len` consecutive observed values (per feature column),
// uniformly over the eligible placements; remaining budget that no eligible
// run can cover is filled with MCAR picks.
MaskGenResult generate_fixed_seq(const Tensor& observed_mask, double rate,
                                 std::size_t run_len, std::uint64_t seed);

// Like fixed_seq with each run length drawn uniformly from
// [min_len, max_len]; a run that would overshoot the budget is truncated.
MaskGenResult generate_random_seq(const Tensor& observed_mask, double rate,
                                  std::size_t min_len, std::size_t max_len,
                                  std::uint64_t seed);

MaskGenResult generate(const Tensor& observed_mask, const ScenarioSpec& spec);

// Batched window with artificial holes: x_hat zero-filled at every
// model-invisible cell, m_hat = M - I, x_truth = X at I positions.
struct MaskedBatch {
  Tensor x_hat;
  Tensor m_hat;
  Tensor indicating;
  Tensor x_truth;
};

// Throws ContractError when I selects a cell outside the observed mask.
MaskedBatch apply_mask(const Tensor& x, const Tensor& observed_mask,
                       const Tensor& indicating_mask);

}  // namespace brati

#endif
