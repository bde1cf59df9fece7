#include "brati/masking.hpp"

#include <algorithm>
#include <cmath>

#include "brati/errors.hpp"
#include "brati/rng.hpp"

namespace brati {

std::string scenario_name(Scenario s) {
  switch (s) {
    case Scenario::mcar: return "mcar";
    case Scenario::fixed_seq: return "fixed5";
    case Scenario::random_seq: return "rand3-10";
  }
  throw ConfigError("unknown scenario");
}

Scenario scenario_from_name(const std::string& name) {
  if (name == "mcar") return Scenario::mcar;
  if (name == "fixed5" || name == "fixed_seq") return Scenario::fixed_seq;
  if (name == "rand3-10" || name == "random_seq") return Scenario::random_seq;
  throw ConfigError("unknown scenario '" + name + "'");
}

void ScenarioSpec::validate() const {
  if (!(rate > 0.0 && rate < 1.0))
    throw ConfigError("masking rate must lie in (0, 1), got " +
                      std::to_string(rate));
  if (fixed_len == 0) throw ConfigError("fixed run length must be >= 1");
  if (min_len == 0 || max_len < min_len)
    throw ConfigError("random run length range is empty");
}

std::size_t mask_target_count(double rate, std::size_t observed) {
  const double x = rate * static_cast<double>(observed);
  const double f = std::floor(x);
  const double frac = x - f;
  double r;
  if (frac > 0.5) {
    r = f + 1.0;
  } else if (frac < 0.5) {
    r = f;
  } else {
    r = (std::fmod(f, 2.0) == 0.0) ? f : f + 1.0;  // ties to even
  }
  return static_cast<std::size_t>(r);
}

namespace {

struct MaskView {
  std::size_t rows, cols;
  const std::vector<double>& m;
  bool observed(std::size_t r, std::size_t c) const {
    return m[r * cols + c] == 1.0;
  }
};

void check_binary(const Tensor& m, const char* what) {
  for (double v : m.data())
    if (v != 0.0 && v != 1.0)
      throw ContractError(std::string(what) + " must be binary");
}

std::size_t count_ones(const Tensor& m) {
  std::size_t n = 0;
  for (double v : m.data()) n += v == 1.0 ? 1 : 0;
  return n;
}

// Uniform draw of `take` distinct items from `pool` by partial
// Fisher-Yates; mutates pool order deterministically.
std::vector<std::size_t> sample_without_replacement(
    std::vector<std::size_t>& pool, std::size_t take, SplitMix64& rng) {
  std::vector<std::size_t> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + rng.below(pool.size() - i);
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

MaskGenResult init_result(const Tensor& observed_mask, double rate) {
  if (!(rate > 0.0 && rate < 1.0))
    throw ConfigError("masking rate must lie in (0, 1), got " +
                      std::to_string(rate));
  check_binary(observed_mask, "observed mask");
  const std::size_t observed = count_ones(observed_mask);
  if (observed == 0)
    throw ContractError("mask generation needs at least one observed cell");
  MaskGenResult res;
  res.indicator = Tensor::zeros(observed_mask.shape());
  res.target = mask_target_count(rate, observed);
  res.empty = res.target == 0;
  return res;
}

// Cells with M=1 and I=0, flat row-major order.
std::vector<std::size_t> eligible_cells(const Tensor& m,
                                        const std::vector<double>& ind) {
  std::vector<std::size_t> out;
  const auto& mv = m.data();
  for (std::size_t i = 0; i < mv.size(); ++i)
    if (mv[i] == 1.0 && ind[i] == 0.0) out.push_back(i);
  return out;
}

void mcar_fill(const Tensor& observed_mask, std::vector<double>& ind,
               std::size_t remaining, SplitMix64& rng, MaskGenResult& res) {
  auto pool = eligible_cells(observed_mask, ind);
  auto picked = sample_without_replacement(pool, remaining, rng);
  for (std::size_t i : picked) {
    ind[i] = 1.0;
    res.fallback.push_back(i);
  }
}

// All (col, start) placements where `len` consecutive cells of the column
// are observed and not yet chosen. Column-major enumeration keeps the
// uniform pick deterministic.
std::vector<MaskRun> eligible_runs(const MaskView& view,
                                   const std::vector<double>& ind,
                                   std::size_t len) {
  std::vector<MaskRun> out;
  if (len > view.rows) return out;
  for (std::size_t c = 0; c < view.cols; ++c) {
    std::size_t free_above = 0;  // consecutive usable cells ending at r-1
    for (std::size_t r = 0; r < view.rows; ++r) {
      const bool usable =
          view.observed(r, c) && ind[r * view.cols + c] == 0.0;
      free_above = usable ? free_above + 1 : 0;
      if (free_above >= len) out.push_back({c, r + 1 - len, len});
    }
  }
  return out;
}

void place_run(std::vector<double>& ind, std::size_t cols, const MaskRun& run,
               MaskGenResult& res) {
  for (std::size_t k = 0; k < run.len; ++k)
    ind[(run.start + k) * cols + run.col] = 1.0;
  res.runs.push_back(run);
}

MaskGenResult generate_sequences(const Tensor& observed_mask, double rate,
                                 std::size_t min_len, std::size_t max_len,
                                 std::uint64_t seed) {
  MaskGenResult res = init_result(observed_mask, rate);
  if (res.empty) return res;
  SplitMix64 rng(seed);
  MaskView view{observed_mask.rows(), observed_mask.cols(),
                observed_mask.data()};
  auto& ind = res.indicator.values_mut();

  std::size_t remaining = res.target;
  while (remaining > 0) {
    std::size_t len =
        min_len == max_len ? min_len
                           : min_len + rng.below(max_len - min_len + 1);
    bool truncated = false;
    if (len > remaining) {
      len = remaining;
      truncated = true;
    }
    auto runs = eligible_runs(view, ind, len);
    if (runs.empty()) break;  // MCAR fallback covers the remainder
    const MaskRun run = runs[rng.below(runs.size())];
    place_run(ind, view.cols, run, res);
    if (truncated) res.truncated_final_run = true;
    remaining -= run.len;
  }
  if (remaining > 0) mcar_fill(observed_mask, ind, remaining, rng, res);
  return res;
}

}  // namespace

MaskGenResult generate_mcar(const Tensor& observed_mask, double rate,
                            std::uint64_t seed) {
  MaskGenResult res = init_result(observed_mask, rate);
  if (res.empty) return res;
  SplitMix64 rng(seed);
  auto& ind = res.indicator.values_mut();
  auto pool = eligible_cells(observed_mask, ind);
  for (std::size_t i : sample_without_replacement(pool, res.target, rng))
    ind[i] = 1.0;
  return res;
}

MaskGenResult generate_fixed_seq(const Tensor& observed_mask, double rate,
                                 std::size_t run_len, std::uint64_t seed) {
  if (run_len == 0) throw ConfigError("fixed run length must be >= 1");
  // A fixed-length scenario never truncates: budget left over after the
  // last whole run goes to the MCAR fallback.
  MaskGenResult res = init_result(observed_mask, rate);
  if (res.empty) return res;
  SplitMix64 rng(seed);
  MaskView view{observed_mask.rows(), observed_mask.cols(),
                observed_mask.data()};
  auto& ind = res.indicator.values_mut();

  std::size_t remaining = res.target;
  while (remaining >= run_len) {
    auto runs = eligible_runs(view, ind, run_len);
    if (runs.empty()) break;
    const MaskRun run = runs[rng.below(runs.size())];
    place_run(ind, view.cols, run, res);
    remaining -= run_len;
  }
  if (remaining > 0) mcar_fill(observed_mask, ind, remaining, rng, res);
  return res;
}

MaskGenResult generate_random_seq(const Tensor& observed_mask, double rate,
                                  std::size_t min_len, std::size_t max_len,
                                  std::uint64_t seed) {
  if (min_len == 0 || max_len < min_len)
    throw ConfigError("random run length range is empty");
  return generate_sequences(observed_mask, rate, min_len, max_len, seed);
}

MaskGenResult generate(const Tensor& observed_mask, const ScenarioSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case Scenario::mcar:
      return generate_mcar(observed_mask, spec.rate, spec.seed);
    case Scenario::fixed_seq:
      return generate_fixed_seq(observed_mask, spec.rate, spec.fixed_len,
                                spec.seed);
    case Scenario::random_seq:
      return generate_random_seq(observed_mask, spec.rate, spec.min_len,
                                 spec.max_len, spec.seed);
  }
  throw ConfigError("unknown scenario");
}

MaskedBatch apply_mask(const Tensor& x, const Tensor& observed_mask,
                       const Tensor& indicating_mask) {
  if (x.shape() != observed_mask.shape() ||
      x.shape() != indicating_mask.shape())
    throw ShapeError("apply_mask: shapes disagree: values " +
                     shape_str(x.shape()) + ", observed " +
                     shape_str(observed_mask.shape()) + ", indicating " +
                     shape_str(indicating_mask.shape()));
  check_binary(observed_mask, "observed mask");
  check_binary(indicating_mask, "indicating mask");

  const auto& xv = x.data();
  const auto& mv = observed_mask.data();
  const auto& iv = indicating_mask.data();
  std::vector<double> x_hat(xv.size()), m_hat(xv.size()), truth(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (iv[i] == 1.0 && mv[i] == 0.0)
      throw ContractError(
          "indicating mask selects an originally-missing cell at flat index " +
          std::to_string(i));
    m_hat[i] = mv[i] - iv[i];
    x_hat[i] = m_hat[i] == 1.0 ? xv[i] : 0.0;
    truth[i] = iv[i] == 1.0 ? xv[i] : 0.0;
  }
  return {Tensor::from(x.shape(), std::move(x_hat)),
          Tensor::from(x.shape(), std::move(m_hat)),
          indicating_mask,
          Tensor::from(x.shape(), std::move(truth))};
}

}  // namespace brati
