#ifndef BRATI_EVAL_HPP
#define BRATI_EVAL_HPP

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "brati/data.hpp"
#include "brati/masking.hpp"
#include "brati/trainer.hpp"

namespace brati {

// Masked error metrics over the indicating mask, pooled numerators and
// denominators (never per-window averages).
double metric_mae(const Tensor& imputation, const Tensor& target,
                  const Tensor& indicating);
double metric_rmse(const Tensor& imputation, const Tensor& target,
                   const Tensor& indicating);
// Throws UndefinedMetricError when the masked target magnitude sum is 0.
double metric_mre(const Tensor& imputation, const Tensor& target,
                  const Tensor& indicating);

struct MetricsReport {
  std::string dataset;
  std::string scenario;
  double rate = 0.0;
  std::string model;
  double mae = 0.0;
  double rmse = 0.0;
  double mre = 0.0;
  std::size_t n_evaluated = 0;
  std::uint64_t seed = 0;
  bool standardized = true;
};

std::string report_to_json(const MetricsReport& r);
MetricsReport report_from_json(const std::string& text);
void write_report(const std::filesystem::path& path, const MetricsReport& r);

// Per-feature medians over observed training cells.
std::vector<double> train_medians(const std::vector<TimeSeriesWindow>& train);

// Fill every model-invisible cell with its feature's training median.
Tensor median_impute(const std::vector<double>& medians,
                     const MaskedBatch& batch);
Tensor median_impute(const std::vector<TimeSeriesWindow>& train,
                     const MaskedBatch& batch);

// Forward-carry the last visible value per feature; leading holes become 0.
Tensor locf_impute(const MaskedBatch& batch);

// Produces a full [T x D] imputation for one masked window, in
// standardized space.
using Imputer = std::function<Tensor(const MaskedBatch&)>;

Imputer model_imputer(const BratiConfig& config, const BratiParams& params);
Imputer baseline_imputer(const std::string& name,
                         const std::vector<TimeSeriesWindow>& train_windows);

// Runs the imputer over every window of the container (which must carry an
// indicating mask) and pools the three metrics over all I cells. With
// standardized == false, imputations and targets are mapped back to raw
// units before the metrics.
MetricsReport evaluate(const Imputer& imputer, const std::string& model_name,
                       const DatasetContainer& eval_data, bool standardized);

// Trains and evaluates the three variants with shared seeds and shared
// masks; writes report_<variant>.json plus summary.json (which records the
// FNV-1a hash of the evaluation mask) under out_dir.
struct AblationOutcome {
  MetricsReport full;
  MetricsReport single_block;
  MetricsReport average_combine;
  std::string mask_hash;
};

AblationOutcome run_ablation(const BratiConfig& base_config,
                             const TrainConfig& train_config,
                             const DatasetContainer& train_data,
                             const DatasetContainer& val_data,
                             const DatasetContainer& test_data,
                             const std::filesystem::path& out_dir);

// FNV-1a over the row-major cells of a binary mask, as a hex string.
std::string mask_hash(const Tensor& mask);

}  // namespace brati

#endif
