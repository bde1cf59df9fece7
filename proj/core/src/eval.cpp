#include "brati/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "brati/errors.hpp"

namespace brati {

namespace {

using nlohmann::json;

struct MetricSums {
  double abs = 0.0;
  double sq = 0.0;
  double target_abs = 0.0;
  double count = 0.0;

  void accumulate(const Tensor& imputation, const Tensor& target,
                  const Tensor& indicating) {
    if (imputation.shape() != target.shape() ||
        imputation.shape() != indicating.shape())
      throw ShapeError("metrics: shapes disagree: imputation " +
                       shape_str(imputation.shape()) + ", target " +
                       shape_str(target.shape()) + ", mask " +
                       shape_str(indicating.shape()));
    const auto& iv = imputation.data();
    const auto& tv = target.data();
    const auto& mv = indicating.data();
    for (std::size_t i = 0; i < iv.size(); ++i)
      if (mv[i] == 1.0) {
        const double d = iv[i] - tv[i];
        abs += std::fabs(d);
        sq += d * d;
        target_abs += std::fabs(tv[i]);
        count += 1.0;
      }
  }

  void require_support() const {
    if (count == 0.0)
      throw UndefinedMetricError(
          "metrics need at least one indicated cell");
  }

  double mae() const { return abs / count; }
  double rmse() const { return std::sqrt(sq / count); }
  double mre() const {
    if (target_abs == 0.0)
      throw UndefinedMetricError(
          "MRE is undefined: masked targets sum to zero magnitude");
    return abs / target_abs;
  }
};

}  // namespace

double metric_mae(const Tensor& imputation, const Tensor& target,
                  const Tensor& indicating) {
  MetricSums s;
  s.accumulate(imputation, target, indicating);
  s.require_support();
  return s.mae();
}

double metric_rmse(const Tensor& imputation, const Tensor& target,
                   const Tensor& indicating) {
  MetricSums s;
  s.accumulate(imputation, target, indicating);
  s.require_support();
  return s.rmse();
}

double metric_mre(const Tensor& imputation, const Tensor& target,
                  const Tensor& indicating) {
  MetricSums s;
  s.accumulate(imputation, target, indicating);
  s.require_support();
  return s.mre();
}

std::string report_to_json(const MetricsReport& r) {
  json j;
  j["dataset"] = r.dataset;
  j["scenario"] = r.scenario;
  j["rate"] = r.rate;
  j["model"] = r.model;
  j["mae"] = r.mae;
  j["rmse"] = r.rmse;
  j["mre"] = r.mre;
  j["n_evaluated"] = r.n_evaluated;
  j["seed"] = r.seed;
  j["standardized"] = r.standardized;
  return j.dump(2);
}

MetricsReport report_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError("report: " + std::string(e.what()));
  }
  MetricsReport r;
  r.dataset = j.at("dataset").get<std::string>();
  r.scenario = j.at("scenario").get<std::string>();
  r.rate = j.at("rate").get<double>();
  r.model = j.at("model").get<std::string>();
  r.mae = j.at("mae").get<double>();
  r.rmse = j.at("rmse").get<double>();
  r.mre = j.at("mre").get<double>();
  r.n_evaluated = j.at("n_evaluated").get<std::size_t>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.standardized = j.at("standardized").get<bool>();
  return r;
}

void write_report(const std::filesystem::path& path, const MetricsReport& r) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write report '" + path.string() + "'");
  out << report_to_json(r) << '\n';
}

std::vector<double> train_medians(const std::vector<TimeSeriesWindow>& train) {
  if (train.empty()) throw ConfigError("median baseline: no training windows");
  const std::size_t d = train[0].values.cols();
  std::vector<std::vector<double>> columns(d);
  for (const auto& w : train)
    for (std::size_t r = 0; r < w.values.rows(); ++r)
      for (std::size_t c = 0; c < d; ++c)
        if (w.observed.at(r, c) == 1.0) columns[c].push_back(w.values.at(r, c));
  std::vector<double> medians(d);
  for (std::size_t c = 0; c < d; ++c) {
    auto& vals = columns[c];
    if (vals.empty())
      throw ConfigError("median baseline: feature " + std::to_string(c) +
                        " has no observed training values");
    std::sort(vals.begin(), vals.end());
    const std::size_t n = vals.size();
    medians[c] =
        n % 2 == 1 ? vals[n / 2] : 0.5 * (vals[n / 2 - 1] + vals[n / 2]);
  }
  return medians;
}

Tensor median_impute(const std::vector<double>& medians,
                     const MaskedBatch& batch) {
  const std::size_t d = batch.x_hat.cols();
  if (medians.size() != d)
    throw ConfigError("median baseline fitted for " +
                      std::to_string(medians.size()) + " features, got " +
                      std::to_string(d));
  std::vector<double> out = batch.x_hat.data();
  const auto& mv = batch.m_hat.data();
  for (std::size_t i = 0; i < out.size(); ++i)
    if (mv[i] != 1.0) out[i] = medians[i % d];
  return Tensor::from(batch.x_hat.shape(), std::move(out));
}

Tensor median_impute(const std::vector<TimeSeriesWindow>& train,
                     const MaskedBatch& batch) {
  return median_impute(train_medians(train), batch);
}

Tensor locf_impute(const MaskedBatch& batch) {
  const std::size_t rows = batch.x_hat.rows();
  const std::size_t d = batch.x_hat.cols();
  std::vector<double> out = batch.x_hat.data();
  const auto& mv = batch.m_hat.data();
  for (std::size_t c = 0; c < d; ++c) {
    double last = 0.0;  // holes before the first observation become 0
    bool seen = false;
    for (std::size_t r = 0; r < rows; ++r) {
      if (mv[r * d + c] == 1.0) {
        last = out[r * d + c];
        seen = true;
      } else {
        out[r * d + c] = seen ? last : 0.0;
      }
    }
  }
  return Tensor::from(batch.x_hat.shape(), std::move(out));
}

Imputer model_imputer(const BratiConfig& config, const BratiParams& params) {
  return [&config, &params](const MaskedBatch& batch) {
    return brati_forward(batch.x_hat, batch.m_hat, params, config,
                         /*train=*/false, nullptr)
        .imputation;
  };
}

Imputer baseline_imputer(const std::string& name,
                         const std::vector<TimeSeriesWindow>& train_windows) {
  if (name == "median") {
    auto medians = train_medians(train_windows);
    return [medians](const MaskedBatch& batch) {
      return median_impute(medians, batch);
    };
  }
  if (name == "locf")
    return [](const MaskedBatch& batch) { return locf_impute(batch); };
  throw ConfigError("unknown baseline '" + name + "' (expected median|locf)");
}

MetricsReport evaluate(const Imputer& imputer, const std::string& model_name,
                       const DatasetContainer& eval_data, bool standardized) {
  auto windows = container_windows(eval_data, /*standardized=*/true);
  auto masks = container_indicating_windows(eval_data);
  Standardizer stats{eval_data.meta.mean, eval_data.meta.stddev};

  MetricSums sums;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    MaskedBatch batch =
        apply_mask(windows[i].values, windows[i].observed, masks[i]);
    Tensor imputation = imputer(batch);
    Tensor target = windows[i].values;
    if (!standardized) {
      imputation = stats.inverse_values(imputation);
      target = stats.inverse_values(target);
    }
    sums.accumulate(imputation, target, masks[i]);
  }
  sums.require_support();

  MetricsReport r;
  r.dataset = eval_data.meta.dataset;
  r.scenario = eval_data.meta.scenario;
  r.rate = eval_data.meta.rate;
  r.model = model_name;
  r.mae = sums.mae();
  r.rmse = sums.rmse();
  r.mre = sums.mre();
  r.n_evaluated = static_cast<std::size_t>(sums.count);
  r.seed = eval_data.meta.seed;
  r.standardized = standardized;
  return r;
}

std::string mask_hash(const Tensor& mask) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : mask.data()) {
    h ^= v == 1.0 ? 0x31ULL : 0x30ULL;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

AblationOutcome run_ablation(const BratiConfig& base_config,
                             const TrainConfig& train_config,
                             const DatasetContainer& train_data,
                             const DatasetContainer& val_data,
                             const DatasetContainer& test_data,
                             const std::filesystem::path& out_dir) {
  if (!test_data.indicating.defined())
    throw ConfigError("ablation needs a masked test container");
  std::filesystem::create_directories(out_dir);

  AblationOutcome outcome;
  outcome.mask_hash = mask_hash(test_data.indicating);

  for (Variant variant : {Variant::full, Variant::single_block,
                          Variant::average_combine}) {
    BratiConfig config = base_config;
    config.variant = variant;
    BratiParams params = BratiParams::init(config, train_config.seed);
    const std::string name = "brati-" + variant_name(variant);
    train(config, params, train_data, val_data, train_config,
          out_dir / variant_name(variant));
    MetricsReport report = evaluate(model_imputer(config, params), name,
                                    test_data, /*standardized=*/true);
    write_report(out_dir / ("report_" + variant_name(variant) + ".json"),
                 report);
    switch (variant) {
      case Variant::full: outcome.full = report; break;
      case Variant::single_block: outcome.single_block = report; break;
      case Variant::average_combine: outcome.average_combine = report; break;
    }
  }

  json summary;
  summary["mask_fnv1a"] = outcome.mask_hash;
  summary["scenario"] = test_data.meta.scenario;
  summary["rate"] = test_data.meta.rate;
  summary["seed"] = train_config.seed;
  summary["mae"] = {{"full", outcome.full.mae},
                    {"single_block", outcome.single_block.mae},
                    {"average_combine", outcome.average_combine.mae}};
  std::ofstream out(out_dir / "summary.json");
  if (!out) throw Error("cannot write ablation summary");
  out << summary.dump(2) << '\n';
  return outcome;
}

}  // namespace brati
