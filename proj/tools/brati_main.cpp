// brati - multivariate time-series imputation with bidirectional
// recurrent-attention blocks. Subcommands cover the whole workflow:
// synth -> mask -> train -> evaluate / impute / ablate, plus gradcheck.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "brati/data.hpp"
#include "brati/errors.hpp"
#include "brati/eval.hpp"
#include "brati/gradcheck.hpp"
#include "brati/masking.hpp"
#include "brati/model.hpp"
#include "brati/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace brati;

namespace {

struct RunSettings {
  BratiConfig model;  // features/window filled from the data
  TrainConfig train;
};

RunSettings load_run_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }

  RunSettings s;
  const json& m = j.at("model");
  s.model.d_model = m.value("d_model", std::size_t{64});
  s.model.d_ffn = m.value("d_ffn", std::size_t{128});
  s.model.heads = m.value("heads", std::size_t{2});
  s.model.blocks = m.value("blocks", std::size_t{1});
  s.model.dropout = m.value("dropout", 0.0);
  s.model.bias = m.value("bias", true);
  s.model.variant = variant_from_name(m.value("variant", std::string("full")));

  const json& t = j.at("train");
  s.train.warmup = t.value("warmup", std::size_t{4000});
  s.train.batch_size = t.value("batch_size", std::size_t{32});
  s.train.max_epochs = t.value("max_epochs", std::size_t{1000});
  s.train.patience = t.value("patience", std::size_t{30});
  s.train.scenario = scenario_from_name(t.value("scenario", std::string("mcar")));
  s.train.rate = t.value("rate", 0.2);
  s.train.seed = t.value("seed", std::uint64_t{0});
  s.train.weights.lambda_mil = t.value("lambda_mil", 1.0);
  s.train.weights.lambda_orl = t.value("lambda_orl", 1.0);
  s.train.weights.lambda_cons = t.value("lambda_cons", 1.0);
  s.train.weights.rho = t.value("rho", 0.1);
  s.train.clip_norm = t.value("clip_norm", 0.0);
  return s;
}

bool is_container(const fs::path& dir) { return fs::exists(dir / "X.csv"); }

DatasetContainer require_container(const fs::path& dir) {
  if (!is_container(dir))
    throw ConfigError("'" + dir.string() + "' is not a dataset container");
  return read_container(dir);
}

ScenarioSpec make_spec(const std::string& scenario, double rate,
                       std::uint64_t seed) {
  ScenarioSpec spec;
  spec.kind = scenario_from_name(scenario);
  spec.rate = rate;
  spec.seed = seed;
  return spec;
}

// Per-window indicating mask over a container, rng split per window band.
Tensor container_mask(const DatasetContainer& c, const ScenarioSpec& spec) {
  const std::size_t t_len = c.meta.window;
  std::vector<double> ind(c.observed.size(), 0.0);
  const std::size_t d = c.meta.features;
  std::size_t window_index = 0;
  for (std::size_t start = 0; start + t_len <= c.observed.rows();
       start += t_len, ++window_index) {
    std::vector<double> m(t_len * d);
    for (std::size_t r = 0; r < t_len; ++r)
      for (std::size_t col = 0; col < d; ++col)
        m[r * d + col] = c.observed.at(start + r, col);
    ScenarioSpec w_spec = spec;
    w_spec.seed = SplitMix64::derive(spec.seed, 0x6d61736b, window_index);
    MaskGenResult gen = generate(Tensor::from({t_len, d}, std::move(m)), w_spec);
    if (gen.empty)
      std::cerr << "warning: window " << window_index
                << " has a zero masking target\n";
    for (std::size_t r = 0; r < t_len; ++r)
      for (std::size_t col = 0; col < d; ++col)
        ind[(start + r) * d + col] = gen.indicator.at(r, col);
  }
  return Tensor::from({c.observed.rows(), d}, std::move(ind));
}

void mask_one_container(const fs::path& dir, const std::string& scenario,
                        double rate, std::uint64_t seed) {
  DatasetContainer c = require_container(dir);
  c.indicating = container_mask(c, make_spec(scenario, rate, seed));
  c.meta.scenario = scenario_name(scenario_from_name(scenario));
  c.meta.rate = rate;
  c.meta.seed = seed;
  write_container(dir, c);
  std::cout << "masked " << dir.string() << " (" << c.meta.scenario << " @ "
            << rate << ", seed " << seed << ")\n";
}

int cmd_synth(const fs::path& out, std::size_t features, std::size_t rows,
              std::size_t window, std::uint64_t seed,
              const std::vector<double>& fracs) {
  RawTable table = synth_generate(features, rows, seed);
  auto windows = make_windows(table, window, window);
  SplitWindows parts = split_windows(
      windows, {fracs.at(0), fracs.at(1), fracs.at(2)}, seed);
  Standardizer stats = Standardizer::fit(parts.train);

  auto pack = [&](const std::vector<TimeSeriesWindow>& ws,
                  const std::string& split) {
    DatasetContainer c;
    c.meta.dataset = "synthetic-D" + std::to_string(features);
    c.meta.split = split;
    c.meta.window = window;
    c.meta.features = features;
    c.meta.mean = stats.mean;
    c.meta.stddev = stats.stddev;
    c.meta.columns = table.columns;
    std::vector<double> vals, mask;
    for (const auto& w : ws) {
      vals.insert(vals.end(), w.values.data().begin(), w.values.data().end());
      mask.insert(mask.end(), w.observed.data().begin(),
                  w.observed.data().end());
    }
    c.values = Tensor::from({ws.size() * window, features}, std::move(vals));
    c.observed = Tensor::from({ws.size() * window, features}, std::move(mask));
    write_container(out / split, c);
    return ws.size();
  };
  const std::size_t n_train = pack(parts.train, "train");
  const std::size_t n_val = pack(parts.val, "val");
  const std::size_t n_test = pack(parts.test, "test");
  std::cout << "wrote " << out.string() << ": " << n_train << "/" << n_val
            << "/" << n_test << " train/val/test windows of " << window << "x"
            << features << "\n";
  return 0;
}

int cmd_mask(const fs::path& data, const std::string& scenario, double rate,
             std::uint64_t seed, const std::string& split) {
  if (is_container(data)) {
    mask_one_container(data, scenario, rate, seed);
    return 0;
  }
  bool any = false;
  for (const char* name : {"val", "test"}) {
    if (split != "both" && split != name) continue;
    if (is_container(data / name)) {
      // distinct stream per split so val and test never share holes
      mask_one_container(data / name, scenario, rate,
                         SplitMix64::derive(seed, std::string(name) == "val"
                                                      ? 0x76616cu
                                                      : 0x74657374u));
      any = true;
    }
  }
  if (!any)
    throw ConfigError("'" + data.string() +
                      "' holds no maskable container (expected X.csv or "
                      "val/ and test/ subdirectories)");
  return 0;
}

int cmd_train(const fs::path& config_path, const fs::path& data,
              const fs::path& out, std::int64_t seed_override) {
  RunSettings s = load_run_config(config_path);
  if (seed_override >= 0)
    s.train.seed = static_cast<std::uint64_t>(seed_override);
  DatasetContainer train_c = require_container(data / "train");
  DatasetContainer val_c = require_container(data / "val");
  s.model.features = train_c.meta.features;
  s.model.window = train_c.meta.window;

  BratiParams params = BratiParams::init(s.model, s.train.seed);
  TrainResult r = train(s.model, params, train_c, val_c, s.train, out);
  std::cout << "trained " << variant_name(s.model.variant) << " for "
            << r.epochs_run << " epochs; best val MAE " << r.best_val_mae
            << " at epoch " << r.best_epoch << "\ncheckpoint: "
            << (out / "checkpoint.brati").string() << "\n";
  return 0;
}

int cmd_impute(const fs::path& ckpt, const fs::path& data, const fs::path& out,
               bool standardized) {
  Checkpoint c = load_checkpoint(ckpt);
  DatasetContainer container = require_container(data);
  if (c.config.features != container.meta.features ||
      c.config.window != container.meta.window)
    throw ConfigError("checkpoint was trained for " +
                      std::to_string(c.config.features) + " features x " +
                      std::to_string(c.config.window) +
                      " steps; container has " +
                      std::to_string(container.meta.features) + " x " +
                      std::to_string(container.meta.window));

  Standardizer stats{container.meta.mean, container.meta.stddev};
  auto windows = container_windows(container, /*standardized=*/true);
  std::vector<double> result;
  result.reserve(container.values.size());
  for (const auto& w : windows) {
    // no artificial holes: the model fills only the original gaps
    MaskedBatch batch = apply_mask(w.values, w.observed,
                                   Tensor::zeros(w.values.shape()));
    BratiOutput o = brati_forward(batch.x_hat, batch.m_hat, c.params, c.config,
                                  false, nullptr);
    Tensor filled = standardized ? o.imputation
                                 : stats.inverse_values(o.imputation);
    result.insert(result.end(), filled.data().begin(), filled.data().end());
  }
  write_matrix_csv(out,
                   container.meta.columns,
                   Tensor::from({windows.size() * container.meta.window,
                                 container.meta.features},
                                std::move(result)));
  std::cout << "imputed " << windows.size() << " windows -> " << out.string()
            << (standardized ? " (standardized space)\n" : " (raw space)\n");
  return 0;
}

int cmd_evaluate(const fs::path& ckpt, const std::string& baseline,
                 const fs::path& data, const fs::path& report_path,
                 const std::string& split, bool raw_space) {
  fs::path eval_dir = is_container(data) ? data : data / split;
  DatasetContainer eval_c = require_container(eval_dir);

  Imputer imputer;
  std::string model_name;
  Checkpoint ckpt_data;  // keeps params alive for the imputer
  std::vector<TimeSeriesWindow> train_windows;
  if (!ckpt.empty()) {
    ckpt_data = load_checkpoint(ckpt);
    if (ckpt_data.config.features != eval_c.meta.features ||
        ckpt_data.config.window != eval_c.meta.window)
      throw ConfigError("checkpoint and container shapes disagree");
    imputer = model_imputer(ckpt_data.config, ckpt_data.params);
    model_name = "brati-" + variant_name(ckpt_data.config.variant);
  } else {
    fs::path train_dir = is_container(data) ? data : data / "train";
    if (baseline == "median") {
      DatasetContainer train_c = require_container(train_dir);
      train_windows = container_windows(train_c, /*standardized=*/true);
    }
    imputer = baseline_imputer(baseline, train_windows);
    model_name = baseline;
  }

  MetricsReport report = evaluate(imputer, model_name, eval_c, !raw_space);
  if (!report_path.empty()) write_report(report_path, report);
  std::cout << report_to_json(report) << "\n";
  return 0;
}

int cmd_ablate(const fs::path& config_path, const fs::path& data,
               const fs::path& out_dir) {
  RunSettings s = load_run_config(config_path);
  DatasetContainer train_c = require_container(data / "train");
  DatasetContainer val_c = require_container(data / "val");
  DatasetContainer test_c = require_container(data / "test");
  s.model.features = train_c.meta.features;
  s.model.window = train_c.meta.window;

  AblationOutcome outcome =
      run_ablation(s.model, s.train, train_c, val_c, test_c, out_dir);
  std::printf("ablation on %s (%s @ %.2f), mask %s\n",
              test_c.meta.dataset.c_str(), test_c.meta.scenario.c_str(),
              test_c.meta.rate, outcome.mask_hash.c_str());
  std::printf("  %-18s mae %.6f rmse %.6f mre %.6f\n", "full",
              outcome.full.mae, outcome.full.rmse, outcome.full.mre);
  std::printf("  %-18s mae %.6f rmse %.6f mre %.6f\n", "single_block",
              outcome.single_block.mae, outcome.single_block.rmse,
              outcome.single_block.mre);
  std::printf("  %-18s mae %.6f rmse %.6f mre %.6f\n", "average_combine",
              outcome.average_combine.mae, outcome.average_combine.rmse,
              outcome.average_combine.mre);
  return 0;
}

int cmd_gradcheck() {
  GradCheckReport report = run_gradcheck_suite();
  for (const auto& [name, result] : report.entries)
    std::printf("%-18s max rel err %.3e (%zu gradients)\n", name.c_str(),
                result.max_rel_err, result.checked);
  if (!report.passed) {
    std::cerr << "gradcheck failed: a layer exceeded its tolerance\n";
    return 1;
  }
  std::cout << "gradcheck passed\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"brati - bidirectional recurrent-attention time-series imputation"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "emit a synthetic dataset");
  fs::path synth_out;
  std::size_t synth_features = 4, synth_rows = 4800, synth_window = 24;
  std::uint64_t synth_seed = 0;
  std::vector<double> synth_fracs{0.68, 0.12, 0.20};
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--features", synth_features, "feature count (>= 2)");
  synth->add_option("--rows", synth_rows, "row count");
  synth->add_option("--window", synth_window, "window length T");
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--splits", synth_fracs,
                    "train/val/test fractions (three values)")
      ->expected(3);

  // mask
  auto* mask = app.add_subcommand("mask", "add an indicating mask");
  fs::path mask_data;
  std::string mask_scenario;
  double mask_rate = 0.1;
  std::uint64_t mask_seed = 0;
  std::string mask_split = "both";
  mask->add_option("--data", mask_data, "container or dataset root")->required();
  mask->add_option("--scenario", mask_scenario, "mcar|fixed5|rand3-10")
      ->required();
  mask->add_option("--rate", mask_rate, "fraction of observed cells to hide")
      ->required();
  mask->add_option("--seed", mask_seed, "mask seed");
  mask->add_option("--split", mask_split, "val|test|both (root layout only)");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  fs::path train_config, train_data, train_out;
  std::int64_t train_seed = -1;
  train_cmd->add_option("--config", train_config, "JSON config")->required();
  train_cmd->add_option("--data", train_data, "dataset root")->required();
  train_cmd->add_option("--out", train_out, "output directory")->required();
  train_cmd->add_option("--seed", train_seed, "override the config seed");

  // impute
  auto* impute = app.add_subcommand("impute", "fill the original gaps");
  fs::path impute_ckpt, impute_data, impute_out;
  bool impute_standardized = false;
  impute->add_option("--ckpt", impute_ckpt, "checkpoint")->required();
  impute->add_option("--data", impute_data, "container")->required();
  impute->add_option("--out", impute_out, "output CSV")->required();
  impute->add_flag("--standardized", impute_standardized,
                   "emit standardized units instead of raw");

  // evaluate
  auto* eval_cmd = app.add_subcommand("evaluate", "masked metrics");
  fs::path eval_ckpt, eval_data, eval_report;
  std::string eval_baseline, eval_split = "test";
  bool eval_raw = false;
  eval_cmd->add_option("--ckpt", eval_ckpt, "checkpoint");
  eval_cmd->add_option("--baseline", eval_baseline, "median|locf");
  eval_cmd->add_option("--data", eval_data, "dataset root or container")
      ->required();
  eval_cmd->add_option("--report", eval_report, "report JSON path");
  eval_cmd->add_option("--split", eval_split, "split under a root (default test)");
  eval_cmd->add_flag("--raw", eval_raw, "metrics in raw units");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "train and compare variants");
  fs::path ablate_config, ablate_data, ablate_out;
  ablate->add_option("--config", ablate_config, "JSON config")->required();
  ablate->add_option("--data", ablate_data, "dataset root")->required();
  ablate->add_option("--out-dir", ablate_out, "output directory")->required();

  // gradcheck
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "finite-difference audit of every layer");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // CLI11 prints usage itself; force exit code 2 for usage problems
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed())
      return cmd_synth(synth_out, synth_features, synth_rows, synth_window,
                       synth_seed, synth_fracs);
    if (mask->parsed())
      return cmd_mask(mask_data, mask_scenario, mask_rate, mask_seed,
                      mask_split);
    if (train_cmd->parsed())
      return cmd_train(train_config, train_data, train_out, train_seed);
    if (impute->parsed())
      return cmd_impute(impute_ckpt, impute_data, impute_out,
                        impute_standardized);
    if (eval_cmd->parsed()) {
      if (eval_ckpt.empty() == eval_baseline.empty())
        throw UsageError("evaluate needs exactly one of --ckpt or --baseline");
      return cmd_evaluate(eval_ckpt, eval_baseline, eval_data, eval_report,
                          eval_split, eval_raw);
    }
    if (ablate->parsed())
      return cmd_ablate(ablate_config, ablate_data, ablate_out);
    if (gradcheck->parsed()) return cmd_gradcheck();
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
