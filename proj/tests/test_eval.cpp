#include <doctest.h>

#include <cmath>

#include "brati/errors.hpp"
#include "brati/eval.hpp"
#include "brati/rng.hpp"

using namespace brati;

namespace {

MaskedBatch column_batch(const std::vector<double>& values,
                         const std::vector<double>& m_hat) {
  const std::size_t rows = values.size();
  std::vector<double> xh(rows);
  for (std::size_t i = 0; i < rows; ++i)
    xh[i] = m_hat[i] == 1.0 ? values[i] : 0.0;
  MaskedBatch b;
  b.x_hat = Tensor::from({rows, 1}, xh);
  b.m_hat = Tensor::from({rows, 1}, m_hat);
  b.indicating = Tensor::zeros({rows, 1});
  b.x_truth = Tensor::zeros({rows, 1});
  return b;
}

DatasetContainer smooth_container(std::size_t windows, std::size_t window,
                                  std::uint64_t seed) {
  RawTable table = synth_generate(2, windows * window, seed);
  DatasetContainer c;
  c.meta.dataset = "smooth";
  c.meta.split = "test";
  c.meta.window = window;
  c.meta.features = 2;
  c.meta.columns = table.columns;
  std::vector<double> mask(table.values.size(), 1.0);
  c.values = Tensor::from({table.rows, 2}, table.values);
  c.observed = Tensor::from({table.rows, 2}, std::move(mask));
  auto wins = make_windows(table, window, window);
  Standardizer stats = Standardizer::fit(wins);
  c.meta.mean = stats.mean;
  c.meta.stddev = stats.stddev;
  return c;
}

}  // namespace

TEST_CASE("metric hand cases and the power-mean inequality") {
  Tensor imp = Tensor::from({1, 2}, {1, 2});
  Tensor tgt = Tensor::from({1, 2}, {2, 4});
  Tensor ind = Tensor::ones({1, 2});

  CHECK(metric_mae(tgt, tgt, ind) == 0.0);
  CHECK(metric_rmse(tgt, tgt, ind) == 0.0);
  CHECK(metric_mre(tgt, tgt, ind) == 0.0);

  CHECK(metric_mae(imp, tgt, ind) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(metric_rmse(imp, tgt, ind) ==
        doctest::Approx(1.5811388300841898).epsilon(1e-14));
  CHECK(metric_mre(imp, tgt, ind) == doctest::Approx(0.5).epsilon(1e-15));

  SplitMix64 rng(3);
  for (int rep = 0; rep < 50; ++rep) {
    std::vector<double> a(8), b(8), m(8);
    for (std::size_t i = 0; i < 8; ++i) {
      a[i] = rng.next_double() * 4 - 2;
      b[i] = rng.next_double() * 4 - 2;
      m[i] = rng.next_double() < 0.6 ? 1.0 : 0.0;
    }
    m[0] = 1.0;
    Tensor ta = Tensor::from({4, 2}, a), tb = Tensor::from({4, 2}, b),
           tm = Tensor::from({4, 2}, m);
    CHECK(metric_rmse(ta, tb, tm) >= metric_mae(ta, tb, tm));
  }
}

TEST_CASE("metrics ignore cells outside the indicating mask") {
  Tensor tgt = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor ind = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor imp1 = Tensor::from({2, 2}, {1.5, 100, -100, 4.5});
  Tensor imp2 = Tensor::from({2, 2}, {1.5, -7, 42, 4.5});
  CHECK(metric_mae(imp1, tgt, ind) == metric_mae(imp2, tgt, ind));
  CHECK(metric_rmse(imp1, tgt, ind) == metric_rmse(imp2, tgt, ind));
  CHECK(metric_mre(imp1, tgt, ind) == metric_mre(imp2, tgt, ind));
}

TEST_CASE("MRE with zero-magnitude targets is an explicit error") {
  Tensor imp = Tensor::from({1, 2}, {1, 2});
  Tensor tgt = Tensor::zeros({1, 2});
  CHECK_THROWS_AS(metric_mre(imp, tgt, Tensor::ones({1, 2})),
                  UndefinedMetricError);
  CHECK_THROWS_AS(metric_mae(imp, tgt, Tensor::zeros({1, 2})),
                  UndefinedMetricError);
}

TEST_CASE("median baseline fills holes with training medians") {
  std::vector<TimeSeriesWindow> train;
  train.push_back({Tensor::from({3, 1}, {1, 2, 9}), Tensor::ones({3, 1})});
  auto medians = train_medians(train);
  CHECK(medians[0] == 2.0);

  MaskedBatch b = column_batch({5, 0, 7, 0}, {1, 0, 1, 0});
  Tensor filled = median_impute(medians, b);
  CHECK(filled.at(0, 0) == 5.0);
  CHECK(filled.at(1, 0) == 2.0);
  CHECK(filled.at(2, 0) == 7.0);
  CHECK(filled.at(3, 0) == 2.0);

  // fully observed window: imputation equals the input
  MaskedBatch full = column_batch({1, 2, 3, 4}, {1, 1, 1, 1});
  Tensor same = median_impute(medians, full);
  for (std::size_t i = 0; i < 4; ++i) CHECK(same.at(i, 0) == full.x_hat.at(i, 0));

  // even count averages the middle pair
  std::vector<TimeSeriesWindow> even;
  even.push_back({Tensor::from({4, 1}, {1, 2, 3, 10}), Tensor::ones({4, 1})});
  CHECK(train_medians(even)[0] == 2.5);
}

TEST_CASE("locf carries the last visible value forward") {
  MaskedBatch b = column_batch({0, 0, 5, 0}, {0, 0, 1, 0});
  Tensor filled = locf_impute(b);
  CHECK(filled.at(0, 0) == 0.0);
  CHECK(filled.at(1, 0) == 0.0);
  CHECK(filled.at(2, 0) == 5.0);
  CHECK(filled.at(3, 0) == 5.0);

  MaskedBatch full = column_batch({1, 2, 3}, {1, 1, 1});
  Tensor same = locf_impute(full);
  for (std::size_t i = 0; i < 3; ++i) CHECK(same.at(i, 0) == full.x_hat.at(i, 0));

  MaskedBatch empty = column_batch({0, 0, 0}, {0, 0, 0});
  Tensor zeros = locf_impute(empty);
  for (double v : zeros.data()) CHECK(v == 0.0);
}

TEST_CASE("evaluate pools sums over windows and reports provenance") {
  DatasetContainer c = smooth_container(6, 8, 11);
  MaskGenResult gen = generate_mcar(c.observed, 0.2, 5);
  c.indicating = gen.indicator;
  c.meta.scenario = "mcar";
  c.meta.rate = 0.2;
  c.meta.seed = 5;

  // cheating oracle: observed passthrough plus the truth at I cells
  Standardizer stats{c.meta.mean, c.meta.stddev};
  auto wins = container_windows(c, true);
  auto masks = container_indicating_windows(c);
  std::size_t which = 0;
  Imputer cheat = [&](const MaskedBatch& b) {
    Tensor truth =
        apply_mask(wins[which].values, wins[which].observed, masks[which])
            .x_truth;
    ++which;
    return add(b.x_hat, truth);
  };
  MetricsReport perfect = evaluate(cheat, "oracle", c, true);
  CHECK(perfect.mae == 0.0);
  CHECK(perfect.rmse == 0.0);
  CHECK(perfect.mre == 0.0);
  CHECK(perfect.n_evaluated == static_cast<std::size_t>(gen.target));
  CHECK(perfect.scenario == "mcar");
  CHECK(perfect.model == "oracle");
  CHECK(perfect.standardized);

  // smooth data: locf beats the median baseline on all three metrics
  auto train_wins = container_windows(c, true);
  MetricsReport median_r =
      evaluate(baseline_imputer("median", train_wins), "median", c, true);
  MetricsReport locf_r =
      evaluate(baseline_imputer("locf", train_wins), "locf", c, true);
  CHECK(locf_r.mae < median_r.mae);
  CHECK(locf_r.rmse < median_r.rmse);
  CHECK(locf_r.mre < median_r.mre);

  // baselines are deterministic given the container
  MetricsReport locf_again =
      evaluate(baseline_imputer("locf", train_wins), "locf", c, true);
  CHECK(locf_again.mae == locf_r.mae);

  CHECK_THROWS_AS(baseline_imputer("mean", train_wins), ConfigError);
}

TEST_CASE("report JSON round-trips losslessly") {
  MetricsReport r;
  r.dataset = "synthetic";
  r.scenario = "rand3-10";
  r.rate = 0.1;
  r.model = "brati-full";
  r.mae = 0.123456789012345;
  r.rmse = 0.23456789;
  r.mre = 0.3456789;
  r.n_evaluated = 1234;
  r.seed = 99;
  r.standardized = true;

  MetricsReport back = report_from_json(report_to_json(r));
  CHECK(back.dataset == r.dataset);
  CHECK(back.scenario == r.scenario);
  CHECK(back.rate == r.rate);
  CHECK(back.model == r.model);
  CHECK(back.mae == r.mae);
  CHECK(back.rmse == r.rmse);
  CHECK(back.mre == r.mre);
  CHECK(back.n_evaluated == r.n_evaluated);
  CHECK(back.seed == r.seed);
  CHECK(back.standardized == r.standardized);

  CHECK_THROWS_AS(report_from_json("{not json"), ParseError);
}

TEST_CASE("raw-space metrics differ from standardized ones by the stats") {
  DatasetContainer c = smooth_container(4, 8, 13);
  c.indicating = generate_mcar(c.observed, 0.2, 9).indicator;
  c.meta.scenario = "mcar";
  c.meta.rate = 0.2;

  auto train_wins = container_windows(c, true);
  MetricsReport std_r =
      evaluate(baseline_imputer("median", train_wins), "median", c, true);
  MetricsReport raw_r =
      evaluate(baseline_imputer("median", train_wins), "median", c, false);
  CHECK_FALSE(raw_r.standardized);
  CHECK(std_r.mae != raw_r.mae);  // different spaces, different numbers
}

TEST_CASE("mask hash distinguishes masks and is stable") {
  Tensor a = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor b = Tensor::from({2, 2}, {1, 0, 1, 0});
  CHECK(mask_hash(a) == mask_hash(a));
  CHECK(mask_hash(a) != mask_hash(b));
  CHECK(mask_hash(a).size() == 16);
}
