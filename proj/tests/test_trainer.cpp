#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "brati/errors.hpp"
#include "brati/eval.hpp"
#include "brati/rng.hpp"
#include "brati/trainer.hpp"

using namespace brati;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() / ("brati_trainer_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small synthetic dataset split into train/val containers.
struct MiniData {
  DatasetContainer train, val;
};

MiniData make_mini(std::size_t rows = 192, std::size_t window = 8,
                   std::uint64_t seed = 5) {
  RawTable table = synth_generate(2, rows, seed);
  auto windows = make_windows(table, window, window);
  SplitWindows parts = split_windows(windows, {0.75, 0.25, 0.0}, seed);
  Standardizer stats = Standardizer::fit(parts.train);

  auto pack = [&](const std::vector<TimeSeriesWindow>& ws,
                  const std::string& split) {
    DatasetContainer c;
    c.meta.dataset = "mini";
    c.meta.split = split;
    c.meta.window = window;
    c.meta.features = 2;
    c.meta.mean = stats.mean;
    c.meta.stddev = stats.stddev;
    c.meta.columns = table.columns;
    std::vector<double> vals, mask;
    for (const auto& w : ws) {
      vals.insert(vals.end(), w.values.data().begin(), w.values.data().end());
      mask.insert(mask.end(), w.observed.data().begin(),
                  w.observed.data().end());
    }
    c.values = Tensor::from({ws.size() * window, 2}, std::move(vals));
    c.observed = Tensor::from({ws.size() * window, 2}, std::move(mask));
    return c;
  };
  return {pack(parts.train, "train"), pack(parts.val, "val")};
}

BratiConfig mini_config() {
  BratiConfig c;
  c.features = 2;
  c.window = 8;
  c.d_model = 4;
  c.d_ffn = 8;
  c.heads = 1;
  c.blocks = 1;
  c.dropout = 0.0;
  c.bias = true;
  c.variant = Variant::full;
  return c;
}

TrainConfig mini_train_config() {
  TrainConfig tc;
  tc.warmup = 50;
  tc.batch_size = 8;
  tc.max_epochs = 3;
  tc.patience = 30;
  tc.scenario = Scenario::mcar;
  tc.rate = 0.2;
  tc.seed = 31;
  return tc;
}

}  // namespace

TEST_CASE("noam schedule closed-form points") {
  CHECK(std::fabs(noam_lr(4000, 512, 4000) -
                  std::pow(512.0, -0.5) * std::pow(4000.0, -0.5)) < 1e-18);
  CHECK(noam_lr(4000, 512, 4000) ==
        doctest::Approx(6.987712429686843e-4).epsilon(1e-12));
  CHECK(noam_lr(1, 64, 4000) ==
        doctest::Approx(4.941058844013092e-7).epsilon(1e-12));
  CHECK_THROWS_AS(noam_lr(0, 512, 4000), UsageError);
}

TEST_CASE("noam schedule peaks exactly at the warmup step") {
  const std::size_t warmup = 300;
  double best = 0.0;
  std::size_t best_step = 0;
  for (std::size_t step = 1; step <= 3 * warmup; ++step) {
    const double lr = noam_lr(step, 64, warmup);
    if (lr > best) {
      best = lr;
      best_step = step;
    }
  }
  CHECK(best_step == warmup);
  // both branches agree at the crossover
  CHECK(noam_lr(warmup, 64, warmup) ==
        doctest::Approx(std::pow(64.0, -0.5) * std::pow(300.0, -0.5))
            .epsilon(1e-15));
}

TEST_CASE("adam leaves parameters alone under zero gradients") {
  Tensor p = Tensor::from({3}, {1.0, -2.0, 3.0}, true);
  std::vector<std::pair<std::string, Tensor>> params{{"p", p}};
  AdamState state = AdamState::for_params(params);
  adam_step(params, state, 0.1);
  CHECK(p.data() == std::vector<double>{1.0, -2.0, 3.0});
  CHECK(state.step == 1);
}

TEST_CASE("adam first step with unit gradient moves by almost lr") {
  Tensor p = Tensor::from({1}, {0.5}, true);
  std::vector<std::pair<std::string, Tensor>> params{{"p", p}};
  AdamState state = AdamState::for_params(params);

  backward(sum_all(p));  // d(sum)/dp = 1
  const double lr = 0.01;
  adam_step(params, state, lr);
  // m_hat = v_hat = 1, so the update is lr / (1 + eps)
  const double want = 0.5 - lr / (1.0 + 1e-9);
  CHECK(p.data()[0] == doctest::Approx(want).epsilon(1e-15));
}

TEST_CASE("adam reports the parameter that produced a NaN gradient") {
  Tensor p = Tensor::from({1}, {0.5}, true);
  backward(sum_all(p));
  const_cast<std::vector<double>&>(*p.grad())[0] = std::nan("");
  std::vector<std::pair<std::string, Tensor>> params{{"naughty", p}};
  AdamState state = AdamState::for_params(params);
  CHECK_THROWS_WITH_AS(adam_step(params, state, 0.1),
                       "NaN gradient in parameter 'naughty'", DivergenceError);
}

TEST_CASE("early stopping rules") {
  // flat from the first epoch: stops after patience extra epochs
  EarlyStopper flat(30);
  std::size_t epochs = 0;
  for (std::size_t e = 1; e <= 100; ++e) {
    ++epochs;
    if (flat.observe(1.0)) break;
  }
  CHECK(epochs == 31);
  CHECK(flat.best_index() == 1);

  // monotone improvement never stops
  EarlyStopper improving(30);
  bool stopped = false;
  for (std::size_t e = 1; e <= 200; ++e)
    if (improving.observe(1.0 / static_cast<double>(e))) stopped = true;
  CHECK_FALSE(stopped);
  CHECK(improving.best_index() == 200);

  // recovery resets the counter
  EarlyStopper waves(3);
  CHECK_FALSE(waves.observe(1.0));
  CHECK_FALSE(waves.observe(1.1));
  CHECK_FALSE(waves.observe(1.2));
  CHECK_FALSE(waves.observe(0.9));  // improvement at the last allowed epoch
  CHECK_FALSE(waves.observe(1.0));
  CHECK_FALSE(waves.observe(1.0));
  CHECK(waves.observe(1.0));
  CHECK(waves.best_index() == 4);
}

TEST_CASE("training is bit-identical across reruns") {
  MiniData data = make_mini();
  BratiConfig config = mini_config();
  TrainConfig tc = mini_train_config();

  BratiParams a = BratiParams::init(config, tc.seed);
  TrainResult ra = train(config, a, data.train, data.val, tc);
  BratiParams b = BratiParams::init(config, tc.seed);
  TrainResult rb = train(config, b, data.train, data.val, tc);

  auto na = a.named();
  auto nb = b.named();
  for (std::size_t i = 0; i < na.size(); ++i)
    CHECK(na[i].second.data() == nb[i].second.data());
  REQUIRE(ra.log.size() == rb.log.size());
  for (std::size_t i = 0; i < ra.log.size(); ++i) {
    CHECK(ra.log[i].val_mae == rb.log[i].val_mae);
    CHECK(ra.log[i].total == rb.log[i].total);
  }
}

TEST_CASE("logged learning rate follows the schedule") {
  MiniData data = make_mini();
  BratiConfig config = mini_config();
  TrainConfig tc = mini_train_config();
  tc.max_epochs = 2;
  BratiParams p = BratiParams::init(config, tc.seed);
  TrainResult r = train(config, p, data.train, data.val, tc);

  const std::size_t windows = data.train.values.rows() / config.window;
  const std::size_t batches = (windows + tc.batch_size - 1) / tc.batch_size;
  REQUIRE(r.log.size() == 2);
  CHECK(r.log[0].lr ==
        doctest::Approx(noam_lr(batches, config.d_model, tc.warmup))
            .epsilon(1e-15));
  CHECK(r.log[1].lr ==
        doctest::Approx(noam_lr(2 * batches, config.d_model, tc.warmup))
            .epsilon(1e-15));
}

TEST_CASE("training masks are resampled across epochs but fixed per epoch") {
  // Window masks are derived from (seed, epoch, batch, window); two epochs
  // of the same run must differ somewhere.
  Tensor observed = Tensor::ones({8, 2});
  ScenarioSpec s1;
  s1.rate = 0.2;
  s1.seed = SplitMix64::derive(31, 1, 0, 0);
  ScenarioSpec s2 = s1;
  s2.seed = SplitMix64::derive(31, 2, 0, 0);
  Tensor i1 = generate(observed, s1).indicator;
  Tensor i2 = generate(observed, s2).indicator;
  bool differ = false;
  for (std::size_t i = 0; i < i1.size(); ++i)
    if (i1.data()[i] != i2.data()[i]) differ = true;
  CHECK(differ);
}

TEST_CASE("checkpoint round trip is bit-exact and validates structure") {
  fs::path dir = temp_dir("ckpt");
  BratiConfig config = mini_config();
  BratiParams params = BratiParams::init(config, 91);

  save_checkpoint(params, config, dir / "model.brati");
  Checkpoint loaded = load_checkpoint(dir / "model.brati");
  CHECK(loaded.config == config);
  auto orig = params.named();
  auto back = loaded.params.named();
  REQUIRE(orig.size() == back.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i].first == back[i].first);
    CHECK(orig[i].second.data() == back[i].second.data());
  }

  // save -> load -> save produces byte-identical files
  save_checkpoint(loaded.params, loaded.config, dir / "model2.brati");
  std::ifstream f1(dir / "model.brati", std::ios::binary);
  std::ifstream f2(dir / "model2.brati", std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)),
                 std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)),
                 std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  CHECK(!s1.empty());

  // forward pass before and after the round trip is bitwise identical
  SplitMix64 rng(17);
  std::vector<double> xv(16), mv(16, 1.0);
  for (auto& v : xv) v = rng.next_double();
  Tensor x = Tensor::from({8, 2}, xv);
  Tensor m = Tensor::from({8, 2}, mv);
  BratiOutput a = brati_forward(x, m, params, config, false, nullptr);
  BratiOutput b = brati_forward(x, m, loaded.params, loaded.config, false,
                                nullptr);
  CHECK(a.imputation.data() == b.imputation.data());

  // corrupt: truncate the payload
  std::string bytes = s1.substr(0, s1.size() - 8);
  std::ofstream out(dir / "trunc.brati", std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.close();
  CHECK_THROWS_AS(load_checkpoint(dir / "trunc.brati"), CorruptionError);

  // a different config cannot claim this payload
  CHECK_THROWS_AS(
      [&] {
        Checkpoint ck = load_checkpoint(dir / "model.brati");
        BratiConfig other = ck.config;
        other.blocks = 2;
        BratiParams fresh = BratiParams::init(other, 1);
        brati_forward(Tensor::zeros({8, 2}), Tensor::ones({8, 2}), ck.params,
                      other, false, nullptr);
      }(),
      ConfigError);
}

TEST_CASE("train writes a checkpoint and a JSON-lines log") {
  fs::path dir = temp_dir("artifacts");
  MiniData data = make_mini();
  BratiConfig config = mini_config();
  TrainConfig tc = mini_train_config();
  tc.max_epochs = 2;
  BratiParams p = BratiParams::init(config, tc.seed);
  TrainResult r = train(config, p, data.train, data.val, tc, dir);

  CHECK(fs::exists(dir / "checkpoint.brati"));
  Checkpoint ck = load_checkpoint(dir / "checkpoint.brati");
  auto best = p.named();
  auto saved = ck.params.named();
  for (std::size_t i = 0; i < best.size(); ++i)
    CHECK(best[i].second.data() == saved[i].second.data());

  std::ifstream log(dir / "training_log.jsonl");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(log, line)) {
    ++lines;
    CHECK(line.find("\"epoch\"") != std::string::npos);
    CHECK(line.find("\"val_mae\"") != std::string::npos);
    CHECK(line.find("\"lr\"") != std::string::npos);
  }
  CHECK(lines == r.epochs_run);
}

TEST_CASE("divergence aborts with the best checkpoint retained") {
  fs::path dir = temp_dir("diverge");
  MiniData data = make_mini();
  BratiConfig config = mini_config();
  TrainConfig tc = mini_train_config();
  BratiParams p = BratiParams::init(config, tc.seed);
  p.embedding.weight.values_mut()[0] = std::nan("");
  CHECK_THROWS_AS(train(config, p, data.train, data.val, tc, dir),
                  DivergenceError);
}
