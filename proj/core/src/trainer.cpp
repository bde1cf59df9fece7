#include "brati/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "brati/errors.hpp"

namespace brati {

double noam_lr(std::size_t step, std::size_t d_model, std::size_t warmup) {
  if (step == 0) throw UsageError("noam_lr: step counting starts at 1");
  if (d_model == 0 || warmup == 0)
    throw ConfigError("noam_lr: d_model and warmup must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(warmup);
  return std::pow(static_cast<double>(d_model), -0.5) *
         std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

AdamState AdamState::for_params(
    const std::vector<std::pair<std::string, Tensor>>& params) {
  AdamState s;
  s.m.reserve(params.size());
  s.v.reserve(params.size());
  for (const auto& [name, t] : params) {
    s.m.emplace_back(t.size(), 0.0);
    s.v.emplace_back(t.size(), 0.0);
  }
  return s;
}

void adam_step(const std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& state, double lr) {
  if (state.m.size() != params.size())
    throw UsageError("adam_step: state was created for a different parameter list");
  ++state.step;
  const double bc1 =
      1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 =
      1.0 - std::pow(state.beta2, static_cast<double>(state.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    const auto& [name, t] = params[k];
    const std::vector<double>* grad = t.grad();
    auto& m = state.m[k];
    auto& v = state.v[k];
    auto& values = const_cast<Tensor&>(t).values_mut();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad ? (*grad)[i] : 0.0;
      if (std::isnan(g))
        throw DivergenceError("NaN gradient in parameter '" + name + "'");
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

EarlyStopper::EarlyStopper(std::size_t patience)
    : patience_(patience), best_(std::numeric_limits<double>::infinity()) {
  if (patience == 0) throw ConfigError("early stopping patience must be >= 1");
}

bool EarlyStopper::observe(double value) {
  ++count_;
  if (value < best_) {
    best_ = value;
    best_index_ = count_;
    since_best_ = 0;
  } else {
    ++since_best_;
  }
  return since_best_ >= patience_;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch size must be >= 1");
  if (max_epochs == 0) throw ConfigError("max epochs must be >= 1");
  if (patience == 0) throw ConfigError("patience must be >= 1");
  if (warmup == 0) throw ConfigError("warmup must be >= 1");
  if (!(rate > 0.0 && rate < 1.0))
    throw ConfigError("training masking rate must lie in (0, 1)");
  if (clip_norm < 0.0) throw ConfigError("clip norm must be nonnegative");
  weights.validate();
}

namespace {

// Numerator terms of the pooled batch losses for one window. Denominators
// are batch totals, so summing these scalars over the batch reproduces the
// pooled loss exactly while letting each window's graph be backpropagated
// and freed independently.
struct WindowLossNums {
  double mil = 0.0, orl = 0.0, cons = 0.0;
};

struct BatchDenoms {
  double indicated = 0.0;  // sum of I over the batch
  double visible = 0.0;    // sum of m_hat over the batch
  double cells = 0.0;      // batch windows * T * D
};

double tensor_sum(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.data()) acc += v;
  return acc;
}

// Pooled validation imputation MAE (the MIL metric) over fixed masks.
double validation_mae(const BratiConfig& config, const BratiParams& params,
                      const std::vector<TimeSeriesWindow>& windows,
                      const std::vector<Tensor>& masks) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < windows.size(); ++i) {
    MaskedBatch batch =
        apply_mask(windows[i].values, windows[i].observed, masks[i]);
    BratiOutput out = brati_forward(batch.x_hat, batch.m_hat, params, config,
                                    /*train=*/false, nullptr);
    const auto& xj = out.x_joint.data();
    const auto& xv = windows[i].values.data();
    const auto& iv = masks[i].data();
    for (std::size_t k = 0; k < xj.size(); ++k)
      if (iv[k] == 1.0) {
        num += std::fabs(xj[k] - xv[k]);
        den += 1.0;
      }
  }
  if (den == 0.0)
    throw ConfigError("validation masks select no cells; cannot early-stop");
  return num / den;
}

std::vector<std::vector<double>> snapshot(
    const std::vector<std::pair<std::string, Tensor>>& params) {
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (const auto& [name, t] : params) out.push_back(t.data());
  return out;
}

void restore(const std::vector<std::pair<std::string, Tensor>>& params,
             const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i)
    const_cast<Tensor&>(params[i].second).values_mut() = snap[i];
}

void clip_gradients(const std::vector<std::pair<std::string, Tensor>>& params,
                    double clip_norm) {
  double sq = 0.0;
  for (const auto& [name, t] : params)
    if (const auto* g = t.grad())
      for (double v : *g) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= clip_norm || norm == 0.0) return;
  const double scale = clip_norm / norm;
  for (const auto& [name, t] : params)
    if (const auto* g = t.grad())
      for (double& v : const_cast<std::vector<double>&>(*g)) v *= scale;
}

void append_log_line(std::ofstream& out, const EpochLog& e) {
  nlohmann::json j;
  j["epoch"] = e.epoch;
  j["mil"] = e.mil;
  j["orl"] = e.orl;
  j["cons"] = e.cons;
  j["total"] = e.total;
  j["val_mae"] = e.val_mae;
  j["lr"] = e.lr;
  out << j.dump() << '\n';
}

}  // namespace

TrainResult train(const BratiConfig& config, BratiParams& params,
                  const DatasetContainer& train_data,
                  const DatasetContainer& val_data, const TrainConfig& tc,
                  const std::filesystem::path& out_dir) {
  config.validate();
  tc.validate();
  const bool single = config.variant == Variant::single_block;

  auto train_windows = container_windows(train_data, /*standardized=*/true);
  auto val_windows = container_windows(val_data, /*standardized=*/true);
  if (train_windows.empty()) throw ConfigError("training container is empty");
  if (val_windows.empty()) throw ConfigError("validation container is empty");

  // Validation masks are fixed once per run so early stopping compares like
  // with like: taken from the container when present, otherwise sampled
  // from the run seed.
  std::vector<Tensor> val_masks;
  if (val_data.indicating.defined()) {
    val_masks = container_indicating_windows(val_data);
  } else {
    for (std::size_t i = 0; i < val_windows.size(); ++i) {
      ScenarioSpec spec;
      spec.kind = tc.scenario;
      spec.rate = tc.rate;
      spec.seed = SplitMix64::derive(tc.seed, 0x76616c, i);  // val stream
      val_masks.push_back(generate(val_windows[i].observed, spec).indicator);
    }
  }

  auto named = params.named();
  AdamState adam = AdamState::for_params(named);

  std::ofstream log_file;
  std::filesystem::path ckpt_path;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    log_file.open(out_dir / "training_log.jsonl");
    ckpt_path = out_dir / "checkpoint.brati";
  }

  EarlyStopper stopper(tc.patience);
  TrainResult result;
  std::vector<std::vector<double>> best_snapshot = snapshot(named);
  double last_lr = 0.0;

  std::vector<std::size_t> order(train_windows.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= tc.max_epochs; ++epoch) {
    // Deterministic shuffle per epoch.
    SplitMix64 shuffle_rng(SplitMix64::derive(tc.seed, 0x736866, epoch));
    for (std::size_t i = 0; i + 1 < order.size(); ++i) {
      const std::size_t j = i + shuffle_rng.below(order.size() - i);
      std::swap(order[i], order[j]);
    }

    double ep_mil_num = 0.0, ep_orl_num = 0.0, ep_cons_num = 0.0;
    double ep_ind = 0.0, ep_vis = 0.0, ep_cells = 0.0;

    const std::size_t n_batches =
        (order.size() + tc.batch_size - 1) / tc.batch_size;
    for (std::size_t b = 0; b < n_batches; ++b) {
      const std::size_t begin = b * tc.batch_size;
      const std::size_t end = std::min(begin + tc.batch_size, order.size());

      // Pass 1: fresh masks for the batch and the pooled denominators.
      std::vector<MaskedBatch> batch;
      BatchDenoms den;
      for (std::size_t k = begin; k < end; ++k) {
        const auto& w = train_windows[order[k]];
        ScenarioSpec spec;
        spec.kind = tc.scenario;
        spec.rate = tc.rate;
        spec.seed = SplitMix64::derive(tc.seed, epoch, b, order[k]);
        MaskGenResult gen = generate(w.observed, spec);
        batch.push_back(apply_mask(w.values, w.observed, gen.indicator));
        den.indicated += tensor_sum(batch.back().indicating);
        den.visible += tensor_sum(batch.back().m_hat);
        den.cells += static_cast<double>(w.values.size());
      }
      if (den.visible == 0.0)
        throw ConfigError("a training batch has no visible cells");

      // Pass 2: per-window forward/backward; gradients accumulate across
      // the batch, which equals backpropagating the pooled batch loss.
      double lr = noam_lr(adam.step + 1, config.d_model, tc.warmup);
      for (std::size_t k = begin; k < end; ++k) {
        const auto& w = train_windows[order[k]];
        const MaskedBatch& mb = batch[k - begin];
        SplitMix64 dropout_rng(
            SplitMix64::derive(tc.seed, 0x64726f70 + epoch, b, order[k]));
        BratiOutput out = brati_forward(mb.x_hat, mb.m_hat, params, config,
                                        /*train=*/true, &dropout_rng);

        Tensor mil_num =
            sum_all(abs_op(mul(sub(out.x_joint, w.values), mb.indicating)));
        Tensor orl_num = mul_scalar(
            sum_all(abs_op(mul(sub(out.x_joint, w.values), mb.m_hat))), 0.5);
        if (!single) {
          orl_num = add(
              orl_num,
              add(mul_scalar(sum_all(abs_op(
                                 mul(sub(out.x_fwd, w.values), mb.m_hat))),
                             0.25),
                  mul_scalar(sum_all(abs_op(
                                 mul(sub(out.x_bwd, w.values), mb.m_hat))),
                             0.25)));
        }

        Tensor loss = add(
            mul_scalar(mil_num, den.indicated > 0.0
                                    ? tc.weights.lambda_mil / den.indicated
                                    : 0.0),
            mul_scalar(orl_num, tc.weights.lambda_orl / den.visible));
        Tensor cons_num;
        if (!single) {
          cons_num = sum_all(abs_op(sub(out.x_fwd, out.x_bwd)));
          loss = add(loss,
                     mul_scalar(cons_num, tc.weights.lambda_cons *
                                              tc.weights.rho / den.cells));
        }

        if (std::isnan(loss.item())) {
          restore(named, best_snapshot);
          throw DivergenceError(
              "training loss is NaN at epoch " + std::to_string(epoch) +
              "; last good checkpoint retained");
        }
        backward(loss);

        ep_mil_num += mil_num.item();
        ep_orl_num += orl_num.item();
        if (!single) ep_cons_num += cons_num.item();
      }
      ep_ind += den.indicated;
      ep_vis += den.visible;
      ep_cells += den.cells;

      if (tc.clip_norm > 0.0) clip_gradients(named, tc.clip_norm);
      adam_step(named, adam, lr);
      params.zero_grads();
      last_lr = lr;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.mil = ep_ind > 0.0 ? ep_mil_num / ep_ind : 0.0;
    entry.orl = ep_orl_num / ep_vis;
    entry.cons = single ? 0.0 : tc.weights.rho * ep_cons_num / ep_cells;
    entry.total = tc.weights.lambda_mil * entry.mil +
                  tc.weights.lambda_orl * entry.orl +
                  tc.weights.lambda_cons * entry.cons;
    entry.lr = last_lr;
    entry.val_mae = validation_mae(config, params, val_windows, val_masks);
    result.log.push_back(entry);
    result.epochs_run = epoch;

    const bool stop = stopper.observe(entry.val_mae);
    if (stopper.best_index() == epoch) {
      best_snapshot = snapshot(named);
      if (!ckpt_path.empty()) save_checkpoint(params, config, ckpt_path);
    }
    if (log_file.is_open()) append_log_line(log_file, entry);
    if (stop) break;
  }

  restore(named, best_snapshot);
  if (!ckpt_path.empty()) save_checkpoint(params, config, ckpt_path);
  result.best_epoch = stopper.best_index();
  result.best_val_mae = stopper.best();
  return result;
}

}  // namespace brati
