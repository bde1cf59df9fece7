#ifndef BRATI_TRAINER_HPP
#define BRATI_TRAINER_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "brati/data.hpp"
#include "brati/masking.hpp"
#include "brati/model.hpp"
#include "brati/objective.hpp"

namespace brati {

// d_model^-0.5 * min(step^-0.5, step * warmup^-1.5); maximal at step ==
// warmup. Throws UsageError for step 0.
double noam_lr(std::size_t step, std::size_t d_model, std::size_t warmup);

// First/second moment buffers laid out like the parameter list they were
// created for, plus the shared step counter.
struct AdamState {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-9;
  std::size_t step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;

  static AdamState for_params(
      const std::vector<std::pair<std::string, Tensor>>& params);
};

// One bias-corrected Adam update over all parameters. Parameters without a
// populated gradient are treated as zero-gradient. Throws DivergenceError
// naming the parameter on a NaN gradient.
void adam_step(const std::vector<std::pair<std::string, Tensor>>& params,
               AdamState& state, double lr);

// Stops after `patience` observations without a strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(std::size_t patience);
  // Feed one validation value per epoch; returns true when training should
  // stop after this observation.
  bool observe(double value);
  double best() const { return best_; }
  std::size_t best_index() const { return best_index_; }  // 1-based epoch
  std::size_t observed() const { return count_; }

 private:
  std::size_t patience_;
  std::size_t count_ = 0;
  std::size_t best_index_ = 0;
  std::size_t since_best_ = 0;
  double best_;
};

struct TrainConfig {
  std::size_t warmup = 4000;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 1000;
  std::size_t patience = 30;
  Scenario scenario = Scenario::mcar;  // training-time re-masking protocol
  double rate = 0.2;
  std::uint64_t seed = 0;
  LossWeights weights;
  double clip_norm = 0.0;  // 0 disables gradient clipping

  void validate() const;
};

struct EpochLog {
  std::size_t epoch = 0;
  double mil = 0.0, orl = 0.0, cons = 0.0, total = 0.0;
  double val_mae = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> log;
  std::size_t best_epoch = 0;
  double best_val_mae = 0.0;
  std::size_t epochs_run = 0;
};

// The joint-optimization loop: per-epoch re-masking of the training split,
// pooled MIL/ORL/consistency loss per batch, Adam with the noam schedule,
// early stopping on validation imputation MAE, best-weight restoration.
//
// `params` is trained in place and holds the best-epoch weights on return.
// When out_dir is nonempty, the best checkpoint is kept at
// out_dir/checkpoint.brati (rewritten whenever validation improves, so a
// later divergence still leaves the last good weights on disk) and the log
// at out_dir/training_log.jsonl.
TrainResult train(const BratiConfig& config, BratiParams& params,
                  const DatasetContainer& train_data,
                  const DatasetContainer& val_data, const TrainConfig& tc,
                  const std::filesystem::path& out_dir = {});

// Checkpoint: 8-byte magic, little-endian u64 header length, JSON header
// {config, manifest of {name, shape, dtype:"f64"}}, then raw little-endian
// f64 payloads in manifest order. Round-trips bit-exactly.
void save_checkpoint(const BratiParams& params, const BratiConfig& config,
                     const std::filesystem::path& path);

struct Checkpoint {
  BratiConfig config;
  BratiParams params;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace brati

#endif
