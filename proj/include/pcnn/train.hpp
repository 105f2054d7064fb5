#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "pcnn/augment.hpp"
#include "pcnn/data.hpp"
#include "pcnn/model.hpp"

namespace pcnn {

struct EarlyStopConfig {
  double baseline_acc = 1.0;  // stopping is armed only after val acc reaches this
  int64_t patience = 50;
  int64_t min_epochs = 0;

  void validate() const {
    if (baseline_acc < 0 || baseline_acc > 1) throw ConfigError("early stop: baseline in [0,1]");
    if (patience < 1) throw ConfigError("early stop: patience must be >= 1");
    if (min_epochs < 0) throw ConfigError("early stop: min_epochs must be >= 0");
  }
};

struct EarlyStopState {
  bool baseline_passed = false;
  double best_val_acc = -1.0;
  int64_t best_epoch = 0;
  int64_t epochs_since_best = 0;
  int64_t last_epoch = 0;
};

enum class StopDecision { Continue, Stop };

StopDecision early_stop_update(EarlyStopState& state, const EarlyStopConfig& config, int64_t epoch,
                               double val_acc);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.0;  // room left in the config; default is plain SGD
  int64_t batch_size = 256;
  int64_t max_epochs = 2500;
  uint64_t seed = 0;
  double val_fraction = 0.1;
  EarlyStopConfig early_stop;

  void validate() const {
    if (learning_rate <= 0) throw ConfigError("train: learning_rate must be positive");
    if (momentum < 0 || momentum >= 1) throw ConfigError("train: momentum must be in [0,1)");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (max_epochs < 0) throw ConfigError("train: max_epochs must be >= 0");
    if (!(val_fraction > 0 && val_fraction < 1)) throw ConfigError("train: val_fraction in (0,1)");
    early_stop.validate();
  }
};

struct EpochRow {
  int64_t epoch;
  double train_loss, train_acc, val_loss, val_acc;
  double wall_seconds;
};

struct History {
  std::vector<EpochRow> rows;
  int64_t stopped_epoch = 0;
  int64_t best_epoch = 0;
  std::optional<double> test_acc;
  std::optional<std::string> abort_reason;  // set when a non-finite loss ended the run
};

// w <- w - lr * g, in place. Aborts on non-finite gradients.
void sgd_step(Parameters<float>& params, const Gradients<float>& grads, double lr,
              std::vector<Tensor<float>>* velocity = nullptr, double momentum = 0.0);

struct EvalResult {
  double mean_loss;
  double accuracy;  // argmax ties break to the lowest class index
};

EvalResult evaluate(const ArchitectureSpec& spec, const Parameters<float>& params,
                    const Dataset& ds, int64_t batch_size);

struct TrainResult {
  Parameters<float> best_params;
  History history;
};

using EpochCallback = std::function<void(const EpochRow&)>;

TrainResult train(const TrainConfig& config, const ArchitectureSpec& spec,
                  const Dataset& train_ds, const Dataset& val_ds,
                  const AugmentConfig& augment_config, const EpochCallback& on_epoch = nullptr);

// CSV columns exactly: epoch,train_loss,train_acc,val_loss,val_acc,seconds.
// Timing is written only on request so the default output is a deterministic
// function of (config, seed, data).
void write_metrics_csv(const History& history, const std::string& path,
                       bool record_wall_time = false);

// Little-endian binary: magic "PCNN", u32 version, u32-length-prefixed
// architecture text, then per parameterized layer weight and bias tensors
// (u32 rank, u32 extents, f32 data).
void save_checkpoint(const ArchitectureSpec& spec, const Parameters<float>& params,
                     const std::string& path);
std::pair<ArchitectureSpec, Parameters<float>> load_checkpoint(const std::string& path);

}  // namespace pcnn
