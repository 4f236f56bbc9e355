#pragma once

#include "mclsr/corpus.hpp"
#include "mclsr/evaluator.hpp"
#include "mclsr/model.hpp"
#include "mclsr/objectives.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mclsr {

enum class Ablation { Full, NoGraph, NoCl, NoFeatureCl, NoInterestCl };

const char* to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);

struct TrainConfig {
  Real lr = 0.001;
  int batch = 128;
  int dim = 64;
  int layers = 2;
  Real tau = 0.5;
  Real alpha = 0.5;
  Real beta = 1.0;
  Real gamma = 0.05;
  int negatives = 1280;
  int topk_neighbors = 50;
  int max_epochs = 50;
  int patience = 5;
  std::uint64_t seed = 1;
  Ablation ablation = Ablation::Full;
  bool attend_positioned = false;
  bool allow_repeats = false;
  bool keep_co_diagonal = false;

  void validate() const;
  /// Loss hyper-parameters with the ablation variant applied.
  Hyper hyper() const;
};

/// Flat `key = value` view of a config; the same keys the config file and the
/// CLI flags use.
std::map<std::string, std::string> config_to_map(const TrainConfig& config);
/// Applies entries onto `base`; unknown keys and unparsable values throw
/// ConfigError naming the key (and its default, when meaningful).
TrainConfig config_from_map(const std::map<std::string, std::string>& values,
                            TrainConfig base = TrainConfig{});

struct OptimizerState {
  ModelParams first_moment;
  ModelParams second_moment;
  std::int64_t step = 0;

  static OptimizerState zeros(Eigen::Index users, Eigen::Index items, Eigen::Index dim);
};

/// Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8) with bias correction.
void adam_step(ModelParams& params, const ModelParams& grads, OptimizerState& state, Real lr);

struct EpochStats {
  int epoch = 0;
  Real loss_p = 0.0;       // epoch mean per sample
  Real loss_il = 0.0;
  Real loss_fl = 0.0;
  Real val_recall50 = 0.0; // fraction in [0, 1]
};

struct Checkpoint {
  ModelParams params;
  OptimizerState opt;
  TrainConfig config;
  int next_epoch = 0;
  Real best_val = -1.0;
  int epochs_since_improvement = 0;
};

struct TrainResult {
  ModelParams best_params;
  std::vector<EpochStats> history;
  int best_epoch = -1;
  Real best_val = 0.0;
};

/// View of trainer state passed to the per-epoch callback (for checkpointing
/// and progress output). References stay valid only during the call.
struct TrainSnapshot {
  const EpochStats& stats;
  const ModelParams& params;
  const OptimizerState& opt;
  int next_epoch;
  Real best_val;
  int epochs_since_improvement;
};

using EpochCallback = std::function<void(const TrainSnapshot&)>;

/// Builds the graphs once from the training split, then runs seeded epochs of
/// shuffled mini-batches with Adam updates, validating Recall@50 after each
/// epoch. Keeps the best parameters and stops early after `patience` epochs
/// without improvement. `resume` continues a checkpointed run; subsequent
/// epochs match an unbroken run with the same seed exactly.
TrainResult train(const Corpus& corpus, const TrainConfig& config,
                  const EpochCallback& on_epoch = {}, const Checkpoint* resume = nullptr);

/// Bit-exact round trip of parameters, optimizer state, config, and epoch
/// counters.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace mclsr
