#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "wrnlab/attacks.hpp"
#include "wrnlab/config.hpp"
#include "wrnlab/data.hpp"
#include "wrnlab/network.hpp"

namespace wrnlab {

struct TrainConfig {
  int epochs = 100;
  int batch_size = 128;
  double lr0 = 0.1;
  double momentum = 0.9;
  double weight_decay = 2e-4;
  std::vector<double> milestone_fractions{0.75, 0.90};
  double lr_decay_factor = 0.1;
  AttackConfig inner_attack = AttackConfig::training();
  AttackConfig eval_attack = AttackConfig::evaluation();
  bool augment = false;
  int augment_pad = 4;
  std::size_t eval_samples = 0;  // 0: whole held-out split
  int workers = 1;
  std::uint64_t seed = 0;

  void validate() const;
  std::vector<int> milestones() const;

  // Keys under train.* / attack.*; unknown train.* keys are rejected.
  static TrainConfig from_config(const KeyValueConfig& cfg);
  std::string to_config_text() const;
};

// Reads epsilon, steps, step_size, random_start, loss, seed from `sub`
// (already stripped of its prefix), starting from `base`.
AttackConfig attack_config_from(const KeyValueConfig& sub, AttackConfig base);
std::string attack_config_text(const AttackConfig& a, const std::string& prefix);

double lr_at(int epoch, const TrainConfig& cfg);

template <typename T>
struct OptimizerState {
  std::vector<BasicTensor<T>> velocity;  // parallel to Network::parameters()
  int epoch = 0;                         // epochs completed
  std::uint64_t step = 0;
  std::mt19937_64 rng;

  static OptimizerState init(const Network<T>& net, std::uint64_t seed);
  std::string rng_state() const;
  void set_rng_state(const std::string& text);
};

template <typename T>
void sgd_step(Network<T>& net, const GradientMap<T>& grads, OptimizerState<T>& state, double lr,
              const TrainConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double clean_acc = 0.0;
  double robust_acc = 0.0;
  double seconds = 0.0;
};

std::string epoch_csv_header();
std::string epoch_csv_row(const EpochStats& s);

template <typename T>
using CheckpointSink =
    std::function<void(const std::string& tag, const Network<T>& net, const OptimizerState<T>& state, const EpochStats&)>;

template <typename T>
struct TrainHooks {
  CheckpointSink<T> checkpoint;                    // called with "last" every epoch and "best" on improvement
  std::function<void(const EpochStats&)> on_epoch;  // progress / CSV
};

struct TrainResult {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_robust_acc = -1.0;
};

// Min-max training: each batch is replaced by PGD examples crafted with BN in
// eval mode, then one SGD step is taken on them with BN in train mode.
// `heldout` drives the per-epoch clean/robust numbers and best-checkpoint
// selection; without it the stats are measured on the training data.
// Passing `resume` continues from its epoch.
template <typename T>
TrainResult sat_train(Network<T>& net, const Dataset& train, const Dataset* heldout, const TrainConfig& cfg,
                      const TrainHooks<T>& hooks = {}, OptimizerState<T>* resume = nullptr);

}  // namespace wrnlab
