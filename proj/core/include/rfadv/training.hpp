#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "rfadv/attacks.hpp"
#include "rfadv/models.hpp"
#include "rfadv/optim.hpp"
#include "rfadv/rfsynth.hpp"

namespace rfadv {

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double clean_acc = 0.0;
  double adv_acc = 0.0;
};

struct TrainTrace {
  std::vector<EpochRecord> records;

  /// `epoch,train_loss,clean_acc,adv_acc`
  std::string to_csv() const;
};

struct TrainConfig {
  int epochs = 40;
  int batch_size = 64;
  float learning_rate = 1e-3f;
  AdamConfig adam{};
  /// L2 coefficient on dense-layer weights.
  float weight_decay = 1e-4f;
  std::uint64_t seed = 7;
  /// Per-epoch white-box FGSM evaluation budget.
  float trace_epsilon = 0.1f;
  /// Held-out rows used for the per-epoch clean/adversarial accuracy.
  int eval_subset = 400;
  std::function<void(const std::string&)> log;

  void validate() const;
};

struct TrainResult {
  ModelGraph model;
  TrainTrace trace;
};

/// Cross-entropy training; after every epoch measures accuracy on the first
/// `eval_subset` rows of `eval`, clean and under FGSM crafted on the current weights.
TrainResult train_classical(ModelGraph model, const Dataset& train, const Dataset& eval, const TrainConfig& cfg);

struct AeEpochRecord {
  int epoch = 0;
  double train_mse = 0.0;
  double eval_mse = 0.0;
};

struct AeTrace {
  /// Reconstruction MSE of the untrained autoencoder on the monitor rows.
  double initial_mse = 0.0;
  std::vector<AeEpochRecord> records;

  /// `epoch,train_mse,eval_mse`, with the untrained state as epoch 0.
  std::string to_csv() const;
};

struct AeResult {
  ModelGraph model;
  AeTrace trace;
};

/// Unsupervised MSE reconstruction training; labels are never read.
/// Monitor MSE is measured on the first `eval_subset` training rows.
AeResult pretrain_autoencoder(ModelGraph autoencoder, const Dataset& train, const TrainConfig& cfg);

/// Builds a classifier, transfers (and freezes) the encoder, trains the head.
TrainResult train_ae_classifier(const ModelGraph& autoencoder, const ModelGraph& fresh_classifier,
                                const Dataset& train, const Dataset& eval, const TrainConfig& cfg);

/// Each minibatch is extended 1:1 with FGSM copies crafted on the current
/// weights and labeled with the true labels.
TrainResult adversarial_train(ModelGraph model, const Dataset& train, const Dataset& eval,
                              const AttackConfig& attack, const TrainConfig& cfg);

/// Mean eval-mode reconstruction MSE over the given rows.
double reconstruction_mse(const ModelGraph& autoencoder, const Dataset& data, int chunk = 100);

}  // namespace rfadv
