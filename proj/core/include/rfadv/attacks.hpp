#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfadv/models.hpp"
#include "rfadv/rfsynth.hpp"

namespace rfadv {

enum class Targeting {
  /// Ascend the loss of the true label.
  untargeted,
  /// Descend the loss of `AttackConfig::target`.
  targeted,
  /// Descend the loss of a seeded random class different from the true one.
  random_target,
};

std::string_view targeting_name(Targeting t);
Targeting parse_targeting(std::string_view name);

/// l_inf budget and schedule of a gradient-sign attack.
struct AttackConfig {
  float epsilon = 0.1f;
  int steps = 1;
  float step_size = 0.0f;
  Targeting targeting = Targeting::untargeted;
  int target = 0;
  std::uint64_t seed = 0;

  void validate() const;
  nlohmann::ordered_json to_json() const;
};

struct AdversarialBatch {
  Dataset originals;
  Dataset perturbed;
  std::vector<int> true_labels;
  /// Label whose loss the attack followed (true label when untargeted).
  std::vector<int> attack_labels;
  std::string crafted_on;
  AttackConfig config;
};

/// Gradient of the per-sample cross-entropy w.r.t. the input, for x [N, 1, L].
Tensor input_gradient(const ModelGraph& model, const Tensor& x, const std::vector<int>& labels);

/// Labels an attack follows for a batch of true labels.
std::vector<int> attack_labels(const AttackConfig& cfg, const std::vector<int>& true_labels, int num_classes,
                               std::uint64_t first_row = 0);

/// Keeps `candidate` inside the l_inf ball of radius eps around `origin`,
/// where distances are measured exactly (in double) between float values.
float clip_to_ball(float candidate, float origin, float eps);

/// Single step: x + eps*sign(grad) untargeted, x - eps*sign(grad) targeted.
/// sign(0) = 0. x is [N, 1, L].
Tensor fgsm(const ModelGraph& model, const Tensor& x, const std::vector<int>& labels, const AttackConfig& cfg,
            std::uint64_t first_row = 0);
std::vector<float> fgsm(const ModelGraph& model, const std::vector<float>& x, int label, const AttackConfig& cfg);

/// Repeated signed steps of `step_size`, each projected back into the eps-ball.
Tensor bim(const ModelGraph& model, const Tensor& x, const std::vector<int>& labels, const AttackConfig& cfg,
           std::uint64_t first_row = 0);

/// fgsm when cfg.steps == 1, bim otherwise, over a whole dataset.
AdversarialBatch craft(const ModelGraph& model, const Dataset& data, const AttackConfig& cfg, int chunk = 100);

struct GreyboxResult {
  AdversarialBatch batch;
  double victim_accuracy = 0.0;
};

/// Crafts on the surrogate's gradients only and evaluates on the victim.
GreyboxResult craft_greybox(const ModelGraph& surrogate, const ModelGraph& victim, const Dataset& data,
                            const AttackConfig& cfg);

/// Largest |perturbed - original| over all coordinates, in double.
double max_linf_distance(const Dataset& originals, const Dataset& perturbed);

}  // namespace rfadv
