#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rfadv/models.hpp"
#include "rfadv/rfsynth.hpp"

namespace rfadv {

enum class OutputSource { legitimate, adversarial };

/// One softmax output of the classifier.
struct OutputSample {
  std::vector<float> probs;
  /// argmax(probs), lowest index on ties.
  int predicted = 0;
  OutputSource source = OutputSource::legitimate;

  /// Probability assigned to the predicted class.
  double confidence() const { return probs.at(static_cast<std::size_t>(predicted)); }
};

std::vector<OutputSample> collect_outputs(const ModelGraph& model, const Dataset& data, OutputSource source);

struct KSResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  std::size_t m = 0;
  bool available = true;
};

/// Asymptotic Kolmogorov tail Q(lambda) = 2 sum_{j>=1} (-1)^(j-1) exp(-2 j^2 lambda^2).
double kolmogorov_q(double lambda);

/// Two-sample KS: exact D from a merged sorted sweep, p-value from
/// kolmogorov_q((sqrt(ne) + 0.12 + 0.11/sqrt(ne)) * D) with ne = nm/(n+m).
KSResult ks_two_sample(std::span<const double> a, std::span<const double> b);

enum class KsInstance { full_legit_vs_adv, sampled_legit_vs_adv, control_legit_vs_legit };
std::string_view instance_name(KsInstance i);

struct KSCell {
  int cls = 0;
  KsInstance instance = KsInstance::full_legit_vs_adv;
  KSResult result;
};

struct KSReport {
  int classes = 0;
  int sample_size = 50;
  std::uint64_t seed = 0;
  /// How each output vector is reduced to the scalar under test.
  std::string reduction = "predicted_class_probability";
  std::vector<KSCell> cells;

  const KSResult& at(int cls, KsInstance instance) const;
  /// `class,instance,D,p_value,n,m`; unavailable cells carry empty D/p.
  std::string to_csv(const std::vector<std::string>& class_names = {}) const;
};

/// Groups both sets by predicted class and runs, per class: full legit vs
/// adversarial, `sample_size` random legit vs `sample_size` random adversarial,
/// and a control between two disjoint random legit subsets.
KSReport run_suite(const std::vector<OutputSample>& legit, const std::vector<OutputSample>& adv, int classes,
                   int sample_size = 50, std::uint64_t seed = 0);

}  // namespace rfadv
