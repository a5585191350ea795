#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfadv/attacks.hpp"
#include "rfadv/ksdetect.hpp"
#include "rfadv/models.hpp"
#include "rfadv/rfsynth.hpp"
#include "rfadv/training.hpp"

namespace rfadv {

struct SuiteToggles {
  bool classical = true;
  bool ae = true;
  bool greybox = true;
  bool adversarial_training = false;
  bool ks_suite = true;
  bool simplex_3class = true;
};

struct KsSettings {
  int sample_size = 50;
  /// Seeded repetitions of the sampled and control instances.
  int control_draws = 20;
};

/// Everything a pipeline run depends on. All fields have defaults, so `{}`
/// is a valid config file.
struct ExperimentConfig {
  /// Master seed; every dataset, initialization and shuffle seed derives from it.
  std::uint64_t seed = 1;
  /// Explicit dataset seed; when unset the dataset seed derives from `seed`.
  bool dataset_seed_set = false;
  DatasetSpec dataset;
  TrainConfig train;
  AttackConfig attack;
  std::vector<float> epsilon_sweep{0.0f, 0.05f, 0.1f, 0.2f};
  KsSettings ks;
  SuiteToggles suites;
  std::filesystem::path output_dir = "rfadv_out";

  /// Canonical form with every field spelled out.
  nlohmann::ordered_json to_json() const;
  /// Short content hash of the canonical form, excluding output_dir.
  std::string hash() const;
  /// Strict parse: unknown keys, wrong types and out-of-range values are
  /// rejected with an InvalidInput naming the field path.
  static ExperimentConfig from_json(const nlohmann::json& j);
  void validate() const;
};

ExperimentConfig load_config(const std::filesystem::path& path);

/// 64-bit FNV-1a as 16 lowercase hex digits.
std::string content_hash(std::string_view bytes);

/// Seed for a named consumer, derived from the master seed.
std::uint64_t derive_seed(std::uint64_t master, std::string_view label);

enum class Stage { synth, train, attack, eval, kstest, report, all };
std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view name);

/// Model families trained by the pipeline. The `_3class` variants belong
/// to the simplex experiment.
enum class Regime {
  classical,
  autoencoder,
  ae_classifier,
  surrogate,
  adversarial,
  classical_3class,
  autoencoder_3class,
  ae_classifier_3class,
};
std::string_view regime_name(Regime r);

/// Drives the pipeline stages against one output directory. Each stage
/// reads the artifacts of earlier stages from disk and throws
/// MissingArtifact naming the subcommand to run when one is absent.
class Experiment {
 public:
  explicit Experiment(ExperimentConfig cfg, std::function<void(const std::string&)> log = {});

  const ExperimentConfig& config() const { return cfg_; }
  const std::filesystem::path& out() const { return cfg_.output_dir; }

  void run(Stage stage);
  void synth();
  void train();
  void attack();
  void eval();
  void kstest();
  void report();

  std::filesystem::path dataset_path(std::string_view split, bool three_class = false) const;
  std::filesystem::path checkpoint_path(Regime r) const;
  std::filesystem::path trace_path(Regime r) const;
  /// Prefix of an adversarial set: `<prefix>.orig.rfds`, `<prefix>.adv.rfds`, `<prefix>.json`.
  std::filesystem::path adversarial_prefix(std::string_view set) const;
  std::filesystem::path report_path() const;

  Dataset load_dataset(std::string_view split, bool three_class = false) const;
  ModelGraph load_model(Regime r) const;
  /// Perturbed half of a stored adversarial set.
  Dataset load_adversarial(std::string_view set) const;

  /// `# config_hash=<hash> seed=<seed>` line that opens every CSV output.
  std::string csv_preamble() const;

 private:
  void log(const std::string& msg) const;
  DatasetSpec dataset_spec(bool three_class) const;
  TrainConfig train_config(Regime r) const;
  int class_count(bool three_class) const;
  std::vector<std::string> class_names(bool three_class) const;
  void write_text(const std::filesystem::path& p, const std::string& text) const;
  void write_json(const std::filesystem::path& p, nlohmann::ordered_json j) const;
  void save_model(Regime r, const ModelGraph& m) const;
  void save_trace(Regime r, const std::string& csv) const;
  void save_adversarial(std::string_view set, const AdversarialBatch& batch, Regime crafted_on,
                        const std::string& evaluated_on) const;
  void require_file(const std::filesystem::path& p, std::string_view stage) const;

  ExperimentConfig cfg_;
  std::function<void(const std::string&)> log_;
};

}  // namespace rfadv
