// rf-advdef: command-line driver for the synthesis / training / attack /
// detection pipeline.

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "rfadv/error.hpp"
#include "rfadv/experiment.hpp"
#include "rfadv/runtime.hpp"

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kBadInput = 2, kMissing = 3, kDiverged = 4 };

}  // namespace

int main(int argc, char** argv) {
  rfadv::tune_allocator();

  CLI::App app{"Synthetic RF modulation classification under adversarial attack"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::optional<std::string> out_dir;
  std::optional<std::uint64_t> seed;
  bool quiet = false;

  const char* stages[][2] = {
      {"synth", "Synthesize the train/test RFDS datasets"},
      {"train", "Train every enabled regime and write checkpoints and traces"},
      {"attack", "Craft adversarial test sets against the trained models"},
      {"eval", "Confusion matrices, epsilon sweep and simplex exports"},
      {"kstest", "Kolmogorov-Smirnov detection suite on softmax outputs"},
      {"report", "Aggregate accuracies and KS outcomes into report.json"},
      {"all", "Run synth, train, attack, eval, kstest and report in order"},
  };
  for (const auto& [name, help] : stages) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON experiment config")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "Output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "Master seed (overrides seed)");
    sub->add_flag("-q,--quiet", quiet, "Suppress progress output");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string stage = app.get_subcommands().front()->get_name();

  try {
    rfadv::ExperimentConfig cfg = rfadv::load_config(config_path);
    if (out_dir) cfg.output_dir = *out_dir;
    if (seed) cfg.seed = *seed;
    rfadv::Experiment exp(cfg, quiet ? std::function<void(const std::string&)>{}
                                     : [](const std::string& line) { std::cerr << line << '\n'; });
    exp.run(rfadv::parse_stage(stage));
  } catch (const rfadv::InvalidInput& e) {
    std::cerr << "rf-advdef " << stage << ": " << e.what() << '\n';
    return kBadInput;
  } catch (const rfadv::MissingArtifact& e) {
    std::cerr << "rf-advdef " << stage << ": " << e.what() << '\n';
    return kMissing;
  } catch (const rfadv::TrainingDiverged& e) {
    std::cerr << "rf-advdef " << stage << ": training diverged: " << e.what() << '\n';
    return kDiverged;
  } catch (const std::exception& e) {
    std::cerr << "rf-advdef " << stage << ": " << e.what() << '\n';
    return kFailure;
  }
  return kOk;
}
