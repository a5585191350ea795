#include "rfadv/experiment.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "rfadv/checkpoint.hpp"
#include "rfadv/error.hpp"
#include "rfadv/metrics.hpp"
#include "format.hpp"

namespace rfadv {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string content_hash(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xf];
    h >>= 4;
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::uint64_t z = master ^ h;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

std::string_view stage_name(Stage s) {
  switch (s) {
    case Stage::synth: return "synth";
    case Stage::train: return "train";
    case Stage::attack: return "attack";
    case Stage::eval: return "eval";
    case Stage::kstest: return "kstest";
    case Stage::report: return "report";
    case Stage::all: return "all";
  }
  return "?";
}

Stage parse_stage(std::string_view name) {
  for (Stage s : {Stage::synth, Stage::train, Stage::attack, Stage::eval, Stage::kstest, Stage::report, Stage::all}) {
    if (stage_name(s) == name) return s;
  }
  throw InvalidInput("unknown subcommand '" + std::string(name) + "'");
}

std::string_view regime_name(Regime r) {
  switch (r) {
    case Regime::classical: return "classical";
    case Regime::autoencoder: return "autoencoder";
    case Regime::ae_classifier: return "ae_classifier";
    case Regime::surrogate: return "surrogate";
    case Regime::adversarial: return "adversarial";
    case Regime::classical_3class: return "classical_3class";
    case Regime::autoencoder_3class: return "autoencoder_3class";
    case Regime::ae_classifier_3class: return "ae_classifier_3class";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Config parsing

namespace {

class Fields {
 public:
  Fields(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(path_.empty() ? "config" : path_, "expected an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] static void fail(const std::string& path, const std::string& msg) {
    throw InvalidInput("config: " + path + ": " + msg);
  }

  const nlohmann::json& at(const std::string& key) const { return j_.at(key); }

  std::int64_t integer(const std::string& key, std::int64_t value, std::int64_t lo, std::int64_t hi) {
    if (!has(key)) return value;
    const auto& v = j_.at(key);
    if (!v.is_number_integer()) fail(field(key), "expected an integer");
    const auto x = v.is_number_unsigned() ? static_cast<std::int64_t>(std::min<std::uint64_t>(
                                                v.get<std::uint64_t>(), static_cast<std::uint64_t>(INT64_MAX)))
                                          : v.get<std::int64_t>();
    if (x < lo || x > hi) {
      fail(field(key), "must lie in [" + std::to_string(lo) + ", " + std::to_string(hi) + "], got " +
                           std::to_string(x));
    }
    return x;
  }

  std::uint64_t seed(const std::string& key, std::uint64_t value) {
    if (!has(key)) return value;
    const auto& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
      fail(field(key), "expected a non-negative integer");
    }
    return v.get<std::uint64_t>();
  }

  double real(const std::string& key, double value, double lo, double hi) {
    if (!has(key)) return value;
    const auto& v = j_.at(key);
    if (!v.is_number()) fail(field(key), "expected a number");
    const double x = v.get<double>();
    if (!(x >= lo && x <= hi)) {
      std::ostringstream os;
      os << "must lie in [" << lo << ", " << hi << "], got " << x;
      fail(field(key), os.str());
    }
    return x;
  }

  bool boolean(const std::string& key, bool value) {
    if (!has(key)) return value;
    const auto& v = j_.at(key);
    if (!v.is_boolean()) fail(field(key), "expected true or false");
    return v.get<bool>();
  }

  std::string string(const std::string& key, std::string value) {
    if (!has(key)) return value;
    const auto& v = j_.at(key);
    if (!v.is_string()) fail(field(key), "expected a string");
    return v.get<std::string>();
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!seen_.count(key)) fail(field(key), "unknown field");
    }
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

constexpr double kHuge = 1e300;

void parse_dataset(Fields& f, ExperimentConfig& cfg) {
  DatasetSpec& d = cfg.dataset;
  if (f.has("schemes")) {
    const auto& arr = f.at("schemes");
    if (!arr.is_array() || arr.size() < 2) Fields::fail(f.field("schemes"), "expected an array of >= 2 scheme names");
    d.schemes.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const std::string p = f.field("schemes") + "[" + std::to_string(i) + "]";
      if (!arr[i].is_string()) Fields::fail(p, "expected a scheme name");
      try {
        d.schemes.push_back(parse_scheme(arr[i].get<std::string>()));
      } catch (const InvalidInput&) {
        Fields::fail(p, "unknown scheme '" + arr[i].get<std::string>() + "' (BPSK, QPSK, 8PSK, 16QAM)");
      }
      for (std::size_t k = 0; k + 1 < d.schemes.size(); ++k) {
        if (d.schemes[k] == d.schemes.back()) Fields::fail(p, "duplicate scheme");
      }
    }
  }
  if (f.has("snr_db")) {
    const auto& arr = f.at("snr_db");
    if (!arr.is_array() || arr.size() != 2 || !arr[0].is_number() || !arr[1].is_number()) {
      Fields::fail(f.field("snr_db"), "expected [low, high] in dB");
    }
    d.snr_lo_db = arr[0].get<double>();
    d.snr_hi_db = arr[1].get<double>();
    if (!(d.snr_lo_db <= d.snr_hi_db)) Fields::fail(f.field("snr_db"), "low must not exceed high");
  }
  d.train_per_class = static_cast<int>(f.integer("train_per_class", d.train_per_class, 1, 1000000));
  d.test_per_class = static_cast<int>(f.integer("test_per_class", d.test_per_class, 1, 1000000));
  if (f.has("seed")) {
    d.seed = f.seed("seed", d.seed);
    cfg.dataset_seed_set = true;
  }
  f.finish();
}

void parse_train(Fields& f, TrainConfig& t) {
  t.epochs = static_cast<int>(f.integer("epochs", t.epochs, 1, 100000));
  t.batch_size = static_cast<int>(f.integer("batch_size", t.batch_size, 1, 1000000));
  t.learning_rate = static_cast<float>(f.real("learning_rate", t.learning_rate, std::numeric_limits<double>::min(), 10.0));
  t.weight_decay = static_cast<float>(f.real("weight_decay", t.weight_decay, 0.0, 10.0));
  t.eval_subset = static_cast<int>(f.integer("eval_subset", t.eval_subset, 1, 1000000));
  t.trace_epsilon = static_cast<float>(f.real("trace_epsilon", t.trace_epsilon, 0.0, kHuge));
  if (f.has("adam")) {
    Fields a(f.at("adam"), f.field("adam"));
    t.adam.beta1 = static_cast<float>(a.real("beta1", t.adam.beta1, 0.0, 0.999999));
    t.adam.beta2 = static_cast<float>(a.real("beta2", t.adam.beta2, 0.0, 0.999999999));
    t.adam.epsilon = static_cast<float>(a.real("epsilon", t.adam.epsilon, 0.0, 1.0));
    a.finish();
  }
  f.finish();
}

void parse_attack(Fields& f, AttackConfig& a) {
  a.epsilon = static_cast<float>(f.real("epsilon", a.epsilon, 0.0, kHuge));
  const std::string norm = f.string("norm", "l_inf");
  if (norm != "l_inf") Fields::fail(f.field("norm"), "only \"l_inf\" is supported");
  a.steps = static_cast<int>(f.integer("steps", a.steps, 1, 100000));
  a.step_size = static_cast<float>(f.real("step_size", a.step_size, 0.0, kHuge));
  if (a.steps > 1 && !(a.step_size > 0.0f)) Fields::fail(f.field("step_size"), "must be > 0 when steps > 1");
  const std::string targeting = f.string("targeting", std::string(targeting_name(a.targeting)));
  try {
    a.targeting = parse_targeting(targeting);
  } catch (const InvalidInput&) {
    Fields::fail(f.field("targeting"), "expected untargeted, targeted or random_target");
  }
  a.target = static_cast<int>(f.integer("target", a.target, 0, 255));
  f.finish();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  ExperimentConfig cfg;
  Fields root(j, "");
  cfg.seed = root.seed("seed", cfg.seed);
  cfg.output_dir = root.string("output_dir", cfg.output_dir.string());
  if (root.has("dataset")) {
    Fields f(root.at("dataset"), "dataset");
    parse_dataset(f, cfg);
  }
  if (root.has("train")) {
    Fields f(root.at("train"), "train");
    parse_train(f, cfg.train);
  }
  if (root.has("attack")) {
    Fields f(root.at("attack"), "attack");
    parse_attack(f, cfg.attack);
  }
  if (root.has("eval")) {
    Fields f(root.at("eval"), "eval");
    if (f.has("epsilon_sweep")) {
      const auto& arr = f.at("epsilon_sweep");
      if (!arr.is_array() || arr.empty()) Fields::fail("eval.epsilon_sweep", "expected a non-empty array");
      cfg.epsilon_sweep.clear();
      for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string p = "eval.epsilon_sweep[" + std::to_string(i) + "]";
        if (!arr[i].is_number() || !(arr[i].get<double>() >= 0.0)) Fields::fail(p, "expected a number >= 0");
        cfg.epsilon_sweep.push_back(arr[i].get<float>());
      }
    }
    f.finish();
  }
  if (root.has("ks")) {
    Fields f(root.at("ks"), "ks");
    cfg.ks.sample_size = static_cast<int>(f.integer("sample_size", cfg.ks.sample_size, 1, 1000000));
    cfg.ks.control_draws = static_cast<int>(f.integer("control_draws", cfg.ks.control_draws, 1, 100000));
    f.finish();
  }
  if (root.has("suites")) {
    Fields f(root.at("suites"), "suites");
    SuiteToggles& s = cfg.suites;
    s.classical = f.boolean("classical", s.classical);
    s.ae = f.boolean("ae", s.ae);
    s.greybox = f.boolean("greybox", s.greybox);
    s.adversarial_training = f.boolean("adversarial_training", s.adversarial_training);
    s.ks_suite = f.boolean("ks_suite", s.ks_suite);
    s.simplex_3class = f.boolean("simplex_3class", s.simplex_3class);
    f.finish();
  }
  root.finish();
  cfg.validate();
  return cfg;
}

void ExperimentConfig::validate() const {
  if (attack.targeting == Targeting::targeted && attack.target >= static_cast<int>(dataset.schemes.size())) {
    throw InvalidInput("config: attack.target: class " + std::to_string(attack.target) + " does not exist");
  }
  if (suites.greybox && !suites.ae) throw InvalidInput("config: suites.greybox: the grey-box victim needs suites.ae");
  if (suites.ks_suite && !suites.classical && !suites.ae) {
    throw InvalidInput("config: suites.ks_suite: needs suites.classical or suites.ae");
  }
  attack.validate();
  train.validate();
}

ojson ExperimentConfig::to_json() const {
  ojson j;
  j["seed"] = seed;
  j["output_dir"] = output_dir.string();
  ojson d;
  auto& schemes = d["schemes"] = ojson::array();
  for (auto s : dataset.schemes) schemes.push_back(std::string(scheme_name(s)));
  d["snr_db"] = {dataset.snr_lo_db, dataset.snr_hi_db};
  d["train_per_class"] = dataset.train_per_class;
  d["test_per_class"] = dataset.test_per_class;
  if (dataset_seed_set) d["seed"] = dataset.seed;
  j["dataset"] = d;
  j["train"] = {{"epochs", train.epochs},
                {"batch_size", train.batch_size},
                {"learning_rate", detail::tidy(train.learning_rate)},
                {"weight_decay", detail::tidy(train.weight_decay)},
                {"eval_subset", train.eval_subset},
                {"trace_epsilon", detail::tidy(train.trace_epsilon)},
                {"adam", {{"beta1", detail::tidy(train.adam.beta1)}, {"beta2", detail::tidy(train.adam.beta2)}, {"epsilon", detail::tidy(train.adam.epsilon)}}}};
  j["attack"] = {{"epsilon", detail::tidy(attack.epsilon)},
                 {"norm", "l_inf"},
                 {"steps", attack.steps},
                 {"step_size", detail::tidy(attack.step_size)},
                 {"targeting", std::string(targeting_name(attack.targeting))},
                 {"target", attack.target}};
  ojson sweep = ojson::array();
  for (float e : epsilon_sweep) sweep.push_back(detail::tidy(e));
  j["eval"] = {{"epsilon_sweep", sweep}};
  j["ks"] = {{"sample_size", ks.sample_size}, {"control_draws", ks.control_draws}};
  j["suites"] = {{"classical", suites.classical},
                 {"ae", suites.ae},
                 {"greybox", suites.greybox},
                 {"adversarial_training", suites.adversarial_training},
                 {"ks_suite", suites.ks_suite},
                 {"simplex_3class", suites.simplex_3class}};
  return j;
}

std::string ExperimentConfig::hash() const {
  ojson j = to_json();
  j.erase("output_dir");
  return content_hash(j.dump());
}

ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("config: cannot open " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw InvalidInput("config: " + path.string() + " is not valid JSON: " + e.what());
  }
  return ExperimentConfig::from_json(j);
}

// ---------------------------------------------------------------------------
// Formatting helpers

namespace {

std::string num(float v) { return std::isnan(v) ? "" : detail::shortest(v); }

std::string num(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

ojson read_json(const fs::path& p) {
  std::ifstream in(p);
  return ojson::parse(in);
}

std::string confusion_csv(const std::vector<std::vector<double>>& m, const std::vector<std::string>& names) {
  std::ostringstream os;
  os << "true";
  for (const auto& n : names) os << ',' << n;
  os << '\n';
  for (std::size_t t = 0; t < m.size(); ++t) {
    os << names[t];
    for (double v : m[t]) os << ',' << num(v);
    os << '\n';
  }
  return os.str();
}

double mean_diagonal(const std::vector<std::vector<double>>& m) {
  double s = 0.0;
  for (std::size_t i = 0; i < m.size(); ++i) s += m[i][i];
  return m.empty() ? 0.0 : s / static_cast<double>(m.size());
}

}  // namespace

// ---------------------------------------------------------------------------
// Experiment

Experiment::Experiment(ExperimentConfig cfg, std::function<void(const std::string&)> log)
    : cfg_(std::move(cfg)), log_(std::move(log)) {
  cfg_.validate();
}

void Experiment::log(const std::string& msg) const {
  if (log_) log_(msg);
}

void Experiment::run(Stage stage) {
  switch (stage) {
    case Stage::synth: synth(); break;
    case Stage::train: train(); break;
    case Stage::attack: attack(); break;
    case Stage::eval: eval(); break;
    case Stage::kstest: kstest(); break;
    case Stage::report: report(); break;
    case Stage::all:
      synth();
      train();
      attack();
      eval();
      if (cfg_.suites.ks_suite) kstest();
      report();
      break;
  }
}

std::string Experiment::csv_preamble() const {
  return "# config_hash=" + cfg_.hash() + " seed=" + std::to_string(cfg_.seed) + "\n";
}

fs::path Experiment::dataset_path(std::string_view split, bool three_class) const {
  return out() / "data" / (std::string(split) + (three_class ? "_3class" : "") + ".rfds");
}

fs::path Experiment::checkpoint_path(Regime r) const {
  return out() / "models" / (std::string(regime_name(r)) + "_" + std::to_string(cfg_.seed) + ".rfwt");
}

fs::path Experiment::trace_path(Regime r) const {
  return out() / "traces" / ("trace_" + std::string(regime_name(r)) + ".csv");
}

fs::path Experiment::adversarial_prefix(std::string_view set) const { return out() / "adv" / std::string(set); }

fs::path Experiment::report_path() const { return out() / "report.json"; }

void Experiment::write_text(const fs::path& p, const std::string& text) const {
  fs::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << text;
}

void Experiment::write_json(const fs::path& p, ojson j) const {
  j["config_hash"] = cfg_.hash();
  j["seed"] = cfg_.seed;
  write_text(p, j.dump(2) + "\n");
}

void Experiment::require_file(const fs::path& p, std::string_view stage) const {
  if (!fs::exists(p)) {
    throw MissingArtifact(p.string() + " not found; run `rf-advdef " + std::string(stage) + " --config <config>` first");
  }
}

int Experiment::class_count(bool three_class) const {
  return three_class ? 3 : static_cast<int>(cfg_.dataset.schemes.size());
}

std::vector<std::string> Experiment::class_names(bool three_class) const {
  std::vector<std::string> names;
  for (auto s : dataset_spec(three_class).schemes) names.emplace_back(scheme_name(s));
  return names;
}

DatasetSpec Experiment::dataset_spec(bool three_class) const {
  DatasetSpec spec = cfg_.dataset;
  if (!cfg_.dataset_seed_set) spec.seed = derive_seed(cfg_.seed, "dataset");
  if (three_class) {
    spec.schemes = {ModScheme::BPSK, ModScheme::QPSK, ModScheme::PSK8};
    spec.seed = derive_seed(spec.seed, "3class");
  }
  return spec;
}

TrainConfig Experiment::train_config(Regime r) const {
  TrainConfig t = cfg_.train;
  t.seed = derive_seed(cfg_.seed, std::string(regime_name(r)) + ".train");
  t.log = log_;
  return t;
}

Dataset Experiment::load_dataset(std::string_view split, bool three_class) const {
  const fs::path p = dataset_path(split, three_class);
  require_file(p, "synth");
  return load_rfds(p);
}

namespace {

bool is_three_class(Regime r) {
  return r == Regime::classical_3class || r == Regime::autoencoder_3class || r == Regime::ae_classifier_3class;
}

bool is_autoencoder(Regime r) { return r == Regime::autoencoder || r == Regime::autoencoder_3class; }

}  // namespace

ModelGraph Experiment::load_model(Regime r) const {
  const fs::path p = checkpoint_path(r);
  require_file(p, "train");
  const int classes = class_count(is_three_class(r));
  ModelGraph skeleton = build_classifier(classes, 0);
  ModelGraph m = is_autoencoder(r) ? build_autoencoder(skeleton, 0) : skeleton;
  m.load_state(load_checkpoint(p));
  m.set_tag(p.filename().string());
  return m;
}

void Experiment::save_model(Regime r, const ModelGraph& m) const {
  const fs::path p = checkpoint_path(r);
  fs::create_directories(p.parent_path());
  const std::string bytes = encode_checkpoint(m.state());
  write_text(p, bytes);
  ojson j;
  j["regime"] = std::string(regime_name(r));
  j["checkpoint"] = p.filename().string();
  j["checkpoint_hash"] = content_hash(bytes);
  j["parameter_count"] = m.parameter_count();
  j["architecture"] = m.manifest();
  fs::path side = p;
  side.replace_extension(".json");
  write_json(side, j);
}

void Experiment::save_trace(Regime r, const std::string& csv) const { write_text(trace_path(r), csv_preamble() + csv); }

Dataset Experiment::load_adversarial(std::string_view set) const {
  fs::path p = adversarial_prefix(set);
  p += ".adv.rfds";
  require_file(p, "attack");
  return load_rfds(p);
}

void Experiment::save_adversarial(std::string_view set, const AdversarialBatch& batch, Regime crafted_on,
                                  const std::string& evaluated_on) const {
  const fs::path prefix = adversarial_prefix(set);
  fs::create_directories(prefix.parent_path());
  fs::path orig = prefix, adv = prefix, meta = prefix;
  orig += ".orig.rfds";
  adv += ".adv.rfds";
  meta += ".json";
  save_rfds(orig, batch.originals);
  save_rfds(adv, batch.perturbed);
  ojson j;
  j["set"] = std::string(set);
  j["attack"] = batch.config.to_json();
  j["norm"] = "l_inf";
  j["crafted_on"] = checkpoint_path(crafted_on).filename().string();
  j["crafted_on_hash"] = content_hash(read_text(checkpoint_path(crafted_on)));
  j["evaluated_on"] = evaluated_on;
  j["frame_count"] = batch.perturbed.size();
  j["max_linf_distance"] = max_linf_distance(batch.originals, batch.perturbed);
  write_json(meta, j);
}

// ---------------------------------------------------------------------------
// Stages

void Experiment::synth() {
  auto emit = [&](bool three_class) {
    const DatasetSpec spec = dataset_spec(three_class);
    log("synth: " + std::to_string(spec.schemes.size()) + " classes x (" + std::to_string(spec.train_per_class) +
        " train + " + std::to_string(spec.test_per_class) + " test)");
    const DatasetSplit split = build_dataset(spec);
    for (const auto& [name, ds] : {std::pair<std::string, const Dataset*>{"train", &split.train},
                                   std::pair<std::string, const Dataset*>{"test", &split.test}}) {
      const fs::path p = dataset_path(name, three_class);
      fs::create_directories(p.parent_path());
      save_rfds(p, *ds);
      fs::path side = p;
      side += ".json";
      ojson meta = read_json(side);
      write_json(side, meta);
    }
  };
  emit(false);
  if (cfg_.suites.simplex_3class) emit(true);
}

void Experiment::train() {
  const SuiteToggles& s = cfg_.suites;
  auto stage = [&](bool three_class) {
    const Dataset train = load_dataset("train", three_class);
    const Dataset test = load_dataset("test", three_class);
    const int classes = class_count(three_class);
    const Regime classical = three_class ? Regime::classical_3class : Regime::classical;
    const Regime ae = three_class ? Regime::autoencoder_3class : Regime::autoencoder;
    const Regime ae_clf = three_class ? Regime::ae_classifier_3class : Regime::ae_classifier;
    auto init_seed = [&](Regime r) { return derive_seed(cfg_.seed, std::string(regime_name(r)) + ".init"); };

    if (s.classical || three_class) {
      log("train: " + std::string(regime_name(classical)));
      TrainResult r = train_classical(build_classifier(classes, init_seed(classical)), train, test,
                                      train_config(classical));
      save_model(classical, r.model);
      save_trace(classical, r.trace.to_csv());
    }
    if (s.ae) {
      log("train: " + std::string(regime_name(ae)));
      const ModelGraph skeleton = build_classifier(classes, init_seed(ae));
      AeResult a = pretrain_autoencoder(build_autoencoder(skeleton, init_seed(ae)), train, train_config(ae));
      save_model(ae, a.model);
      save_trace(ae, a.trace.to_csv());
      log("train: " + std::string(regime_name(ae_clf)));
      TrainResult r = train_ae_classifier(a.model, build_classifier(classes, init_seed(ae_clf)), train, test,
                                          train_config(ae_clf));
      save_model(ae_clf, r.model);
      save_trace(ae_clf, r.trace.to_csv());
    }
    if (three_class) return;
    if (s.greybox) {
      log("train: surrogate");
      TrainResult r = train_classical(build_classifier(classes, init_seed(Regime::surrogate)), train, test,
                                      train_config(Regime::surrogate));
      save_model(Regime::surrogate, r.model);
      save_trace(Regime::surrogate, r.trace.to_csv());
    }
    if (s.adversarial_training) {
      log("train: adversarial");
      TrainResult r = adversarial_train(build_classifier(classes, init_seed(Regime::adversarial)), train, test,
                                        cfg_.attack, train_config(Regime::adversarial));
      save_model(Regime::adversarial, r.model);
      save_trace(Regime::adversarial, r.trace.to_csv());
    }
  };
  stage(false);
  if (s.simplex_3class) stage(true);

  if (s.classical && s.ae) {
    // Four-series view of the classical and AE-trained traces.
    auto rows = [](const fs::path& p) {
      std::vector<std::vector<std::string>> out;
      std::istringstream in(read_text(p));
      std::string line;
      while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#' || line.rfind("epoch", 0) == 0) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string c;
        while (std::getline(ls, c, ',')) cells.push_back(c);
        out.push_back(cells);
      }
      return out;
    };
    const auto a = rows(trace_path(Regime::classical));
    const auto b = rows(trace_path(Regime::ae_classifier));
    std::ostringstream os;
    os << csv_preamble() << "epoch,classical_clean,classical_adv,ae_clean,ae_adv\n";
    for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
      os << a[i][0] << ',' << a[i][2] << ',' << a[i][3] << ',' << b[i][2] << ',' << b[i][3] << '\n';
    }
    write_text(out() / "traces" / "accuracy_curves.csv", os.str());
  }
}

void Experiment::attack() {
  const SuiteToggles& s = cfg_.suites;
  auto stage = [&](bool three_class) {
    const Dataset test = load_dataset("test", three_class);
    const std::string suffix = three_class ? "_3class" : "";
    const Regime classical = three_class ? Regime::classical_3class : Regime::classical;
    const Regime ae_clf = three_class ? Regime::ae_classifier_3class : Regime::ae_classifier;
    auto whitebox = [&](Regime r) {
      const ModelGraph m = load_model(r);
      const std::string set = "whitebox_" + std::string(regime_name(r));
      log("attack: " + set);
      save_adversarial(set, craft(m, test, cfg_.attack), r, checkpoint_path(r).filename().string());
    };
    if (s.classical || three_class) whitebox(classical);
    if (s.ae) whitebox(ae_clf);
    if (three_class) return;
    if (s.greybox) {
      log("attack: greybox_ae_classifier");
      const ModelGraph surrogate = load_model(Regime::surrogate);
      const ModelGraph victim = load_model(Regime::ae_classifier);
      const GreyboxResult g = craft_greybox(surrogate, victim, test, cfg_.attack);
      save_adversarial("greybox_ae_classifier", g.batch, Regime::surrogate,
                       checkpoint_path(Regime::ae_classifier).filename().string());
    }
    if (s.adversarial_training) whitebox(Regime::adversarial);
  };
  stage(false);
  if (s.simplex_3class) stage(true);
}

void Experiment::eval() {
  const SuiteToggles& s = cfg_.suites;
  const Dataset test = load_dataset("test");
  const auto names = class_names(false);
  const int classes = class_count(false);
  const fs::path dir = out() / "eval";
  ojson acc = ojson::object();

  struct Entry {
    Regime regime;
    std::string label;
    bool enabled;
  };
  const std::vector<Entry> models{{Regime::classical, "classical", s.classical},
                                  {Regime::ae_classifier, "ae_classifier", s.ae},
                                  {Regime::adversarial, "adversarial", s.adversarial_training}};
  std::vector<std::pair<std::string, ModelGraph>> loaded;
  for (const auto& e : models) {
    if (!e.enabled) continue;
    log("eval: " + e.label);
    ModelGraph m = load_model(e.regime);
    const auto clean_pred = predict(m, test);
    const Dataset adv = load_adversarial("whitebox_" + e.label);
    const auto adv_pred = predict(m, adv);
    const auto clean_cm = confusion_matrix(test.labels, clean_pred, classes);
    const auto adv_cm = confusion_matrix(test.labels, adv_pred, classes);
    write_text(dir / ("confusion_" + e.label + "_clean.csv"), csv_preamble() + confusion_csv(clean_cm, names));
    write_text(dir / ("confusion_" + e.label + "_fgsm.csv"), csv_preamble() + confusion_csv(adv_cm, names));
    acc[e.label] = {{"clean_accuracy", accuracy(clean_pred, test.labels)},
                    {"adversarial_accuracy", accuracy(adv_pred, test.labels)},
                    {"clean_mean_diagonal", mean_diagonal(clean_cm)},
                    {"adversarial_mean_diagonal", mean_diagonal(adv_cm)}};
    loaded.emplace_back(e.label, std::move(m));
  }
  if (s.greybox) {
    const ModelGraph surrogate = load_model(Regime::surrogate);
    const Dataset adv = load_adversarial("greybox_ae_classifier");
    const ModelGraph* victim = nullptr;
    for (const auto& [label, m] : loaded) {
      if (label == "ae_classifier") victim = &m;
    }
    const auto pred = predict(*victim, adv);
    const auto cm = confusion_matrix(test.labels, pred, classes);
    write_text(dir / "confusion_ae_classifier_greybox.csv", csv_preamble() + confusion_csv(cm, names));
    acc["surrogate"] = {{"clean_accuracy", accuracy(surrogate, test)},
                        {"adversarial_accuracy", accuracy(surrogate, adv)}};
    acc["ae_classifier"]["greybox_accuracy"] = accuracy(pred, test.labels);
  }

  // White-box accuracy over the epsilon sweep.
  {
    std::ostringstream os;
    os << csv_preamble() << "epsilon";
    for (const auto& [label, _] : loaded) os << ',' << label;
    os << '\n';
    std::vector<std::vector<double>> rows;
    for (float eps : cfg_.epsilon_sweep) {
      log("eval: epsilon " + num(eps));
      AttackConfig a = cfg_.attack;
      a.epsilon = eps;
      if (a.steps > 1) a.step_size = eps / static_cast<float>(a.steps);
      os << num(eps);
      for (const auto& [label, m] : loaded) os << ',' << num(accuracy(m, craft(m, test, a).perturbed));
      os << '\n';
    }
    write_text(dir / "epsilon_sweep.csv", os.str());
  }

  if (s.simplex_3class) {
    const Dataset test3 = load_dataset("test", true);
    const auto names3 = class_names(true);
    std::vector<Regime> simplex{Regime::classical_3class};
    if (s.ae) simplex.push_back(Regime::ae_classifier_3class);
    for (Regime r : simplex) {
      const ModelGraph m = load_model(r);
      const std::string label(regime_name(r));
      for (const auto& [kind, data] : {std::pair<std::string, Dataset>{"legit", test3},
                                       std::pair<std::string, Dataset>{"adv", load_adversarial("whitebox_" + label)}}) {
        const Tensor probs = predict_proba(m, data);
        std::ostringstream os;
        os << csv_preamble() << names3[0] << ',' << names3[1] << ',' << names3[2] << '\n';
        for (std::size_t i = 0; i < data.size(); ++i) {
          os << num(probs[i * 3]) << ',' << num(probs[i * 3 + 1]) << ',' << num(probs[i * 3 + 2]) << '\n';
        }
        write_text(dir / ("simplex_" + label + "_" + kind + ".csv"), os.str());
      }
      acc[label] = {{"clean_accuracy", accuracy(m, test3)},
                    {"adversarial_accuracy", accuracy(m, load_adversarial("whitebox_" + label))}};
    }
  }
  write_json(dir / "eval.json", ojson{{"accuracy", acc}});
}

void Experiment::kstest() {
  const SuiteToggles& s = cfg_.suites;
  const Dataset test = load_dataset("test");
  const auto names = class_names(false);
  const int classes = class_count(false);
  const fs::path dir = out() / "ks";
  ojson summary = ojson::object();
  std::vector<Regime> targets;
  if (s.classical) targets.push_back(Regime::classical);
  if (s.ae) targets.push_back(Regime::ae_classifier);
  for (Regime r : targets) {
    const std::string label(regime_name(r));
    log("kstest: " + label);
    const ModelGraph m = load_model(r);
    const auto legit = collect_outputs(m, test, OutputSource::legitimate);
    const auto adv = collect_outputs(m, load_adversarial("whitebox_" + label), OutputSource::adversarial);
    const KSReport rep = run_suite(legit, adv, classes, cfg_.ks.sample_size, derive_seed(cfg_.seed, "ks"));
    write_text(dir / ("ks_" + label + ".csv"), csv_preamble() + rep.to_csv(names));

    std::ostringstream draws;
    draws << csv_preamble() << "draw,class,instance,D,p_value,n,m\n";
    double sampled_sum = 0.0;
    int sampled_count = 0, control_pass = 0, control_count = 0;
    for (int d = 0; d < cfg_.ks.control_draws; ++d) {
      const KSReport dr = run_suite(legit, adv, classes, cfg_.ks.sample_size,
                                    derive_seed(cfg_.seed, "ks.draw." + std::to_string(d)));
      for (const auto& c : dr.cells) {
        if (c.instance == KsInstance::full_legit_vs_adv) continue;
        draws << d << ',' << names[static_cast<std::size_t>(c.cls)] << ',' << instance_name(c.instance) << ','
              << num(c.result.statistic) << ',' << num(c.result.p_value) << ',' << c.result.n << ',' << c.result.m
              << '\n';
        if (!c.result.available) continue;
        if (c.instance == KsInstance::sampled_legit_vs_adv) {
          sampled_sum += c.result.p_value;
          ++sampled_count;
        } else {
          ++control_count;
          if (c.result.p_value > 0.05) ++control_pass;
        }
      }
    }
    write_text(dir / ("ks_draws_" + label + ".csv"), draws.str());

    ojson full = ojson::object();
    for (int c = 0; c < classes; ++c) {
      const KSResult& k = rep.at(c, KsInstance::full_legit_vs_adv);
      full[names[static_cast<std::size_t>(c)]] =
          k.available ? ojson{{"D", k.statistic}, {"p_value", k.p_value}, {"n", k.n}, {"m", k.m}}
                      : ojson{{"available", false}, {"n", k.n}, {"m", k.m}};
    }
    summary[label] = {{"reduction", rep.reduction},
                      {"full_legit_vs_adv", full},
                      {"mean_sampled_p_value", sampled_count ? sampled_sum / sampled_count : std::nan("")},
                      {"sampled_cells", sampled_count},
                      {"control_pass_fraction",
                       control_count ? static_cast<double>(control_pass) / control_count : std::nan("")},
                      {"control_cells", control_count}};
  }
  write_json(dir / "ks.json", ojson{{"ks", summary}});
}

void Experiment::report() {
  const fs::path eval_json = out() / "eval" / "eval.json";
  require_file(eval_json, "eval");
  ojson j;
  j["config"] = cfg_.to_json();
  j["accuracy"] = read_json(eval_json).at("accuracy");
  if (cfg_.suites.ks_suite) {
    const fs::path ks_json = out() / "ks" / "ks.json";
    require_file(ks_json, "kstest");
    j["ks"] = read_json(ks_json).at("ks");
  }
  if (cfg_.suites.ae) {
    const fs::path t = trace_path(Regime::autoencoder);
    require_file(t, "train");
    std::istringstream in(read_text(t));
    std::string line, first, last;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#' || line.rfind("epoch", 0) == 0) continue;
      if (first.empty()) first = line;
      last = line;
    }
    auto mse = [](const std::string& row) { return std::stod(row.substr(row.rfind(',') + 1)); };
    j["autoencoder"] = {{"initial_mse", mse(first)}, {"final_mse", mse(last)}};
  }
  write_json(report_path(), j);
  log("report: " + report_path().string());
}

}  // namespace rfadv
