#include "rfadv/training.hpp"

#include <chrono>
#include <cmath>
#include <numeric>
#include <sstream>

#include "rfadv/error.hpp"
#include "rfadv/graph.hpp"
#include "rfadv/metrics.hpp"

namespace rfadv {

namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(9);
  os << v;
  return os.str();
}

void shuffle(std::vector<std::size_t>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(v[i - 1], v[j]);
  }
}

void apply_regularization(ModelGraph& model, float weight_decay) {
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    if (model.layers()[i].kind != LayerKind::dense) continue;
    model.param("layer" + std::to_string(i) + ".weight").weight_decay = weight_decay;
  }
}

std::vector<Parameter*> trainable(ModelGraph& model) {
  std::vector<Parameter*> out;
  for (Parameter* p : model.param_ptrs()) {
    if (!p->frozen) out.push_back(p);
  }
  return out;
}

void check_finite(double loss, const char* regime, int epoch, std::size_t batch) {
  if (!std::isfinite(loss)) {
    throw TrainingDiverged(std::string(regime) + ": loss became " + fmt_double(loss) + " at epoch " +
                           std::to_string(epoch) + ", batch " + std::to_string(batch));
  }
}

void check_data(const Dataset& train, const ModelGraph& model, const char* regime) {
  if (train.size() == 0) throw InvalidInput(std::string(regime) + ": training set is empty");
  if (train.vector_len != model.input_len()) {
    throw InvalidInput(std::string(regime) + ": data vectors have length " + std::to_string(train.vector_len) +
                       ", model expects " + std::to_string(model.input_len()));
  }
}

EpochRecord evaluate_epoch(const ModelGraph& model, const Dataset& eval_rows, float epsilon) {
  EpochRecord r;
  r.clean_acc = accuracy(model, eval_rows);
  AttackConfig atk;
  atk.epsilon = epsilon;
  r.adv_acc = accuracy(model, craft(model, eval_rows, atk).perturbed);
  return r;
}

/// Shared supervised loop; `augment` (optional) turns on 1:1 FGSM augmentation.
TrainResult supervised(ModelGraph model, const Dataset& train, const Dataset& eval, const TrainConfig& cfg,
                       const AttackConfig* augment, const char* regime) {
  cfg.validate();
  check_data(train, model, regime);
  if (model.num_classes() < 2) throw InvalidInput(std::string(regime) + ": model is not a classifier");
  for (int y : train.labels) {
    if (y < 0 || y >= model.num_classes()) throw InvalidInput(std::string(regime) + ": label out of range for model");
  }
  apply_regularization(model, cfg.weight_decay);
  AdamConfig adam_cfg = cfg.adam;
  adam_cfg.learning_rate = cfg.learning_rate;
  Adam adam(trainable(model), adam_cfg);
  adam.zero_grad();

  std::mt19937_64 order_rng(cfg.seed);
  std::mt19937_64 dropout_rng(cfg.seed ^ 0xD50F0000D50Full);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const Dataset eval_rows = eval.head(static_cast<std::size_t>(cfg.eval_subset));
  model.set_trained(true);

  TrainResult result;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle(order, order_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      Tensor x = train.batch(idx);
      std::vector<int> labels = train.batch_labels(idx);
      if (augment != nullptr) {
        const Tensor adv = fgsm(model, x, labels, *augment, start);
        const std::size_t n = idx.size();
        std::vector<float> both(x.storage());
        both.insert(both.end(), adv.data().begin(), adv.data().end());
        x = Tensor({static_cast<int>(2 * n), 1, train.vector_len}, std::move(both));
        const std::vector<int> copy = labels;
        labels.insert(labels.end(), copy.begin(), copy.end());
      }
      Graph g;
      ModelGraph::ForwardOptions opt;
      opt.training = true;
      opt.rng = &dropout_rng;
      Var logits = model.forward(g, g.input(std::move(x)), opt);
      Var loss = ops::softmax_cross_entropy(logits, labels);
      const double lv = loss.value()[0];
      check_finite(lv, regime, epoch, batches);
      g.backward(loss);
      adam.step();
      adam.zero_grad();
      loss_sum += lv;
      ++batches;
    }
    EpochRecord rec = evaluate_epoch(model, eval_rows, cfg.trace_epsilon);
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(batches);
    result.trace.records.push_back(rec);
    if (cfg.log) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::ostringstream os;
      os.precision(4);
      os << regime << " epoch " << epoch << "/" << cfg.epochs << " loss " << rec.train_loss << " clean "
         << rec.clean_acc << " adv " << rec.adv_acc << " (" << secs << " s)";
      cfg.log(os.str());
    }
  }
  result.model = std::move(model);
  return result;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw InvalidInput("train: epochs must be >= 1");
  if (batch_size < 1) throw InvalidInput("train: batch_size must be >= 1");
  if (!(learning_rate > 0.0f)) throw InvalidInput("train: learning_rate must be > 0");
  if (weight_decay < 0.0f) throw InvalidInput("train: weight_decay must be >= 0");
  if (eval_subset < 1) throw InvalidInput("train: eval_subset must be >= 1");
}

std::string TrainTrace::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_loss,clean_acc,adv_acc\n";
  for (const auto& r : records) {
    os << r.epoch << ',' << fmt_double(r.train_loss) << ',' << fmt_double(r.clean_acc) << ','
       << fmt_double(r.adv_acc) << '\n';
  }
  return os.str();
}

std::string AeTrace::to_csv() const {
  std::ostringstream os;
  os << "epoch,train_mse,eval_mse\n";
  os << 0 << ",," << fmt_double(initial_mse) << '\n';
  for (const auto& r : records) os << r.epoch << ',' << fmt_double(r.train_mse) << ',' << fmt_double(r.eval_mse) << '\n';
  return os.str();
}

TrainResult train_classical(ModelGraph model, const Dataset& train, const Dataset& eval, const TrainConfig& cfg) {
  return supervised(std::move(model), train, eval, cfg, nullptr, "classical");
}

TrainResult adversarial_train(ModelGraph model, const Dataset& train, const Dataset& eval,
                              const AttackConfig& attack, const TrainConfig& cfg) {
  attack.validate();
  return supervised(std::move(model), train, eval, cfg, &attack, "adversarial");
}

TrainResult train_ae_classifier(const ModelGraph& autoencoder, const ModelGraph& fresh_classifier,
                                const Dataset& train, const Dataset& eval, const TrainConfig& cfg) {
  if (!autoencoder.trained()) throw InvalidInput("train_ae_classifier: autoencoder has not been pretrained");
  ModelGraph clf = transfer_weights(autoencoder, fresh_classifier);
  return supervised(std::move(clf), train, eval, cfg, nullptr, "ae_classifier");
}

double reconstruction_mse(const ModelGraph& autoencoder, const Dataset& data, int chunk) {
  double total = 0.0;
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(chunk));
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor x = data.batch(idx);
    const Tensor y = autoencoder.run(x);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = static_cast<double>(y[i]) - x[i];
      total += d * d;
    }
  }
  return total / static_cast<double>(data.size() * static_cast<std::size_t>(data.vector_len));
}

AeResult pretrain_autoencoder(ModelGraph autoencoder, const Dataset& train, const TrainConfig& cfg) {
  cfg.validate();
  check_data(train, autoencoder, "autoencoder");
  if (autoencoder.kind() != ModelKind::autoencoder) throw InvalidInput("pretrain_autoencoder: not an autoencoder");
  Adam adam(trainable(autoencoder), AdamConfig{cfg.learning_rate, cfg.adam.beta1, cfg.adam.beta2, cfg.adam.epsilon});
  adam.zero_grad();
  std::mt19937_64 order_rng(cfg.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const Dataset monitor = train.head(static_cast<std::size_t>(cfg.eval_subset));

  AeResult result;
  result.trace.initial_mse = reconstruction_mse(autoencoder, monitor);
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    shuffle(order, order_rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                   order.begin() + static_cast<std::ptrdiff_t>(end));
      Graph g;
      Var x = g.input(train.batch(idx));
      Var recon = autoencoder.forward(g, x, {});
      Var loss = ops::mse(recon, x);
      const double lv = loss.value()[0];
      check_finite(lv, "autoencoder", epoch, batches);
      g.backward(loss);
      adam.step();
      adam.zero_grad();
      loss_sum += lv;
      ++batches;
    }
    AeEpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse = loss_sum / static_cast<double>(batches);
    rec.eval_mse = reconstruction_mse(autoencoder, monitor);
    result.trace.records.push_back(rec);
    if (cfg.log) {
      const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      std::ostringstream os;
      os.precision(4);
      os << "autoencoder epoch " << epoch << "/" << cfg.epochs << " mse " << rec.train_mse << " monitor "
         << rec.eval_mse << " (" << secs << " s)";
      cfg.log(os.str());
    }
  }
  autoencoder.set_trained(true);
  result.model = std::move(autoencoder);
  return result;
}

}  // namespace rfadv
