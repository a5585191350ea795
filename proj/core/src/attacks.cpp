#include "rfadv/attacks.hpp"

#include <cmath>
#include <limits>
#include <numeric>

#include "rfadv/error.hpp"
#include "rfadv/graph.hpp"
#include "rfadv/metrics.hpp"
#include "format.hpp"

namespace rfadv {

std::string_view targeting_name(Targeting t) {
  switch (t) {
    case Targeting::untargeted: return "untargeted";
    case Targeting::targeted: return "targeted";
    case Targeting::random_target: return "random_target";
  }
  return "?";
}

Targeting parse_targeting(std::string_view name) {
  for (Targeting t : {Targeting::untargeted, Targeting::targeted, Targeting::random_target}) {
    if (name == targeting_name(t)) return t;
  }
  throw InvalidInput("unknown targeting mode '" + std::string(name) + "'");
}

void AttackConfig::validate() const {
  if (!(epsilon >= 0.0f) || !std::isfinite(epsilon)) throw InvalidInput("attack: epsilon must be finite and >= 0");
  if (steps < 1) throw InvalidInput("attack: steps must be >= 1");
  if (steps > 1 && !(step_size > 0.0f)) throw InvalidInput("attack: step_size must be > 0 when steps > 1");
}

nlohmann::ordered_json AttackConfig::to_json() const {
  nlohmann::ordered_json j;
  j["epsilon"] = detail::tidy(epsilon);
  j["norm"] = "l_inf";
  j["steps"] = steps;
  j["step_size"] = detail::tidy(step_size);
  j["targeting"] = std::string(targeting_name(targeting));
  j["target"] = target;
  j["seed"] = seed;
  return j;
}

namespace {

void require_trained(const ModelGraph& model) {
  if (!model.trained()) throw InvalidInput("attack: model is untrained");
  if (model.num_classes() < 2) throw InvalidInput("attack: model is not a classifier");
}

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

float sign_of(float g) { return g > 0.0f ? 1.0f : (g < 0.0f ? -1.0f : 0.0f); }

}  // namespace

float clip_to_ball(float candidate, float origin, float eps) {
  const double lo = static_cast<double>(origin) - eps;
  const double hi = static_cast<double>(origin) + eps;
  float c = candidate;
  if (static_cast<double>(c) > hi) {
    c = static_cast<float>(hi);
    while (static_cast<double>(c) > hi) c = std::nextafter(c, -std::numeric_limits<float>::infinity());
  } else if (static_cast<double>(c) < lo) {
    c = static_cast<float>(lo);
    while (static_cast<double>(c) < lo) c = std::nextafter(c, std::numeric_limits<float>::infinity());
  }
  return c;
}

Tensor input_gradient(const ModelGraph& model, const Tensor& x, const std::vector<int>& labels) {
  Graph g;
  Var in = g.input(x, true);
  Var logits = model.forward_const(g, in, {});
  Var loss = ops::softmax_cross_entropy(logits, labels, Reduction::sum);
  g.backward(loss);
  return in.grad();
}

std::vector<int> attack_labels(const AttackConfig& cfg, const std::vector<int>& true_labels, int num_classes,
                               std::uint64_t first_row) {
  std::vector<int> out(true_labels.size());
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    switch (cfg.targeting) {
      case Targeting::untargeted:
        out[i] = true_labels[i];
        break;
      case Targeting::targeted:
        if (cfg.target < 0 || cfg.target >= num_classes) throw InvalidInput("attack: target class out of range");
        out[i] = cfg.target;
        break;
      case Targeting::random_target: {
        const auto offset = 1 + static_cast<int>(mix(cfg.seed ^ mix(first_row + i)) % static_cast<std::uint64_t>(num_classes - 1));
        out[i] = (true_labels[i] + offset) % num_classes;
        break;
      }
    }
  }
  return out;
}

namespace {

Tensor signed_step(const ModelGraph& model, const Tensor& origin, const Tensor& current, const std::vector<int>& labels,
                   float step, float eps, float direction) {
  const Tensor grad = input_gradient(model, current, labels);
  Tensor next = current;
  for (std::size_t i = 0; i < next.size(); ++i) {
    const float moved = current[i] + direction * step * sign_of(grad[i]);
    next[i] = clip_to_ball(moved, origin[i], eps);
  }
  return next;
}

}  // namespace

Tensor fgsm(const ModelGraph& model, const Tensor& x, const std::vector<int>& labels, const AttackConfig& cfg,
            std::uint64_t first_row) {
  require_trained(model);
  cfg.validate();
  const auto targets = attack_labels(cfg, labels, model.num_classes(), first_row);
  const float direction = cfg.targeting == Targeting::untargeted ? 1.0f : -1.0f;
  if (cfg.epsilon == 0.0f) return x;
  return signed_step(model, x, x, targets, cfg.epsilon, cfg.epsilon, direction);
}

std::vector<float> fgsm(const ModelGraph& model, const std::vector<float>& x, int label, const AttackConfig& cfg) {
  Tensor t({1, 1, static_cast<int>(x.size())}, x);
  return fgsm(model, t, {label}, cfg).storage();
}

Tensor bim(const ModelGraph& model, const Tensor& x, const std::vector<int>& labels, const AttackConfig& cfg,
           std::uint64_t first_row) {
  require_trained(model);
  cfg.validate();
  const auto targets = attack_labels(cfg, labels, model.num_classes(), first_row);
  const float direction = cfg.targeting == Targeting::untargeted ? 1.0f : -1.0f;
  const float step = cfg.steps == 1 && cfg.step_size <= 0.0f ? cfg.epsilon : cfg.step_size;
  Tensor cur = x;
  if (cfg.epsilon == 0.0f) return cur;
  for (int s = 0; s < cfg.steps; ++s) cur = signed_step(model, x, cur, targets, step, cfg.epsilon, direction);
  return cur;
}

AdversarialBatch craft(const ModelGraph& model, const Dataset& data, const AttackConfig& cfg, int chunk) {
  require_trained(model);
  cfg.validate();
  if (data.vector_len != model.input_len()) throw InvalidInput("attack: data and model input lengths differ");
  AdversarialBatch out;
  out.originals = data;
  out.perturbed = data;
  out.true_labels = data.labels;
  out.attack_labels = attack_labels(cfg, data.labels, model.num_classes());
  out.crafted_on = model.tag();
  out.config = cfg;
  out.perturbed.meta.split = data.meta.split + "_adv";
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(chunk));
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor x = data.batch(idx);
    const auto labels = data.batch_labels(idx);
    const Tensor adv = cfg.steps == 1 ? fgsm(model, x, labels, cfg, start) : bim(model, x, labels, cfg, start);
    std::copy(adv.data().begin(), adv.data().end(), out.perturbed.row(start));
  }
  return out;
}

GreyboxResult craft_greybox(const ModelGraph& surrogate, const ModelGraph& victim, const Dataset& data,
                            const AttackConfig& cfg) {
  if (surrogate.input_len() != victim.input_len()) {
    throw InvalidInput("craft_greybox: surrogate input length " + std::to_string(surrogate.input_len()) +
                       " differs from victim " + std::to_string(victim.input_len()));
  }
  if (surrogate.num_classes() != victim.num_classes()) throw InvalidInput("craft_greybox: class counts differ");
  GreyboxResult r;
  r.batch = craft(surrogate, data, cfg);
  r.victim_accuracy = accuracy(victim, r.batch.perturbed);
  return r;
}

double max_linf_distance(const Dataset& originals, const Dataset& perturbed) {
  if (originals.frames.size() != perturbed.frames.size()) throw InvalidInput("max_linf_distance: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < originals.frames.size(); ++i) {
    worst = std::max(worst, std::abs(static_cast<double>(perturbed.frames[i]) - originals.frames[i]));
  }
  return worst;
}

}  // namespace rfadv
