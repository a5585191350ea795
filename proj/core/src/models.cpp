#include "rfadv/models.hpp"

#include <cmath>

#include "rfadv/error.hpp"

namespace rfadv {

std::string_view layer_kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv1d: return "conv1d";
    case LayerKind::maxpool: return "maxpool";
    case LayerKind::relu: return "relu";
    case LayerKind::dense: return "dense";
    case LayerKind::dropout: return "dropout";
    case LayerKind::flatten: return "flatten";
    case LayerKind::upsample: return "upsample";
    case LayerKind::deconv1d: return "deconv1d";
  }
  return "?";
}

namespace {

Tensor uniform_init(std::vector<int> shape, int fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const float bound = std::sqrt(6.0f / static_cast<float>(std::max(fan_in, 1)));
  std::uniform_real_distribution<float> u(-bound, bound);
  for (float& v : t.storage()) v = u(rng);
  return t;
}

std::string layer_prefix(int index) { return "layer" + std::to_string(index); }

}  // namespace

ModelGraph::ModelGraph(ModelKind kind, std::vector<LayerSpec> layers, int input_len, int num_classes,
                       std::uint64_t seed, int encoder_layers)
    : kind_(kind),
      layers_(std::move(layers)),
      input_len_(input_len),
      num_classes_(num_classes),
      encoder_layers_(encoder_layers),
      seed_(seed) {
  if (input_len_ <= 0) throw InvalidInput("model input length must be positive");
  std::mt19937_64 rng(seed);
  layer_param_index_.resize(layers_.size());
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    const std::string prefix = layer_prefix(static_cast<int>(i));
    auto add = [&](const std::string& suffix, Tensor t) {
      layer_param_index_[i].push_back(static_cast<int>(params_.size()));
      params_.emplace_back(prefix + "." + suffix, std::move(t));
    };
    switch (l.kind) {
      case LayerKind::conv1d:
        add("weight", uniform_init({l.out_channels, l.in_channels, l.kernel}, l.in_channels * l.kernel, rng));
        add("bias", Tensor({l.out_channels}));
        break;
      case LayerKind::deconv1d:
        add("weight", uniform_init({l.out_channels, l.in_channels, l.kernel}, l.out_channels * l.kernel, rng));
        add("bias", Tensor({l.in_channels}));
        break;
      case LayerKind::dense:
        add("weight", uniform_init({l.units, l.in_units}, l.in_units, rng));
        add("bias", Tensor({l.units}));
        break;
      default:
        break;
    }
  }
  // Validates shape compatibility of consecutive layers.
  layer_output_shapes();
}

Parameter& ModelGraph::param(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw InvalidInput("model has no parameter named " + name);
}

const Parameter& ModelGraph::param(const std::string& name) const {
  return const_cast<ModelGraph*>(this)->param(name);
}

std::vector<Parameter*> ModelGraph::param_ptrs() {
  std::vector<Parameter*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

std::size_t ModelGraph::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

std::vector<const Parameter*> ModelGraph::layer_params(int index) const {
  std::vector<const Parameter*> out;
  for (int k : layer_param_index_.at(static_cast<std::size_t>(index))) out.push_back(&params_[static_cast<std::size_t>(k)]);
  return out;
}

template <class Bind>
Var ModelGraph::run_layers(Graph&, Var x, const ForwardOptions& opt, Bind&& bind) const {
  if (x.shape().size() != 3 || x.shape()[1] != 1 || x.shape()[2] != input_len_) {
    throw InvalidInput("model expects input [N, 1, " + std::to_string(input_len_) + "], got " +
                       shape_string(x.shape()));
  }
  const int last = opt.stop_after < 0 ? static_cast<int>(layers_.size()) - 1 : opt.stop_after;
  Var h = x;
  for (int i = 0; i <= last; ++i) {
    const LayerSpec& l = layers_[static_cast<std::size_t>(i)];
    const auto& pidx = layer_param_index_[static_cast<std::size_t>(i)];
    switch (l.kind) {
      case LayerKind::conv1d:
        h = ops::conv1d(h, bind(pidx[0]), bind(pidx[1]));
        break;
      case LayerKind::deconv1d:
        h = ops::deconv1d(h, bind(pidx[0]), bind(pidx[1]));
        break;
      case LayerKind::dense:
        h = ops::dense(h, bind(pidx[0]), bind(pidx[1]));
        break;
      case LayerKind::maxpool:
        h = ops::maxpool1d(h, l.factor);
        break;
      case LayerKind::upsample:
        h = ops::upsample1d(h, l.factor);
        break;
      case LayerKind::relu:
        h = ops::relu(h);
        break;
      case LayerKind::flatten:
        h = ops::flatten(h);
        break;
      case LayerKind::dropout:
        if (opt.training) {
          if (opt.rng == nullptr) throw InvalidInput("training-mode forward needs an rng for dropout");
          h = ops::dropout(h, l.rate, *opt.rng, true);
        }
        break;
    }
  }
  return h;
}

Var ModelGraph::forward(Graph& g, Var x, const ForwardOptions& opt) {
  return run_layers(g, x, opt, [&](int k) { return g.parameter(params_[static_cast<std::size_t>(k)]); });
}

Var ModelGraph::forward_const(Graph& g, Var x, const ForwardOptions& opt) const {
  return run_layers(g, x, opt, [&](int k) { return g.input(params_[static_cast<std::size_t>(k)].value, false); });
}

Tensor ModelGraph::run(const Tensor& x) const {
  Graph g;
  return forward_const(g, g.input(x), {}).value();
}

Tensor ModelGraph::predict_proba(const Tensor& x) const {
  Graph g;
  Var logits = forward_const(g, g.input(x), {});
  return ops::softmax(logits).value();
}

Tensor ModelGraph::encode(const Tensor& x) const {
  if (encoder_layers_ <= 0) throw InvalidInput("model has no encoder section");
  Graph g;
  ForwardOptions opt;
  opt.stop_after = encoder_layers_ - 1;
  return forward_const(g, g.input(x), opt).value();
}

std::vector<NamedTensor> ModelGraph::state() const {
  std::vector<NamedTensor> out;
  for (const auto& p : params_) out.push_back({p.name, p.value});
  return out;
}

void ModelGraph::load_state(const std::vector<NamedTensor>& state) {
  if (state.size() != params_.size()) {
    throw InvalidInput("checkpoint holds " + std::to_string(state.size()) + " tensors, model expects " +
                       std::to_string(params_.size()));
  }
  for (std::size_t i = 0; i < state.size(); ++i) {
    auto& p = params_[i];
    if (state[i].name != p.name || state[i].tensor.shape() != p.value.shape()) {
      throw InvalidInput("checkpoint tensor " + state[i].name + shape_string(state[i].tensor.shape()) +
                         " does not match model parameter " + p.name + shape_string(p.value.shape()));
    }
    p.value = state[i].tensor;
    p.zero_grad();
  }
  trained_ = true;
}

nlohmann::ordered_json ModelGraph::manifest() const {
  nlohmann::ordered_json j;
  j["kind"] = kind_ == ModelKind::classifier ? "classifier" : kind_ == ModelKind::autoencoder ? "autoencoder" : "custom";
  j["input_len"] = input_len_;
  j["num_classes"] = num_classes_;
  j["encoder_layers"] = encoder_layers_;
  j["seed"] = seed_;
  auto& arr = j["layers"] = nlohmann::ordered_json::array();
  const auto shapes = layer_output_shapes();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    nlohmann::ordered_json e;
    e["kind"] = std::string(layer_kind_name(l.kind));
    switch (l.kind) {
      case LayerKind::conv1d:
      case LayerKind::deconv1d:
        e["in_channels"] = l.in_channels;
        e["out_channels"] = l.out_channels;
        e["kernel"] = l.kernel;
        break;
      case LayerKind::dense:
        e["in_units"] = l.in_units;
        e["units"] = l.units;
        break;
      case LayerKind::maxpool:
      case LayerKind::upsample:
        e["factor"] = l.factor;
        break;
      case LayerKind::dropout:
        e["rate"] = l.rate;
        break;
      default:
        break;
    }
    std::vector<int> s(shapes[i].begin() + 1, shapes[i].end());
    e["output_shape"] = s;
    arr.push_back(std::move(e));
  }
  return j;
}

std::vector<std::vector<int>> ModelGraph::layer_output_shapes() const {
  std::vector<std::vector<int>> out;
  std::vector<int> s{1, 1, input_len_};
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    auto fail = [&](const std::string& why) {
      throw InvalidInput("layer " + std::to_string(i) + " (" + std::string(layer_kind_name(l.kind)) +
                         ") cannot accept " + shape_string(s) + ": " + why);
    };
    switch (l.kind) {
      case LayerKind::conv1d:
        if (s.size() != 3 || s[1] != l.in_channels) fail("channel mismatch");
        if (l.kernel % 2 != 1) fail("kernel must be odd");
        s[1] = l.out_channels;
        break;
      case LayerKind::deconv1d:
        if (s.size() != 3 || s[1] != l.out_channels) fail("channel mismatch");
        if (l.kernel % 2 != 1) fail("kernel must be odd");
        s[1] = l.in_channels;
        break;
      case LayerKind::maxpool:
        if (s.back() % l.factor != 0) fail("length not divisible by window");
        s.back() /= l.factor;
        break;
      case LayerKind::upsample:
        s.back() *= l.factor;
        break;
      case LayerKind::flatten: {
        int prod = 1;
        for (std::size_t d = 1; d < s.size(); ++d) prod *= s[d];
        s = {s[0], prod};
        break;
      }
      case LayerKind::dense:
        if (s.size() != 2 || s[1] != l.in_units) fail("unit mismatch");
        s[1] = l.units;
        break;
      case LayerKind::relu:
      case LayerKind::dropout:
        break;
    }
    out.push_back(s);
  }
  return out;
}

namespace {

std::vector<LayerSpec> encoder_specs(const ArchConfig& arch) {
  std::vector<LayerSpec> layers;
  int in = 1;
  for (int c : arch.channels) {
    layers.push_back({.kind = LayerKind::conv1d, .in_channels = in, .out_channels = c, .kernel = arch.kernel});
    layers.push_back({.kind = LayerKind::relu});
    layers.push_back({.kind = LayerKind::maxpool, .factor = 2});
    in = c;
  }
  layers.push_back({.kind = LayerKind::conv1d, .in_channels = in, .out_channels = 1, .kernel = 1});
  return layers;
}

}  // namespace

int bottleneck_width(const ArchConfig& arch) {
  int len = arch.input_len;
  for (std::size_t i = 0; i < arch.channels.size(); ++i) len /= 2;
  return len;
}

ModelGraph build_classifier(int num_classes, std::uint64_t seed, const ArchConfig& arch) {
  if (num_classes < 2) throw InvalidInput("build_classifier: need at least 2 classes");
  if (arch.channels.empty()) throw InvalidInput("build_classifier: need at least one conv block");
  auto layers = encoder_specs(arch);
  const int encoder = static_cast<int>(layers.size());
  const int width = bottleneck_width(arch);
  layers.push_back({.kind = LayerKind::flatten});
  layers.push_back({.kind = LayerKind::dense, .in_units = width, .units = arch.hidden_units});
  layers.push_back({.kind = LayerKind::relu});
  layers.push_back({.kind = LayerKind::dropout, .rate = arch.dropout});
  layers.push_back({.kind = LayerKind::dense, .in_units = arch.hidden_units, .units = num_classes});
  return ModelGraph(ModelKind::classifier, std::move(layers), arch.input_len, num_classes, seed, encoder);
}

ModelGraph build_autoencoder(const ModelGraph& classifier, std::uint64_t seed) {
  const int encoder = classifier.encoder_layers();
  if (classifier.kind() != ModelKind::classifier || encoder <= 0) {
    throw InvalidInput("build_autoencoder: expected a classifier with an encoder section");
  }
  std::vector<LayerSpec> layers(classifier.layers().begin(), classifier.layers().begin() + encoder);
  for (int i = encoder - 1; i >= 0; --i) {
    LayerSpec l = classifier.layers()[static_cast<std::size_t>(i)];
    switch (l.kind) {
      case LayerKind::conv1d: l.kind = LayerKind::deconv1d; break;
      case LayerKind::maxpool: l.kind = LayerKind::upsample; break;
      case LayerKind::relu: break;
      default:
        throw InvalidInput("build_autoencoder: encoder layer " + std::to_string(i) +
                           " has no mirror (" + std::string(layer_kind_name(l.kind)) + ")");
    }
    layers.push_back(l);
  }
  return ModelGraph(ModelKind::autoencoder, std::move(layers), classifier.input_len(), 0, seed, encoder);
}

ModelGraph transfer_weights(const ModelGraph& autoencoder, const ModelGraph& classifier) {
  const int encoder = classifier.encoder_layers();
  if (autoencoder.kind() != ModelKind::autoencoder || encoder <= 0 || autoencoder.encoder_layers() != encoder ||
      autoencoder.input_len() != classifier.input_len()) {
    throw InvalidInput("transfer_weights: autoencoder encoder and classifier front do not match");
  }
  for (int i = 0; i < encoder; ++i) {
    if (!(autoencoder.layers()[static_cast<std::size_t>(i)] == classifier.layers()[static_cast<std::size_t>(i)])) {
      throw InvalidInput("transfer_weights: layer " + std::to_string(i) + " differs between encoder and classifier");
    }
  }
  ModelGraph out = classifier;
  for (int i = 0; i < encoder; ++i) {
    const auto src = autoencoder.layer_params(i);
    for (const Parameter* p : src) {
      Parameter& dst = out.param(p->name);
      dst.value = p->value;
      dst.frozen = true;
      dst.zero_grad();
    }
  }
  out.set_trained(false);
  return out;
}

}  // namespace rfadv
