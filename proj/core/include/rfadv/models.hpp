#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rfadv/checkpoint.hpp"
#include "rfadv/graph.hpp"
#include "rfadv/tensor.hpp"

namespace rfadv {

enum class LayerKind { conv1d, maxpool, relu, dense, dropout, flatten, upsample, deconv1d };

std::string_view layer_kind_name(LayerKind k);

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  /// conv1d/deconv1d: kernel tensor is [out_channels, in_channels, kernel]
  /// for conv1d and the mirrored conv's kernel shape for deconv1d, i.e. a
  /// deconv1d maps `out_channels` -> `in_channels`.
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 0;
  int in_units = 0;
  int units = 0;
  int factor = 2;
  float rate = 0.0f;

  bool operator==(const LayerSpec&) const = default;
};

enum class ModelKind { classifier, autoencoder, custom };

struct ArchConfig {
  int input_len = 2048;
  std::vector<int> channels{16, 32, 64};
  int kernel = 7;
  int hidden_units = 128;
  float dropout = 0.5f;
};

/// Ordered layers plus their parameters. Copies are deep.
class ModelGraph {
 public:
  ModelGraph() = default;
  ModelGraph(ModelKind kind, std::vector<LayerSpec> layers, int input_len, int num_classes,
             std::uint64_t seed, int encoder_layers = 0);

  ModelKind kind() const { return kind_; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  int input_len() const { return input_len_; }
  int num_classes() const { return num_classes_; }
  /// Number of leading layers forming the encoder (0 when not applicable).
  int encoder_layers() const { return encoder_layers_; }
  std::uint64_t seed() const { return seed_; }

  std::vector<Parameter>& params() { return params_; }
  const std::vector<Parameter>& params() const { return params_; }
  Parameter& param(const std::string& name);
  const Parameter& param(const std::string& name) const;
  std::vector<Parameter*> param_ptrs();
  std::size_t parameter_count() const;

  /// Parameters owned by layer `index`, in (weight, bias) order.
  std::vector<const Parameter*> layer_params(int index) const;

  /// Whether training or a checkpoint has populated the weights.
  bool trained() const { return trained_; }
  void set_trained(bool t) { trained_ = t; }
  /// Identity tag recorded as `crafted_on` by attacks.
  const std::string& tag() const { return tag_; }
  void set_tag(std::string t) { tag_ = std::move(t); }

  struct ForwardOptions {
    bool training = false;
    std::mt19937_64* rng = nullptr;
    /// Run layers [0, stop_after] only; -1 runs all.
    int stop_after = -1;
  };

  /// Forward with parameters bound as trainable leaves (gradients flow into
  /// Parameter::grad). Input [N, 1, L]; returns logits or reconstruction.
  Var forward(Graph& g, Var x, const ForwardOptions& opt);
  /// Forward with parameters captured as constants; the model is not touched.
  Var forward_const(Graph& g, Var x, const ForwardOptions& opt) const;

  /// Softmax probabilities for x [N, 1, L] in eval mode; returns [N, C].
  Tensor predict_proba(const Tensor& x) const;
  /// Encoder output (bottleneck) for x [N, 1, L]; returns [N, 1, width].
  Tensor encode(const Tensor& x) const;
  /// Eval-mode output of the full model.
  Tensor run(const Tensor& x) const;

  std::vector<NamedTensor> state() const;
  void load_state(const std::vector<NamedTensor>& state);
  nlohmann::ordered_json manifest() const;

  /// Shape of each layer's output for a single input [1, 1, input_len].
  std::vector<std::vector<int>> layer_output_shapes() const;

 private:
  template <class Bind>
  Var run_layers(Graph& g, Var x, const ForwardOptions& opt, Bind&& bind) const;

  ModelKind kind_ = ModelKind::custom;
  std::vector<LayerSpec> layers_;
  std::vector<Parameter> params_;
  std::vector<std::vector<int>> layer_param_index_;
  int input_len_ = 0;
  int num_classes_ = 0;
  int encoder_layers_ = 0;
  std::uint64_t seed_ = 0;
  bool trained_ = false;
  std::string tag_;
};

/// conv/relu/pool blocks -> channel-collapsing 1x1 conv (bottleneck) ->
/// flatten -> dense + relu + dropout -> dense(num_classes). Logits out.
ModelGraph build_classifier(int num_classes, std::uint64_t seed, const ArchConfig& arch = {});

/// The classifier's encoder followed by its mirror image: deconv1d for every
/// conv1d and upsample for every maxpool, reconstructing the input length.
ModelGraph build_autoencoder(const ModelGraph& classifier, std::uint64_t seed);

/// Copy of `classifier` whose encoder parameters are deep copies of the
/// autoencoder's and marked frozen. Throws InvalidInput on structural mismatch.
ModelGraph transfer_weights(const ModelGraph& autoencoder, const ModelGraph& classifier);

/// Width of the classifier's bottleneck for the given architecture.
int bottleneck_width(const ArchConfig& arch);

}  // namespace rfadv
