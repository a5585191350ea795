#include <random>

#include <benchmark/benchmark.h>

#include "rfadv/attacks.hpp"
#include "rfadv/graph.hpp"
#include "rfadv/ksdetect.hpp"
#include "rfadv/models.hpp"
#include "rfadv/optim.hpp"
#include "rfadv/rfsynth.hpp"

using namespace rfadv;

namespace {

Tensor random_tensor(std::vector<int> shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> g;
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = g(rng);
  return t;
}

Dataset batch_data(int per_class) {
  DatasetSpec spec;
  spec.train_per_class = per_class;
  spec.test_per_class = 1;
  return build_dataset(spec).train;
}

// Second conv block of the classifier at batch 64: [64, 16, 1024] -> [64, 32, 1024].
void BM_Conv1dForward(benchmark::State& state) {
  const Tensor x = random_tensor({64, 16, 1024}, 1), w = random_tensor({32, 16, 7}, 2), b = random_tensor({32}, 3);
  for (auto _ : state) {
    Graph g;
    Var y = ops::conv1d(g.input(x), g.input(w), g.input(b));
    benchmark::DoNotOptimize(y.value().ptr());
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Conv1dForward)->Unit(benchmark::kMillisecond);

void BM_Conv1dBackward(benchmark::State& state) {
  const Tensor x = random_tensor({64, 16, 1024}, 1), w = random_tensor({32, 16, 7}, 2), b = random_tensor({32}, 3);
  for (auto _ : state) {
    Graph g;
    Var y = ops::conv1d(g.input(x, true), g.input(w, true), g.input(b, true));
    g.backward(ops::sum(y));
  }
  state.SetItemsProcessed(state.iterations() * 64);
}
BENCHMARK(BM_Conv1dBackward)->Unit(benchmark::kMillisecond);

void BM_ClassifierTrainStep(benchmark::State& state) {
  const Dataset d = batch_data(16);
  std::vector<std::size_t> idx(d.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Tensor x = d.batch(idx);
  ModelGraph m = build_classifier(4, 1);
  Adam adam(m.param_ptrs(), AdamConfig{});
  std::mt19937_64 rng(2);
  for (auto _ : state) {
    Graph g;
    ModelGraph::ForwardOptions opt;
    opt.training = true;
    opt.rng = &rng;
    g.backward(ops::softmax_cross_entropy(m.forward(g, g.input(x), opt), d.labels));
    adam.step();
    adam.zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(d.size()));
}
BENCHMARK(BM_ClassifierTrainStep)->Unit(benchmark::kMillisecond);

void BM_AutoencoderTrainStep(benchmark::State& state) {
  const Dataset d = batch_data(16);
  std::vector<std::size_t> idx(d.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Tensor x = d.batch(idx);
  ModelGraph m = build_autoencoder(build_classifier(4, 1), 2);
  Adam adam(m.param_ptrs(), AdamConfig{});
  for (auto _ : state) {
    Graph g;
    Var in = g.input(x);
    g.backward(ops::mse(m.forward(g, in, {}), in));
    adam.step();
    adam.zero_grad();
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(d.size()));
}
BENCHMARK(BM_AutoencoderTrainStep)->Unit(benchmark::kMillisecond);

void BM_Fgsm(benchmark::State& state) {
  const Dataset d = batch_data(25);
  ModelGraph m = build_classifier(4, 1);
  m.set_trained(true);
  for (auto _ : state) benchmark::DoNotOptimize(craft(m, d, AttackConfig{}).perturbed.frames.data());
  state.SetItemsProcessed(state.iterations() * static_cast<long>(d.size()));
}
BENCHMARK(BM_Fgsm)->Unit(benchmark::kMillisecond);

void BM_FrameSynthesis(benchmark::State& state) {
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(synth_frame(ModScheme::QAM16, 17.0, ++seed).samples.data());
}
BENCHMARK(BM_FrameSynthesis);

void BM_KsTwoSample(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u;
  std::vector<double> a(n), b(n);
  for (auto& v : a) v = u(rng);
  for (auto& v : b) v = u(rng) * 0.9;
  for (auto _ : state) benchmark::DoNotOptimize(ks_two_sample(a, b).p_value);
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_KsTwoSample)->Range(64, 1 << 14)->Complexity();

}  // namespace

BENCHMARK_MAIN();
