#include "rfadv/metrics.hpp"

#include <numeric>

#include "rfadv/error.hpp"

namespace rfadv {

Tensor predict_proba(const ModelGraph& model, const Dataset& data, int chunk) {
  if (model.num_classes() < 1) throw InvalidInput("predict_proba: model is not a classifier");
  const int classes = model.num_classes();
  Tensor out({static_cast<int>(data.size()), classes});
  for (std::size_t start = 0; start < data.size(); start += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(data.size(), start + static_cast<std::size_t>(chunk));
    std::vector<std::size_t> idx(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Tensor p = model.predict_proba(data.batch(idx));
    std::copy(p.data().begin(), p.data().end(), out.ptr() + start * static_cast<std::size_t>(classes));
  }
  return out;
}

std::vector<int> argmax_rows(const Tensor& probs) {
  if (probs.rank() != 2) throw InvalidInput("argmax_rows: expected [rows, classes]");
  const int rows = probs.dim(0);
  const int cols = probs.dim(1);
  std::vector<int> out(static_cast<std::size_t>(rows));
  for (int r = 0; r < rows; ++r) {
    const float* p = probs.ptr() + static_cast<std::size_t>(r) * cols;
    int best = 0;
    for (int c = 1; c < cols; ++c) {
      if (p[c] > p[best]) best = c;
    }
    out[static_cast<std::size_t>(r)] = best;
  }
  return out;
}

std::vector<int> predict(const ModelGraph& model, const Dataset& data) {
  return argmax_rows(predict_proba(model, data));
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  if (predicted.size() != truth.size()) throw InvalidInput("accuracy: length mismatch");
  if (truth.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double accuracy(const ModelGraph& model, const Dataset& data) { return accuracy(predict(model, data), data.labels); }

std::vector<std::vector<double>> confusion_matrix(const std::vector<int>& truth, const std::vector<int>& predicted,
                                                  int classes) {
  if (truth.size() != predicted.size()) throw InvalidInput("confusion_matrix: length mismatch");
  std::vector<std::vector<double>> m(static_cast<std::size_t>(classes), std::vector<double>(static_cast<std::size_t>(classes), 0.0));
  std::vector<double> totals(static_cast<std::size_t>(classes), 0.0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (truth[i] < 0 || truth[i] >= classes || predicted[i] < 0 || predicted[i] >= classes) {
      throw InvalidInput("confusion_matrix: class index out of range");
    }
    m[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(predicted[i])] += 1.0;
    totals[static_cast<std::size_t>(truth[i])] += 1.0;
  }
  for (std::size_t t = 0; t < m.size(); ++t) {
    if (totals[t] == 0.0) continue;
    for (double& v : m[t]) v /= totals[t];
  }
  return m;
}

}  // namespace rfadv
