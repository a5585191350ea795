#pragma once

#include <vector>

#include "rfadv/models.hpp"
#include "rfadv/rfsynth.hpp"

namespace rfadv {

/// Eval-mode softmax outputs for every row, as [rows, classes].
Tensor predict_proba(const ModelGraph& model, const Dataset& data, int chunk = 100);
std::vector<int> argmax_rows(const Tensor& probs);
std::vector<int> predict(const ModelGraph& model, const Dataset& data);
double accuracy(const std::vector<int>& predicted, const std::vector<int>& truth);
double accuracy(const ModelGraph& model, const Dataset& data);

/// Row-normalized: entry [t][p] is the fraction of true-class t rows
/// predicted as p. Rows without samples stay all-zero.
std::vector<std::vector<double>> confusion_matrix(const std::vector<int>& truth, const std::vector<int>& predicted,
                                                  int classes);

}  // namespace rfadv
