#pragma once

// Double-precision reference implementations of the ndgrad primitives and
// central finite-difference checks of ndgrad's analytic gradients against
// them. Shared by the unit tests and the acceptance binary.

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rfadv/graph.hpp"
#include "rfadv/models.hpp"

namespace rfadv::testkit {

using Vec = std::vector<double>;

namespace ref {

/// x [N, Cin, L], w [Cout, Cin, K], b [Cout] -> [N, Cout, L]; same padding.
Vec conv1d(const Vec& x, const Vec& w, const Vec& b, int n, int cin, int cout, int len, int k);
/// y [N, Cy, L], w [Cy, Cx, K], b [Cx] -> [N, Cx, L]; adjoint of conv1d in x.
Vec deconv1d(const Vec& y, const Vec& w, const Vec& b, int n, int cy, int cx, int len, int k);
Vec maxpool(const Vec& x, int rows, int len, int window);
Vec upsample(const Vec& x, int factor);
/// x [N, In], w [Out, In], b [Out] -> [N, Out].
Vec dense(const Vec& x, const Vec& w, const Vec& b, int n, int in, int out);
Vec relu(const Vec& x);
Vec softmax(const Vec& z, int rows, int cols);
/// Mean over rows of -log p[label].
double cross_entropy(const Vec& p, const std::vector<int>& labels, int cols);
double softmax_cross_entropy(const Vec& z, const std::vector<int>& labels, int cols);
double mse(const Vec& a, const Vec& b);

}  // namespace ref

struct GradCheckResult {
  std::string op;
  int instances = 0;
  /// Worst ||g_analytic - g_fd|| / ||g_fd|| over all instances and inputs.
  double worst_relative_error = 0.0;
  /// Worst |forward - reference forward| relative to the reference scale.
  double worst_forward_error = 0.0;
};

/// One differentiable input of a check: its shape and initial values.
struct CheckInput {
  std::vector<int> shape;
  Vec values;
};

/// ndgrad side: builds the op on graph leaves (one per input).
using BuildOp = std::function<Var(Graph&, const std::vector<Var>&)>;
/// Reference side: scalar objective of the op output given all inputs.
using RefOp = std::function<Vec(const std::vector<Vec>&)>;

/// Contracts the op output with fixed random weights r (L = sum r*y, or y itself
/// when the op is already scalar), then compares ndgrad's gradient w.r.t. every
/// input with central differences of the reference objective.
GradCheckResult check_op(const std::string& name, const std::vector<CheckInput>& inputs, const BuildOp& build,
                         const RefOp& reference, std::mt19937_64& rng, double h = 1e-5);

/// `instances` random small instances per primitive. Every primitive is
/// covered: conv1d, deconv1d, maxpool1d, upsample1d, dense, relu, dropout,
/// flatten, softmax, cross_entropy, softmax_cross_entropy, mse, sum.
std::vector<GradCheckResult> check_all_primitives(int instances, std::uint64_t seed);

/// Largest |analytic - closed form| of the mean softmax cross-entropy input
/// gradient, (softmax(z) - onehot) / N, over random instances.
double softmax_ce_closed_form_error(int instances, std::uint64_t seed);

/// Eval-mode forward of `model` in double, with parameter values taken from
/// `params` (one flattened vector per entry of model.params()). x is [n, 1, L].
Vec reference_forward(const ModelGraph& model, const std::vector<Vec>& params, const Vec& x, int n);

/// Test-only op: L = sum_i r_i * x_i with a constant weight vector r.
Var weighted_sum(Var x, const std::vector<float>& r);

}  // namespace rfadv::testkit
