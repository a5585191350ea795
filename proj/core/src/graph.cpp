#include "rfadv/graph.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "rfadv/error.hpp"

namespace rfadv {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

const Tensor& Var::value() const { return graph->value(id); }
const Tensor& Var::grad() const { return graph->grad(id); }
const std::vector<int>& Var::shape() const { return graph->value(id).shape(); }

Var Graph::input(Tensor value, bool requires_grad) {
  Node node;
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::parameter(Parameter& param) {
  Node node;
  node.value = param.value;
  node.param = &param;
  node.requires_grad = !param.frozen;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::record(Tensor value, std::vector<int> parents, BackwardFn fn) {
  Node node;
  node.value = std::move(value);
  for (int p : parents) {
    if (p < 0 || p >= static_cast<int>(nodes_.size())) throw InvalidInput("op parent is not a node of this graph");
    node.requires_grad = node.requires_grad || nodes_[static_cast<std::size_t>(p)].requires_grad;
  }
  node.parents = std::move(parents);
  if (node.requires_grad) node.backward = std::move(fn);
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

const Tensor& Graph::grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }

Tensor& Graph::grad_buffer(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.shape() != n.value.shape()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw InvalidInput("backward: loss belongs to another graph");
  if (value(loss.id).size() != 1) {
    throw InvalidInput("backward: loss must be a scalar, got shape " + shape_string(value(loss.id).shape()));
  }
  for (auto& n : nodes_) {
    if (!n.grad.empty()) n.grad.fill(0.0f);
  }
  std::vector<char> reachable(nodes_.size(), 0);
  reachable[static_cast<std::size_t>(loss.id)] = 1;
  grad_buffer(loss.id)[0] = 1.0f;
  for (int id = loss.id; id >= 0; --id) {
    auto& n = nodes_[static_cast<std::size_t>(id)];
    if (!reachable[static_cast<std::size_t>(id)] || !n.requires_grad) continue;
    for (int p : n.parents) reachable[static_cast<std::size_t>(p)] = 1;
    if (n.backward) {
      grad_buffer(id);
      n.backward(*this, id);
    }
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    auto& n = nodes_[id];
    if (!n.requires_grad) continue;
    Tensor& g = grad_buffer(static_cast<int>(id));
    if (n.param != nullptr && reachable[id]) {
      if (n.param->grad.shape() != n.param->value.shape()) n.param->zero_grad();
      float* dst = n.param->grad.ptr();
      const float* src = g.ptr();
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
    }
  }
}

namespace ops {
namespace {

// Sequential sums keep the accumulation order independent of buffer
// alignment, which Eigen's vectorized reductions do not.
void add_row_sums(const float* m, int rows, int cols, float* out) {
  for (int r = 0; r < rows; ++r) {
    const float* row = m + static_cast<std::size_t>(r) * cols;
    float acc = 0.0f;
    for (int c = 0; c < cols; ++c) acc += row[c];
    out[r] += acc;
  }
}

void require(bool cond, const std::string& msg) {
  if (!cond) throw InvalidInput(msg);
}

void require_same_graph(Var a, Var b) {
  require(a.valid() && b.valid() && a.graph == b.graph, "operands must belong to the same graph");
}

struct Conv1dShape {
  int n, cin, cout, len, k;
  bool batched;
};


// Per sample: col[(i*K + k), l] = x[i, l + k - pad]
void im2col(const float* x, int cin, int len, int k, float* col) {
  const int pad = k / 2;
  for (int i = 0; i < cin; ++i) {
    const float* src = x + static_cast<std::size_t>(i) * len;
    for (int kk = 0; kk < k; ++kk) {
      float* dst = col + (static_cast<std::size_t>(i) * k + kk) * len;
      const int shift = kk - pad;
      const int lo = std::max(0, -shift);
      const int hi = std::min(len, len - shift);
      std::fill(dst, dst + lo, 0.0f);
      std::copy(src + lo + shift, src + hi + shift, dst + lo);
      std::fill(dst + std::max(hi, lo), dst + len, 0.0f);
    }
  }
}

// Adjoint of im2col: x[i, l + k - pad] += col[(i*K + k), l]
void col2im_add(const float* col, int cin, int len, int k, float* x) {
  const int pad = k / 2;
  for (int i = 0; i < cin; ++i) {
    float* dst = x + static_cast<std::size_t>(i) * len;
    for (int kk = 0; kk < k; ++kk) {
      const float* src = col + (static_cast<std::size_t>(i) * k + kk) * len;
      const int shift = kk - pad;
      const int lo = std::max(0, -shift);
      const int hi = std::min(len, len - shift);
      for (int l = lo; l < hi; ++l) dst[l + shift] += src[l];
    }
  }
}

// Activation [C, L] / [N, C, L] against kernels [C_out, C_in, K]. A transposed
// op consumes C_out channels, a forward conv C_in.
Conv1dShape conv_shape(const Tensor& act, const Tensor& kernels, bool transposed, const char* op) {
  require(act.rank() == 2 || act.rank() == 3, std::string(op) + ": input must be [C, L] or [N, C, L], got " +
                                                 shape_string(act.shape()));
  require(kernels.rank() == 3, std::string(op) + ": kernels must be [C_out, C_in, K], got " +
                                   shape_string(kernels.shape()));
  Conv1dShape s{};
  s.batched = act.rank() == 3;
  s.n = s.batched ? act.dim(0) : 1;
  const int ch = act.dim(-2);
  s.len = act.dim(-1);
  s.cout = kernels.dim(0);
  s.cin = kernels.dim(1);
  s.k = kernels.dim(2);
  require(s.k % 2 == 1, std::string(op) + ": kernel size must be odd for same padding");
  const int expected = transposed ? s.cout : s.cin;
  require(ch == expected, std::string(op) + ": input has " + std::to_string(ch) + " channels, kernels " +
                              shape_string(kernels.shape()) + " expect " + std::to_string(expected));
  return s;
}

std::vector<int> act_shape(const Conv1dShape& s, int channels) {
  if (s.batched) return {s.n, channels, s.len};
  return {channels, s.len};
}

// Row view of a tensor as [rows, last].
std::pair<int, int> rows_cols(const Tensor& t) {
  require(t.rank() >= 1, "expected a tensor of rank >= 1");
  const int cols = t.dim(-1);
  const int rows = cols == 0 ? 0 : static_cast<int>(t.size() / static_cast<std::size_t>(cols));
  return {rows, cols};
}

}  // namespace

Var conv1d(Var x, Var kernels, Var bias) {
  require_same_graph(x, kernels);
  require_same_graph(x, bias);
  Graph& g = *x.graph;
  const Tensor& xv = x.value();
  const Tensor& wv = kernels.value();
  const Conv1dShape s = conv_shape(xv, wv, false, "conv1d");
  require(bias.value().rank() == 1 && bias.value().dim(0) == s.cout, "conv1d: bias must be [C_out]");

  const int rows = s.cin * s.k;
  const std::size_t in_stride = static_cast<std::size_t>(s.cin) * s.len;
  const std::size_t out_stride = static_cast<std::size_t>(s.cout) * s.len;
  Tensor out(act_shape(s, s.cout));
  const ConstMatMap w(wv.ptr(), s.cout, rows);
  const auto bv = Eigen::Map<const Eigen::VectorXf>(bias.value().ptr(), s.cout);
  RowMat col(rows, s.len);
  for (int n = 0; n < s.n; ++n) {
    im2col(xv.ptr() + in_stride * n, s.cin, s.len, s.k, col.data());
    MatMap om(out.ptr() + out_stride * n, s.cout, s.len);
    om.noalias() = w * col;
    om.colwise() += bv;
  }

  const int xi = x.id, wi = kernels.id, bi = bias.id;
  return g.record(std::move(out), {xi, wi, bi}, [s, xi, wi, bi](Graph& gr, int self) {
    const int rows = s.cin * s.k;
    const std::size_t in_stride = static_cast<std::size_t>(s.cin) * s.len;
    const std::size_t out_stride = static_cast<std::size_t>(s.cout) * s.len;
    const float* dout = gr.grad(self).ptr();
    const float* xv = gr.value(xi).ptr();
    const bool need_w = gr.requires_grad(wi), need_b = gr.requires_grad(bi), need_x = gr.requires_grad(xi);
    float* dw_ptr = need_w ? gr.grad_buffer(wi).ptr() : nullptr;
    float* db = need_b ? gr.grad_buffer(bi).ptr() : nullptr;
    float* dx = need_x ? gr.grad_buffer(xi).ptr() : nullptr;
    const ConstMatMap w(gr.value(wi).ptr(), s.cout, rows);
    RowMat col(rows, s.len);
    RowMat dcol(rows, s.len);
    for (int n = 0; n < s.n; ++n) {
      const ConstMatMap dm(dout + out_stride * n, s.cout, s.len);
      if (need_w) {
        im2col(xv + in_stride * n, s.cin, s.len, s.k, col.data());
        MatMap(dw_ptr, s.cout, rows).noalias() += dm * col.transpose();
      }
      if (need_b) add_row_sums(dout + out_stride * n, s.cout, s.len, db);
      if (need_x) {
        dcol.noalias() = w.transpose() * dm;
        col2im_add(dcol.data(), s.cin, s.len, s.k, dx + in_stride * n);
      }
    }
  });
}

Var deconv1d(Var y, Var kernels, Var bias) {
  require_same_graph(y, kernels);
  require_same_graph(y, bias);
  Graph& g = *y.graph;
  const Tensor& yv = y.value();
  const Tensor& wv = kernels.value();
  const Conv1dShape s = conv_shape(yv, wv, true, "deconv1d");
  require(bias.value().rank() == 1 && bias.value().dim(0) == s.cin, "deconv1d: bias must be [C_in] of the kernel");

  const int rows = s.cin * s.k;
  const std::size_t y_stride = static_cast<std::size_t>(s.cout) * s.len;
  const std::size_t out_stride = static_cast<std::size_t>(s.cin) * s.len;
  Tensor out(act_shape(s, s.cin));
  const ConstMatMap w(wv.ptr(), s.cout, rows);
  const float* b = bias.value().ptr();
  RowMat colm;
  for (int n = 0; n < s.n; ++n) {
    colm.noalias() = w.transpose() * ConstMatMap(yv.ptr() + y_stride * n, s.cout, s.len);
    float* o = out.ptr() + out_stride * n;
    for (int i = 0; i < s.cin; ++i) std::fill(o + static_cast<std::size_t>(i) * s.len, o + static_cast<std::size_t>(i + 1) * s.len, b[i]);
    col2im_add(colm.data(), s.cin, s.len, s.k, o);
  }

  const int yi = y.id, wi = kernels.id, bi = bias.id;
  return g.record(std::move(out), {yi, wi, bi}, [s, yi, wi, bi](Graph& gr, int self) {
    const int rows = s.cin * s.k;
    const std::size_t y_stride = static_cast<std::size_t>(s.cout) * s.len;
    const std::size_t out_stride = static_cast<std::size_t>(s.cin) * s.len;
    const float* dout = gr.grad(self).ptr();
    const float* yv = gr.value(yi).ptr();
    const bool need_w = gr.requires_grad(wi), need_b = gr.requires_grad(bi), need_y = gr.requires_grad(yi);
    float* dw_ptr = need_w ? gr.grad_buffer(wi).ptr() : nullptr;
    float* db = need_b ? gr.grad_buffer(bi).ptr() : nullptr;
    float* dy = need_y ? gr.grad_buffer(yi).ptr() : nullptr;
    const ConstMatMap w(gr.value(wi).ptr(), s.cout, rows);
    std::vector<float> dcol(static_cast<std::size_t>(rows) * s.len);
    for (int n = 0; n < s.n; ++n) {
      const float* d = dout + out_stride * n;
      im2col(d, s.cin, s.len, s.k, dcol.data());
      const ConstMatMap dc(dcol.data(), rows, s.len);
      if (need_w) MatMap(dw_ptr, s.cout, rows).noalias() += ConstMatMap(yv + y_stride * n, s.cout, s.len) * dc.transpose();
      if (need_b) add_row_sums(d, s.cin, s.len, db);
      if (need_y) MatMap(dy + y_stride * n, s.cout, s.len).noalias() += w * dc;
    }
  });
}

Var maxpool1d(Var x, int window) {
  require(x.valid(), "maxpool1d: invalid input");
  require(window >= 1, "maxpool1d: window must be positive");
  const Tensor& xv = x.value();
  require(xv.rank() >= 1, "maxpool1d: input must have rank >= 1");
  const auto [rows, len] = rows_cols(xv);
  require(len % window == 0, "maxpool1d: length " + std::to_string(len) + " is not divisible by window " +
                                 std::to_string(window));
  const int out_len = len / window;
  std::vector<int> shape = xv.shape();
  shape.back() = out_len;
  Tensor out(shape);
  auto argmax = std::make_shared<std::vector<std::uint32_t>>(out.size());
  for (int r = 0; r < rows; ++r) {
    const float* src = xv.ptr() + static_cast<std::size_t>(r) * len;
    for (int j = 0; j < out_len; ++j) {
      int best = j * window;
      for (int w = 1; w < window; ++w) {
        if (src[j * window + w] > src[best]) best = j * window + w;
      }
      const std::size_t o = static_cast<std::size_t>(r) * out_len + j;
      out[o] = src[best];
      (*argmax)[o] = static_cast<std::uint32_t>(static_cast<std::size_t>(r) * len + best);
    }
  }
  const int xi = x.id;
  return x.graph->record(std::move(out), {xi}, [argmax, xi](Graph& gr, int self) {
    const float* dout = gr.grad(self).ptr();
    float* dx = gr.grad_buffer(xi).ptr();
    for (std::size_t o = 0; o < argmax->size(); ++o) dx[(*argmax)[o]] += dout[o];
  });
}

Var upsample1d(Var x, int factor) {
  require(x.valid(), "upsample1d: invalid input");
  require(factor >= 1, "upsample1d: factor must be positive");
  const Tensor& xv = x.value();
  require(xv.rank() >= 1, "upsample1d: input must have rank >= 1");
  std::vector<int> shape = xv.shape();
  shape.back() *= factor;
  Tensor out(shape);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    for (int f = 0; f < factor; ++f) out[i * static_cast<std::size_t>(factor) + static_cast<std::size_t>(f)] = xv[i];
  }
  const int xi = x.id;
  return x.graph->record(std::move(out), {xi}, [factor, xi](Graph& gr, int self) {
    const Tensor& dout = gr.grad(self);
    Tensor& dx = gr.grad_buffer(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) {
      float acc = 0.0f;
      for (int f = 0; f < factor; ++f) acc += dout[i * static_cast<std::size_t>(factor) + static_cast<std::size_t>(f)];
      dx[i] += acc;
    }
  });
}

Var dense(Var x, Var weights, Var bias) {
  require_same_graph(x, weights);
  require_same_graph(x, bias);
  const Tensor& xv = x.value();
  const Tensor& wv = weights.value();
  require(xv.rank() == 1 || xv.rank() == 2, "dense: input must be [In] or [N, In], got " + shape_string(xv.shape()));
  require(wv.rank() == 2, "dense: weights must be [Out, In]");
  const int in = xv.dim(-1);
  const int out_dim = wv.dim(0);
  const int n = xv.rank() == 2 ? xv.dim(0) : 1;
  require(wv.dim(1) == in, "dense: weights " + shape_string(wv.shape()) + " do not accept input " +
                               shape_string(xv.shape()));
  require(bias.value().rank() == 1 && bias.value().dim(0) == out_dim, "dense: bias must be [Out]");

  Tensor out(xv.rank() == 2 ? std::vector<int>{n, out_dim} : std::vector<int>{out_dim});
  MatMap om(out.ptr(), n, out_dim);
  om.noalias() = ConstMatMap(xv.ptr(), n, in) * ConstMatMap(wv.ptr(), out_dim, in).transpose();
  om.rowwise() += Eigen::Map<const Eigen::RowVectorXf>(bias.value().ptr(), out_dim);

  const int xi = x.id, wi = weights.id, bi = bias.id;
  return x.graph->record(std::move(out), {xi, wi, bi}, [n, in, out_dim, xi, wi, bi](Graph& gr, int self) {
    ConstMatMap dout(gr.grad(self).ptr(), n, out_dim);
    if (gr.requires_grad(wi)) {
      MatMap dw(gr.grad_buffer(wi).ptr(), out_dim, in);
      dw.noalias() += dout.transpose() * ConstMatMap(gr.value(xi).ptr(), n, in);
    }
    if (gr.requires_grad(bi)) {
      float* db = gr.grad_buffer(bi).ptr();
      const float* d = gr.grad(self).ptr();
      for (int r = 0; r < n; ++r) {
        for (int c = 0; c < out_dim; ++c) db[c] += d[static_cast<std::size_t>(r) * out_dim + c];
      }
    }
    if (gr.requires_grad(xi)) {
      MatMap dx(gr.grad_buffer(xi).ptr(), n, in);
      dx.noalias() += dout * ConstMatMap(gr.value(wi).ptr(), out_dim, in);
    }
  });
}

Var relu(Var x) {
  require(x.valid(), "relu: invalid input");
  Tensor out = x.value();
  float* o = out.ptr();
  for (std::size_t i = 0; i < out.size(); ++i) o[i] = std::max(o[i], 0.0f);
  const int xi = x.id;
  return x.graph->record(std::move(out), {xi}, [xi](Graph& gr, int self) {
    const float* in = gr.value(xi).ptr();
    const float* dout = gr.grad(self).ptr();
    Tensor& dxt = gr.grad_buffer(xi);
    float* dx = dxt.ptr();
    const std::size_t n = dxt.size();
    for (std::size_t i = 0; i < n; ++i) dx[i] += in[i] > 0.0f ? dout[i] : 0.0f;
  });
}

Var dropout(Var x, float rate, std::mt19937_64& rng, bool training) {
  require(x.valid(), "dropout: invalid input");
  require(rate >= 0.0f && rate < 1.0f, "dropout: rate must lie in [0, 1)");
  if (!training || rate == 0.0f) return reshape(x, x.shape());
  const float keep_scale = 1.0f / (1.0f - rate);
  auto mask = std::make_shared<std::vector<float>>(x.value().size());
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (float& m : *mask) m = u(rng) >= rate ? keep_scale : 0.0f;
  Tensor out = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*mask)[i];
  const int xi = x.id;
  return x.graph->record(std::move(out), {xi}, [mask, xi](Graph& gr, int self) {
    const Tensor& dout = gr.grad(self);
    Tensor& dx = gr.grad_buffer(xi);
    for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dout[i] * (*mask)[i];
  });
}

Var reshape(Var x, std::vector<int> shape) {
  require(x.valid(), "reshape: invalid input");
  Tensor out = x.value().reshaped(std::move(shape));
  const int xi = x.id;
  return x.graph->record(std::move(out), {xi}, [xi](Graph& gr, int self) {
    const float* dout = gr.grad(self).ptr();
    Tensor& dxt = gr.grad_buffer(xi);
    float* dx = dxt.ptr();
    const std::size_t n = dxt.size();
    for (std::size_t i = 0; i < n; ++i) dx[i] += dout[i];
  });
}

Var flatten(Var x) {
  require(x.valid(), "flatten: invalid input");
  const Tensor& xv = x.value();
  require(xv.rank() >= 1, "flatten: input must have rank >= 1");
  const int n = xv.dim(0);
  const int rest = n == 0 ? 0 : static_cast<int>(xv.size() / static_cast<std::size_t>(n));
  return reshape(x, {n, rest});
}

Var softmax(Var logits) {
  require(logits.valid(), "softmax: invalid input");
  const Tensor& lv = logits.value();
  const auto [rows, cols] = rows_cols(lv);
  Tensor out(lv.shape());
  for (int r = 0; r < rows; ++r) {
    const float* src = lv.ptr() + static_cast<std::size_t>(r) * cols;
    float* dst = out.ptr() + static_cast<std::size_t>(r) * cols;
    const float mx = *std::max_element(src, src + cols);
    double total = 0.0;
    for (int c = 0; c < cols; ++c) {
      dst[c] = std::exp(src[c] - mx);
      total += dst[c];
    }
    for (int c = 0; c < cols; ++c) dst[c] = static_cast<float>(dst[c] / total);
  }
  const int li = logits.id;
  return logits.graph->record(std::move(out), {li}, [li, rows, cols](Graph& gr, int self) {
    const Tensor& p = gr.value(self);
    const Tensor& dp = gr.grad(self);
    Tensor& dx = gr.grad_buffer(li);
    for (int r = 0; r < rows; ++r) {
      const std::size_t off = static_cast<std::size_t>(r) * cols;
      double dot = 0.0;
      for (int c = 0; c < cols; ++c) dot += static_cast<double>(dp[off + c]) * p[off + c];
      for (int c = 0; c < cols; ++c) dx[off + c] += p[off + c] * (dp[off + c] - static_cast<float>(dot));
    }
  });
}

namespace {

void check_labels(const std::vector<int>& labels, int rows, int cols, const char* op) {
  require(static_cast<int>(labels.size()) == rows, std::string(op) + ": expected " + std::to_string(rows) +
                                                     " labels, got " + std::to_string(labels.size()));
  for (int y : labels) require(y >= 0 && y < cols, std::string(op) + ": label out of range");
}

}  // namespace

Var cross_entropy(Var probs, const std::vector<int>& labels, Reduction r) {
  require(probs.valid(), "cross_entropy: invalid input");
  const Tensor& pv = probs.value();
  const auto [rows, cols] = rows_cols(pv);
  check_labels(labels, rows, cols, "cross_entropy");
  static constexpr float kFloor = std::numeric_limits<float>::min();
  double total = 0.0;
  for (int i = 0; i < rows; ++i) {
    total -= std::log(std::max(pv[static_cast<std::size_t>(i) * cols + labels[i]], kFloor));
  }
  const float scale = r == Reduction::mean ? 1.0f / static_cast<float>(rows) : 1.0f;
  Tensor out({1}, static_cast<float>(total * scale));
  const int pi = probs.id;
  return probs.graph->record(std::move(out), {pi}, [pi, labels, cols, scale](Graph& gr, int self) {
    const float up = gr.grad(self)[0] * scale;
    const Tensor& p = gr.value(pi);
    Tensor& dp = gr.grad_buffer(pi);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      const std::size_t idx = i * cols + static_cast<std::size_t>(labels[i]);
      dp[idx] -= up / std::max(p[idx], kFloor);
    }
  });
}

Var softmax_cross_entropy(Var logits, const std::vector<int>& labels, Reduction r) {
  require(logits.valid(), "softmax_cross_entropy: invalid input");
  const Tensor& lv = logits.value();
  const auto [rows, cols] = rows_cols(lv);
  check_labels(labels, rows, cols, "softmax_cross_entropy");
  auto probs = std::make_shared<std::vector<float>>(lv.size());
  double total = 0.0;
  for (int i = 0; i < rows; ++i) {
    const float* src = lv.ptr() + static_cast<std::size_t>(i) * cols;
    float* dst = probs->data() + static_cast<std::size_t>(i) * cols;
    const float mx = *std::max_element(src, src + cols);
    double z = 0.0;
    for (int c = 0; c < cols; ++c) z += std::exp(static_cast<double>(src[c] - mx));
    const double log_z = std::log(z);
    for (int c = 0; c < cols; ++c) dst[c] = static_cast<float>(std::exp(static_cast<double>(src[c] - mx) - log_z));
    total -= static_cast<double>(src[labels[i]] - mx) - log_z;
  }
  const float scale = r == Reduction::mean ? 1.0f / static_cast<float>(rows) : 1.0f;
  Tensor out({1}, static_cast<float>(total * scale));
  const int li = logits.id;
  return logits.graph->record(std::move(out), {li}, [li, labels, probs, cols, scale](Graph& gr, int self) {
    const float up = gr.grad(self)[0] * scale;
    Tensor& dl = gr.grad_buffer(li);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      for (int c = 0; c < cols; ++c) {
        const std::size_t idx = i * cols + static_cast<std::size_t>(c);
        const float onehot = c == labels[i] ? 1.0f : 0.0f;
        dl[idx] += up * ((*probs)[idx] - onehot);
      }
    }
  });
}

Var mse(Var a, Var b) {
  require_same_graph(a, b);
  require(a.shape() == b.shape(), "mse: shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require(av.size() > 0, "mse: empty operands");
  double total = 0.0;
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double d = static_cast<double>(av[i]) - bv[i];
    total += d * d;
  }
  const std::size_t n = av.size();
  Tensor out({1}, static_cast<float>(total / static_cast<double>(n)));
  const int ai = a.id, bi = b.id;
  return a.graph->record(std::move(out), {ai, bi}, [ai, bi, n](Graph& gr, int self) {
    const float up = gr.grad(self)[0] * 2.0f / static_cast<float>(n);
    const Tensor& av = gr.value(ai);
    const Tensor& bv = gr.value(bi);
    if (gr.requires_grad(ai)) {
      Tensor& da = gr.grad_buffer(ai);
      for (std::size_t i = 0; i < n; ++i) da[i] += up * (av[i] - bv[i]);
    }
    if (gr.requires_grad(bi)) {
      Tensor& db = gr.grad_buffer(bi);
      for (std::size_t i = 0; i < n; ++i) db[i] -= up * (av[i] - bv[i]);
    }
  });
}

Var sum(Var x) {
  require(x.valid(), "sum: invalid input");
  double total = 0.0;
  for (float v : x.value().data()) total += v;
  const int xi = x.id;
  return x.graph->record(Tensor({1}, static_cast<float>(total)), {xi}, [xi](Graph& gr, int self) {
    const float up = gr.grad(self)[0];
    Tensor& dxt = gr.grad_buffer(xi);
    float* dx = dxt.ptr();
    const std::size_t n = dxt.size();
    for (std::size_t i = 0; i < n; ++i) dx[i] += up;
  });
}

}  // namespace ops
}  // namespace rfadv
