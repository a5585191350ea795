#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace rfadv::testkit {

namespace ref {

Vec conv1d(const Vec& x, const Vec& w, const Vec& b, int n, int cin, int cout, int len, int k) {
  const int pad = k / 2;
  Vec y(static_cast<std::size_t>(n) * cout * len, 0.0);
  for (int s = 0; s < n; ++s) {
    for (int o = 0; o < cout; ++o) {
      for (int l = 0; l < len; ++l) {
        double acc = b[static_cast<std::size_t>(o)];
        for (int i = 0; i < cin; ++i) {
          for (int t = 0; t < k; ++t) {
            const int src = l + t - pad;
            if (src < 0 || src >= len) continue;
            acc += w[(static_cast<std::size_t>(o) * cin + i) * k + t] * x[(static_cast<std::size_t>(s) * cin + i) * len + src];
          }
        }
        y[(static_cast<std::size_t>(s) * cout + o) * len + l] = acc;
      }
    }
  }
  return y;
}

Vec deconv1d(const Vec& y, const Vec& w, const Vec& b, int n, int cy, int cx, int len, int k) {
  const int pad = k / 2;
  Vec x(static_cast<std::size_t>(n) * cx * len, 0.0);
  for (int s = 0; s < n; ++s) {
    for (int i = 0; i < cx; ++i) {
      for (int m = 0; m < len; ++m) {
        double acc = b[static_cast<std::size_t>(i)];
        for (int o = 0; o < cy; ++o) {
          for (int t = 0; t < k; ++t) {
            const int l = m - t + pad;
            if (l < 0 || l >= len) continue;
            acc += w[(static_cast<std::size_t>(o) * cx + i) * k + t] * y[(static_cast<std::size_t>(s) * cy + o) * len + l];
          }
        }
        x[(static_cast<std::size_t>(s) * cx + i) * len + m] = acc;
      }
    }
  }
  return x;
}

Vec maxpool(const Vec& x, int rows, int len, int window) {
  const int out_len = len / window;
  Vec y(static_cast<std::size_t>(rows) * out_len);
  for (int r = 0; r < rows; ++r) {
    for (int j = 0; j < out_len; ++j) {
      double best = -INFINITY;
      for (int t = 0; t < window; ++t) best = std::max(best, x[static_cast<std::size_t>(r) * len + j * window + t]);
      y[static_cast<std::size_t>(r) * out_len + j] = best;
    }
  }
  return y;
}

Vec upsample(const Vec& x, int factor) {
  Vec y;
  for (double v : x) {
    for (int f = 0; f < factor; ++f) y.push_back(v);
  }
  return y;
}

Vec dense(const Vec& x, const Vec& w, const Vec& b, int n, int in, int out) {
  Vec y(static_cast<std::size_t>(n) * out);
  for (int s = 0; s < n; ++s) {
    for (int o = 0; o < out; ++o) {
      double acc = b[static_cast<std::size_t>(o)];
      for (int i = 0; i < in; ++i) acc += w[static_cast<std::size_t>(o) * in + i] * x[static_cast<std::size_t>(s) * in + i];
      y[static_cast<std::size_t>(s) * out + o] = acc;
    }
  }
  return y;
}

Vec relu(const Vec& x) {
  Vec y(x);
  for (double& v : y) v = v > 0.0 ? v : 0.0;
  return y;
}

Vec softmax(const Vec& z, int rows, int cols) {
  Vec p(z.size());
  for (int r = 0; r < rows; ++r) {
    const double* src = z.data() + static_cast<std::size_t>(r) * cols;
    double* dst = p.data() + static_cast<std::size_t>(r) * cols;
    double total = 0.0;
    for (int c = 0; c < cols; ++c) total += std::exp(src[c]);
    for (int c = 0; c < cols; ++c) dst[c] = std::exp(src[c]) / total;
  }
  return p;
}

double cross_entropy(const Vec& p, const std::vector<int>& labels, int cols) {
  double total = 0.0;
  for (std::size_t r = 0; r < labels.size(); ++r) total -= std::log(p[r * cols + static_cast<std::size_t>(labels[r])]);
  return total / static_cast<double>(labels.size());
}

double softmax_cross_entropy(const Vec& z, const std::vector<int>& labels, int cols) {
  return cross_entropy(softmax(z, static_cast<int>(labels.size()), cols), labels, cols);
}

double mse(const Vec& a, const Vec& b) {
  double total = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) total += (a[i] - b[i]) * (a[i] - b[i]);
  return total / static_cast<double>(a.size());
}

}  // namespace ref

Var weighted_sum(Var x, const std::vector<float>& r) {
  const Tensor& xv = x.value();
  if (xv.size() != r.size()) throw std::invalid_argument("weighted_sum: size mismatch");
  double total = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) total += static_cast<double>(r[i]) * xv[i];
  const int xi = x.id;
  return x.graph->record(Tensor({1}, static_cast<float>(total)), {xi}, [xi, r](Graph& g, int self) {
    const float up = g.grad(self)[0];
    Tensor& dx = g.grad_buffer(xi);
    for (std::size_t i = 0; i < r.size(); ++i) dx[i] += up * r[i];
  });
}

namespace {

Tensor to_tensor(const CheckInput& in) {
  std::vector<float> v(in.values.begin(), in.values.end());
  return Tensor(in.shape, std::move(v));
}

double norm(const Vec& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

double contract(const Vec& y, const Vec& r) {
  if (y.size() == 1 && r.empty()) return y[0];
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * r[i];
  return s;
}

// Rounds to float so both sides see identical operand values.
Vec random_vec(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Vec v(n);
  for (double& x : v) x = static_cast<float>(u(rng));
  return v;
}

// Values at least `gap` away from zero.
Vec away_from_zero(std::size_t n, std::mt19937_64& rng, double gap) {
  std::uniform_real_distribution<double> u(gap, 1.0);
  std::bernoulli_distribution sign(0.5);
  Vec v(n);
  for (double& x : v) x = static_cast<float>(sign(rng) ? u(rng) : -u(rng));
  return v;
}

// Pool windows whose entries are pairwise at least `gap` apart.
Vec distinct_windows(int rows, int len, int window, std::mt19937_64& rng, double gap) {
  Vec v(static_cast<std::size_t>(rows) * len);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (std::size_t start = 0; start < v.size(); start += static_cast<std::size_t>(window)) {
    for (;;) {
      for (int t = 0; t < window; ++t) v[start + t] = static_cast<float>(u(rng));
      bool ok = true;
      for (int a = 0; a < window && ok; ++a) {
        for (int b = a + 1; b < window; ++b) {
          if (std::abs(v[start + a] - v[start + b]) < gap) ok = false;
        }
      }
      if (ok) break;
    }
  }
  return v;
}

int pick(std::mt19937_64& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::vector<int> random_labels(int rows, int cols, std::mt19937_64& rng) {
  std::vector<int> y(static_cast<std::size_t>(rows));
  for (int& v : y) v = pick(rng, 0, cols - 1);
  return y;
}

}  // namespace

GradCheckResult check_op(const std::string& name, const std::vector<CheckInput>& inputs, const BuildOp& build,
                         const RefOp& reference, std::mt19937_64& rng, double h) {
  GradCheckResult res;
  res.op = name;
  res.instances = 1;

  Graph g;
  std::vector<Var> leaves;
  for (const auto& in : inputs) leaves.push_back(g.input(to_tensor(in), true));
  Var out = build(g, leaves);
  const Tensor& ov = out.value();

  std::vector<Vec> base;
  for (const auto& in : inputs) base.push_back(in.values);
  const Vec ref_out = reference(base);
  if (ref_out.size() != ov.size()) throw std::logic_error(name + ": reference output size mismatch");
  double scale = 1.0, fwd = 0.0;
  for (std::size_t i = 0; i < ref_out.size(); ++i) {
    scale = std::max(scale, std::abs(ref_out[i]));
    fwd = std::max(fwd, std::abs(ref_out[i] - static_cast<double>(ov[i])));
  }
  res.worst_forward_error = fwd / scale;

  Vec r;
  std::vector<float> rf;
  Var loss = out;
  if (ov.size() != 1) {
    r = random_vec(ov.size(), rng);
    rf.assign(r.begin(), r.end());
    loss = weighted_sum(out, rf);
  }
  g.backward(loss);

  for (std::size_t t = 0; t < inputs.size(); ++t) {
    const Tensor& ga = g.grad(leaves[t].id);
    Vec analytic(inputs[t].values.size(), 0.0);
    if (!ga.empty()) {
      for (std::size_t i = 0; i < analytic.size(); ++i) analytic[i] = ga[i];
    }
    Vec numeric(analytic.size());
    std::vector<Vec> probe = base;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      const double x0 = base[t][i];
      probe[t][i] = x0 + h;
      const double up = contract(reference(probe), r);
      probe[t][i] = x0 - h;
      const double down = contract(reference(probe), r);
      probe[t][i] = x0;
      numeric[i] = (up - down) / (2.0 * h);
    }
    Vec diff(analytic.size());
    for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = analytic[i] - numeric[i];
    const double denom = std::max(norm(numeric), 1e-12);
    res.worst_relative_error = std::max(res.worst_relative_error, norm(diff) / denom);
  }
  return res;
}

std::vector<GradCheckResult> check_all_primitives(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<GradCheckResult> all;
  auto accumulate = [&](const std::string& name, auto&& one) {
    GradCheckResult agg;
    agg.op = name;
    for (int i = 0; i < instances; ++i) {
      const GradCheckResult r = one();
      agg.worst_relative_error = std::max(agg.worst_relative_error, r.worst_relative_error);
      agg.worst_forward_error = std::max(agg.worst_forward_error, r.worst_forward_error);
      ++agg.instances;
    }
    all.push_back(agg);
  };

  accumulate("conv1d", [&] {
    const int n = pick(rng, 1, 3), cin = pick(rng, 1, 3), cout = pick(rng, 1, 3), k = 2 * pick(rng, 0, 3) + 1;
    const int len = pick(rng, std::max(2, k), 10);
    const std::vector<CheckInput> in{{{n, cin, len}, random_vec(static_cast<std::size_t>(n) * cin * len, rng)},
                                     {{cout, cin, k}, random_vec(static_cast<std::size_t>(cout) * cin * k, rng)},
                                     {{cout}, random_vec(static_cast<std::size_t>(cout), rng)}};
    return check_op(
        "conv1d", in, [](Graph&, const std::vector<Var>& v) { return ops::conv1d(v[0], v[1], v[2]); },
        [=](const std::vector<Vec>& v) { return ref::conv1d(v[0], v[1], v[2], n, cin, cout, len, k); }, rng);
  });

  accumulate("deconv1d", [&] {
    const int n = pick(rng, 1, 3), cy = pick(rng, 1, 3), cx = pick(rng, 1, 3), k = 2 * pick(rng, 0, 3) + 1;
    const int len = pick(rng, std::max(2, k), 10);
    const std::vector<CheckInput> in{{{n, cy, len}, random_vec(static_cast<std::size_t>(n) * cy * len, rng)},
                                     {{cy, cx, k}, random_vec(static_cast<std::size_t>(cy) * cx * k, rng)},
                                     {{cx}, random_vec(static_cast<std::size_t>(cx), rng)}};
    return check_op(
        "deconv1d", in, [](Graph&, const std::vector<Var>& v) { return ops::deconv1d(v[0], v[1], v[2]); },
        [=](const std::vector<Vec>& v) { return ref::deconv1d(v[0], v[1], v[2], n, cy, cx, len, k); }, rng);
  });

  accumulate("maxpool1d", [&] {
    const int n = pick(rng, 1, 3), c = pick(rng, 1, 3), window = pick(rng, 2, 3), len = window * pick(rng, 1, 5);
    const std::vector<CheckInput> in{{{n, c, len}, distinct_windows(n * c, len, window, rng, 1e-2)}};
    return check_op(
        "maxpool1d", in, [=](Graph&, const std::vector<Var>& v) { return ops::maxpool1d(v[0], window); },
        [=](const std::vector<Vec>& v) { return ref::maxpool(v[0], n * c, len, window); }, rng);
  });

  accumulate("upsample1d", [&] {
    const int n = pick(rng, 1, 3), c = pick(rng, 1, 3), len = pick(rng, 1, 6), factor = pick(rng, 2, 3);
    const std::vector<CheckInput> in{{{n, c, len}, random_vec(static_cast<std::size_t>(n) * c * len, rng)}};
    return check_op(
        "upsample1d", in, [=](Graph&, const std::vector<Var>& v) { return ops::upsample1d(v[0], factor); },
        [=](const std::vector<Vec>& v) { return ref::upsample(v[0], factor); }, rng);
  });

  accumulate("dense", [&] {
    const int n = pick(rng, 1, 4), in_dim = pick(rng, 1, 6), out_dim = pick(rng, 1, 5);
    const std::vector<CheckInput> in{{{n, in_dim}, random_vec(static_cast<std::size_t>(n) * in_dim, rng)},
                                     {{out_dim, in_dim}, random_vec(static_cast<std::size_t>(out_dim) * in_dim, rng)},
                                     {{out_dim}, random_vec(static_cast<std::size_t>(out_dim), rng)}};
    return check_op(
        "dense", in, [](Graph&, const std::vector<Var>& v) { return ops::dense(v[0], v[1], v[2]); },
        [=](const std::vector<Vec>& v) { return ref::dense(v[0], v[1], v[2], n, in_dim, out_dim); }, rng);
  });

  accumulate("relu", [&] {
    const int n = pick(rng, 1, 3), len = pick(rng, 1, 12);
    const std::vector<CheckInput> in{{{n, len}, away_from_zero(static_cast<std::size_t>(n) * len, rng, 1e-2)}};
    return check_op(
        "relu", in, [](Graph&, const std::vector<Var>& v) { return ops::relu(v[0]); },
        [](const std::vector<Vec>& v) { return ref::relu(v[0]); }, rng);
  });

  accumulate("dropout", [&] {
    const int n = pick(rng, 1, 3), len = pick(rng, 2, 12);
    const float rate = std::uniform_real_distribution<float>(0.1f, 0.7f)(rng);
    const std::uint64_t mask_seed = rng();
    // The mask is a deterministic function of the rng state: recover it by
    // dropping out a tensor of ones.
    Vec mask;
    {
      Graph g;
      std::mt19937_64 mrng(mask_seed);
      Var ones = g.input(Tensor({n, len}, 1.0f));
      const Tensor& m = ops::dropout(ones, rate, mrng, true).value();
      mask.assign(m.data().begin(), m.data().end());
    }
    const std::vector<CheckInput> in{{{n, len}, random_vec(static_cast<std::size_t>(n) * len, rng)}};
    return check_op(
        "dropout", in,
        [=](Graph&, const std::vector<Var>& v) {
          std::mt19937_64 mrng(mask_seed);
          return ops::dropout(v[0], rate, mrng, true);
        },
        [=](const std::vector<Vec>& v) {
          Vec y(v[0]);
          for (std::size_t i = 0; i < y.size(); ++i) y[i] *= mask[i];
          return y;
        },
        rng);
  });

  accumulate("flatten", [&] {
    const int n = pick(rng, 1, 3), c = pick(rng, 1, 3), len = pick(rng, 1, 5);
    const std::vector<CheckInput> in{{{n, c, len}, random_vec(static_cast<std::size_t>(n) * c * len, rng)}};
    return check_op(
        "flatten", in, [](Graph&, const std::vector<Var>& v) { return ops::flatten(v[0]); },
        [](const std::vector<Vec>& v) { return v[0]; }, rng);
  });

  accumulate("softmax", [&] {
    const int rows = pick(rng, 1, 4), cols = pick(rng, 2, 6);
    const std::vector<CheckInput> in{{{rows, cols}, random_vec(static_cast<std::size_t>(rows) * cols, rng, -3.0, 3.0)}};
    return check_op(
        "softmax", in, [](Graph&, const std::vector<Var>& v) { return ops::softmax(v[0]); },
        [=](const std::vector<Vec>& v) { return ref::softmax(v[0], rows, cols); }, rng);
  });

  accumulate("cross_entropy", [&] {
    const int rows = pick(rng, 1, 4), cols = pick(rng, 2, 6);
    const auto labels = random_labels(rows, cols, rng);
    const std::vector<CheckInput> in{{{rows, cols}, random_vec(static_cast<std::size_t>(rows) * cols, rng, 0.05, 1.0)}};
    return check_op(
        "cross_entropy", in, [=](Graph&, const std::vector<Var>& v) { return ops::cross_entropy(v[0], labels); },
        [=](const std::vector<Vec>& v) { return Vec{ref::cross_entropy(v[0], labels, cols)}; }, rng);
  });

  accumulate("softmax_cross_entropy", [&] {
    const int rows = pick(rng, 1, 4), cols = pick(rng, 2, 6);
    const auto labels = random_labels(rows, cols, rng);
    const std::vector<CheckInput> in{{{rows, cols}, random_vec(static_cast<std::size_t>(rows) * cols, rng, -3.0, 3.0)}};
    return check_op(
        "softmax_cross_entropy", in,
        [=](Graph&, const std::vector<Var>& v) { return ops::softmax_cross_entropy(v[0], labels); },
        [=](const std::vector<Vec>& v) { return Vec{ref::softmax_cross_entropy(v[0], labels, cols)}; }, rng);
  });

  accumulate("mse", [&] {
    const int n = pick(rng, 1, 12);
    const std::vector<CheckInput> in{{{n}, random_vec(static_cast<std::size_t>(n), rng)},
                                     {{n}, random_vec(static_cast<std::size_t>(n), rng)}};
    return check_op(
        "mse", in, [](Graph&, const std::vector<Var>& v) { return ops::mse(v[0], v[1]); },
        [](const std::vector<Vec>& v) { return Vec{ref::mse(v[0], v[1])}; }, rng);
  });

  accumulate("sum", [&] {
    const int n = pick(rng, 1, 12);
    const std::vector<CheckInput> in{{{n}, random_vec(static_cast<std::size_t>(n), rng)}};
    return check_op(
        "sum", in, [](Graph&, const std::vector<Var>& v) { return ops::sum(v[0]); },
        [](const std::vector<Vec>& v) {
          double s = 0.0;
          for (double x : v[0]) s += x;
          return Vec{s};
        },
        rng);
  });
  return all;
}

Vec reference_forward(const ModelGraph& model, const std::vector<Vec>& params, const Vec& x, int n) {
  auto index_of = [&](const Parameter* p) {
    return static_cast<std::size_t>(p - model.params().data());
  };
  Vec cur = x;
  int channels = 1, len = model.input_len();
  for (int i = 0; i < static_cast<int>(model.layers().size()); ++i) {
    const LayerSpec& l = model.layers()[static_cast<std::size_t>(i)];
    const auto lp = model.layer_params(i);
    switch (l.kind) {
      case LayerKind::conv1d:
        cur = ref::conv1d(cur, params[index_of(lp[0])], params[index_of(lp[1])], n, l.in_channels, l.out_channels,
                          len, l.kernel);
        channels = l.out_channels;
        break;
      case LayerKind::deconv1d:
        cur = ref::deconv1d(cur, params[index_of(lp[0])], params[index_of(lp[1])], n, l.out_channels,
                            l.in_channels, len, l.kernel);
        channels = l.in_channels;
        break;
      case LayerKind::relu: cur = ref::relu(cur); break;
      case LayerKind::maxpool:
        cur = ref::maxpool(cur, n * channels, len, l.factor);
        len /= l.factor;
        break;
      case LayerKind::upsample:
        cur = ref::upsample(cur, l.factor);
        len *= l.factor;
        break;
      case LayerKind::flatten:
        len *= channels;
        channels = 1;
        break;
      case LayerKind::dense:
        cur = ref::dense(cur, params[index_of(lp[0])], params[index_of(lp[1])], n, l.in_units, l.units);
        len = l.units;
        break;
      case LayerKind::dropout: break;
    }
  }
  return cur;
}

double softmax_ce_closed_form_error(int instances, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (int it = 0; it < instances; ++it) {
    const int rows = pick(rng, 1, 6), cols = pick(rng, 2, 8);
    const auto labels = random_labels(rows, cols, rng);
    const Vec z = random_vec(static_cast<std::size_t>(rows) * cols, rng, -4.0, 4.0);
    Graph g;
    Var x = g.input(Tensor({rows, cols}, std::vector<float>(z.begin(), z.end())), true);
    g.backward(ops::softmax_cross_entropy(x, labels));
    const Vec p = ref::softmax(z, rows, cols);
    for (int r = 0; r < rows; ++r) {
      for (int c = 0; c < cols; ++c) {
        const std::size_t i = static_cast<std::size_t>(r) * cols + c;
        const double expected = (p[i] - (c == labels[static_cast<std::size_t>(r)] ? 1.0 : 0.0)) / rows;
        worst = std::max(worst, std::abs(expected - static_cast<double>(g.grad(x.id)[i])));
      }
    }
  }
  return worst;
}

}  // namespace rfadv::testkit
