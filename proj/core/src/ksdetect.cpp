#include "rfadv/ksdetect.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "rfadv/error.hpp"
#include "rfadv/metrics.hpp"

namespace rfadv {

std::vector<OutputSample> collect_outputs(const ModelGraph& model, const Dataset& data, OutputSource source) {
  const Tensor probs = predict_proba(model, data);
  const auto pred = argmax_rows(probs);
  const auto classes = static_cast<std::size_t>(model.num_classes());
  std::vector<OutputSample> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    out[i].probs.assign(probs.ptr() + i * classes, probs.ptr() + (i + 1) * classes);
    out[i].predicted = pred[i];
    out[i].source = source;
  }
  return out;
}

double kolmogorov_q(double lambda) {
  // Below 0.2 the tail differs from 1 by < 1e-12 and the alternating series
  // converges too slowly to be useful.
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int j = 1; j <= 1000; ++j) {
    const double term = 2.0 * std::exp(-2.0 * j * j * lambda * lambda);
    sum += sign * term;
    if (term < 1e-12) break;
    sign = -sign;
  }
  return std::clamp(sum, 0.0, 1.0);
}

KSResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  if (a.empty() || b.empty()) throw InvalidInput("ks_two_sample: both samples must be non-empty");
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  const double n = static_cast<double>(x.size());
  const double m = static_cast<double>(y.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < x.size() && j < y.size()) {
    const double t = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= t) ++i;
    while (j < y.size() && y[j] <= t) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  KSResult r;
  r.statistic = d;
  r.n = x.size();
  r.m = y.size();
  const double ne = n * m / (n + m);
  const double root = std::sqrt(ne);
  r.p_value = kolmogorov_q((root + 0.12 + 0.11 / root) * d);
  return r;
}

std::string_view instance_name(KsInstance i) {
  switch (i) {
    case KsInstance::full_legit_vs_adv: return "full_legit_vs_adv";
    case KsInstance::sampled_legit_vs_adv: return "sampled_legit_vs_adv";
    case KsInstance::control_legit_vs_legit: return "control_legit_vs_legit";
  }
  return "?";
}

const KSResult& KSReport::at(int cls, KsInstance instance) const {
  for (const auto& c : cells) {
    if (c.cls == cls && c.instance == instance) return c.result;
  }
  throw InvalidInput("KS report has no cell for class " + std::to_string(cls));
}

std::string KSReport::to_csv(const std::vector<std::string>& class_names) const {
  std::ostringstream os;
  os.precision(10);
  os << "class,instance,D,p_value,n,m\n";
  for (const auto& c : cells) {
    const std::string name = static_cast<std::size_t>(c.cls) < class_names.size()
                                 ? class_names[static_cast<std::size_t>(c.cls)]
                                 : std::to_string(c.cls);
    os << name << ',' << instance_name(c.instance) << ',';
    if (c.result.available) {
      os << c.result.statistic << ',' << c.result.p_value;
    } else {
      os << ',';
    }
    os << ',' << c.result.n << ',' << c.result.m << '\n';
  }
  return os.str();
}

namespace {

std::vector<double> draw(const std::vector<double>& pool, std::size_t count, std::mt19937_64& rng) {
  std::vector<double> v = pool;
  count = std::min(count, v.size());
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (v.size() - i));
    std::swap(v[i], v[j]);
  }
  v.resize(count);
  return v;
}

std::uint64_t cell_seed(std::uint64_t seed, int cls, KsInstance inst) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(cls), static_cast<std::uint32_t>(inst)};
  std::uint32_t words[2];
  seq.generate(words, words + 2);
  return (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
}

}  // namespace

KSReport run_suite(const std::vector<OutputSample>& legit, const std::vector<OutputSample>& adv, int classes,
                   int sample_size, std::uint64_t seed) {
  if (classes < 1) throw InvalidInput("run_suite: classes must be >= 1");
  if (sample_size < 1) throw InvalidInput("run_suite: sample_size must be >= 1");
  if (legit.empty() || adv.empty()) throw InvalidInput("run_suite: output sets must be non-empty");
  std::vector<std::vector<double>> lg(static_cast<std::size_t>(classes)), ad(static_cast<std::size_t>(classes));
  auto group = [&](const std::vector<OutputSample>& set, std::vector<std::vector<double>>& into) {
    for (const auto& s : set) {
      if (s.predicted < 0 || s.predicted >= classes) throw InvalidInput("run_suite: predicted class out of range");
      into[static_cast<std::size_t>(s.predicted)].push_back(s.confidence());
    }
  };
  group(legit, lg);
  group(adv, ad);

  KSReport report;
  report.classes = classes;
  report.sample_size = sample_size;
  report.seed = seed;
  const auto k = static_cast<std::size_t>(sample_size);
  for (int c = 0; c < classes; ++c) {
    const auto& l = lg[static_cast<std::size_t>(c)];
    const auto& a = ad[static_cast<std::size_t>(c)];
    auto unavailable = [&](std::size_t n, std::size_t m) {
      KSResult r;
      r.available = false;
      r.n = n;
      r.m = m;
      r.statistic = std::nan("");
      r.p_value = std::nan("");
      return r;
    };

    KSCell full{c, KsInstance::full_legit_vs_adv, {}};
    full.result = (l.empty() || a.empty()) ? unavailable(l.size(), a.size()) : ks_two_sample(l, a);
    report.cells.push_back(full);

    KSCell sampled{c, KsInstance::sampled_legit_vs_adv, {}};
    if (l.empty() || a.empty()) {
      sampled.result = unavailable(l.size(), a.size());
    } else {
      std::mt19937_64 rng(cell_seed(seed, c, KsInstance::sampled_legit_vs_adv));
      const auto ls = draw(l, k, rng);
      const auto as = draw(a, k, rng);
      sampled.result = ks_two_sample(ls, as);
    }
    report.cells.push_back(sampled);

    KSCell control{c, KsInstance::control_legit_vs_legit, {}};
    if (l.size() < 2 * k) {
      control.result = unavailable(std::min(l.size(), k), std::min(l.size(), k));
    } else {
      std::mt19937_64 rng(cell_seed(seed, c, KsInstance::control_legit_vs_legit));
      const auto both = draw(l, 2 * k, rng);
      const std::vector<double> first(both.begin(), both.begin() + static_cast<std::ptrdiff_t>(k));
      const std::vector<double> second(both.begin() + static_cast<std::ptrdiff_t>(k), both.end());
      control.result = ks_two_sample(first, second);
    }
    report.cells.push_back(control);
  }
  return report;
}

}  // namespace rfadv
