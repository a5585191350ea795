#include <algorithm>
#include <bitset>
#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "rfadv/error.hpp"
#include "rfadv/rfsynth.hpp"

using namespace rfadv;

namespace {

constexpr ModScheme kAll[] = {ModScheme::BPSK, ModScheme::QPSK, ModScheme::PSK8, ModScheme::QAM16};

std::vector<std::uint8_t> bits_of(int value, int width) {
  std::vector<std::uint8_t> b;
  for (int i = width - 1; i >= 0; --i) b.push_back(static_cast<std::uint8_t>((value >> i) & 1));
  return b;
}

}  // namespace

TEST(Constellation, BpskIsAntipodal) {
  const auto s = map_symbols({0, 1}, ModScheme::BPSK);
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0], cplx(1.0, 0.0));
  EXPECT_EQ(s[1], cplx(-1.0, 0.0));
}

TEST(Constellation, QpskZeroZeroIsFirstQuadrant) {
  // Gray QPSK: the first bit picks the sign of I, the second the sign of Q.
  const double a = 1.0 / std::sqrt(2.0);
  for (int v = 0; v < 4; ++v) {
    const auto s = map_symbols(bits_of(v, 2), ModScheme::QPSK);
    const cplx expected((v & 2) ? -a : a, (v & 1) ? -a : a);
    EXPECT_NEAR(std::abs(s[0] - expected), 0.0, 1e-15) << "pattern " << v;
  }
}

TEST(Constellation, UnitAverageEnergyByEnumeration) {
  for (ModScheme s : kAll) {
    const int bits = bits_per_symbol(s);
    double energy = 0.0;
    std::set<std::pair<double, double>> distinct;
    for (int v = 0; v < (1 << bits); ++v) {
      const cplx p = map_symbols(bits_of(v, bits), s)[0];
      energy += std::norm(p);
      distinct.insert({std::round(p.real() * 1e9), std::round(p.imag() * 1e9)});
    }
    energy /= (1 << bits);
    EXPECT_NEAR(energy, 1.0, 1e-12) << scheme_name(s);
    EXPECT_EQ(distinct.size(), static_cast<std::size_t>(1 << bits)) << scheme_name(s);
  }
}

TEST(Constellation, NearestNeighboursDifferInOneBit) {
  for (ModScheme s : kAll) {
    const auto& pts = constellation(s);
    double dmin = INFINITY;
    for (std::size_t i = 0; i < pts.size(); ++i)
      for (std::size_t j = i + 1; j < pts.size(); ++j) dmin = std::min(dmin, std::abs(pts[i] - pts[j]));
    for (std::size_t i = 0; i < pts.size(); ++i) {
      for (std::size_t j = i + 1; j < pts.size(); ++j) {
        if (std::abs(pts[i] - pts[j]) < dmin * (1 + 1e-9)) {
          EXPECT_EQ(std::bitset<8>(i ^ j).count(), 1u) << scheme_name(s) << " " << i << "," << j;
        }
      }
    }
  }
}

TEST(Constellation, RejectsPartialSymbols) {
  EXPECT_THROW(map_symbols({0, 1, 1}, ModScheme::QPSK), InvalidInput);
  EXPECT_THROW(map_symbols({2}, ModScheme::BPSK), InvalidInput);
}

TEST(Synth, FrameIsDeterministic) {
  for (ModScheme s : kAll) {
    const IQFrame a = synth_frame(s, 15.0, 99);
    const IQFrame b = synth_frame(s, 15.0, 99);
    ASSERT_EQ(a.samples.size(), static_cast<std::size_t>(kFrameSamples));
    EXPECT_EQ(a.samples, b.samples);
    EXPECT_NE(a.samples, synth_frame(s, 15.0, 100).samples);
  }
}

TEST(Synth, HighSnrBpskPhaseAtSymbolInstants) {
  const PulseShape shape;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const FrameComponents c = synth_components(ModScheme::BPSK, 100.0, seed, shape);
    const IQFrame f = synth_frame(ModScheme::BPSK, 100.0, seed, shape);
    int checked = 0;
    for (int i = c.symbol_phase; i < kFrameSamples; i += shape.samples_per_symbol) {
      const double phase = std::abs(std::arg(f.samples[static_cast<std::size_t>(i)]));
      EXPECT_LT(std::min(phase, std::numbers::pi - phase), 1e-3) << "sample " << i;
      ++checked;
    }
    EXPECT_EQ(checked, kFrameSamples / shape.samples_per_symbol);
  }
}

TEST(Synth, EmpiricalSnrMatchesRequest) {
  for (ModScheme s : kAll) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const FrameComponents c = synth_components(s, 14.0, seed);
      const double snr = 10.0 * std::log10(mean_power(c.signal) / mean_power(c.noise));
      EXPECT_NEAR(snr, 14.0, 0.2);
    }
  }
}

TEST(Synth, SignalHasUnitPowerBeforeNoise) {
  for (ModScheme s : kAll) {
    const FrameComponents c = synth_components(s, 10.0, 7);
    double p = 0.0;
    for (const cplx& v : c.signal) p += std::norm(v);
    EXPECT_NEAR(p / static_cast<double>(c.signal.size()), 1.0, 1e-9);
  }
}

TEST(Synth, FrameIsSignalPlusNoise) {
  const FrameComponents c = synth_components(ModScheme::QAM16, 16.0, 11);
  const IQFrame f = synth_frame(ModScheme::QAM16, 16.0, 11);
  for (std::size_t i = 0; i < c.signal.size(); ++i) EXPECT_EQ(f.samples[i], c.signal[i] + c.noise[i]);
}

TEST(Synth, RrcTapsHaveUnitEnergy) {
  const auto taps = rrc_taps({});
  EXPECT_EQ(taps.size(), 65u);
  double e = 0.0;
  for (double t : taps) e += t * t;
  EXPECT_NEAR(e, 1.0, 1e-12);
  for (std::size_t i = 0; i < taps.size(); ++i) EXPECT_NEAR(taps[i], taps[taps.size() - 1 - i], 1e-15);
}

TEST(Interleave, ToyFrame) {
  const std::vector<float> v = interleave(std::vector<cplx>{{1, 2}, {3, 4}});
  EXPECT_EQ(v, (std::vector<float>{1, 2, 3, 4}));
}

TEST(Interleave, ZeroFrame) {
  IQFrame f;
  f.samples.assign(kFrameSamples, cplx(0, 0));
  const auto v = interleave(f);
  EXPECT_EQ(v.size(), static_cast<std::size_t>(kVectorLength));
  EXPECT_TRUE(std::all_of(v.begin(), v.end(), [](float x) { return x == 0.0f; }));
}

TEST(Interleave, RoundTrip) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(-3, 3);
  std::vector<cplx> f(kFrameSamples);
  for (auto& s : f) s = cplx(u(rng), u(rng));
  EXPECT_EQ(deinterleave(interleave(f)), f);
}

TEST(Dataset, BalancedAndDeterministic) {
  DatasetSpec spec;
  spec.train_per_class = 30;
  spec.test_per_class = 12;
  spec.seed = 4;
  const DatasetSplit a = build_dataset(spec);
  const DatasetSplit b = build_dataset(spec);
  ASSERT_EQ(a.train.size(), 120u);
  ASSERT_EQ(a.test.size(), 48u);
  for (const Dataset* d : {&a.train, &a.test}) {
    std::vector<int> hist(4, 0);
    for (int l : d->labels) ++hist[static_cast<std::size_t>(l)];
    for (int h : hist) EXPECT_EQ(h, static_cast<int>(d->size() / 4));
    for (float snr : d->snr_db) {
      EXPECT_GE(snr, 14.0f);
      EXPECT_LE(snr, 20.0f);
    }
  }
  EXPECT_EQ(a.train.frames, b.train.frames);
  EXPECT_EQ(a.test.frames, b.test.frames);
  EXPECT_EQ(a.train.labels, b.train.labels);
  EXPECT_NE(a.train.frames, a.test.frames);

  spec.seed = 5;
  EXPECT_NE(build_dataset(spec).train.frames, a.train.frames);
}

TEST(Dataset, DeskScaleCounts) {
  DatasetSpec spec;
  spec.test_per_class = 1;
  spec.train_per_class = 2500;
  const DatasetSplit d = build_dataset(spec);
  EXPECT_EQ(d.train.size(), 10000u);
  std::vector<int> hist(4, 0);
  for (int l : d.train.labels) ++hist[static_cast<std::size_t>(l)];
  EXPECT_EQ(hist, (std::vector<int>{2500, 2500, 2500, 2500}));
}

TEST(Dataset, RejectsEmptySchemes) {
  DatasetSpec spec;
  spec.schemes.clear();
  EXPECT_THROW(build_dataset(spec), InvalidInput);
  spec = {};
  spec.train_per_class = 0;
  EXPECT_THROW(build_dataset(spec), InvalidInput);
}

TEST(Rfds, RoundTripInMemoryAndOnDisk) {
  DatasetSpec spec;
  spec.train_per_class = 3;
  spec.test_per_class = 1;
  const Dataset d = build_dataset(spec).train;
  const Dataset e = decode_rfds(encode_rfds(d));
  EXPECT_EQ(e.frames, d.frames);
  EXPECT_EQ(e.labels, d.labels);
  EXPECT_EQ(e.vector_len, d.vector_len);

  const auto path = std::filesystem::temp_directory_path() / "rfadv_test_roundtrip.rfds";
  save_rfds(path, d);
  const Dataset f = load_rfds(path);
  EXPECT_EQ(f.frames, d.frames);
  EXPECT_EQ(f.labels, d.labels);
  std::filesystem::remove(path);
  std::filesystem::remove(path.string() + ".json");
}

TEST(Rfds, RejectsCorruptBytes) {
  DatasetSpec spec;
  spec.train_per_class = 1;
  spec.test_per_class = 1;
  std::string bytes = encode_rfds(build_dataset(spec).test);
  EXPECT_THROW(decode_rfds(bytes.substr(0, bytes.size() - 3)), InvalidInput);
  bytes[0] = 'X';
  EXPECT_THROW(decode_rfds(bytes), InvalidInput);
}
