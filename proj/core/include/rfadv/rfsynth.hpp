#pragma once

#include <complex>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "rfadv/tensor.hpp"

namespace rfadv {

enum class ModScheme : std::uint8_t { BPSK, QPSK, PSK8, QAM16 };

inline constexpr int kFrameSamples = 1024;
inline constexpr int kVectorLength = 2 * kFrameSamples;

int bits_per_symbol(ModScheme s);
std::string_view scheme_name(ModScheme s);
ModScheme parse_scheme(std::string_view name);
/// Gray-coded, unit average energy. Index i corresponds to the bit pattern
/// of i written MSB first.
const std::vector<std::complex<double>>& constellation(ModScheme s);

using cplx = std::complex<double>;

/// Maps bits (0/1) to constellation points, MSB first within each symbol.
std::vector<cplx> map_symbols(const std::vector<std::uint8_t>& bits, ModScheme scheme);

struct PulseShape {
  int samples_per_symbol = 8;
  double rolloff = 0.35;
  int span_symbols = 8;
};

/// Root-raised-cosine taps, unit energy, length span*sps + 1.
std::vector<double> rrc_taps(const PulseShape& shape);

/// One complex baseband data point.
struct IQFrame {
  std::vector<cplx> samples;
  ModScheme label = ModScheme::BPSK;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

/// Noiseless unit-power waveform and the noise added to it, kept apart.
struct FrameComponents {
  std::vector<cplx> signal;
  std::vector<cplx> noise;
  /// Sample index of the first symbol-rate instant; subsequent ones follow
  /// every samples_per_symbol samples.
  int symbol_phase = 0;
};

/// Random bits -> symbols -> RRC shaping -> unit power -> AWGN whose
/// realization is scaled to exactly 1 / 10^(snr_db/10) mean power.
FrameComponents synth_components(ModScheme scheme, double snr_db, std::uint64_t seed,
                                 const PulseShape& shape = {});
IQFrame synth_frame(ModScheme scheme, double snr_db, std::uint64_t seed, const PulseShape& shape = {});

double mean_power(const std::vector<cplx>& x);

/// {I1, Q1, I2, Q2, ...}
std::vector<float> interleave(const IQFrame& frame);
std::vector<float> interleave(const std::vector<cplx>& samples);
std::vector<cplx> deinterleave(const std::vector<float>& values);

struct DatasetMeta {
  std::vector<ModScheme> schemes;
  double snr_lo_db = 14.0;
  double snr_hi_db = 20.0;
  std::uint64_t seed = 0;
  std::string split;
};

/// Interleaved frames stored row-major as [rows, vector_len].
struct Dataset {
  std::vector<float> frames;
  std::vector<int> labels;
  std::vector<float> snr_db;
  int vector_len = kVectorLength;
  DatasetMeta meta;

  std::size_t size() const { return labels.size(); }
  const float* row(std::size_t i) const { return frames.data() + i * static_cast<std::size_t>(vector_len); }
  float* row(std::size_t i) { return frames.data() + i * static_cast<std::size_t>(vector_len); }
  /// Rows `idx` as an [n, 1, vector_len] tensor.
  Tensor batch(const std::vector<std::size_t>& idx) const;
  std::vector<int> batch_labels(const std::vector<std::size_t>& idx) const;
  /// First `n` rows (all when n >= size()).
  Dataset head(std::size_t n) const;
  void validate() const;
};

struct DatasetSpec {
  std::vector<ModScheme> schemes{ModScheme::BPSK, ModScheme::QPSK, ModScheme::PSK8, ModScheme::QAM16};
  double snr_lo_db = 14.0;
  double snr_hi_db = 20.0;
  int train_per_class = 2500;
  int test_per_class = 500;
  std::uint64_t seed = 1;
  PulseShape pulse;
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

/// Stratified train/test frames; rows cycle through the classes in order so
/// any prefix of 4*m rows holds m frames per class.
DatasetSplit build_dataset(const DatasetSpec& spec);

// RFDS: "RFDS" | u32 version=1 | u32 frame_count | u32 vector_len |
// frame_count x (vector_len float32 LE + u8 label). Metadata sits in a
// sidecar "<path>.json".
void save_rfds(const std::filesystem::path& path, const Dataset& ds);
Dataset load_rfds(const std::filesystem::path& path);
std::string encode_rfds(const Dataset& ds);
Dataset decode_rfds(const std::string& bytes);

}  // namespace rfadv
