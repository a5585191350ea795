#include "rfadv/rfsynth.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "rfadv/binary_io.hpp"
#include "rfadv/error.hpp"

namespace rfadv {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

std::vector<cplx> make_constellation(ModScheme s) {
  using std::numbers::pi;
  std::vector<cplx> pts;
  switch (s) {
    case ModScheme::BPSK:
      pts = {cplx(1, 0), cplx(-1, 0)};
      break;
    case ModScheme::QPSK: {
      const double a = 1.0 / std::sqrt(2.0);
      // bit0 -> I sign, bit1 -> Q sign
      for (int i = 0; i < 4; ++i) pts.emplace_back((i & 2) ? -a : a, (i & 1) ? -a : a);
      break;
    }
    case ModScheme::PSK8: {
      pts.resize(8);
      for (int k = 0; k < 8; ++k) {
        const int gray = k ^ (k >> 1);
        pts[static_cast<std::size_t>(gray)] = std::polar(1.0, 2.0 * pi * k / 8.0);
      }
      break;
    }
    case ModScheme::QAM16: {
      // Two Gray-coded bits per axis: 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3.
      const double levels[4] = {-3.0, -1.0, 3.0, 1.0};
      const double scale = 1.0 / std::sqrt(10.0);
      for (int i = 0; i < 16; ++i) pts.emplace_back(levels[(i >> 2) & 3] * scale, levels[i & 3] * scale);
      break;
    }
  }
  return pts;
}

}  // namespace

int bits_per_symbol(ModScheme s) {
  switch (s) {
    case ModScheme::BPSK: return 1;
    case ModScheme::QPSK: return 2;
    case ModScheme::PSK8: return 3;
    case ModScheme::QAM16: return 4;
  }
  throw InvalidInput("unknown modulation scheme");
}

std::string_view scheme_name(ModScheme s) {
  switch (s) {
    case ModScheme::BPSK: return "BPSK";
    case ModScheme::QPSK: return "QPSK";
    case ModScheme::PSK8: return "8PSK";
    case ModScheme::QAM16: return "16QAM";
  }
  throw InvalidInput("unknown modulation scheme");
}

ModScheme parse_scheme(std::string_view name) {
  for (ModScheme s : {ModScheme::BPSK, ModScheme::QPSK, ModScheme::PSK8, ModScheme::QAM16}) {
    if (name == scheme_name(s)) return s;
  }
  if (name == "PSK8") return ModScheme::PSK8;
  if (name == "QAM16") return ModScheme::QAM16;
  throw InvalidInput("unknown modulation scheme '" + std::string(name) + "' (expected BPSK, QPSK, 8PSK, 16QAM)");
}

const std::vector<cplx>& constellation(ModScheme s) {
  static const std::vector<cplx> tables[4] = {make_constellation(ModScheme::BPSK),
                                              make_constellation(ModScheme::QPSK),
                                              make_constellation(ModScheme::PSK8),
                                              make_constellation(ModScheme::QAM16)};
  return tables[static_cast<int>(s)];
}

std::vector<cplx> map_symbols(const std::vector<std::uint8_t>& bits, ModScheme scheme) {
  const int bps = bits_per_symbol(scheme);
  if (bits.size() % static_cast<std::size_t>(bps) != 0) {
    throw InvalidInput("map_symbols: " + std::to_string(bits.size()) + " bits is not a multiple of " +
                       std::to_string(bps) + " for " + std::string(scheme_name(scheme)));
  }
  const auto& table = constellation(scheme);
  std::vector<cplx> out;
  out.reserve(bits.size() / static_cast<std::size_t>(bps));
  for (std::size_t i = 0; i < bits.size(); i += static_cast<std::size_t>(bps)) {
    unsigned idx = 0;
    for (int b = 0; b < bps; ++b) {
      const std::uint8_t bit = bits[i + static_cast<std::size_t>(b)];
      if (bit > 1) throw InvalidInput("map_symbols: bits must be 0 or 1");
      idx = (idx << 1) | bit;
    }
    out.push_back(table[idx]);
  }
  return out;
}

std::vector<double> rrc_taps(const PulseShape& shape) {
  using std::numbers::pi;
  if (shape.samples_per_symbol < 1 || shape.span_symbols < 2 || shape.span_symbols % 2 != 0) {
    throw InvalidInput("rrc_taps: need sps >= 1 and an even span >= 2");
  }
  if (shape.rolloff <= 0.0 || shape.rolloff > 1.0) throw InvalidInput("rrc_taps: rolloff must lie in (0, 1]");
  const double beta = shape.rolloff;
  const int n = shape.span_symbols * shape.samples_per_symbol + 1;
  const int mid = n / 2;
  std::vector<double> h(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double t = static_cast<double>(i - mid) / shape.samples_per_symbol;
    double v;
    if (t == 0.0) {
      v = 1.0 - beta + 4.0 * beta / pi;
    } else if (std::abs(std::abs(t) - 1.0 / (4.0 * beta)) < 1e-9) {
      v = beta / std::sqrt(2.0) *
          ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * beta)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * beta)));
    } else {
      v = (std::sin(pi * t * (1.0 - beta)) + 4.0 * beta * t * std::cos(pi * t * (1.0 + beta))) /
          (pi * t * (1.0 - std::pow(4.0 * beta * t, 2)));
    }
    h[static_cast<std::size_t>(i)] = v;
  }
  double energy = 0.0;
  for (double v : h) energy += v * v;
  for (double& v : h) v /= std::sqrt(energy);
  return h;
}

double mean_power(const std::vector<cplx>& x) {
  if (x.empty()) return 0.0;
  double p = 0.0;
  for (const auto& c : x) p += std::norm(c);
  return p / static_cast<double>(x.size());
}

FrameComponents synth_components(ModScheme scheme, double snr_db, std::uint64_t seed, const PulseShape& shape) {
  if (!std::isfinite(snr_db)) throw InvalidInput("synth_frame: snr_db must be finite");
  const int sps = shape.samples_per_symbol;
  if (kFrameSamples % sps != 0) throw InvalidInput("synth_frame: frame length must be a multiple of sps");
  const auto taps = rrc_taps(shape);
  const int half_span = shape.span_symbols / 2;

  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(scheme),
                    static_cast<std::uint32_t>(std::bit_cast<std::uint64_t>(snr_db)),
                    static_cast<std::uint32_t>(std::bit_cast<std::uint64_t>(snr_db) >> 32)};
  std::mt19937_64 rng(seq);

  const int n_sym = kFrameSamples / sps + shape.span_symbols;
  const int bps = bits_per_symbol(scheme);
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(n_sym * bps));
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng() >> 63);
  const auto symbols = map_symbols(bits, scheme);

  // Symbol s peaks at full-rate index s*sps + half_span*sps. Starting the
  // frame one filter half-span after the first peak leaves no edge transient.
  const int start = 2 * half_span * sps;
  const int ntaps = static_cast<int>(taps.size());
  FrameComponents out;
  out.signal.resize(kFrameSamples);
  for (int j = 0; j < kFrameSamples; ++j) {
    const int m = start + j;
    cplx acc(0.0, 0.0);
    const int s_lo = std::max(0, (m - ntaps + 1 + sps - 1) / sps);
    const int s_hi = std::min(n_sym - 1, m / sps);
    for (int s = s_lo; s <= s_hi; ++s) acc += symbols[static_cast<std::size_t>(s)] * taps[static_cast<std::size_t>(m - s * sps)];
    out.signal[static_cast<std::size_t>(j)] = acc;
  }
  const double p = mean_power(out.signal);
  for (auto& c : out.signal) c /= std::sqrt(p);
  out.symbol_phase = 0;

  std::normal_distribution<double> gauss(0.0, 1.0);
  out.noise.resize(kFrameSamples);
  for (auto& c : out.noise) {
    const double re = gauss(rng);
    const double im = gauss(rng);
    c = cplx(re, im);
  }
  const double target = std::pow(10.0, -snr_db / 10.0);
  const double np = mean_power(out.noise);
  const double scale = np > 0.0 ? std::sqrt(target / np) : 0.0;
  for (auto& c : out.noise) c *= scale;
  return out;
}

IQFrame synth_frame(ModScheme scheme, double snr_db, std::uint64_t seed, const PulseShape& shape) {
  auto parts = synth_components(scheme, snr_db, seed, shape);
  IQFrame f;
  f.samples.resize(parts.signal.size());
  for (std::size_t i = 0; i < f.samples.size(); ++i) f.samples[i] = parts.signal[i] + parts.noise[i];
  f.label = scheme;
  f.snr_db = snr_db;
  f.seed = seed;
  return f;
}

std::vector<float> interleave(const std::vector<cplx>& samples) {
  std::vector<float> out(2 * samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out[2 * i] = static_cast<float>(samples[i].real());
    out[2 * i + 1] = static_cast<float>(samples[i].imag());
  }
  return out;
}

std::vector<float> interleave(const IQFrame& frame) { return interleave(frame.samples); }

std::vector<cplx> deinterleave(const std::vector<float>& values) {
  if (values.size() % 2 != 0) throw InvalidInput("deinterleave: odd vector length");
  std::vector<cplx> out(values.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = cplx(values[2 * i], values[2 * i + 1]);
  return out;
}

Tensor Dataset::batch(const std::vector<std::size_t>& idx) const {
  Tensor t({static_cast<int>(idx.size()), 1, vector_len});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= size()) throw InvalidInput("dataset row index out of range");
    std::copy_n(row(idx[i]), vector_len, t.ptr() + i * static_cast<std::size_t>(vector_len));
  }
  return t;
}

std::vector<int> Dataset::batch_labels(const std::vector<std::size_t>& idx) const {
  std::vector<int> out;
  out.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(labels.at(i));
  return out;
}

Dataset Dataset::head(std::size_t n) const {
  n = std::min(n, size());
  Dataset d;
  d.vector_len = vector_len;
  d.meta = meta;
  d.frames.assign(frames.begin(), frames.begin() + static_cast<std::ptrdiff_t>(n * vector_len));
  d.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(n));
  if (snr_db.size() == size()) d.snr_db.assign(snr_db.begin(), snr_db.begin() + static_cast<std::ptrdiff_t>(n));
  return d;
}

void Dataset::validate() const {
  if (vector_len <= 0) throw InvalidInput("dataset: vector_len must be positive");
  if (frames.size() != labels.size() * static_cast<std::size_t>(vector_len)) {
    throw InvalidInput("dataset: frame storage does not match label count");
  }
  const int classes = static_cast<int>(meta.schemes.size());
  for (int y : labels) {
    if (y < 0 || y >= classes) throw InvalidInput("dataset: label " + std::to_string(y) + " has no scheme in metadata");
  }
}

DatasetSplit build_dataset(const DatasetSpec& spec) {
  if (spec.schemes.empty()) throw InvalidInput("build_dataset: scheme list is empty");
  if (spec.train_per_class < 1 || spec.test_per_class < 1) {
    throw InvalidInput("build_dataset: per-class counts must be >= 1");
  }
  if (!(spec.snr_lo_db <= spec.snr_hi_db)) throw InvalidInput("build_dataset: snr range is inverted");

  const int classes = static_cast<int>(spec.schemes.size());
  auto make = [&](int per_class, std::uint64_t split_tag, const char* name) {
    Dataset d;
    d.meta = DatasetMeta{spec.schemes, spec.snr_lo_db, spec.snr_hi_db, spec.seed, name};
    const std::size_t rows = static_cast<std::size_t>(per_class) * static_cast<std::size_t>(classes);
    d.frames.resize(rows * kVectorLength);
    d.labels.resize(rows);
    d.snr_db.resize(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const int cls = static_cast<int>(r % static_cast<std::size_t>(classes));
      const std::uint64_t frame_seed = splitmix64(splitmix64(spec.seed ^ (split_tag << 56)) + r);
      std::mt19937_64 snr_rng(splitmix64(frame_seed));
      const double snr =
          spec.snr_lo_db + (spec.snr_hi_db - spec.snr_lo_db) * std::generate_canonical<double, 53>(snr_rng);
      const IQFrame f = synth_frame(spec.schemes[static_cast<std::size_t>(cls)], snr, frame_seed, spec.pulse);
      const auto v = interleave(f);
      std::copy(v.begin(), v.end(), d.row(r));
      d.labels[r] = cls;
      d.snr_db[r] = static_cast<float>(snr);
    }
    return d;
  };
  return DatasetSplit{make(spec.train_per_class, 1, "train"), make(spec.test_per_class, 2, "test")};
}

std::string encode_rfds(const Dataset& ds) {
  ds.validate();
  std::string out = "RFDS";
  binio::put_u32(out, 1);
  binio::put_u32(out, static_cast<std::uint32_t>(ds.size()));
  binio::put_u32(out, static_cast<std::uint32_t>(ds.vector_len));
  out.reserve(out.size() + ds.size() * (static_cast<std::size_t>(ds.vector_len) * 4 + 1));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const float* r = ds.row(i);
    for (int j = 0; j < ds.vector_len; ++j) binio::put_f32(out, r[j]);
    binio::put_u8(out, static_cast<std::uint8_t>(ds.labels[i]));
  }
  return out;
}

Dataset decode_rfds(const std::string& bytes) {
  binio::Reader r(bytes, "RFDS dataset");
  if (r.str(4) != "RFDS") throw InvalidInput("RFDS dataset: bad magic");
  const std::uint32_t version = r.u32();
  if (version != 1) throw InvalidInput("RFDS dataset: unsupported version " + std::to_string(version));
  const std::uint32_t count = r.u32();
  const std::uint32_t len = r.u32();
  if (len == 0) throw InvalidInput("RFDS dataset: zero vector length");
  if (r.remaining() != static_cast<std::size_t>(count) * (static_cast<std::size_t>(len) * 4 + 1)) {
    throw InvalidInput("RFDS dataset: payload size does not match header");
  }
  Dataset d;
  d.vector_len = static_cast<int>(len);
  d.frames.resize(static_cast<std::size_t>(count) * len);
  d.labels.resize(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    r.f32s(d.row(i), len);
    d.labels[i] = r.u8();
  }
  return d;
}

namespace {

std::filesystem::path sidecar(const std::filesystem::path& path) {
  auto p = path;
  p += ".json";
  return p;
}

}  // namespace

void save_rfds(const std::filesystem::path& path, const Dataset& ds) {
  binio::write_file(path.string(), encode_rfds(ds));
  nlohmann::ordered_json meta;
  auto& schemes = meta["schemes"] = nlohmann::ordered_json::array();
  for (auto s : ds.meta.schemes) schemes.push_back(std::string(scheme_name(s)));
  meta["snr_db"] = {ds.meta.snr_lo_db, ds.meta.snr_hi_db};
  meta["seed"] = ds.meta.seed;
  meta["split"] = ds.meta.split;
  meta["frame_count"] = ds.size();
  meta["vector_len"] = ds.vector_len;
  std::ofstream(sidecar(path)) << meta.dump(2) << '\n';
}

Dataset load_rfds(const std::filesystem::path& path) {
  Dataset d = decode_rfds(binio::read_file(path.string()));
  const auto side = sidecar(path);
  if (std::filesystem::exists(side)) {
    std::ifstream in(side);
    const auto meta = nlohmann::json::parse(in);
    for (const auto& s : meta.at("schemes")) d.meta.schemes.push_back(parse_scheme(s.get<std::string>()));
    d.meta.snr_lo_db = meta.at("snr_db").at(0).get<double>();
    d.meta.snr_hi_db = meta.at("snr_db").at(1).get<double>();
    d.meta.seed = meta.at("seed").get<std::uint64_t>();
    d.meta.split = meta.at("split").get<std::string>();
  } else {
    int mx = -1;
    for (int y : d.labels) mx = std::max(mx, y);
    for (int i = 0; i <= mx && i < 4; ++i) d.meta.schemes.push_back(static_cast<ModScheme>(i));
  }
  d.validate();
  return d;
}

}  // namespace rfadv
