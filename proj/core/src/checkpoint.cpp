#include "rfadv/checkpoint.hpp"

#include <fstream>
#include <iterator>

#include "rfadv/binary_io.hpp"
#include "rfadv/error.hpp"

namespace rfadv {

namespace binio {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InvalidInput("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InvalidInput("short write to " + path);
}

}  // namespace binio

std::string encode_checkpoint(const std::vector<NamedTensor>& tensors) {
  std::string out = "RFWT";
  binio::put_u32(out, kCheckpointVersion);
  binio::put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 255) throw InvalidInput("checkpoint tensor name longer than 255 bytes: " + name);
    binio::put_u8(out, static_cast<std::uint8_t>(name.size()));
    out += name;
    binio::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (int d : t.shape()) binio::put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data()) binio::put_f32(out, v);
  }
  return out;
}

std::vector<NamedTensor> decode_checkpoint(const std::string& bytes) {
  binio::Reader r(bytes, "RFWT checkpoint");
  if (r.str(4) != "RFWT") throw InvalidInput("RFWT checkpoint: bad magic");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw InvalidInput("RFWT checkpoint: unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = r.u32();
  std::vector<NamedTensor> tensors;
  tensors.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    NamedTensor nt;
    nt.name = r.str(r.u8());
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw InvalidInput("RFWT checkpoint: implausible rank for " + nt.name);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = static_cast<int>(r.u32());
    nt.tensor = Tensor(shape);
    r.f32s(nt.tensor.ptr(), nt.tensor.size());
    tensors.push_back(std::move(nt));
  }
  if (!r.done()) throw InvalidInput("RFWT checkpoint: trailing bytes");
  return tensors;
}

void save_checkpoint(const std::filesystem::path& path, const std::vector<NamedTensor>& tensors) {
  binio::write_file(path.string(), encode_checkpoint(tensors));
}

std::vector<NamedTensor> load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(binio::read_file(path.string()));
}

}  // namespace rfadv
