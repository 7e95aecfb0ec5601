#include "snn/checkpoint.hpp"

#include <cstring>

#include "snn/bytes.hpp"
#include "snn/error.hpp"

namespace snn {

namespace {
constexpr char kMagic[4] = {'S', 'N', 'N', 'W'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kF32 = 0;
constexpr std::uint8_t kF64 = 1;
}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const NamedTensors& tensors) {
  std::vector<std::uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 4);
  put_u16(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (name.size() > 0xFFFF) throw ConfigError("checkpoint: tensor name too long");
    put_u16(out, static_cast<std::uint16_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    out.push_back(kF64);
    out.push_back(static_cast<std::uint8_t>(t.shape().size()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < t.size(); ++i) put_f64(out, t.at(i));
  }
  return out;
}

NamedTensors decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  std::size_t pos = 0;
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0)
    throw IoError("checkpoint: bad magic");
  pos = 4;
  const std::uint16_t version = get_u16(bytes, pos);
  if (version != kVersion)
    throw IoError("checkpoint: unsupported version " + std::to_string(version));
  const std::uint32_t count = get_u32(bytes, pos);
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint16_t name_len = get_u16(bytes, pos);
    if (pos + name_len > bytes.size()) throw IoError("checkpoint: truncated name");
    std::string name(bytes.begin() + static_cast<long>(pos),
                     bytes.begin() + static_cast<long>(pos + name_len));
    pos += name_len;
    const std::uint8_t dtype = get_u8(bytes, pos);
    if (dtype != kF32 && dtype != kF64)
      throw IoError("checkpoint: unknown dtype " + std::to_string(dtype));
    const std::uint8_t rank = get_u8(bytes, pos);
    Shape shape(rank);
    for (std::uint8_t d = 0; d < rank; ++d) shape[d] = get_u32(bytes, pos);
    std::vector<double> data(numel(shape));
    for (double& v : data) {
      if (dtype == kF64) {
        v = get_f64(bytes, pos);
      } else {
        std::uint32_t bits = get_u32(bytes, pos);
        float f;
        std::memcpy(&f, &bits, sizeof(f));
        v = static_cast<double>(f);
      }
    }
    out.emplace_back(std::move(name), Tensor::from(std::move(shape), std::move(data)));
  }
  if (pos != bytes.size()) throw IoError("checkpoint: trailing bytes");
  return out;
}

void save_checkpoint(const std::string& path, const NamedTensors& tensors) {
  write_file(path, encode_checkpoint(tensors));
}

NamedTensors load_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file(path));
}

}  // namespace snn
