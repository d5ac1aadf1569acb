#include "ctxprobe/safetensors.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "ctxprobe/error.hpp"
#include "ctxprobe/io.hpp"

namespace ctxprobe {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "little-endian host required");

std::size_t TensorInfo::numel() const {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

SafetensorsFile SafetensorsFile::read(const std::filesystem::path& path) {
  return parse(read_binary_file(path), path.string());
}

SafetensorsFile SafetensorsFile::parse(std::vector<unsigned char> bytes, const std::string& origin) {
  SafetensorsFile f;
  f.origin_ = origin;
  if (bytes.size() < 8) throw LoadError(origin + ": file too short for a safetensors header");
  std::uint64_t header_len = 0;
  std::memcpy(&header_len, bytes.data(), 8);
  if (header_len > bytes.size() - 8) {
    throw LoadError(origin + ": declared header length " + std::to_string(header_len) +
                    " exceeds file size");
  }
  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + static_cast<std::ptrdiff_t>(header_len));
  } catch (const json::exception& e) {
    throw LoadError(origin + ": malformed safetensors header: " + e.what());
  }
  if (!header.is_object()) throw LoadError(origin + ": safetensors header is not an object");
  f.payload_offset_ = 8 + header_len;
  const std::size_t payload_size = bytes.size() - f.payload_offset_;

  for (const auto& [name, entry] : header.items()) {
    if (name == "__metadata__") {
      if (entry.is_object()) {
        for (const auto& [k, v] : entry.items()) {
          if (v.is_string()) f.metadata_[k] = v.get<std::string>();
        }
      }
      continue;
    }
    try {
      TensorInfo info;
      info.dtype = entry.at("dtype").get<std::string>();
      info.shape = entry.at("shape").get<std::vector<std::size_t>>();
      const auto offs = entry.at("data_offsets").get<std::vector<std::size_t>>();
      if (offs.size() != 2 || offs[0] > offs[1]) {
        throw ShapeError(origin + ": tensor '" + name + "' has invalid data_offsets");
      }
      info.begin = offs[0];
      info.end = offs[1];
      if (info.end > payload_size) {
        throw ShapeError(origin + ": tensor '" + name + "' is truncated (data ends at byte " +
                         std::to_string(info.end) + " of a " + std::to_string(payload_size) +
                         "-byte payload)");
      }
      f.tensors_.emplace(name, std::move(info));
    } catch (const json::exception& e) {
      throw LoadError(origin + ": malformed entry for tensor '" + name + "': " + e.what());
    }
  }
  f.bytes_ = std::move(bytes);
  return f;
}

namespace {

float half_to_float(std::uint16_t h) {
  const std::uint32_t sign = static_cast<std::uint32_t>(h & 0x8000u) << 16;
  std::uint32_t exp = (h >> 10) & 0x1Fu;
  std::uint32_t mant = h & 0x3FFu;
  std::uint32_t bits;
  if (exp == 0) {
    if (mant == 0) {
      bits = sign;
    } else {
      exp = 127 - 15 + 1;
      while ((mant & 0x400u) == 0) {
        mant <<= 1;
        --exp;
      }
      mant &= 0x3FFu;
      bits = sign | (exp << 23) | (mant << 13);
    }
  } else if (exp == 0x1F) {
    bits = sign | 0x7F800000u | (mant << 13);
  } else {
    bits = sign | ((exp + 127 - 15) << 23) | (mant << 13);
  }
  return std::bit_cast<float>(bits);
}

}  // namespace

std::vector<float> SafetensorsFile::load_f32(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw LoadError(origin_ + ": missing tensor '" + name + "'");
  const TensorInfo& info = it->second;
  std::size_t width = 0;
  if (info.dtype == "F32") {
    width = 4;
  } else if (info.dtype == "F16" || info.dtype == "BF16") {
    width = 2;
  } else {
    throw ValidationError(origin_ + ": tensor '" + name + "' has unsupported dtype " + info.dtype);
  }
  const std::size_t n = info.numel();
  if (info.end - info.begin != n * width) {
    std::ostringstream os;
    os << origin_ << ": tensor '" << name << "' holds " << (info.end - info.begin)
       << " bytes but its shape requires " << n * width;
    throw ShapeError(os.str());
  }
  const unsigned char* src = bytes_.data() + payload_offset_ + info.begin;
  std::vector<float> out(n);
  if (width == 4) {
    std::memcpy(out.data(), src, n * 4);
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint16_t h;
      std::memcpy(&h, src + 2 * i, 2);
      out[i] = info.dtype == "F16" ? half_to_float(h)
                                   : std::bit_cast<float>(static_cast<std::uint32_t>(h) << 16);
    }
  }
  return out;
}

void write_safetensors(const std::filesystem::path& path, std::span<const NamedTensor> tensors,
                       const std::map<std::string, std::string>& metadata) {
  std::vector<const NamedTensor*> order;
  for (const auto& t : tensors) order.push_back(&t);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->name < b->name; });

  json header = json::object();
  std::size_t offset = 0;
  for (const NamedTensor* t : order) {
    std::size_t n = 1;
    for (std::size_t d : t->shape) n *= d;
    if (n != t->values.size()) {
      throw ShapeError("write_safetensors: tensor '" + t->name + "' shape does not match its data");
    }
    header[t->name] = {{"dtype", "F32"}, {"shape", t->shape}, {"data_offsets", {offset, offset + 4 * n}}};
    offset += 4 * n;
  }
  if (!metadata.empty()) header["__metadata__"] = metadata;
  std::string head = header.dump();
  // Payload alignment to 8 bytes, padded with spaces as the reference writer does.
  while ((8 + head.size()) % 8 != 0) head.push_back(' ');

  std::vector<unsigned char> bytes(8 + head.size() + offset);
  const std::uint64_t len = head.size();
  std::memcpy(bytes.data(), &len, 8);
  std::memcpy(bytes.data() + 8, head.data(), head.size());
  std::size_t pos = 8 + head.size();
  for (const NamedTensor* t : order) {
    std::memcpy(bytes.data() + pos, t->values.data(), t->values.size() * 4);
    pos += t->values.size() * 4;
  }
  write_file_atomic(path, std::span<const unsigned char>(bytes));
}

}  // namespace ctxprobe
