#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace ctxprobe {

struct TensorInfo {
  std::string dtype;
  std::vector<std::size_t> shape;
  std::size_t begin = 0;  // byte offsets into the payload
  std::size_t end = 0;

  std::size_t numel() const;
};

// Reader for the safetensors single-file layout: u64 LE header length, JSON
// header mapping tensor names to {dtype, shape, data_offsets}, raw LE payload.
class SafetensorsFile {
 public:
  static SafetensorsFile read(const std::filesystem::path& path);
  static SafetensorsFile parse(std::vector<unsigned char> bytes, const std::string& origin = "<memory>");

  const std::map<std::string, TensorInfo>& tensors() const noexcept { return tensors_; }
  const std::map<std::string, std::string>& metadata() const noexcept { return metadata_; }
  bool contains(const std::string& name) const { return tensors_.count(name) != 0; }

  // Decodes a tensor as float32. Throws ShapeError if the stored byte range
  // does not match its declared shape, ValidationError on unsupported dtypes.
  std::vector<float> load_f32(const std::string& name) const;

 private:
  std::string origin_;
  std::vector<unsigned char> bytes_;
  std::size_t payload_offset_ = 0;
  std::map<std::string, TensorInfo> tensors_;
  std::map<std::string, std::string> metadata_;
};

struct NamedTensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<const float> values;
};

// Writes F32 tensors in name order.
void write_safetensors(const std::filesystem::path& path, std::span<const NamedTensor> tensors,
                       const std::map<std::string, std::string>& metadata = {});

}  // namespace ctxprobe
