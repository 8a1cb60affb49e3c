#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace streamvc {

using Shape = std::vector<std::int64_t>;

std::string shape_to_string(const Shape& shape);
std::int64_t shape_elements(const Shape& shape);

struct Tensor {
  Shape shape;
  std::vector<float> values;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

// Name and shape of one stored tensor.
struct TensorInfo {
  std::string name;
  Shape shape;

  friend bool operator==(const TensorInfo&, const TensorInfo&) = default;
};

// Immutable-after-construction store of named single-precision tensors.
// Iteration order (and therefore the serialized layout) is sorted by name.
class ModelWeights {
 public:
  static constexpr std::string_view kFormatVersion = "SVW1";

  void set(const std::string& name, Shape shape, std::vector<float> values);

  bool contains(const std::string& name) const { return tensors_.contains(name); }
  std::size_t size() const { return tensors_.size(); }

  // Throws MissingLayerError naming `name`.
  const Tensor& get(const std::string& name) const;
  // Values of `name` after checking its shape; throws MissingLayerError or
  // WeightShapeError naming the tensor.
  std::span<const float> require(const std::string& name, const Shape& shape) const;

  std::vector<TensorInfo> manifest() const;
  const std::map<std::string, Tensor>& tensors() const { return tensors_; }

  // CRC-32 over the serialized manifest and tensor blob.
  std::uint32_t checksum() const;

  friend bool operator==(const ModelWeights&, const ModelWeights&) = default;

 private:
  std::map<std::string, Tensor> tensors_;
};

// SVW1 container:
//   line 1: "SVW1"
//   line 2: "<crc32, 8 hex digits> <manifest bytes> <blob bytes>"
//   manifest: one line per tensor, "<name> f32 <d0,d1,...> <byte offset>"
//   blob: little-endian float32 values, tensors back to back in manifest order
// The CRC-32 (IEEE) covers the manifest followed by the blob.
std::string serialize_weights(const ModelWeights& weights);
// Throws VersionError, FormatError, ChecksumError.
ModelWeights parse_weights(std::string_view bytes);

void save_weights(const ModelWeights& weights, const std::filesystem::path& path);
ModelWeights load_weights(const std::filesystem::path& path);

}  // namespace streamvc
