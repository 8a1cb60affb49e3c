#include "streamvc/weights.hpp"

#include <bit>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include <zlib.h>

#include "streamvc/error.hpp"

namespace streamvc {

std::string shape_to_string(const Shape& shape) {
  std::string out;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(shape[i]);
  }
  return out;
}

std::int64_t shape_elements(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

void ModelWeights::set(const std::string& name, Shape shape, std::vector<float> values) {
  if (name.empty() || name.find_first_of(" \t\r\n") != std::string::npos) {
    throw WeightError(name, "tensor name must be non-empty and free of whitespace: '" + name + "'");
  }
  if (shape.empty() || shape_elements(shape) != static_cast<std::int64_t>(values.size())) {
    throw WeightShapeError(name, "tensor " + name + " shape [" + shape_to_string(shape) + "] does not match " +
                                     std::to_string(values.size()) + " values");
  }
  tensors_[name] = Tensor{std::move(shape), std::move(values)};
}

const Tensor& ModelWeights::get(const std::string& name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) throw MissingLayerError(name, "missing weight tensor: " + name);
  return it->second;
}

std::span<const float> ModelWeights::require(const std::string& name, const Shape& shape) const {
  const Tensor& t = get(name);
  if (t.shape != shape) {
    throw WeightShapeError(name, "weight tensor " + name + " has shape [" + shape_to_string(t.shape) +
                                     "], expected [" + shape_to_string(shape) + "]");
  }
  return t.values;
}

std::vector<TensorInfo> ModelWeights::manifest() const {
  std::vector<TensorInfo> out;
  out.reserve(tensors_.size());
  for (const auto& [name, t] : tensors_) out.push_back({name, t.shape});
  return out;
}

namespace {

std::string build_manifest(const ModelWeights& weights) {
  std::string manifest;
  std::size_t offset = 0;
  for (const auto& [name, t] : weights.tensors()) {
    manifest += name + " f32 " + shape_to_string(t.shape) + " " + std::to_string(offset) + "\n";
    offset += t.values.size() * sizeof(float);
  }
  return manifest;
}

void append_blob(const ModelWeights& weights, std::string& out) {
  for (const auto& [name, t] : weights.tensors()) {
    const std::size_t start = out.size();
    out.resize(start + t.values.size() * sizeof(float));
    char* dst = out.data() + start;
    for (float v : t.values) {
      auto bits = std::bit_cast<std::uint32_t>(v);
      for (int b = 0; b < 4; ++b) *dst++ = static_cast<char>((bits >> (8 * b)) & 0xffu);
    }
  }
}

std::uint32_t crc32_of(std::string_view bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed in bounded pieces.
  constexpr std::size_t kPiece = 1u << 30;
  for (std::size_t pos = 0; pos < bytes.size(); pos += kPiece) {
    const std::size_t n = std::min(kPiece, bytes.size() - pos);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(bytes.data() + pos), static_cast<uInt>(n));
  }
  return static_cast<std::uint32_t>(crc);
}

template <typename T>
bool parse_number(std::string_view text, T& out, int base = 10) {
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), out, base);
  return ec == std::errc() && ptr == text.data() + text.size();
}

std::vector<std::string_view> split(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t end = text.find(sep, start);
    parts.push_back(text.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
    if (end == std::string_view::npos) break;
    start = end + 1;
  }
  return parts;
}

std::string_view take_line(std::string_view bytes, std::size_t& pos, const char* what) {
  const std::size_t end = bytes.find('\n', pos);
  if (end == std::string_view::npos) throw FormatError(std::string("weight file truncated in ") + what);
  std::string_view line = bytes.substr(pos, end - pos);
  pos = end + 1;
  return line;
}

}  // namespace

std::uint32_t ModelWeights::checksum() const {
  std::string content = build_manifest(*this);
  append_blob(*this, content);
  return crc32_of(content);
}

std::string serialize_weights(const ModelWeights& weights) {
  std::string body = build_manifest(weights);
  const std::size_t manifest_bytes = body.size();
  append_blob(weights, body);
  const std::size_t blob_bytes = body.size() - manifest_bytes;

  char crc_hex[9];
  std::snprintf(crc_hex, sizeof(crc_hex), "%08x", crc32_of(body));
  std::string out;
  out.reserve(body.size() + 64);
  out += ModelWeights::kFormatVersion;
  out += "\n";
  out += std::string(crc_hex) + " " + std::to_string(manifest_bytes) + " " + std::to_string(blob_bytes) + "\n";
  out += body;
  return out;
}

ModelWeights parse_weights(std::string_view bytes) {
  std::size_t pos = 0;
  const std::string_view version = take_line(bytes, pos, "version line");
  if (version != ModelWeights::kFormatVersion) {
    throw VersionError("unknown weight format version '" + std::string(version.substr(0, 16)) + "', expected " +
                       std::string(ModelWeights::kFormatVersion));
  }
  const auto header = split(take_line(bytes, pos, "header"), ' ');
  std::uint32_t crc = 0;
  std::size_t manifest_bytes = 0;
  std::size_t blob_bytes = 0;
  if (header.size() != 3 || header[0].size() != 8 || !parse_number(header[0], crc, 16) ||
      !parse_number(header[1], manifest_bytes) || !parse_number(header[2], blob_bytes)) {
    throw FormatError("malformed weight file header");
  }
  if (bytes.size() - pos != manifest_bytes + blob_bytes) {
    throw FormatError("weight file length " + std::to_string(bytes.size()) + " does not match header (" +
                      std::to_string(pos + manifest_bytes + blob_bytes) + " bytes expected)");
  }
  const std::string_view body = bytes.substr(pos);
  if (crc32_of(body) != crc) throw ChecksumError("weight file checksum mismatch");

  const std::string_view manifest = body.substr(0, manifest_bytes);
  const std::string_view blob = body.substr(manifest_bytes);
  ModelWeights weights;
  std::size_t expected_offset = 0;
  std::size_t mpos = 0;
  while (mpos < manifest.size()) {
    const std::string_view line = take_line(manifest, mpos, "manifest");
    const auto fields = split(line, ' ');
    if (fields.size() != 4 || fields[1] != "f32") {
      throw FormatError("malformed manifest line: " + std::string(line));
    }
    const std::string name(fields[0]);
    Shape shape;
    for (auto dim : split(fields[2], ',')) {
      std::int64_t d = 0;
      if (!parse_number(dim, d) || d <= 0) throw FormatError("bad shape for tensor " + name);
      shape.push_back(d);
    }
    std::size_t offset = 0;
    if (!parse_number(fields[3], offset) || offset != expected_offset) {
      throw FormatError("bad byte offset for tensor " + name);
    }
    const std::size_t count = static_cast<std::size_t>(shape_elements(shape));
    if (offset + count * sizeof(float) > blob.size()) throw FormatError("tensor " + name + " overruns the blob");
    std::vector<float> values(count);
    const auto* src = reinterpret_cast<const unsigned char*>(blob.data() + offset);
    for (std::size_t i = 0; i < count; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(src[4 * i + b]) << (8 * b);
      values[i] = std::bit_cast<float>(bits);
    }
    if (weights.contains(name)) throw FormatError("duplicate tensor " + name);
    weights.set(name, std::move(shape), std::move(values));
    expected_offset = offset + count * sizeof(float);
  }
  if (expected_offset != blob.size()) throw FormatError("weight blob has trailing bytes");
  return weights;
}

void save_weights(const ModelWeights& weights, const std::filesystem::path& path) {
  const std::string bytes = serialize_weights(weights);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

ModelWeights load_weights(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return parse_weights(buffer.str());
}

}  // namespace streamvc
