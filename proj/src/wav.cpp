#include "streamvc/wav.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>

#include "streamvc/error.hpp"
#include "streamvc/pitch.hpp"

namespace streamvc {

namespace {

std::uint32_t read_u32(std::string_view b, std::size_t pos) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos])) |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 1])) << 8 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 2])) << 16 |
         static_cast<std::uint32_t>(static_cast<unsigned char>(b[pos + 3])) << 24;
}

std::uint16_t read_u16(std::string_view b, std::size_t pos) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(b[pos]) |
                                    static_cast<unsigned char>(b[pos + 1]) << 8);
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatExtensible = 0xfffe;

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

WavPcm parse_wav(std::string_view bytes) {
  if (bytes.size() < 12 || bytes.substr(0, 4) != "RIFF" || bytes.substr(8, 4) != "WAVE") {
    throw FormatError("not a RIFF/WAVE file");
  }
  WavPcm wav;
  bool have_format = false;
  bool have_data = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const std::string_view id = bytes.substr(pos, 4);
    const std::size_t size = read_u32(bytes, pos + 4);
    const std::size_t body = pos + 8;
    if (size > bytes.size() - body) {
      // Streaming writers leave the data size unset; take what is there.
      if (id != "data") throw FormatError("WAV chunk '" + std::string(id) + "' overruns the file");
    }
    const std::size_t available = std::min(size, bytes.size() - body);
    if (id == "fmt ") {
      if (available < 16) throw FormatError("WAV fmt chunk too short");
      wav.format_tag = read_u16(bytes, body);
      wav.channels = read_u16(bytes, body + 2);
      wav.sample_rate = static_cast<int>(read_u32(bytes, body + 4));
      wav.bits_per_sample = read_u16(bytes, body + 14);
      if (wav.format_tag == kFormatExtensible && available >= 26) wav.format_tag = read_u16(bytes, body + 24);
      have_format = true;
    } else if (id == "data") {
      if (!have_format) throw FormatError("WAV data chunk precedes fmt chunk");
      if (wav.format_tag != kFormatPcm || wav.bits_per_sample != 16) {
        throw FormatError("unsupported WAV encoding (format " + std::to_string(wav.format_tag) + ", " +
                          std::to_string(wav.bits_per_sample) + "-bit); only 16-bit integer PCM is accepted");
      }
      const std::size_t count = available / 2;
      wav.samples.resize(count);
      for (std::size_t i = 0; i < count; ++i) wav.samples[i] = static_cast<std::int16_t>(read_u16(bytes, body + 2 * i));
      have_data = true;
      break;
    }
    pos = body + available + (available & 1);
  }
  if (!have_format) throw FormatError("WAV file has no fmt chunk");
  if (!have_data) throw FormatError("WAV file has no data chunk");
  if (wav.channels <= 0) throw FormatError("WAV file declares zero channels");
  return wav;
}

WavPcm read_wav_pcm(const std::filesystem::path& path) { return parse_wav(slurp(path)); }

std::vector<float> read_wav(const std::filesystem::path& path) {
  const WavPcm wav = read_wav_pcm(path);
  if (wav.sample_rate != kSampleRate) {
    throw FormatError(path.string() + ": sample rate " + std::to_string(wav.sample_rate) + " Hz; audio must be " +
                      std::to_string(kSampleRate) + " Hz (no resampling is performed)");
  }
  if (wav.channels != 1) {
    throw FormatError(path.string() + ": " + std::to_string(wav.channels) + " channels; audio must be mono");
  }
  return pcm_to_float(wav.samples);
}

std::string encode_wav(std::span<const std::int16_t> samples, int sample_rate, int channels) {
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
  std::string out;
  out.reserve(44 + data_bytes);
  out += "RIFF";
  put_u32(out, 36 + data_bytes);
  out += "WAVEfmt ";
  put_u32(out, 16);
  put_u16(out, kFormatPcm);
  put_u16(out, static_cast<std::uint16_t>(channels));
  put_u32(out, static_cast<std::uint32_t>(sample_rate));
  put_u32(out, static_cast<std::uint32_t>(sample_rate * channels * 2));
  put_u16(out, static_cast<std::uint16_t>(channels * 2));
  put_u16(out, 16);
  out += "data";
  put_u32(out, data_bytes);
  for (std::int16_t s : samples) put_u16(out, static_cast<std::uint16_t>(s));
  return out;
}

void write_wav_pcm(const std::filesystem::path& path, std::span<const std::int16_t> samples, int sample_rate,
                   int channels) {
  const std::string bytes = encode_wav(samples, sample_rate, channels);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing " + path.string());
}

void write_wav(const std::filesystem::path& path, std::span<const float> samples, int sample_rate) {
  write_wav_pcm(path, float_to_pcm(samples), sample_rate, 1);
}

std::vector<float> pcm_to_float(std::span<const std::int16_t> pcm) {
  std::vector<float> out(pcm.size());
  std::transform(pcm.begin(), pcm.end(), out.begin(), [](std::int16_t s) { return s / 32768.0f; });
  return out;
}

std::vector<std::int16_t> float_to_pcm(std::span<const float> samples) {
  std::vector<std::int16_t> out(samples.size());
  std::transform(samples.begin(), samples.end(), out.begin(), [](float v) {
    const float scaled = std::nearbyint(std::clamp(v, -1.0f, 1.0f) * 32768.0f);
    return static_cast<std::int16_t>(std::clamp(scaled, -32768.0f, 32767.0f));
  });
  return out;
}

}  // namespace streamvc
