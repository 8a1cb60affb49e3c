#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace streamvc {

// Raw contents of a RIFF/WAVE file with an integer PCM data chunk.
struct WavPcm {
  int format_tag = 1;
  int channels = 1;
  int sample_rate = 16000;
  int bits_per_sample = 16;
  std::vector<std::int16_t> samples;  // interleaved; only filled for 16-bit PCM
};

// Parses the container. Throws FormatError on malformed RIFF structure or
// when the data is not 16-bit integer PCM; sample rate and channel count
// are reported as found.
WavPcm parse_wav(std::string_view bytes);
WavPcm read_wav_pcm(const std::filesystem::path& path);

// Reads a 16 kHz mono PCM16 file as floats (sample / 32768). Any other
// rate, channel count or encoding raises FormatError naming the
// constraint.
std::vector<float> read_wav(const std::filesystem::path& path);

std::string encode_wav(std::span<const std::int16_t> samples, int sample_rate = 16000, int channels = 1);
void write_wav_pcm(const std::filesystem::path& path, std::span<const std::int16_t> samples,
                   int sample_rate = 16000, int channels = 1);
// Clamps to [-1, 1], scales by 32768 and rounds to the nearest PCM16 value.
void write_wav(const std::filesystem::path& path, std::span<const float> samples, int sample_rate = 16000);

std::vector<float> pcm_to_float(std::span<const std::int16_t> pcm);
std::vector<std::int16_t> float_to_pcm(std::span<const float> samples);

}  // namespace streamvc
