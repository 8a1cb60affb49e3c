// streamvc: conversion, pitch export, f0 PCC and latency profiling.
//
// Exit codes: 0 success, 2 usage error, 3 input-format error, 4 internal
// invariant violation.

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "streamvc/error.hpp"
#include "streamvc/metrics.hpp"
#include "streamvc/model.hpp"
#include "streamvc/pipeline.hpp"
#include "streamvc/pitch.hpp"
#include "streamvc/wav.hpp"
#include "streamvc/weights.hpp"

namespace {

using namespace streamvc;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 2;
constexpr int kExitInput = 3;
constexpr int kExitInternal = 4;

std::string fixed(double value, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
  return buf;
}

ArchitectureConfig architecture(const std::string& name) {
  return name == "tiny" ? ArchitectureConfig::tiny() : ArchitectureConfig{};
}

std::vector<float> pad_frames(std::vector<float> audio) {
  const std::size_t frames = (audio.size() + kFrameSamples - 1) / kFrameSamples;
  audio.resize(frames * kFrameSamples, 0.0f);
  return audio;
}

std::vector<PitchFeatures> features_of(const std::vector<float>& audio) {
  const auto padded = pad_frames(audio);
  if (padded.empty()) return {};
  return extract_pitch_energy(padded);
}

struct ConvertArgs {
  std::string source, target, weights, out;
  std::string mode = "offline";
  std::string arch = "full";
  bool freeze = false;
};

int run_convert(const ConvertArgs& a) {
  const auto source = read_wav(a.source);
  const auto target = read_wav(a.target);
  if (source.empty()) throw FormatError(a.source + ": source contains no samples");
  const ArchitectureConfig cfg = architecture(a.arch);
  const auto model = std::make_shared<const Model>(load_model_weights(a.weights, cfg), cfg);
  const SpeakerLatent speaker = enroll_speaker(*model, target);
  const double architectural = architectural_latency_ms(model->decoder()->plan(), kF0WindowLookaheadFrames);

  std::ostringstream summary;
  summary << "command=convert mode=" << a.mode << " freeze_whitening=" << (a.freeze ? 1 : 0);
  std::vector<float> output;
  std::size_t frames = 0;
  if (a.mode == "offline") {
    const ConversionResult r = convert_offline(*model, source, speaker);
    output = r.audio;
    frames = r.frames;
  } else {
    WhiteningOptions whitening;
    const auto padded = pad_frames(source);
    if (a.freeze) {
      const auto features = extract_pitch_energy(padded);
      whitening.frozen = utterance_whitening(features);
    }
    StreamingConverter converter(model, speaker, whitening);
    std::vector<double> step_ms;
    std::size_t first_emission = 0;
    bool emitted = false;
    frames = padded.size() / kFrameSamples;
    for (std::size_t t = 0; t < frames; ++t) {
      const auto start = std::chrono::steady_clock::now();
      auto chunk = converter.step(std::span(padded).subspan(t * kFrameSamples, kFrameSamples));
      step_ms.push_back(
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count());
      if (chunk) {
        if (!emitted) first_emission = t;
        emitted = true;
        output.insert(output.end(), chunk->begin(), chunk->end());
      }
    }
    for (auto& chunk : converter.flush()) output.insert(output.end(), chunk.begin(), chunk.end());
    if (output.size() != padded.size()) {
      throw StateError("streamed " + std::to_string(output.size()) + " samples for " +
                       std::to_string(padded.size()) + " input samples");
    }
    const LatencyBudget b = summarize_latency(model->decoder()->plan().lookahead_frames,
                                              kF0WindowLookaheadFrames, step_ms);
    summary << " steps=" << frames << " first_emission_step=" << (emitted ? std::to_string(first_emission) : "none")
            << " compute_ms_mean=" << fixed(b.compute_ms_per_frame, 3)
            << " compute_ms_median=" << fixed(b.compute_ms_median, 3)
            << " compute_ms_max=" << fixed(b.compute_ms_max, 3) << " rtf=" << fixed(b.real_time_factor, 4);
  }
  output.resize(source.size());
  write_wav(a.out, output);
  std::cout << summary.str() << " frames=" << frames << " input_samples=" << source.size()
            << " output_samples=" << output.size() << " architectural_ms=" << fixed(architectural, 1) << "\n";
  return kExitOk;
}

int run_pitch(const std::string& in, const std::string& csv) {
  const auto audio = read_wav(in);
  const auto features = features_of(audio);
  std::ofstream out(csv, std::ios::trunc);
  if (!out) throw IoError("cannot open " + csv + " for writing");
  out << "frame,energy,f0_05,cmnd_05,uv_05,f0_10,cmnd_10,uv_10,f0_15,cmnd_15,uv_15\n";
  char buf[64];
  for (std::size_t t = 0; t < features.size(); ++t) {
    out << t;
    std::snprintf(buf, sizeof buf, ",%.9g", features[t].energy);
    out << buf;
    for (const YinEstimate& e : features[t].tracks) {
      std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%d", e.f0_hz, e.cmnd, e.unvoiced ? 1 : 0);
      out << buf;
    }
    out << "\n";
  }
  if (!out) throw IoError("failed writing " + csv);
  std::cout << "command=pitch frames=" << features.size() << " samples=" << audio.size() << "\n";
  return kExitOk;
}

int run_pcc(const std::string& a, const std::string& b) {
  const auto fa = features_of(read_wav(a));
  const auto fb = features_of(read_wav(b));
  const PccResult r = f0_pcc(f0_contour(fa, kPccTrack), f0_contour(fb, kPccTrack));
  std::cout << "command=pcc frames=" << fa.size() << " jointly_voiced=" << r.jointly_voiced
            << " pcc=" << fixed(r.pcc, 4) << "\n";
  return kExitOk;
}

int run_profile(const std::string& weights, double seconds, const std::string& arch) {
  if (!(seconds > 0.0)) throw ArgumentError("--seconds must be positive");
  const ArchitectureConfig cfg = architecture(arch);
  const auto model = std::make_shared<const Model>(load_model_weights(weights, cfg), cfg);
  const LatencyBudget b = latency_report(model, seconds);
  std::cout << "command=profile frame_ms=" << fixed(b.frame_ms, 1)
            << " pairing_lookahead_frames=" << b.output_pairing_lookahead_frames
            << " f0_lookahead_frames=" << b.f0_window_lookahead_frames
            << " architectural_ms=" << fixed(b.architectural_ms, 1) << " steps=" << b.measured_steps
            << " compute_ms=" << fixed(b.compute_ms_per_frame, 3) << " compute_ms_median=" << fixed(b.compute_ms_median, 3)
            << " compute_ms_max=" << fixed(b.compute_ms_max, 3) << " end_to_end_ms=" << fixed(b.end_to_end_ms, 3)
            << " rtf=" << fixed(b.real_time_factor, 4) << "\n";
  return kExitOk;
}

int run_genweights(std::uint64_t seed, const std::string& out, const std::string& arch) {
  const ModelWeights w = init_weights(architecture(arch), seed);
  save_weights(w, out);
  char crc[16];
  std::snprintf(crc, sizeof crc, "%08x", static_cast<unsigned>(w.checksum()));
  std::size_t params = 0;
  for (const auto& [name, t] : w.tensors()) params += t.values.size();
  std::cout << "command=genweights seed=" << seed << " arch=" << arch << " tensors=" << w.size()
            << " parameters=" << params << " crc32=" << crc << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"StreamVC streaming voice-conversion runtime"};
  app.require_subcommand(1);

  ConvertArgs convert;
  auto* c = app.add_subcommand("convert", "Convert source speech to the target speaker's voice");
  c->add_option("--source", convert.source, "Source WAV (16 kHz mono PCM16)")->required();
  c->add_option("--target", convert.target, "Target speaker WAV")->required();
  c->add_option("--weights", convert.weights, "SVW1 weight file")->required();
  c->add_option("--out", convert.out, "Output WAV")->required();
  c->add_option("--mode", convert.mode, "offline or streaming")->check(CLI::IsMember({"offline", "streaming"}));
  c->add_flag("--freeze-whitening", convert.freeze, "Streaming: use the source's utterance f0 statistics");
  c->add_option("--arch", convert.arch, "Network widths")->check(CLI::IsMember({"full", "tiny"}));

  std::string pitch_in, pitch_csv;
  auto* p = app.add_subcommand("pitch", "Export per-frame energy and Yin f0 tracks as CSV");
  p->add_option("--in", pitch_in)->required();
  p->add_option("--csv", pitch_csv)->required();

  std::string pcc_a, pcc_b;
  auto* q = app.add_subcommand("pcc", "Pearson correlation of two f0 contours");
  q->add_option("--a", pcc_a)->required();
  q->add_option("--b", pcc_b)->required();

  std::string profile_weights, profile_arch = "full";
  double seconds = 10.0;
  auto* r = app.add_subcommand("profile", "Streaming latency budget");
  r->add_option("--weights", profile_weights)->required();
  r->add_option("--seconds", seconds, "Seconds of audio to time");
  r->add_option("--arch", profile_arch)->check(CLI::IsMember({"full", "tiny"}));

  std::uint64_t seed = 0;
  std::string gen_out, gen_arch = "full";
  auto* g = app.add_subcommand("genweights", "Write deterministic seeded weights");
  g->add_option("--seed", seed)->required();
  g->add_option("--out", gen_out)->required();
  g->add_option("--arch", gen_arch)->check(CLI::IsMember({"full", "tiny"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (c->parsed()) return run_convert(convert);
    if (p->parsed()) return run_pitch(pitch_in, pitch_csv);
    if (q->parsed()) return run_pcc(pcc_a, pcc_b);
    if (r->parsed()) return run_profile(profile_weights, seconds, profile_arch);
    if (g->parsed()) return run_genweights(seed, gen_out, gen_arch);
  } catch (const UndefinedCorrelationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const FormatError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const WeightError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ArgumentError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitUsage;
}
