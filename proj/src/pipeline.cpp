#include "streamvc/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <numeric>
#include <string>

#include "streamvc/error.hpp"

namespace streamvc {

namespace {

void check_sample_rate(int sample_rate) {
  if (sample_rate != kSampleRate) {
    throw ArgumentError("audio must be sampled at " + std::to_string(kSampleRate) + " Hz, got " +
                        std::to_string(sample_rate) + " Hz");
  }
}

std::vector<float> pad_to_frames(std::span<const float> audio, std::size_t frames) {
  std::vector<float> out(frames * kFrameSamples, 0.0f);
  std::copy(audio.begin(), audio.end(), out.begin());
  return out;
}

std::array<double, 3> whiten_frame(const PitchFeatures& f, std::array<WhitenStats, 3>& stats, bool running) {
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    const F0Point p{f.tracks[i].f0_hz, !f.tracks[i].unvoiced};
    out[i] = running ? whiten_running(stats[i], p) : whiten_value(stats[i], p);
  }
  return out;
}

FeatureMap decoder_frame(const FeatureMap& latent, const std::array<float, kSideChannels>& side) {
  return concat_channels(latent, FeatureMap(kSideChannels, 1, std::vector<float>(side.begin(), side.end())));
}

std::vector<double> time_steps(std::size_t warmup, std::size_t measured, auto&& step) {
  using Clock = std::chrono::steady_clock;
  for (std::size_t i = 0; i < warmup; ++i) step(i);
  std::vector<double> ms;
  ms.reserve(measured);
  for (std::size_t i = 0; i < measured; ++i) {
    const auto start = Clock::now();
    step(warmup + i);
    ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - start).count());
  }
  return ms;
}

std::size_t frames_for(double seconds) {
  return static_cast<std::size_t>(std::llround(std::max(0.0, seconds) * kSampleRate / kFrameSamples));
}

// Voiced-speech stand-in for profiling: a gliding harmonic tone plus noise.
std::vector<float> synthetic_frame(std::size_t index) {
  std::vector<float> frame(kFrameSamples);
  std::uint32_t noise = 2463534242u + static_cast<std::uint32_t>(index);
  for (int i = 0; i < kFrameSamples; ++i) {
    const double t = static_cast<double>(index * kFrameSamples + i) / kSampleRate;
    const double f0 = 140.0 + 30.0 * std::sin(2.0 * std::numbers::pi * 0.5 * t);
    noise ^= noise << 13;
    noise ^= noise >> 17;
    noise ^= noise << 5;
    const double n = (static_cast<double>(noise) / 4294967296.0 - 0.5) * 0.02;
    frame[i] = static_cast<float>(0.3 * std::sin(2.0 * std::numbers::pi * f0 * t) +
                                  0.1 * std::sin(4.0 * std::numbers::pi * f0 * t) + n);
  }
  return frame;
}

}  // namespace

SpeakerLatent enroll_speaker(const Model& model, std::span<const float> target_audio, int sample_rate) {
  check_sample_rate(sample_rate);
  if (target_audio.size() < static_cast<std::size_t>(kFrameSamples)) {
    throw ArgumentError("target audio must hold at least one " + std::to_string(kFrameSamples) +
                        "-sample frame, got " + std::to_string(target_audio.size()) + " samples");
  }
  const std::size_t frames = (target_audio.size() + kFrameSamples - 1) / kFrameSamples;
  FeatureMap audio(1, frames * kFrameSamples, pad_to_frames(target_audio, frames));
  const FeatureMap embeddings = model.speaker_encoder()->run(audio);
  return learnable_pool(embeddings, model.pool_query());
}

std::array<WhitenStats, 3> utterance_whitening(std::span<const PitchFeatures> features) {
  std::array<WhitenStats, 3> stats{};
  for (std::size_t i = 0; i < 3; ++i) stats[i] = whiten_utterance(f0_contour(features, i)).stats;
  return stats;
}

ConversionResult convert_offline(const Model& model, std::span<const float> source, std::span<const float> speaker,
                                 const WhiteningOptions& whitening, int sample_rate) {
  check_sample_rate(sample_rate);
  ConversionResult result;
  result.input_samples = source.size();
  result.frames = (source.size() + kFrameSamples - 1) / kFrameSamples;
  result.padded_samples = result.frames * kFrameSamples;
  if (result.frames == 0) return result;

  const GraphPlan& decoder_plan = model.decoder()->plan();
  const std::size_t pairing = decoder_plan.lookahead_frames;
  const std::size_t n = result.frames;
  // Decoder frames 0 .. n+pairing-1 are computed; the last one's f0 window
  // reaches one frame further.
  const std::size_t decoded = n + pairing;
  const std::size_t extended = decoded + kF0WindowLookaheadFrames;
  const std::vector<float> audio = pad_to_frames(source, extended);

  const auto features = extract_pitch_energy(audio);
  result.whitening = whitening.frozen ? *whitening.frozen
                                      : utterance_whitening(std::span(features).first(n));

  const FeatureMap content =
      model.content_encoder()->run(FeatureMap(1, audio.size(), audio)).slice(0, decoded);
  FeatureMap side(kSideChannels, decoded);
  for (std::size_t t = 0; t < decoded; ++t) {
    auto stats = result.whitening;
    const auto channels = side_channels(features[t], whiten_frame(features[t], stats, false));
    for (int c = 0; c < kSideChannels; ++c) side.at(c, t) = channels[c];
  }
  const FeatureMap decoded_audio = model.decoder()->run(concat_channels(content, side), speaker);
  const auto samples = decoded_audio.channel(0);
  const std::size_t drop = pairing * model.decoder()->shape().output_hop;
  result.audio.assign(samples.begin() + drop, samples.begin() + drop + result.padded_samples);
  return result;
}

// ---------------------------------------------------------------------------
// StreamingConverter

StreamingConverter::StreamingConverter(std::shared_ptr<const Model> model, std::span<const float> speaker,
                                       const WhiteningOptions& whitening)
    : model_(std::move(model)),
      content_(model_->content_encoder()),
      decoder_(model_->decoder(), speaker),
      frozen_(whitening.frozen.has_value()) {
  if (frozen_) {
    stats_ = *whitening.frozen;
  } else {
    for (auto& s : stats_) s.mode = WhitenMode::running;
  }
}

std::size_t StreamingConverter::warmup_steps() const {
  return decoder_.warmup_steps() + kF0WindowLookaheadFrames;
}

std::optional<std::vector<float>> StreamingConverter::advance(std::span<const float> chunk) {
  const FeatureMap frame(1, kFrameSamples, std::vector<float>(chunk.begin(), chunk.end()));
  auto latent = content_.step(frame);
  if (!latent) throw StateError("content encoder withheld a frame");
  std::optional<std::vector<float>> out;
  if (auto features = pitch_.push(chunk)) {
    const auto whitened = whiten_frame(*features, stats_, !frozen_);
    if (auto y = decoder_.step(decoder_frame(*pending_latent_, side_channels(*features, whitened)))) {
      const auto samples = y->channel(0);
      out.emplace(samples.begin(), samples.end());
    }
  }
  pending_latent_ = std::move(*latent);
  return out;
}

std::optional<std::vector<float>> StreamingConverter::step(std::span<const float> chunk) {
  if (terminated_) throw StateError("streaming converter: step after flush");
  if (chunk.size() != static_cast<std::size_t>(kFrameSamples)) {
    throw ArgumentError("streaming converter expects " + std::to_string(kFrameSamples) + "-sample chunks, got " +
                        std::to_string(chunk.size()));
  }
  auto out = advance(chunk);
  ++steps_;
  if (out) ++emitted_;
  return out;
}

std::vector<std::vector<float>> StreamingConverter::flush() {
  if (terminated_) throw StateError("streaming converter: flush on terminated stream");
  std::vector<std::vector<float>> out;
  const std::vector<float> silence(kFrameSamples, 0.0f);
  for (std::size_t i = 0; i < warmup_steps(); ++i) {
    if (auto y = advance(silence)) {
      // Chunks released during flush pair with real input frames only
      // while the emitted count is behind the consumed count.
      if (emitted_ < steps_) {
        out.push_back(std::move(*y));
        ++emitted_;
      }
    }
  }
  terminated_ = true;
  return out;
}

// ---------------------------------------------------------------------------
// Latency

double architectural_latency_ms(const GraphPlan& plan, int f0_window_lookahead_frames) {
  return (plan.lookahead_frames + f0_window_lookahead_frames) * kFrameMs;
}

std::vector<double> measure_stream_steps(const std::shared_ptr<const Model>& model, double seconds,
                                         double warmup_seconds) {
  const std::size_t warmup = frames_for(warmup_seconds);
  const std::size_t measured = frames_for(seconds);
  std::vector<std::vector<float>> audio;
  for (std::size_t i = 0; i < warmup + measured; ++i) audio.push_back(synthetic_frame(i));

  std::vector<float> enrollment;
  for (std::size_t i = 0; i < 50; ++i) {
    const auto f = synthetic_frame(1000 + i);
    enrollment.insert(enrollment.end(), f.begin(), f.end());
  }
  const SpeakerLatent speaker = enroll_speaker(*model, enrollment);
  StreamingConverter converter(model, speaker);
  return time_steps(warmup, measured, [&](std::size_t i) { converter.step(audio[i]); });
}

std::vector<double> measure_graph_steps(const std::shared_ptr<const CompiledGraph>& graph, double seconds,
                                        double warmup_seconds) {
  const GraphPlan& plan = graph->plan();
  std::vector<float> condition(plan.condition_dim, 0.0f);
  StreamState state(graph, condition);
  const FeatureMap zeros(plan.input_channels, plan.input_hop);
  return time_steps(frames_for(warmup_seconds), frames_for(seconds), [&](std::size_t) { state.step(zeros); });
}

LatencyBudget summarize_latency(int pairing_lookahead_frames, int f0_window_lookahead_frames,
                                std::span<const double> step_ms) {
  LatencyBudget b;
  b.output_pairing_lookahead_frames = pairing_lookahead_frames;
  b.f0_window_lookahead_frames = f0_window_lookahead_frames;
  b.architectural_ms = (pairing_lookahead_frames + f0_window_lookahead_frames) * kFrameMs;
  b.measured_steps = step_ms.size();
  if (!step_ms.empty()) {
    b.compute_ms_per_frame = std::accumulate(step_ms.begin(), step_ms.end(), 0.0) / step_ms.size();
    std::vector<double> sorted(step_ms.begin(), step_ms.end());
    std::sort(sorted.begin(), sorted.end());
    b.compute_ms_median = sorted[sorted.size() / 2];
    b.compute_ms_max = sorted.back();
  }
  b.end_to_end_ms = b.architectural_ms + b.compute_ms_per_frame;
  b.real_time_factor = b.compute_ms_per_frame / b.frame_ms;
  return b;
}

LatencyBudget latency_report(const std::shared_ptr<const Model>& model, double seconds) {
  const auto steps = measure_stream_steps(model, seconds);
  return summarize_latency(model->decoder()->plan().lookahead_frames, kF0WindowLookaheadFrames, steps);
}

LatencyBudget latency_report(const std::shared_ptr<const CompiledGraph>& graph, double seconds) {
  const auto steps = measure_graph_steps(graph, seconds);
  return summarize_latency(graph->plan().lookahead_frames, 0, steps);
}

}  // namespace streamvc
