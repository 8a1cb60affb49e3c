#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "streamvc/model.hpp"
#include "streamvc/pitch.hpp"

namespace streamvc {

inline constexpr double kFrameMs = 1000.0 * kFrameSamples / kSampleRate;
// Frames of source audio beyond frame t the f0 window reads (s_{t+1}).
inline constexpr int kF0WindowLookaheadFrames = 1;

// Runs the speaker encoder over the whole target utterance and pools it.
// A trailing partial frame is zero padded. Throws ArgumentError for audio
// shorter than one frame or a sample rate other than 16 kHz.
SpeakerLatent enroll_speaker(const Model& model, std::span<const float> target_audio,
                             int sample_rate = kSampleRate);

// How the f0 tracks are normalized before reaching the decoder.
struct WhiteningOptions {
  // Fixed statistics (one per threshold) for both offline and streaming
  // paths; makes the two bit-comparable. Unset: utterance statistics
  // offline, running statistics when streaming.
  std::optional<std::array<WhitenStats, 3>> frozen;
};

struct ConversionResult {
  std::vector<float> audio;  // padded_samples long
  std::size_t input_samples = 0;
  std::size_t padded_samples = 0;
  std::size_t frames = 0;
  std::array<WhitenStats, 3> whitening{};
};

// Utterance-level whitening statistics of the source, per threshold track.
std::array<WhitenStats, 3> utterance_whitening(std::span<const PitchFeatures> features);

// Offline conversion. The source is zero padded to whole frames, and
// additionally by the architectural lookahead so the output covers every
// input frame.
ConversionResult convert_offline(const Model& model, std::span<const float> source, std::span<const float> speaker,
                                 const WhiteningOptions& whitening = {}, int sample_rate = kSampleRate);

// Frame-by-frame conversion. Step t consumes source frame s_t, computes the
// pitch features of s_{t-1} from the ring (s_{t-2}, s_{t-1}, s_t), runs the
// content encoder on s_t and feeds the decoder frame t-1; decoder output
// o_{t-1} is released once it pairs with a real source frame, so the first
// chunk (for s_0) appears at step 3.
class StreamingConverter {
 public:
  StreamingConverter(std::shared_ptr<const Model> model, std::span<const float> speaker,
                     const WhiteningOptions& whitening = {});

  // `chunk` must hold exactly 320 samples.
  std::optional<std::vector<float>> step(std::span<const float> chunk);
  // Drains the lookahead with zero frames; afterwards the converter is
  // terminated and step/flush throw StateError.
  std::vector<std::vector<float>> flush();

  std::size_t steps() const { return steps_; }
  std::size_t chunks_emitted() const { return emitted_; }
  // Steps before the first chunk is released.
  std::size_t warmup_steps() const;
  bool terminated() const { return terminated_; }
  const std::array<WhitenStats, 3>& whitening_stats() const { return stats_; }

 private:
  std::optional<std::vector<float>> advance(std::span<const float> chunk);

  std::shared_ptr<const Model> model_;
  StreamState content_;
  StreamState decoder_;
  PitchTracker pitch_;
  std::array<WhitenStats, 3> stats_{};
  bool frozen_ = false;
  std::optional<FeatureMap> pending_latent_;
  std::size_t steps_ = 0;
  std::size_t emitted_ = 0;
  bool terminated_ = false;
};

struct LatencyBudget {
  double frame_ms = kFrameMs;
  int output_pairing_lookahead_frames = 0;
  int f0_window_lookahead_frames = 0;
  double architectural_ms = 0.0;
  double compute_ms_per_frame = 0.0;  // mean
  double compute_ms_median = 0.0;
  double compute_ms_max = 0.0;
  double end_to_end_ms = 0.0;
  double real_time_factor = 0.0;
  std::size_t measured_steps = 0;
};

// (pairing lookahead + f0 window lookahead) frames, times 20 ms.
double architectural_latency_ms(const GraphPlan& plan, int f0_window_lookahead_frames);

// Per-step wall-clock times (ms) of the full streaming converter on
// synthetic audio, after `warmup_seconds` of untimed steps.
std::vector<double> measure_stream_steps(const std::shared_ptr<const Model>& model, double seconds,
                                         double warmup_seconds = 1.0);
// Same for a bare graph executor, stepping with zero chunks.
std::vector<double> measure_graph_steps(const std::shared_ptr<const CompiledGraph>& graph, double seconds,
                                        double warmup_seconds = 1.0);

LatencyBudget summarize_latency(int pairing_lookahead_frames, int f0_window_lookahead_frames,
                                std::span<const double> step_ms);

// Latency budget of the StreamVC converter: 60 ms architectural plus the
// measured per-frame compute.
LatencyBudget latency_report(const std::shared_ptr<const Model>& model, double seconds);
// Latency budget of a single graph streamed on its own (no f0 window).
LatencyBudget latency_report(const std::shared_ptr<const CompiledGraph>& graph, double seconds);

}  // namespace streamvc
