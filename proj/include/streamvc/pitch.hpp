#pragma once

#include <array>
#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <vector>

namespace streamvc {

inline constexpr int kSampleRate = 16000;
// 20 ms at 16 kHz: one content-latent frame.
inline constexpr int kFrameSamples = 320;

namespace yin {
// Analysis window: previous, current and next frame.
inline constexpr int kWindowSamples = 3 * kFrameSamples;
// Lag search range for 50-500 Hz.
inline constexpr int kMinLag = kSampleRate / 500;
inline constexpr int kMaxLag = kSampleRate / 50;
// Samples summed per lag in the difference function.
inline constexpr int kIntegrationSamples = kWindowSamples - kMaxLag;
inline constexpr std::array<double, 3> kThresholds{0.05, 0.10, 0.15};
}  // namespace yin

struct YinEstimate {
  // 0 when the window carries no periodicity information at all (e.g.
  // silence); otherwise 16000 / period, also for unvoiced windows.
  double f0_hz = 0.0;
  // Cumulative mean normalized difference at the chosen period.
  double cmnd = 1.0;
  bool unvoiced = true;
};

// Yin with an FFT autocorrelation. Owns its FFT plans and scratch buffers:
// use one instance per thread.
class YinAnalyzer {
 public:
  YinAnalyzer();
  ~YinAnalyzer();
  YinAnalyzer(const YinAnalyzer&) = delete;
  YinAnalyzer& operator=(const YinAnalyzer&) = delete;

  // d(tau) = sum_{j < kIntegrationSamples} (x[j] - x[j + tau])^2 for
  // tau = 0..kMaxLag. `window` must hold kWindowSamples samples.
  std::vector<double> difference(std::span<const float> window);

  YinEstimate analyze(std::span<const float> window, double threshold);
  // One estimate per entry of yin::kThresholds, sharing the difference
  // function.
  std::array<YinEstimate, 3> analyze_all(std::span<const float> window);

 private:
  struct Fft;
  std::unique_ptr<Fft> fft_;
};

// d'(0) = 1, d'(tau) = d(tau) * tau / sum_{i=1..tau} d(i); lags whose
// cumulative sum is zero map to 1.
std::vector<double> cumulative_mean_normalized(std::span<const double> difference);

// Absolute-threshold period pick on a CMND curve (lags 0..kMaxLag): the
// first lag in [kMinLag, kMaxLag] under `threshold`, followed down to its
// local minimum; otherwise the global minimum, flagged unvoiced. The period
// is refined by a parabola through the neighbouring CMND values.
YinEstimate pick_period(std::span<const double> cmnd, double threshold);

// Thread-local analyzer convenience wrapper; throws ArgumentError unless
// the window has kWindowSamples samples and 0 < threshold < 1.
YinEstimate yin_analyze(std::span<const float> window, double threshold);

// Population variance of the samples.
double frame_energy(std::span<const float> frame);

struct PitchFeatures {
  // Pre-whitening estimates, one per yin::kThresholds entry.
  std::array<YinEstimate, 3> tracks;
  double energy = 0.0;
};

// One PitchFeatures per 320-sample frame t, analysed over frames
// (t-1, t, t+1) with zeros standing in for frames outside the signal.
// `audio` must be a non-empty whole number of frames.
std::vector<PitchFeatures> extract_pitch_energy(std::span<const float> audio);

// Streaming counterpart of extract_pitch_energy: a three-frame ring. After
// frame k is pushed the features of frame k-1 are available.
class PitchTracker {
 public:
  // Returns features for the frame before `frame` (none for the first push).
  std::optional<PitchFeatures> push(std::span<const float> frame);
  void reset();

 private:
  YinAnalyzer analyzer_;
  std::array<float, yin::kWindowSamples> ring_{};
  std::size_t pushed_ = 0;
};

// ---------------------------------------------------------------------------
// Whitening

inline constexpr double kWhitenEpsilonHz = 1e-3;

enum class WhitenMode { utterance, running };

struct WhitenStats {
  WhitenMode mode = WhitenMode::running;
  double mean = 0.0;  // Hz
  double std = 0.0;   // Hz, population
  std::size_t voiced_count = 0;
  double sum_sq_dev = 0.0;  // running-mode accumulator

  friend bool operator==(const WhitenStats&, const WhitenStats&) = default;
};

struct F0Point {
  double hz = 0.0;
  bool voiced = false;
};

struct WhitenedContour {
  std::vector<double> values;
  WhitenStats stats;
};

// (f0 - mean) / max(std, eps) for voiced points, 0 for unvoiced ones.
double whiten_value(const WhitenStats& stats, const F0Point& point);

// Mean and population std over voiced points only.
WhitenedContour whiten_utterance(std::span<const F0Point> contour);

// Cumulative (Welford) statistics over voiced frames since the stream
// started. Voiced frames update the stats first and are whitened with the
// updated values; unvoiced frames leave the state untouched and map to 0.
double whiten_running(WhitenStats& state, const F0Point& point);

// The `threshold_index` track of a feature sequence as an f0 contour.
std::vector<F0Point> f0_contour(std::span<const PitchFeatures> features, std::size_t threshold_index);

// Decoder side channels for one frame: per threshold (whitened f0, CMND,
// unvoiced flag), then energy.
inline constexpr int kSideChannels = 10;
std::array<float, kSideChannels> side_channels(const PitchFeatures& features,
                                               const std::array<double, 3>& whitened_f0);

}  // namespace streamvc
