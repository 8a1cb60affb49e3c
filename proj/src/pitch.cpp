#include "streamvc/pitch.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <mutex>
#include <string>

#include <fftw3.h>

#include "streamvc/error.hpp"

namespace streamvc {

namespace {

// Circular correlation of a 960-sample window with its first 640 samples
// does not wrap for lags up to 320 at this size.
constexpr int kFftSize = 1024;
constexpr int kSpectrumBins = kFftSize / 2 + 1;

// Differences below this fraction of the compared energies are FFT noise.
constexpr double kDifferenceFloor = 1e-9;

// FFTW's planner is not re-entrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

void check_window(std::span<const float> window) {
  if (window.size() != static_cast<std::size_t>(yin::kWindowSamples)) {
    throw ArgumentError("Yin window must hold " + std::to_string(yin::kWindowSamples) + " samples, got " +
                        std::to_string(window.size()));
  }
}

void check_threshold(double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw ArgumentError("Yin threshold must lie in (0, 1), got " + std::to_string(threshold));
  }
}

}  // namespace

struct YinAnalyzer::Fft {
  double* signal = nullptr;
  double* head = nullptr;
  double* corr = nullptr;
  fftw_complex* signal_spec = nullptr;
  fftw_complex* head_spec = nullptr;
  fftw_plan forward_signal = nullptr;
  fftw_plan forward_head = nullptr;
  fftw_plan inverse = nullptr;

  Fft() {
    signal = fftw_alloc_real(kFftSize);
    head = fftw_alloc_real(kFftSize);
    corr = fftw_alloc_real(kFftSize);
    signal_spec = fftw_alloc_complex(kSpectrumBins);
    head_spec = fftw_alloc_complex(kSpectrumBins);
    std::lock_guard lock(planner_mutex());
    forward_signal = fftw_plan_dft_r2c_1d(kFftSize, signal, signal_spec, FFTW_ESTIMATE);
    forward_head = fftw_plan_dft_r2c_1d(kFftSize, head, head_spec, FFTW_ESTIMATE);
    inverse = fftw_plan_dft_c2r_1d(kFftSize, signal_spec, corr, FFTW_ESTIMATE);
  }

  ~Fft() {
    {
      std::lock_guard lock(planner_mutex());
      fftw_destroy_plan(forward_signal);
      fftw_destroy_plan(forward_head);
      fftw_destroy_plan(inverse);
    }
    fftw_free(signal);
    fftw_free(head);
    fftw_free(corr);
    fftw_free(signal_spec);
    fftw_free(head_spec);
  }
};

YinAnalyzer::YinAnalyzer() : fft_(std::make_unique<Fft>()) {}
YinAnalyzer::~YinAnalyzer() = default;

std::vector<double> YinAnalyzer::difference(std::span<const float> window) {
  check_window(window);
  constexpr int kW = yin::kIntegrationSamples;
  Fft& f = *fft_;
  std::fill_n(f.signal, kFftSize, 0.0);
  std::fill_n(f.head, kFftSize, 0.0);
  for (int i = 0; i < yin::kWindowSamples; ++i) f.signal[i] = window[i];
  for (int i = 0; i < kW; ++i) f.head[i] = window[i];
  fftw_execute(f.forward_signal);
  fftw_execute(f.forward_head);
  // corr[tau] = sum_j head[j] * signal[j + tau]
  for (int k = 0; k < kSpectrumBins; ++k) {
    const std::complex<double> s(f.signal_spec[k][0], f.signal_spec[k][1]);
    const std::complex<double> h(f.head_spec[k][0], f.head_spec[k][1]);
    const std::complex<double> p = s * std::conj(h);
    f.signal_spec[k][0] = p.real();
    f.signal_spec[k][1] = p.imag();
  }
  fftw_execute(f.inverse);

  // Energy of x[tau .. tau + W) via prefix sums of squares.
  std::array<double, yin::kWindowSamples + 1> prefix{};
  for (int i = 0; i < yin::kWindowSamples; ++i) {
    prefix[i + 1] = prefix[i] + static_cast<double>(window[i]) * window[i];
  }
  const double head_energy = prefix[kW];
  std::vector<double> d(yin::kMaxLag + 1, 0.0);
  for (int tau = 1; tau <= yin::kMaxLag; ++tau) {
    const double lagged_energy = prefix[tau + kW] - prefix[tau];
    const double r = f.corr[tau] / kFftSize;
    const double value = head_energy + lagged_energy - 2.0 * r;
    d[tau] = value > kDifferenceFloor * (head_energy + lagged_energy) ? value : 0.0;
  }
  return d;
}

std::vector<double> cumulative_mean_normalized(std::span<const double> difference) {
  std::vector<double> out(difference.size(), 1.0);
  double running = 0.0;
  for (std::size_t tau = 1; tau < difference.size(); ++tau) {
    running += difference[tau];
    out[tau] = running > 0.0 ? difference[tau] * static_cast<double>(tau) / running : 1.0;
  }
  return out;
}

YinEstimate pick_period(std::span<const double> cmnd, double threshold) {
  const int max_lag = static_cast<int>(cmnd.size()) - 1;
  if (max_lag < yin::kMaxLag) throw ArgumentError("CMND curve shorter than the lag search range");

  YinEstimate est;
  int tau = -1;
  for (int t = yin::kMinLag; t <= yin::kMaxLag; ++t) {
    if (cmnd[t] < threshold) {
      while (t + 1 <= yin::kMaxLag && cmnd[t + 1] < cmnd[t]) ++t;
      tau = t;
      break;
    }
  }
  est.unvoiced = tau < 0;
  if (est.unvoiced) {
    tau = yin::kMinLag;
    for (int t = yin::kMinLag + 1; t <= yin::kMaxLag; ++t) {
      if (cmnd[t] < cmnd[tau]) tau = t;
    }
    // A flat curve means there was nothing to measure.
    if (cmnd[tau] >= 1.0 && std::all_of(cmnd.begin() + 1, cmnd.begin() + yin::kMaxLag + 1,
                                        [](double v) { return v == 1.0; })) {
      est.f0_hz = 0.0;
      est.cmnd = 1.0;
      return est;
    }
  }
  est.cmnd = cmnd[tau];

  double period = tau;
  if (tau > 1 && tau < max_lag) {
    const double a = cmnd[tau - 1];
    const double b = cmnd[tau];
    const double c = cmnd[tau + 1];
    const double curvature = a - 2.0 * b + c;
    if (curvature > 0.0) period += std::clamp(0.5 * (a - c) / curvature, -1.0, 1.0);
  }
  est.f0_hz = kSampleRate / period;
  return est;
}

YinEstimate YinAnalyzer::analyze(std::span<const float> window, double threshold) {
  check_threshold(threshold);
  const auto cmnd = cumulative_mean_normalized(difference(window));
  return pick_period(cmnd, threshold);
}

std::array<YinEstimate, 3> YinAnalyzer::analyze_all(std::span<const float> window) {
  const auto cmnd = cumulative_mean_normalized(difference(window));
  std::array<YinEstimate, 3> out;
  for (std::size_t i = 0; i < yin::kThresholds.size(); ++i) out[i] = pick_period(cmnd, yin::kThresholds[i]);
  return out;
}

YinEstimate yin_analyze(std::span<const float> window, double threshold) {
  thread_local YinAnalyzer analyzer;
  return analyzer.analyze(window, threshold);
}

double frame_energy(std::span<const float> frame) {
  if (frame.empty()) return 0.0;
  double mean = 0.0;
  for (float v : frame) mean += v;
  mean /= static_cast<double>(frame.size());
  double acc = 0.0;
  for (float v : frame) {
    const double d = v - mean;
    acc += d * d;
  }
  return acc / static_cast<double>(frame.size());
}

namespace {

PitchFeatures features_for_window(YinAnalyzer& analyzer, std::span<const float> window) {
  PitchFeatures f;
  f.tracks = analyzer.analyze_all(window);
  f.energy = frame_energy(window.subspan(kFrameSamples, kFrameSamples));
  return f;
}

}  // namespace

std::vector<PitchFeatures> extract_pitch_energy(std::span<const float> audio) {
  if (audio.empty() || audio.size() % kFrameSamples != 0) {
    throw ArgumentError("pitch extraction needs a non-empty whole number of " + std::to_string(kFrameSamples) +
                        "-sample frames, got " + std::to_string(audio.size()) + " samples");
  }
  const std::size_t frames = audio.size() / kFrameSamples;
  // Reuse the streaming tracker so both paths share every operation.
  PitchTracker tracker;
  std::vector<PitchFeatures> out;
  out.reserve(frames);
  for (std::size_t t = 0; t < frames; ++t) {
    if (auto f = tracker.push(audio.subspan(t * kFrameSamples, kFrameSamples))) out.push_back(*f);
  }
  const std::array<float, kFrameSamples> silence{};
  out.push_back(*tracker.push(silence));
  return out;
}

std::optional<PitchFeatures> PitchTracker::push(std::span<const float> frame) {
  if (frame.size() != static_cast<std::size_t>(kFrameSamples)) {
    throw ArgumentError("pitch tracker expects " + std::to_string(kFrameSamples) + "-sample frames");
  }
  std::copy(ring_.begin() + kFrameSamples, ring_.end(), ring_.begin());
  std::copy(frame.begin(), frame.end(), ring_.end() - kFrameSamples);
  ++pushed_;
  if (pushed_ < 2) return std::nullopt;
  return features_for_window(analyzer_, ring_);
}

void PitchTracker::reset() {
  ring_.fill(0.0f);
  pushed_ = 0;
}

// ---------------------------------------------------------------------------
// Whitening

double whiten_value(const WhitenStats& stats, const F0Point& point) {
  if (!point.voiced) return 0.0;
  return (point.hz - stats.mean) / std::max(stats.std, kWhitenEpsilonHz);
}

WhitenedContour whiten_utterance(std::span<const F0Point> contour) {
  WhitenedContour out;
  out.stats.mode = WhitenMode::utterance;
  double sum = 0.0;
  for (const auto& p : contour) {
    if (p.voiced) {
      sum += p.hz;
      ++out.stats.voiced_count;
    }
  }
  if (out.stats.voiced_count > 0) {
    const double n = static_cast<double>(out.stats.voiced_count);
    out.stats.mean = sum / n;
    double ss = 0.0;
    for (const auto& p : contour) {
      if (p.voiced) ss += (p.hz - out.stats.mean) * (p.hz - out.stats.mean);
    }
    out.stats.sum_sq_dev = ss;
    out.stats.std = std::sqrt(ss / n);
  }
  out.values.reserve(contour.size());
  for (const auto& p : contour) out.values.push_back(whiten_value(out.stats, p));
  return out;
}

double whiten_running(WhitenStats& state, const F0Point& point) {
  if (state.mode != WhitenMode::running) throw StateError("whiten_running needs running-mode statistics");
  if (!point.voiced) return 0.0;
  ++state.voiced_count;
  const double delta = point.hz - state.mean;
  state.mean += delta / static_cast<double>(state.voiced_count);
  state.sum_sq_dev += delta * (point.hz - state.mean);
  state.std = std::sqrt(std::max(state.sum_sq_dev, 0.0) / static_cast<double>(state.voiced_count));
  return whiten_value(state, point);
}

std::vector<F0Point> f0_contour(std::span<const PitchFeatures> features, std::size_t threshold_index) {
  std::vector<F0Point> out;
  out.reserve(features.size());
  for (const auto& f : features) {
    const auto& t = f.tracks.at(threshold_index);
    out.push_back({t.f0_hz, !t.unvoiced});
  }
  return out;
}

std::array<float, kSideChannels> side_channels(const PitchFeatures& features,
                                               const std::array<double, 3>& whitened_f0) {
  std::array<float, kSideChannels> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    out[3 * i] = static_cast<float>(whitened_f0[i]);
    out[3 * i + 1] = static_cast<float>(features.tracks[i].cmnd);
    out[3 * i + 2] = features.tracks[i].unvoiced ? 1.0f : 0.0f;
  }
  out[9] = static_cast<float>(features.energy);
  return out;
}

}  // namespace streamvc
