// Shared helpers for the test binaries: seeded data, reference
// implementations written directly from the formulas, and small graph
// generators.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "streamvc/model.hpp"
#include "streamvc/pitch.hpp"
#include "streamvc/streaming.hpp"
#include "streamvc/tensor.hpp"
#include "streamvc/weights.hpp"

namespace testing {

using namespace streamvc;

inline std::vector<float> gaussian(std::size_t n, std::uint64_t seed, float scale = 1.0f) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, scale);
  std::vector<float> out(n);
  for (float& v : out) v = dist(rng);
  return out;
}

inline std::vector<float> uniform(std::size_t n, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> out(n);
  for (float& v : out) v = dist(rng);
  return out;
}

inline std::vector<float> sine(double hz, std::size_t samples, double amplitude = 0.5, double phase = 0.0) {
  std::vector<float> out(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    out[i] = static_cast<float>(amplitude * std::sin(2.0 * std::numbers::pi * hz * i / kSampleRate + phase));
  }
  return out;
}

inline std::vector<float> sawtooth(double hz, std::size_t samples, double amplitude = 0.5) {
  std::vector<float> out(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const double phase = std::fmod(hz * i / kSampleRate, 1.0);
    out[i] = static_cast<float>(amplitude * (2.0 * phase - 1.0));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reference arithmetic in double precision.

using Signal = std::vector<std::vector<double>>;  // [channel][frame]

inline Signal to_signal(const FeatureMap& x) {
  Signal s(x.channels());
  for (std::size_t c = 0; c < x.channels(); ++c) s[c].assign(x.channel(c).begin(), x.channel(c).end());
  return s;
}

// y[o][t] = b[o] + sum_{c,j} w[o][c][j] x[c][t*s + j*d - (k-1)d], zero outside.
inline Signal naive_conv(const Signal& x, std::span<const float> w, std::span<const float> b, const ConvSpec& spec) {
  const long frames = x.empty() ? 0 : static_cast<long>(x[0].size());
  const long out_frames = (frames + spec.stride - 1) / spec.stride;
  const long pad = static_cast<long>(spec.kernel_size - 1) * spec.dilation;
  Signal y(spec.out_channels, std::vector<double>(out_frames));
  for (int o = 0; o < spec.out_channels; ++o) {
    for (long t = 0; t < out_frames; ++t) {
      double acc = b[o];
      for (int c = 0; c < spec.in_channels; ++c) {
        for (int j = 0; j < spec.kernel_size; ++j) {
          const long i = t * spec.stride + static_cast<long>(j) * spec.dilation - pad;
          if (i >= 0 && i < frames) acc += double(w[(o * spec.in_channels + c) * spec.kernel_size + j]) * x[c][i];
        }
      }
      y[o][t] = acc;
    }
  }
  return y;
}

// y[o][t*s + j] += w[o][c][j] x[c][t], truncated to frames*s samples.
inline Signal naive_transposed(const Signal& x, std::span<const float> w, std::span<const float> b,
                               const ConvSpec& spec) {
  const long frames = x.empty() ? 0 : static_cast<long>(x[0].size());
  const long out_frames = frames * spec.stride;
  Signal y(spec.out_channels, std::vector<double>(out_frames));
  for (int o = 0; o < spec.out_channels; ++o) {
    for (long t = 0; t < out_frames; ++t) y[o][t] = b[o];
    for (int c = 0; c < spec.in_channels; ++c) {
      for (long t = 0; t < frames; ++t) {
        for (int j = 0; j < spec.kernel_size; ++j) {
          const long i = t * spec.stride + j;
          if (i < out_frames) y[o][i] += double(w[(o * spec.in_channels + c) * spec.kernel_size + j]) * x[c][t];
        }
      }
    }
  }
  return y;
}

// Whole-signal evaluation of a plan, layer by layer, in double precision.
inline Signal reference_run(const GraphPlan& plan, const ModelWeights& weights, const FeatureMap& input,
                            std::span<const float> condition = {}) {
  Signal x = to_signal(input);
  std::vector<Signal> skips;
  for (const Layer& layer : plan.layers) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      const auto& w = weights.get(conv->name + ".weight").values;
      const auto& b = weights.get(conv->name + ".bias").values;
      x = conv->spec.transposed ? naive_transposed(x, w, b, conv->spec) : naive_conv(x, w, b, conv->spec);
    } else if (const auto* act = std::get_if<ActivationLayer>(&layer)) {
      for (auto& row : x) {
        for (double& v : row) v = act->fn == Activation::elu ? (v > 0 ? v : std::expm1(v)) : std::tanh(v);
      }
    } else if (const auto* film = std::get_if<FilmLayer>(&layer)) {
      const auto& sw = weights.get(film->name + ".scale.weight").values;
      const auto& sb = weights.get(film->name + ".scale.bias").values;
      const auto& hw = weights.get(film->name + ".shift.weight").values;
      const auto& hb = weights.get(film->name + ".shift.bias").values;
      for (int c = 0; c < film->channels; ++c) {
        double gamma = sb[c];
        double beta = hb[c];
        for (std::size_t i = 0; i < condition.size(); ++i) {
          gamma += double(sw[c * condition.size() + i]) * condition[i];
          beta += double(hw[c * condition.size() + i]) * condition[i];
        }
        for (double& v : x[c]) v = gamma * v + beta;
      }
    } else if (std::holds_alternative<SkipBegin>(layer)) {
      skips.push_back(x);
    } else {
      const Signal& s = skips.back();
      for (std::size_t c = 0; c < x.size(); ++c) {
        for (std::size_t t = 0; t < x[c].size(); ++t) x[c][t] += s[c][t];
      }
      skips.pop_back();
    }
  }
  return x;
}

inline double max_abs_diff(const Signal& ref, const FeatureMap& got) {
  double worst = 0.0;
  for (std::size_t c = 0; c < ref.size(); ++c) {
    for (std::size_t t = 0; t < ref[c].size(); ++t) worst = std::max(worst, std::abs(ref[c][t] - got.at(c, t)));
  }
  return worst;
}

// Every tensor of a manifest filled with seeded Gaussian values.
inline ModelWeights random_weights(const std::vector<TensorInfo>& manifest, std::uint64_t seed, float scale = 0.5f) {
  ModelWeights w;
  std::uint64_t s = seed;
  for (const auto& info : manifest) {
    w.set(info.name, info.shape, gaussian(static_cast<std::size_t>(shape_elements(info.shape)), ++s, scale));
  }
  return w;
}

// A random causal graph: plain, strided, dilated and transposed convs,
// activations, FiLM and residual brackets.
inline GraphPlan random_plan(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  GraphPlan plan;
  plan.name = "random" + std::to_string(seed);
  plan.input_channels = pick(1, 3);
  plan.input_hop = 4 * pick(1, 3);
  plan.lookahead_frames = pick(0, 2);
  plan.condition_dim = 3;
  int channels = plan.input_channels;
  int hop = plan.input_hop;
  const int layers = pick(3, 8);
  int index = 0;
  auto name = [&] { return "l" + std::to_string(index++); };
  for (int i = 0; i < layers; ++i) {
    switch (pick(0, 5)) {
      case 0:
      case 1: {
        const int stride = (hop % 2 == 0 && pick(0, 1)) ? 2 : 1;
        const int out = pick(1, 4);
        plan.layers.emplace_back(ConvLayer{name(), {channels, out, pick(1, 5), stride, pick(1, 3), false}});
        channels = out;
        hop /= stride;
        break;
      }
      case 2: {
        const int stride = pick(1, 3);
        const int out = pick(1, 4);
        plan.layers.emplace_back(ConvLayer{name(), {channels, out, stride + pick(0, 3), stride, 1, true}});
        channels = out;
        hop *= stride;
        break;
      }
      case 3:
        plan.layers.emplace_back(ActivationLayer{pick(0, 3) ? Activation::elu : Activation::tanh});
        break;
      case 4:
        plan.layers.emplace_back(FilmLayer{name(), channels});
        break;
      default:
        plan.layers.emplace_back(SkipBegin{});
        plan.layers.emplace_back(ActivationLayer{Activation::elu});
        plan.layers.emplace_back(ConvLayer{name(), {channels, channels, pick(1, 4), 1, pick(1, 3), false}});
        plan.layers.emplace_back(SkipEnd{});
        break;
    }
  }
  if (plan.layers.empty() || !std::holds_alternative<ConvLayer>(plan.layers.front())) {
    plan.layers.insert(plan.layers.begin(), ConvLayer{name(), {plan.input_channels, plan.input_channels, 2, 1, 1, false}});
  }
  return plan;
}

// ---------------------------------------------------------------------------
// Yin reference: direct-sum difference function and the textbook steps.

inline std::vector<double> direct_difference(std::span<const float> window) {
  std::vector<double> d(yin::kMaxLag + 1, 0.0);
  for (int tau = 0; tau <= yin::kMaxLag; ++tau) {
    double acc = 0.0;
    for (int j = 0; j < yin::kIntegrationSamples; ++j) {
      const double diff = double(window[j]) - double(window[j + tau]);
      acc += diff * diff;
    }
    d[tau] = acc;
  }
  return d;
}

struct ReferenceYin {
  double f0_hz = 0.0;
  bool unvoiced = true;
};

// First lag under the threshold, walked down to its local minimum, then
// refined by a parabola; otherwise unvoiced.
inline ReferenceYin reference_yin(std::span<const float> window, double threshold) {
  const auto d = direct_difference(window);
  std::vector<double> cmnd(d.size(), 1.0);
  double running = 0.0;
  for (std::size_t tau = 1; tau < d.size(); ++tau) {
    running += d[tau];
    cmnd[tau] = running > 0.0 ? d[tau] * tau / running : 1.0;
  }
  for (int tau = yin::kMinLag; tau <= yin::kMaxLag; ++tau) {
    if (cmnd[tau] < threshold) {
      while (tau + 1 <= yin::kMaxLag && cmnd[tau + 1] < cmnd[tau]) ++tau;
      double period = tau;
      if (tau > 0 && tau < yin::kMaxLag) {
        const double a = cmnd[tau - 1], b = cmnd[tau], c = cmnd[tau + 1];
        const double denom = a - 2.0 * b + c;
        if (denom > 0.0) period += std::clamp(0.5 * (a - c) / denom, -1.0, 1.0);
      }
      return {kSampleRate / period, false};
    }
  }
  return {0.0, true};
}

// Window of frame t of `audio` (frames t-1, t, t+1; zeros outside).
inline std::vector<float> frame_window(std::span<const float> audio, std::size_t t) {
  std::vector<float> w(yin::kWindowSamples, 0.0f);
  for (int i = 0; i < yin::kWindowSamples; ++i) {
    const long idx = static_cast<long>(t) * kFrameSamples - kFrameSamples + i;
    if (idx >= 0 && idx < static_cast<long>(audio.size())) w[i] = audio[idx];
  }
  return w;
}

}  // namespace testing
