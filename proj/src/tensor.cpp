#include "streamvc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <new>
#include <string>

#if defined(__AVX512F__) || (defined(__AVX2__) && defined(__FMA__))
#include <immintrin.h>
#endif

#include "streamvc/error.hpp"

#if defined(__linux__)
#include <sys/mman.h>
#endif

namespace streamvc {

// ---------------------------------------------------------------------------
// FeatureMap

FeatureMap::FeatureMap(std::size_t channels, std::size_t frames)
    : channels_(channels), frames_(frames), data_(channels * frames, 0.0f) {}

FeatureMap::FeatureMap(std::size_t channels, std::size_t frames, std::vector<float> data)
    : channels_(channels), frames_(frames), data_(std::move(data)) {
  if (data_.size() != channels * frames) {
    throw ShapeError("data", "FeatureMap data length " + std::to_string(data_.size()) + " != channels*frames " +
                                 std::to_string(channels * frames));
  }
}

FeatureMap FeatureMap::slice(std::size_t begin, std::size_t count) const {
  if (begin + count > frames_) {
    throw ShapeError("frames", "slice [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                                   ") exceeds " + std::to_string(frames_) + " frames");
  }
  FeatureMap out(channels_, count);
  for (std::size_t c = 0; c < channels_; ++c) {
    std::copy_n(data_.data() + c * frames_ + begin, count, out.data_.data() + c * count);
  }
  return out;
}

void FeatureMap::append(const FeatureMap& other) {
  if (channels_ == 0 && frames_ == 0) {
    *this = other;
    return;
  }
  if (other.channels_ != channels_) {
    throw ShapeError("channels", "cannot append " + std::to_string(other.channels_) + "-channel map to " +
                                     std::to_string(channels_) + "-channel map");
  }
  const std::size_t frames = frames_ + other.frames_;
  std::vector<float> data(channels_ * frames);
  for (std::size_t c = 0; c < channels_; ++c) {
    std::copy_n(data_.data() + c * frames_, frames_, data.data() + c * frames);
    std::copy_n(other.data_.data() + c * other.frames_, other.frames_, data.data() + c * frames + frames_);
  }
  frames_ = frames;
  data_ = std::move(data);
}

FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b) {
  if (a.frames() != b.frames()) {
    throw ShapeError("frames", "concat of " + std::to_string(a.frames()) + " and " + std::to_string(b.frames()) +
                                   " frames");
  }
  std::vector<float> data;
  data.reserve(a.data().size() + b.data().size());
  data.insert(data.end(), a.data().begin(), a.data().end());
  data.insert(data.end(), b.data().begin(), b.data().end());
  return FeatureMap(a.channels() + b.channels(), a.frames(), std::move(data));
}

// ---------------------------------------------------------------------------
// ConvSpec

int ConvSpec::causal_padding() const {
  return transposed ? kernel_size - stride : (kernel_size - 1) * dilation;
}

std::size_t ConvSpec::weight_count() const {
  return static_cast<std::size_t>(out_channels) * in_channels * kernel_size;
}

void ConvSpec::validate() const {
  auto require_positive = [](int v, const char* name) {
    if (v <= 0) throw ShapeError(name, std::string(name) + " must be positive, got " + std::to_string(v));
  };
  require_positive(in_channels, "in_channels");
  require_positive(out_channels, "out_channels");
  require_positive(kernel_size, "kernel_size");
  require_positive(stride, "stride");
  require_positive(dilation, "dilation");
  if (transposed && stride > kernel_size) {
    throw ShapeError("stride", "transposed conv stride " + std::to_string(stride) + " exceeds kernel size " +
                                   std::to_string(kernel_size));
  }
  if (transposed && dilation != 1) {
    throw ShapeError("dilation", "transposed conv supports dilation 1 only");
  }
}

// ---------------------------------------------------------------------------
// Weight storage

namespace detail {

namespace {
constexpr std::size_t kHugePage = std::size_t{1} << 21;
}

void* allocate_weights(std::size_t bytes) {
  const std::size_t align = bytes >= kHugePage ? kHugePage : 64;
  const std::size_t rounded = (std::max<std::size_t>(bytes, 1) + align - 1) / align * align;
  void* p = std::aligned_alloc(align, rounded);
  if (p == nullptr) throw std::bad_alloc();
#if defined(__linux__) && defined(MADV_HUGEPAGE)
  if (align == kHugePage) madvise(p, rounded, MADV_HUGEPAGE);
#endif
  return p;
}

void free_weights(void* p) noexcept { std::free(p); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Packed GEMM core.
//
// Computes C[m][n] = init[n] + sum_r A(m, r) * B[r][n] with
// A(m, r) = base[offsets[r] + m * m_stride]. The reduction over r is a
// single fused multiply-add chain in ascending r for every (m, n), so the
// result is independent of tiling and of the SIMD width.

namespace {

#if defined(__AVX512F__)
constexpr int kLanes = 16;
using Vec = __m512;
inline Vec vload(const float* p) { return _mm512_loadu_ps(p); }
inline void vstore(float* p, Vec v) { _mm512_storeu_ps(p, v); }
inline Vec vset1(float x) { return _mm512_set1_ps(x); }
inline Vec vfma(Vec a, Vec b, Vec c) { return _mm512_fmadd_ps(a, b, c); }
constexpr int kRowBlock = 8;
#elif defined(__AVX2__) && defined(__FMA__)
constexpr int kLanes = 8;
using Vec = __m256;
inline Vec vload(const float* p) { return _mm256_loadu_ps(p); }
inline void vstore(float* p, Vec v) { _mm256_storeu_ps(p, v); }
inline Vec vset1(float x) { return _mm256_set1_ps(x); }
inline Vec vfma(Vec a, Vec b, Vec c) { return _mm256_fmadd_ps(a, b, c); }
constexpr int kRowBlock = 6;
#else
constexpr int kLanes = 1;
using Vec = float;
inline Vec vload(const float* p) { return *p; }
inline void vstore(float* p, Vec v) { *p = v; }
inline Vec vset1(float x) { return x; }
inline Vec vfma(Vec a, Vec b, Vec c) { return std::fma(a, b, c); }
constexpr int kRowBlock = 4;
#endif

// Columns per packed panel: two vectors.
constexpr int kPanel = 2 * kLanes;

std::size_t panel_count(std::size_t cols) { return (cols + kPanel - 1) / kPanel; }

// Packs B (given as a callback b(r, n)) into panels of kPanel columns,
// each panel stored row after row. Padding columns are zero.
template <typename Fn>
detail::PackedWeights pack_panels(std::size_t rows, std::size_t cols, Fn&& b) {
  const std::size_t panels = panel_count(cols);
  detail::PackedWeights packed(panels * rows * kPanel, 0.0f);
  for (std::size_t p = 0; p < panels; ++p) {
    float* dst = packed.data() + p * rows * kPanel;
    for (std::size_t r = 0; r < rows; ++r) {
      for (int i = 0; i < kPanel; ++i) {
        const std::size_t n = p * kPanel + i;
        dst[r * kPanel + i] = n < cols ? b(r, n) : 0.0f;
      }
    }
  }
  return packed;
}

std::vector<float> pad_to_panels(std::span<const float> values) {
  std::vector<float> out(panel_count(values.size()) * kPanel, 0.0f);
  std::copy(values.begin(), values.end(), out.begin());
  return out;
}

struct GemmArgs {
  const float* base;
  const std::ptrdiff_t* offsets;
  std::size_t rows;
  std::ptrdiff_t m_stride;
  const float* packed;
  std::size_t cols;
  const float* init;  // padded to whole panels
};

// Weight rows fetched ahead of use; the packed weights of the wide layers
// are far larger than the caches.
constexpr std::size_t kPrefetchRows = 24;

// One tile: `MB` consecutive m values against one panel.
template <int MB>
inline void gemm_tile(const GemmArgs& g, std::size_t m0, const float* panel, const float* init, float* tile) {
  Vec acc[MB][2];
  const Vec i0 = vload(init);
  const Vec i1 = vload(init + kLanes);
  for (int mb = 0; mb < MB; ++mb) {
    acc[mb][0] = i0;
    acc[mb][1] = i1;
  }
  const float* a0 = g.base + static_cast<std::ptrdiff_t>(m0) * g.m_stride;
  for (std::size_t r = 0; r < g.rows; ++r) {
    const float* a = a0 + g.offsets[r];
#if defined(__AVX512F__) || (defined(__AVX2__) && defined(__FMA__))
    _mm_prefetch(reinterpret_cast<const char*>(panel + (r + kPrefetchRows) * kPanel), _MM_HINT_T0);
    _mm_prefetch(reinterpret_cast<const char*>(panel + (r + kPrefetchRows) * kPanel + kLanes), _MM_HINT_T0);
#endif
    const Vec b0 = vload(panel + r * kPanel);
    const Vec b1 = vload(panel + r * kPanel + kLanes);
    for (int mb = 0; mb < MB; ++mb) {
      const Vec av = vset1(a[mb * g.m_stride]);
      acc[mb][0] = vfma(av, b0, acc[mb][0]);
      acc[mb][1] = vfma(av, b1, acc[mb][1]);
    }
  }
  for (int mb = 0; mb < MB; ++mb) {
    vstore(tile + mb * kPanel, acc[mb][0]);
    vstore(tile + mb * kPanel + kLanes, acc[mb][1]);
  }
}

template <int MB>
void gemm_tile_dispatch(int mb, const GemmArgs& g, std::size_t m0, const float* panel, const float* init,
                        float* tile) {
  if constexpr (MB > 0) {
    if (mb == MB) {
      gemm_tile<MB>(g, m0, panel, init, tile);
    } else {
      gemm_tile_dispatch<MB - 1>(mb, g, m0, panel, init, tile);
    }
  }
}

// Runs the GEMM for m in [0, m_count) and hands each finished tile to
// `sink(m0, mb, n0, tile)`; tile rows are kPanel floats wide.
template <typename Sink>
void gemm(const GemmArgs& g, std::size_t m_count, Sink&& sink) {
  alignas(64) float tile[kRowBlock * kPanel];
  // Long inputs are walked in chunks of m so the A rows stay cache resident
  // across panels.
  constexpr std::size_t kChunk = 32 * kRowBlock;
  const std::size_t panels = panel_count(g.cols);
  for (std::size_t chunk = 0; chunk < m_count; chunk += kChunk) {
    const std::size_t chunk_end = std::min(m_count, chunk + kChunk);
    for (std::size_t p = 0; p < panels; ++p) {
      const float* panel = g.packed + p * g.rows * kPanel;
      const float* init = g.init + p * kPanel;
      for (std::size_t m0 = chunk; m0 < chunk_end; m0 += kRowBlock) {
        const int mb = static_cast<int>(std::min<std::size_t>(kRowBlock, chunk_end - m0));
        gemm_tile_dispatch<kRowBlock>(mb, g, m0, panel, init, tile);
        sink(m0, mb, p * kPanel, static_cast<const float*>(tile));
      }
    }
  }
}

void check_weights(const ConvSpec& spec, std::span<const float> weight, std::span<const float> bias) {
  spec.validate();
  if (weight.size() != spec.weight_count()) {
    throw ShapeError("weight", "conv weight has " + std::to_string(weight.size()) + " values, expected " +
                                   std::to_string(spec.weight_count()));
  }
  if (bias.size() != static_cast<std::size_t>(spec.out_channels)) {
    throw ShapeError("bias", "conv bias has " + std::to_string(bias.size()) + " values, expected " +
                                 std::to_string(spec.out_channels));
  }
}

void check_input_channels(const ConvSpec& spec, const FeatureMap& x) {
  if (x.channels() != static_cast<std::size_t>(spec.in_channels)) {
    throw ShapeError("in_channels", "input has " + std::to_string(x.channels()) + " channels, conv expects " +
                                        std::to_string(spec.in_channels));
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Conv1dKernel

Conv1dKernel::Conv1dKernel(const ConvSpec& spec, std::span<const float> weight, std::span<const float> bias)
    : spec_(spec) {
  if (spec.transposed) throw ShapeError("transposed", "Conv1dKernel given a transposed spec");
  check_weights(spec, weight, bias);
  const std::size_t cin = spec.in_channels;
  const std::size_t k = spec.kernel_size;
  // Reduction index r = tap * in_channels + channel.
  packed_ = pack_panels(k * cin, spec.out_channels, [&](std::size_t r, std::size_t o) {
    const std::size_t j = r / cin;
    const std::size_t c = r % cin;
    return weight[(o * cin + c) * k + j];
  });
  bias_ = pad_to_panels(bias);
}

void Conv1dKernel::forward(const float* input, std::ptrdiff_t input_stride, std::size_t out_frames, float* output,
                           std::ptrdiff_t output_stride) const {
  if (out_frames == 0) return;
  const std::size_t cin = spec_.in_channels;
  const std::size_t k = spec_.kernel_size;
  std::vector<std::ptrdiff_t> offsets(k * cin);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t c = 0; c < cin; ++c) {
      offsets[j * cin + c] = static_cast<std::ptrdiff_t>(c) * input_stride + static_cast<std::ptrdiff_t>(j) * spec_.dilation;
    }
  }
  const GemmArgs g{input, offsets.data(), k * cin, spec_.stride, packed_.data(),
                   static_cast<std::size_t>(spec_.out_channels), bias_.data()};
  const std::size_t cout = spec_.out_channels;
  gemm(g, out_frames, [&](std::size_t m0, int mb, std::size_t n0, const float* tile) {
    const std::size_t n_end = std::min<std::size_t>(n0 + kPanel, cout);
    for (std::size_t n = n0; n < n_end; ++n) {
      float* dst = output + static_cast<std::ptrdiff_t>(n) * output_stride + m0;
      for (int i = 0; i < mb; ++i) dst[i] = tile[i * kPanel + (n - n0)];
    }
  });
}

// ---------------------------------------------------------------------------
// ConvTranspose1dKernel

ConvTranspose1dKernel::ConvTranspose1dKernel(const ConvSpec& spec, std::span<const float> weight,
                                             std::span<const float> bias)
    : spec_(spec) {
  if (!spec.transposed) throw ShapeError("transposed", "ConvTranspose1dKernel given a non-transposed spec");
  check_weights(spec, weight, bias);
  const std::size_t cin = spec.in_channels;
  const std::size_t k = spec.kernel_size;
  // Column index n = out_channel * k + tap; reduction over input channels.
  packed_ = pack_panels(cin, spec.out_channels * k, [&](std::size_t c, std::size_t n) {
    const std::size_t o = n / k;
    const std::size_t j = n % k;
    return weight[(o * cin + c) * k + j];
  });
  bias_.assign(bias.begin(), bias.end());
}

void ConvTranspose1dKernel::accumulate(const float* input, std::ptrdiff_t input_stride, std::size_t frames,
                                       float* acc, std::ptrdiff_t acc_stride) const {
  if (frames == 0) return;
  const std::size_t cin = spec_.in_channels;
  const std::size_t k = spec_.kernel_size;
  const std::size_t cols = static_cast<std::size_t>(spec_.out_channels) * k;
  const std::size_t stride = spec_.stride;
  std::vector<std::ptrdiff_t> offsets(cin);
  for (std::size_t c = 0; c < cin; ++c) offsets[c] = static_cast<std::ptrdiff_t>(c) * input_stride;
  const std::vector<float> zeros(panel_count(cols) * kPanel, 0.0f);
  const GemmArgs g{input, offsets.data(), cin, 1, packed_.data(), cols, zeros.data()};

  // Frame sums P[t][n], overlap-added below in ascending frame order.
  std::vector<float> sums(frames * cols);
  gemm(g, frames, [&](std::size_t m0, int mb, std::size_t n0, const float* tile) {
    const std::size_t width = std::min<std::size_t>(kPanel, cols - n0);
    for (int i = 0; i < mb; ++i) {
      std::copy_n(tile + i * kPanel, width, sums.data() + (m0 + i) * cols + n0);
    }
  });
  for (std::size_t t = 0; t < frames; ++t) {
    const float* frame_sum = sums.data() + t * cols;
    for (std::size_t o = 0; o < static_cast<std::size_t>(spec_.out_channels); ++o) {
      float* dst = acc + static_cast<std::ptrdiff_t>(o) * acc_stride + t * stride;
      const float* src = frame_sum + o * k;
      for (std::size_t j = 0; j < k; ++j) dst[j] += src[j];
    }
  }
}

void ConvTranspose1dKernel::finalize(const float* acc, std::ptrdiff_t acc_stride, std::size_t positions,
                                     float* output, std::ptrdiff_t output_stride) const {
  for (std::size_t o = 0; o < static_cast<std::size_t>(spec_.out_channels); ++o) {
    const float* src = acc + static_cast<std::ptrdiff_t>(o) * acc_stride;
    float* dst = output + static_cast<std::ptrdiff_t>(o) * output_stride;
    const float b = bias_[o];
    for (std::size_t i = 0; i < positions; ++i) dst[i] = src[i] + b;
  }
}

// ---------------------------------------------------------------------------
// Offline wrappers

FeatureMap conv1d_causal(const FeatureMap& x, std::span<const float> weight, std::span<const float> bias,
                         const ConvSpec& spec) {
  if (spec.transposed) throw ShapeError("transposed", "conv1d_causal requires a non-transposed spec");
  const Conv1dKernel kernel(spec, weight, bias);
  check_input_channels(spec, x);
  const std::size_t pad = spec.causal_padding();
  const std::size_t frames = x.frames();
  const std::size_t padded_frames = pad + frames;
  std::vector<float> padded(spec.in_channels * padded_frames, 0.0f);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    std::copy(x.channel(c).begin(), x.channel(c).end(), padded.begin() + c * padded_frames + pad);
  }
  const std::size_t out_frames = (frames + spec.stride - 1) / spec.stride;
  FeatureMap out(spec.out_channels, out_frames);
  kernel.forward(padded.data(), static_cast<std::ptrdiff_t>(padded_frames), out_frames, out.data().data(),
                 static_cast<std::ptrdiff_t>(out_frames));
  return out;
}

FeatureMap conv1d_transposed_causal(const FeatureMap& x, std::span<const float> weight,
                                    std::span<const float> bias, const ConvSpec& spec) {
  if (!spec.transposed) throw ShapeError("transposed", "conv1d_transposed_causal requires a transposed spec");
  const ConvTranspose1dKernel kernel(spec, weight, bias);
  check_input_channels(spec, x);
  const std::size_t out_frames = x.frames() * spec.stride;
  const std::size_t acc_len = out_frames + spec.causal_padding();
  std::vector<float> acc(spec.out_channels * acc_len, 0.0f);
  kernel.accumulate(x.data().data(), static_cast<std::ptrdiff_t>(x.frames()), x.frames(), acc.data(),
                    static_cast<std::ptrdiff_t>(acc_len));
  FeatureMap out(spec.out_channels, out_frames);
  kernel.finalize(acc.data(), static_cast<std::ptrdiff_t>(acc_len), out_frames, out.data().data(),
                  static_cast<std::ptrdiff_t>(out_frames));
  return out;
}

// ---------------------------------------------------------------------------
// Dense maps and activations

std::vector<float> affine(std::span<const float> x, std::span<const float> weight, std::span<const float> bias) {
  const std::size_t m = bias.size();
  const std::size_t n = x.size();
  if (weight.size() != m * n) {
    throw ShapeError("weight", "affine weight has " + std::to_string(weight.size()) + " values, expected " +
                                   std::to_string(m) + "x" + std::to_string(n));
  }
  std::vector<float> y(m);
  for (std::size_t i = 0; i < m; ++i) {
    float acc = bias[i];
    const float* row = weight.data() + i * n;
    for (std::size_t j = 0; j < n; ++j) acc = std::fma(row[j], x[j], acc);
    y[i] = acc;
  }
  return y;
}

// ELU negative branch: expm1(x) = 2^n * expm1(r) + (2^n - 1) with
// x = n ln2 + r, |r| <= ln2/2, and a degree-7 Taylor polynomial for
// expm1(r). The scalar and vector versions perform the same sequence of
// rounded operations, so results do not depend on the code path.
namespace {

constexpr float kLog2e = 1.44269504088896341f;
constexpr float kLn2Hi = 0.693359375f;
constexpr float kLn2Lo = -2.12194440e-4f;
constexpr float kEluFloor = -87.0f;
constexpr float kC7 = 1.0f / 5040.0f, kC6 = 1.0f / 720.0f, kC5 = 1.0f / 120.0f, kC4 = 1.0f / 24.0f,
                kC3 = 1.0f / 6.0f, kC2 = 0.5f;

float elu_scalar(float x) {
  if (x > 0.0f) return x;
  const float xc = std::max(x, kEluFloor);
  const float n = std::nearbyint(xc * kLog2e);
  float r = std::fma(n, -kLn2Hi, xc);
  r = std::fma(n, -kLn2Lo, r);
  float p = std::fma(kC7, r, kC6);
  p = std::fma(p, r, kC5);
  p = std::fma(p, r, kC4);
  p = std::fma(p, r, kC3);
  p = std::fma(p, r, kC2);
  const float q = std::fma(p * r, r, r);
  const float scale = std::ldexp(1.0f, static_cast<int>(n));
  return std::fma(scale, q, scale - 1.0f);
}

#if defined(__AVX512F__)
void elu_block(float* v) {
  const __m512 x = _mm512_loadu_ps(v);
  const __m512 xc = _mm512_max_ps(x, _mm512_set1_ps(kEluFloor));
  const __m512 n = _mm512_roundscale_ps(_mm512_mul_ps(xc, _mm512_set1_ps(kLog2e)),
                                        _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m512 r = _mm512_fmadd_ps(n, _mm512_set1_ps(-kLn2Hi), xc);
  r = _mm512_fmadd_ps(n, _mm512_set1_ps(-kLn2Lo), r);
  __m512 p = _mm512_fmadd_ps(_mm512_set1_ps(kC7), r, _mm512_set1_ps(kC6));
  p = _mm512_fmadd_ps(p, r, _mm512_set1_ps(kC5));
  p = _mm512_fmadd_ps(p, r, _mm512_set1_ps(kC4));
  p = _mm512_fmadd_ps(p, r, _mm512_set1_ps(kC3));
  p = _mm512_fmadd_ps(p, r, _mm512_set1_ps(kC2));
  const __m512 q = _mm512_fmadd_ps(_mm512_mul_ps(p, r), r, r);
  const __m512i bits = _mm512_slli_epi32(_mm512_add_epi32(_mm512_cvtps_epi32(n), _mm512_set1_epi32(127)), 23);
  const __m512 scale = _mm512_castsi512_ps(bits);
  const __m512 neg = _mm512_fmadd_ps(scale, q, _mm512_sub_ps(scale, _mm512_set1_ps(1.0f)));
  const __mmask16 positive = _mm512_cmp_ps_mask(x, _mm512_setzero_ps(), _CMP_GT_OQ);
  _mm512_storeu_ps(v, _mm512_mask_blend_ps(positive, neg, x));
}
constexpr std::size_t kEluLanes = 16;
#elif defined(__AVX2__) && defined(__FMA__)
void elu_block(float* v) {
  const __m256 x = _mm256_loadu_ps(v);
  const __m256 xc = _mm256_max_ps(x, _mm256_set1_ps(kEluFloor));
  const __m256 n = _mm256_round_ps(_mm256_mul_ps(xc, _mm256_set1_ps(kLog2e)),
                                   _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256 r = _mm256_fmadd_ps(n, _mm256_set1_ps(-kLn2Hi), xc);
  r = _mm256_fmadd_ps(n, _mm256_set1_ps(-kLn2Lo), r);
  __m256 p = _mm256_fmadd_ps(_mm256_set1_ps(kC7), r, _mm256_set1_ps(kC6));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(kC5));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(kC4));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(kC3));
  p = _mm256_fmadd_ps(p, r, _mm256_set1_ps(kC2));
  const __m256 q = _mm256_fmadd_ps(_mm256_mul_ps(p, r), r, r);
  const __m256i bits = _mm256_slli_epi32(_mm256_add_epi32(_mm256_cvtps_epi32(n), _mm256_set1_epi32(127)), 23);
  const __m256 scale = _mm256_castsi256_ps(bits);
  const __m256 neg = _mm256_fmadd_ps(scale, q, _mm256_sub_ps(scale, _mm256_set1_ps(1.0f)));
  const __m256 positive = _mm256_cmp_ps(x, _mm256_setzero_ps(), _CMP_GT_OQ);
  _mm256_storeu_ps(v, _mm256_blendv_ps(neg, x, positive));
}
constexpr std::size_t kEluLanes = 8;
#else
void elu_block(float* v) { *v = elu_scalar(*v); }
constexpr std::size_t kEluLanes = 1;
#endif

}  // namespace

float elu(float x) { return elu_scalar(x); }

void elu_inplace(std::span<float> values) {
  std::size_t i = 0;
  for (; i + kEluLanes <= values.size(); i += kEluLanes) elu_block(values.data() + i);
  for (; i < values.size(); ++i) values[i] = elu_scalar(values[i]);
}

void tanh_inplace(std::span<float> values) {
  for (float& v : values) v = std::tanh(v);
}

std::vector<float> softmax(std::span<const float> logits) {
  std::vector<float> out(logits.size());
  if (logits.empty()) return out;
  const float peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - peak);
    total += out[i];
  }
  const double inv = 1.0 / total;
  for (float& v : out) v = static_cast<float>(v * inv);
  return out;
}

}  // namespace streamvc
