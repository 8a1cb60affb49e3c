#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace streamvc {

// A (channels x frames) activation map, channel-major: all frames of
// channel 0, then channel 1, ...
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t channels, std::size_t frames);
  FeatureMap(std::size_t channels, std::size_t frames, std::vector<float> data);

  std::size_t channels() const { return channels_; }
  std::size_t frames() const { return frames_; }
  bool empty() const { return frames_ == 0; }

  float& at(std::size_t channel, std::size_t frame) { return data_[channel * frames_ + frame]; }
  float at(std::size_t channel, std::size_t frame) const { return data_[channel * frames_ + frame]; }

  std::span<float> channel(std::size_t c) { return {data_.data() + c * frames_, frames_}; }
  std::span<const float> channel(std::size_t c) const { return {data_.data() + c * frames_, frames_}; }

  std::span<float> data() { return data_; }
  std::span<const float> data() const { return data_; }

  // Frames [begin, begin + count) of every channel.
  FeatureMap slice(std::size_t begin, std::size_t count) const;
  // Appends `other` along the time axis. Channel counts must match.
  void append(const FeatureMap& other);

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t channels_ = 0;
  std::size_t frames_ = 0;
  std::vector<float> data_;
};

// Stacks maps with equal frame counts along the channel axis.
FeatureMap concat_channels(const FeatureMap& a, const FeatureMap& b);

namespace detail {

// Page-aligned storage for packed convolution weights; large blocks are
// backed by huge pages where the OS allows it.
void* allocate_weights(std::size_t bytes);
void free_weights(void* p) noexcept;

template <typename T>
struct WeightAllocator {
  using value_type = T;
  WeightAllocator() = default;
  template <typename U>
  WeightAllocator(const WeightAllocator<U>&) noexcept {}
  T* allocate(std::size_t n) { return static_cast<T*>(allocate_weights(n * sizeof(T))); }
  void deallocate(T* p, std::size_t) noexcept { free_weights(p); }
  template <typename U>
  bool operator==(const WeightAllocator<U>&) const noexcept {
    return true;
  }
};

using PackedWeights = std::vector<float, WeightAllocator<float>>;

}  // namespace detail

struct ConvSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel_size = 1;
  int stride = 1;
  int dilation = 1;
  bool transposed = false;

  // Frames of left context a causal convolution needs ((k-1)*dilation), or
  // for a transposed convolution the overlap carried between input frames
  // (k - stride).
  int causal_padding() const;
  std::size_t weight_count() const;
  // Throws ShapeError if any invariant does not hold.
  void validate() const;

  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

// Causal (left zero padded) 1-D convolution with packed weights.
//
// Output frame t reads input frames t*stride + j*dilation - causal_padding
// for taps j = 0..k-1, so it never sees input beyond t*stride. Each output
// element starts from its bias and accumulates in ascending tap, then
// ascending input channel order with fused multiply-adds; the result does
// not depend on how many frames are processed per call.
class Conv1dKernel {
 public:
  // `weight` is [out_channels][in_channels][kernel_size], `bias` [out_channels].
  Conv1dKernel(const ConvSpec& spec, std::span<const float> weight, std::span<const float> bias);

  const ConvSpec& spec() const { return spec_; }

  // `input` points at channel 0 of a buffer whose rows are `input_stride`
  // floats apart and which already holds causal_padding() frames of left
  // context before the first frame that output 0 is aligned with.
  void forward(const float* input, std::ptrdiff_t input_stride, std::size_t out_frames, float* output,
               std::ptrdiff_t output_stride) const;

 private:
  ConvSpec spec_;
  detail::PackedWeights packed_;
  std::vector<float> bias_;
};

// Causal transposed 1-D convolution. Input frame t contributes to output
// samples [t*stride, t*stride + k). Per input frame the per-output sums run
// over input channels in ascending order from zero; the frame sums are then
// overlap-added into the accumulator in ascending frame order and the bias
// is added last. The first stride samples after frame t are final once
// frame t has been accumulated.
class ConvTranspose1dKernel {
 public:
  ConvTranspose1dKernel(const ConvSpec& spec, std::span<const float> weight, std::span<const float> bias);

  const ConvSpec& spec() const { return spec_; }

  // Adds the contributions of `frames` input frames into `acc`, whose rows
  // are `acc_stride` apart and must hold frames*stride + causal_padding()
  // positions.
  void accumulate(const float* input, std::ptrdiff_t input_stride, std::size_t frames, float* acc,
                  std::ptrdiff_t acc_stride) const;

  // output = acc + bias for `positions` samples of every output channel.
  void finalize(const float* acc, std::ptrdiff_t acc_stride, std::size_t positions, float* output,
                std::ptrdiff_t output_stride) const;

 private:
  ConvSpec spec_;
  detail::PackedWeights packed_;
  std::vector<float> bias_;
};

FeatureMap conv1d_causal(const FeatureMap& x, std::span<const float> weight, std::span<const float> bias,
                         const ConvSpec& spec);

FeatureMap conv1d_transposed_causal(const FeatureMap& x, std::span<const float> weight,
                                    std::span<const float> bias, const ConvSpec& spec);

// y = W x + b with W row-major [m][n]; each row accumulates from b[i] in
// ascending input index.
std::vector<float> affine(std::span<const float> x, std::span<const float> weight, std::span<const float> bias);

float elu(float x);
void elu_inplace(std::span<float> values);
void tanh_inplace(std::span<float> values);
std::vector<float> softmax(std::span<const float> logits);

}  // namespace streamvc
