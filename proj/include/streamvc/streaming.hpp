#pragma once

#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "streamvc/tensor.hpp"
#include "streamvc/weights.hpp"

namespace streamvc {

enum class Activation { elu, tanh };

// Convolution (plain or transposed). Weights: "<name>.weight"
// [out][in][k] and "<name>.bias" [out].
struct ConvLayer {
  std::string name;
  ConvSpec spec;
};

struct ActivationLayer {
  Activation fn = Activation::elu;
};

// Feature-wise linear modulation: y = scale(z) * x + shift(z) per channel,
// where scale and shift are affine maps of the stream's conditioning
// vector z. Weights: "<name>.scale.weight" [channels][cond],
// "<name>.scale.bias" [channels] and the same under "<name>.shift".
struct FilmLayer {
  std::string name;
  int channels = 0;
};

// Residual bracket: SkipEnd adds the activation saved at the matching
// SkipBegin. The bracketed layers must preserve channels and frame rate.
struct SkipBegin {};
struct SkipEnd {};

using Layer = std::variant<ConvLayer, ActivationLayer, FilmLayer, SkipBegin, SkipEnd>;

// Shape facts derived from a plan by GraphPlan::analyze().
struct PlanShape {
  int output_channels = 0;
  // Output frames produced per step of input_hop input frames.
  int output_hop = 0;
  // Number of strided (down) and transposed (up) layers and their products.
  int downsampling = 1;
  int upsampling = 1;
};

// An ordered, causal layer graph executed at a fixed step size.
struct GraphPlan {
  std::string name;
  int input_channels = 1;
  // Input frames consumed per streaming step (320 samples for the audio
  // encoders, one latent frame for the decoder).
  int input_hop = 1;
  // Output is paired with the input `lookahead_frames` steps earlier: the
  // first that many step outputs are withheld and flush drains them.
  int lookahead_frames = 0;
  // Width of the conditioning vector read by FiLM layers (0 if none).
  int condition_dim = 0;
  std::vector<Layer> layers;

  // Validates channel flow, residual brackets, stride divisibility of the
  // step size and FiLM conditioning; throws ShapeError.
  PlanShape analyze() const;
  // Every weight tensor the plan reads, in layer order.
  std::vector<TensorInfo> weight_manifest() const;
  bool has_film() const;
};

// A plan bound to its weights (kernels packed once). Immutable and
// shareable between any number of stream states.
class CompiledGraph {
 public:
  // Throws MissingLayerError / WeightShapeError naming the offending tensor.
  CompiledGraph(GraphPlan plan, const ModelWeights& weights);
  ~CompiledGraph();
  CompiledGraph(CompiledGraph&&) noexcept;

  const GraphPlan& plan() const { return plan_; }
  const PlanShape& shape() const { return shape_; }

  // Whole-signal execution from zero state, without lookahead pairing.
  FeatureMap run(const FeatureMap& input, std::span<const float> condition = {}) const;
  // Offline reference for streaming: appends lookahead_frames zero steps,
  // runs, and drops the first lookahead_frames output steps. Input frames
  // must be a multiple of input_hop.
  FeatureMap run_offline(const FeatureMap& input, std::span<const float> condition = {}) const;

  struct Node;

 private:
  friend class StreamState;
  GraphPlan plan_;
  PlanShape shape_;
  std::vector<Node> nodes_;
};

// Per-stream execution state: one context ring per convolution
// ((k-1)*dilation input frames), one overlap carry per transposed
// convolution (k - stride output frames), FiLM parameters for the stream's
// conditioning vector, and step counters. Capacities are fixed at
// construction. Not thread-safe; distinct states may run concurrently.
class StreamState {
 public:
  explicit StreamState(std::shared_ptr<const CompiledGraph> graph, std::span<const float> condition = {});
  ~StreamState();
  StreamState(StreamState&&) noexcept;
  StreamState& operator=(StreamState&&) noexcept;

  // Consumes exactly input_hop frames. Returns nothing during warm-up.
  std::optional<FeatureMap> step(const FeatureMap& chunk);
  // Feeds lookahead_frames zero chunks and returns what they release.
  // Afterwards the state is terminated; stepping or flushing again throws
  // StateError.
  std::vector<FeatureMap> flush();
  // Back to the freshly initialized state (same conditioning).
  void reset();

  // Counted in steps: one frame is one input_hop chunk.
  std::size_t frames_consumed() const { return consumed_; }
  std::size_t frames_emitted() const { return emitted_; }
  std::size_t warmup_steps() const;
  bool terminated() const { return terminated_; }
  // Floats held in context rings and carries.
  std::size_t state_size() const;

  const CompiledGraph& graph() const { return *graph_; }

  struct Layers;

 private:
  friend class CompiledGraph;
  FeatureMap advance(const FeatureMap& chunk);

  std::shared_ptr<const CompiledGraph> graph_;
  std::vector<float> condition_;
  std::unique_ptr<Layers> layers_;
  std::size_t consumed_ = 0;
  std::size_t emitted_ = 0;
  std::size_t advanced_ = 0;
  bool terminated_ = false;
};

StreamState stream_init(std::shared_ptr<const CompiledGraph> graph, std::span<const float> condition = {});

}  // namespace streamvc
