#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "streamvc/pitch.hpp"
#include "streamvc/streaming.hpp"
#include "streamvc/weights.hpp"

namespace streamvc {

struct NetworkScale {
  int channels = 64;   // C: width of the first block; doubles per block
  int embedding = 64;  // D: latent width
};

struct ArchitectureConfig {
  NetworkScale content{64, 64};
  NetworkScale speaker{32, 64};
  NetworkScale decoder{40, 64};
  std::array<int, 4> encoder_strides{2, 4, 5, 8};
  std::array<int, 4> decoder_strides{8, 5, 4, 2};
  int pseudo_label_classes = 100;
  // Output frame o_t is paired with source frame s_{t-2}.
  int pairing_lookahead_frames = 2;

  int side_channels() const { return kSideChannels; }
  int decoder_input_channels() const { return content.embedding + kSideChannels; }
  // Throws ShapeError when the stride schedules do not both multiply to
  // 320 or widths are inconsistent.
  void validate() const;

  // Scaled-down widths with the same topology, for fast tests.
  static ArchitectureConfig tiny();
};

GraphPlan build_content_encoder(const ArchitectureConfig& cfg);
GraphPlan build_speaker_encoder(const ArchitectureConfig& cfg);
GraphPlan build_decoder(const ArchitectureConfig& cfg);

namespace names {
inline constexpr const char* kPoolQuery = "speaker.pool.query";
inline constexpr const char* kHeadNormScale = "content.head.norm.scale";
inline constexpr const char* kHeadNormShift = "content.head.norm.shift";
inline constexpr const char* kHeadProjWeight = "content.head.proj.weight";
inline constexpr const char* kHeadProjBias = "content.head.proj.bias";
}  // namespace names

// Every tensor the three networks, the pooling query and the pseudo-label
// head read, sorted by name.
std::vector<TensorInfo> model_manifest(const ArchitectureConfig& cfg);

// Exact coverage check: throws MissingLayerError / WeightShapeError naming
// the first offending tensor, or WeightError for tensors no layer reads.
void validate_weights(const ModelWeights& weights, const ArchitectureConfig& cfg);

// Deterministic seeded Gaussian initialization, fan-in scaled. FiLM scale
// maps start near identity (bias 1).
ModelWeights init_weights(const ArchitectureConfig& cfg, std::uint64_t seed);

// load_weights() followed by validate_weights().
ModelWeights load_model_weights(const std::filesystem::path& path, const ArchitectureConfig& cfg = {});

using SpeakerLatent = std::vector<float>;

// Attention pooling with a single query: w = softmax(q . e_i / sqrt(D)),
// output = sum_i w_i e_i. `frames` is (D x T), T >= 1.
SpeakerLatent learnable_pool(const FeatureMap& frames, std::span<const float> query);
// The attention weights alone.
std::vector<float> pooling_weights(const FeatureMap& frames, std::span<const float> query);

// Layer norm over the latent followed by the logistic (softmax)
// projection onto pseudo-label classes. Training-time head: the decoder
// consumes the latent before it.
struct PseudoLabelHead {
  std::vector<float> norm_scale, norm_shift;
  std::vector<float> proj_weight, proj_bias;  // [classes][embedding], [classes]

  static PseudoLabelHead from_weights(const ModelWeights& weights, const ArchitectureConfig& cfg);
};

inline constexpr float kLayerNormEpsilon = 1e-5f;

std::vector<float> layer_norm(std::span<const float> x, std::span<const float> scale, std::span<const float> shift);
std::vector<float> predict_pseudo_labels(std::span<const float> content_latent, const PseudoLabelHead& head);

// All three networks compiled against one weight set. Immutable; share it
// between any number of conversion streams.
class Model {
 public:
  explicit Model(const ModelWeights& weights, const ArchitectureConfig& cfg = {});

  const ArchitectureConfig& config() const { return cfg_; }
  const std::shared_ptr<const CompiledGraph>& content_encoder() const { return content_; }
  const std::shared_ptr<const CompiledGraph>& speaker_encoder() const { return speaker_; }
  const std::shared_ptr<const CompiledGraph>& decoder() const { return decoder_; }
  std::span<const float> pool_query() const { return pool_query_; }
  const PseudoLabelHead& head() const { return head_; }

 private:
  ArchitectureConfig cfg_;
  std::shared_ptr<const CompiledGraph> content_;
  std::shared_ptr<const CompiledGraph> speaker_;
  std::shared_ptr<const CompiledGraph> decoder_;
  std::vector<float> pool_query_;
  PseudoLabelHead head_;
};

}  // namespace streamvc
