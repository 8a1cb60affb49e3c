#include "streamvc/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>
#include <string>

#include "streamvc/error.hpp"

namespace streamvc {

namespace {

constexpr std::array<int, 3> kDilations{1, 3, 9};

int product(const std::array<int, 4>& v) {
  int p = 1;
  for (int s : v) p *= s;
  return p;
}

void add_conv(GraphPlan& plan, std::string name, int in, int out, int kernel, int stride = 1, int dilation = 1,
              bool transposed = false) {
  plan.layers.emplace_back(ConvLayer{std::move(name), ConvSpec{in, out, kernel, stride, dilation, transposed}});
}

void add_elu(GraphPlan& plan) { plan.layers.emplace_back(ActivationLayer{Activation::elu}); }

// ELU -> dilated conv(k=7) -> ELU -> conv(k=1), added to the input.
void add_residual_unit(GraphPlan& plan, const std::string& name, int channels, int dilation) {
  plan.layers.emplace_back(SkipBegin{});
  add_elu(plan);
  add_conv(plan, name + ".dilated", channels, channels, 7, 1, dilation);
  add_elu(plan);
  add_conv(plan, name + ".pointwise", channels, channels, 1);
  plan.layers.emplace_back(SkipEnd{});
}

GraphPlan build_encoder(const std::string& prefix, const NetworkScale& scale, const std::array<int, 4>& strides) {
  GraphPlan plan;
  plan.name = prefix;
  plan.input_channels = 1;
  plan.input_hop = kFrameSamples;
  const int c = scale.channels;
  add_conv(plan, prefix + ".conv_in", 1, c, 7);
  int channels = c;
  for (std::size_t b = 0; b < strides.size(); ++b) {
    const std::string block = prefix + ".block" + std::to_string(b);
    for (std::size_t r = 0; r < kDilations.size(); ++r) {
      add_residual_unit(plan, block + ".res" + std::to_string(r), channels, kDilations[r]);
    }
    add_elu(plan);
    add_conv(plan, block + ".down", channels, 2 * channels, 2 * strides[b], strides[b]);
    channels *= 2;
  }
  add_elu(plan);
  add_conv(plan, prefix + ".conv_out", channels, scale.embedding, 3);
  return plan;
}

// Box-Muller over a 64-bit Mersenne Twister; unlike
// std::normal_distribution the sequence is identical on every standard
// library.
class GaussianSource {
 public:
  explicit GaussianSource(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform_open();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  // Uniform in (0, 1].
  double uniform_open() { return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53; }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

bool ends_with(const std::string& s, const std::string& suffix) { return s.ends_with(suffix); }

// (mean, standard deviation) used to draw one tensor.
std::pair<double, double> init_distribution(const TensorInfo& info) {
  const std::string& n = info.name;
  const double fan_in = info.shape.size() > 1
                            ? static_cast<double>(shape_elements(info.shape) / info.shape.front())
                            : 1.0;
  if (n == names::kPoolQuery) return {0.0, 1.0};
  if (n == names::kHeadNormScale) return {1.0, 0.1};
  if (n == names::kHeadNormShift) return {0.0, 0.1};
  if (ends_with(n, ".scale.bias")) return {1.0, 0.0};
  if (ends_with(n, ".shift.bias")) return {0.0, 0.0};
  if (ends_with(n, ".scale.weight") || ends_with(n, ".shift.weight")) return {0.0, 0.5 / std::sqrt(fan_in)};
  if (ends_with(n, ".bias")) return {0.0, 0.02};
  // Residual branches enter at reduced gain so activations stay bounded
  // through the twelve residual units of each network.
  if (ends_with(n, ".pointwise.weight")) return {0.0, 0.3 / std::sqrt(fan_in)};
  return {0.0, 1.0 / std::sqrt(fan_in)};
}

}  // namespace

void ArchitectureConfig::validate() const {
  if (product(encoder_strides) != kFrameSamples || product(decoder_strides) != kFrameSamples) {
    throw ShapeError("strides", "encoder and decoder stride products must both equal " +
                                    std::to_string(kFrameSamples));
  }
  for (const NetworkScale* s : {&content, &speaker, &decoder}) {
    if (s->channels <= 0 || s->embedding <= 0) throw ShapeError("channels", "network widths must be positive");
  }
  if (speaker.embedding != decoder.embedding) {
    throw ShapeError("embedding", "speaker latent width must match the decoder conditioning width");
  }
  if (pseudo_label_classes <= 0) throw ShapeError("pseudo_label_classes", "need at least one class");
  if (pairing_lookahead_frames < 0) throw ShapeError("lookahead_frames", "lookahead must be non-negative");
}

ArchitectureConfig ArchitectureConfig::tiny() {
  ArchitectureConfig cfg;
  cfg.content = {4, 8};
  cfg.speaker = {2, 8};
  cfg.decoder = {2, 8};
  cfg.pseudo_label_classes = 10;
  return cfg;
}

GraphPlan build_content_encoder(const ArchitectureConfig& cfg) {
  cfg.validate();
  return build_encoder("content", cfg.content, cfg.encoder_strides);
}

GraphPlan build_speaker_encoder(const ArchitectureConfig& cfg) {
  cfg.validate();
  return build_encoder("speaker", cfg.speaker, cfg.encoder_strides);
}

GraphPlan build_decoder(const ArchitectureConfig& cfg) {
  cfg.validate();
  GraphPlan plan;
  plan.name = "decoder";
  plan.input_channels = cfg.decoder_input_channels();
  plan.input_hop = 1;
  plan.lookahead_frames = cfg.pairing_lookahead_frames;
  plan.condition_dim = cfg.speaker.embedding;
  int channels = 16 * cfg.decoder.channels;
  add_conv(plan, "decoder.conv_in", plan.input_channels, channels, 7);
  for (std::size_t b = 0; b < cfg.decoder_strides.size(); ++b) {
    const std::string block = "decoder.block" + std::to_string(b);
    const int stride = cfg.decoder_strides[b];
    add_elu(plan);
    add_conv(plan, block + ".up", channels, channels / 2, 2 * stride, stride, 1, true);
    channels /= 2;
    for (std::size_t r = 0; r < kDilations.size(); ++r) {
      if (r > 0) plan.layers.emplace_back(FilmLayer{block + ".film" + std::to_string(r - 1), channels});
      add_residual_unit(plan, block + ".res" + std::to_string(r), channels, kDilations[r]);
    }
  }
  add_elu(plan);
  add_conv(plan, "decoder.conv_out", channels, 1, 7);
  plan.layers.emplace_back(ActivationLayer{Activation::tanh});
  return plan;
}

std::vector<TensorInfo> model_manifest(const ArchitectureConfig& cfg) {
  std::vector<TensorInfo> out;
  for (const auto& plan : {build_content_encoder(cfg), build_speaker_encoder(cfg), build_decoder(cfg)}) {
    auto m = plan.weight_manifest();
    out.insert(out.end(), m.begin(), m.end());
  }
  const std::int64_t d = cfg.content.embedding;
  out.push_back({names::kPoolQuery, {cfg.speaker.embedding}});
  out.push_back({names::kHeadNormScale, {d}});
  out.push_back({names::kHeadNormShift, {d}});
  out.push_back({names::kHeadProjWeight, {cfg.pseudo_label_classes, d}});
  out.push_back({names::kHeadProjBias, {cfg.pseudo_label_classes}});
  std::sort(out.begin(), out.end(), [](const TensorInfo& a, const TensorInfo& b) { return a.name < b.name; });
  return out;
}

void validate_weights(const ModelWeights& weights, const ArchitectureConfig& cfg) {
  std::set<std::string> expected;
  for (const auto& info : model_manifest(cfg)) {
    weights.require(info.name, info.shape);
    expected.insert(info.name);
  }
  for (const auto& [name, tensor] : weights.tensors()) {
    if (!expected.contains(name)) throw WeightError(name, "unexpected weight tensor: " + name);
  }
}

ModelWeights init_weights(const ArchitectureConfig& cfg, std::uint64_t seed) {
  GaussianSource gauss(seed);
  ModelWeights weights;
  for (const auto& info : model_manifest(cfg)) {
    const auto [mean, stddev] = init_distribution(info);
    std::vector<float> values(static_cast<std::size_t>(shape_elements(info.shape)));
    for (float& v : values) v = static_cast<float>(mean + stddev * gauss.next());
    weights.set(info.name, info.shape, std::move(values));
  }
  return weights;
}

ModelWeights load_model_weights(const std::filesystem::path& path, const ArchitectureConfig& cfg) {
  ModelWeights weights = load_weights(path);
  validate_weights(weights, cfg);
  return weights;
}

std::vector<float> pooling_weights(const FeatureMap& frames, std::span<const float> query) {
  if (frames.frames() == 0) throw ArgumentError("learnable pooling needs at least one frame");
  if (frames.channels() != query.size()) {
    throw ShapeError("channels", "pooling query has " + std::to_string(query.size()) + " dims, frames have " +
                                     std::to_string(frames.channels()));
  }
  const float inv_sqrt_d = 1.0f / std::sqrt(static_cast<float>(query.size()));
  std::vector<float> scores(frames.frames());
  for (std::size_t t = 0; t < frames.frames(); ++t) {
    float dot = 0.0f;
    for (std::size_t c = 0; c < frames.channels(); ++c) dot = std::fma(query[c], frames.at(c, t), dot);
    scores[t] = dot * inv_sqrt_d;
  }
  return softmax(scores);
}

SpeakerLatent learnable_pool(const FeatureMap& frames, std::span<const float> query) {
  const auto w = pooling_weights(frames, query);
  SpeakerLatent out(frames.channels(), 0.0f);
  for (std::size_t c = 0; c < frames.channels(); ++c) {
    float acc = 0.0f;
    const auto row = frames.channel(c);
    for (std::size_t t = 0; t < row.size(); ++t) acc = std::fma(w[t], row[t], acc);
    out[c] = acc;
  }
  return out;
}

PseudoLabelHead PseudoLabelHead::from_weights(const ModelWeights& weights, const ArchitectureConfig& cfg) {
  const std::int64_t d = cfg.content.embedding;
  auto copy = [&](const char* name, const Shape& shape) {
    auto v = weights.require(name, shape);
    return std::vector<float>(v.begin(), v.end());
  };
  return PseudoLabelHead{copy(names::kHeadNormScale, {d}), copy(names::kHeadNormShift, {d}),
                         copy(names::kHeadProjWeight, {cfg.pseudo_label_classes, d}),
                         copy(names::kHeadProjBias, {cfg.pseudo_label_classes})};
}

std::vector<float> layer_norm(std::span<const float> x, std::span<const float> scale, std::span<const float> shift) {
  if (scale.size() != x.size() || shift.size() != x.size()) {
    throw ShapeError("channels", "layer norm parameters do not match the input width");
  }
  const double n = static_cast<double>(x.size());
  double mean = 0.0;
  for (float v : x) mean += v;
  mean /= n;
  double var = 0.0;
  for (float v : x) var += (v - mean) * (v - mean);
  var /= n;
  const double inv = 1.0 / std::sqrt(var + kLayerNormEpsilon);
  std::vector<float> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = static_cast<float>(scale[i] * ((x[i] - mean) * inv) + shift[i]);
  }
  return out;
}

std::vector<float> predict_pseudo_labels(std::span<const float> content_latent, const PseudoLabelHead& head) {
  const auto normed = layer_norm(content_latent, head.norm_scale, head.norm_shift);
  return softmax(affine(normed, head.proj_weight, head.proj_bias));
}

Model::Model(const ModelWeights& weights, const ArchitectureConfig& cfg) : cfg_(cfg) {
  validate_weights(weights, cfg_);
  content_ = std::make_shared<const CompiledGraph>(build_content_encoder(cfg_), weights);
  speaker_ = std::make_shared<const CompiledGraph>(build_speaker_encoder(cfg_), weights);
  decoder_ = std::make_shared<const CompiledGraph>(build_decoder(cfg_), weights);
  auto q = weights.require(names::kPoolQuery, {cfg_.speaker.embedding});
  pool_query_.assign(q.begin(), q.end());
  head_ = PseudoLabelHead::from_weights(weights, cfg_);
}

}  // namespace streamvc
