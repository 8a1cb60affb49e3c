#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include "streamvc/error.hpp"
#include "support.hpp"

using namespace streamvc;
using testing::gaussian;

namespace {

const ArchitectureConfig kTiny = ArchitectureConfig::tiny();

std::filesystem::path temp_file(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("streamvc_model_" + name);
}

template <typename T>
int count_layers(const GraphPlan& plan) {
  return static_cast<int>(std::count_if(plan.layers.begin(), plan.layers.end(),
                                        [](const Layer& l) { return std::holds_alternative<T>(l); }));
}

}  // namespace

TEST_CASE("architecture config") {
  const ArchitectureConfig cfg;
  CHECK(cfg.content.channels == 64);
  CHECK(cfg.speaker.channels == 32);
  CHECK(cfg.decoder.channels == 40);
  CHECK(cfg.decoder_input_channels() == 74);
  CHECK(cfg.pseudo_label_classes == 100);
  cfg.validate();
  ArchitectureConfig bad = cfg;
  bad.encoder_strides = {2, 4, 5, 4};
  CHECK_THROWS_AS(bad.validate(), ShapeError);
}

TEST_CASE("encoder topology") {
  const ArchitectureConfig cfg;
  for (const GraphPlan& plan : {build_content_encoder(cfg), build_speaker_encoder(cfg)}) {
    const PlanShape shape = plan.analyze();
    CHECK(shape.downsampling == 320);
    CHECK(shape.output_channels == 64);
    CHECK(plan.input_hop == 320);
    CHECK(count_layers<FilmLayer>(plan) == 0);
    // conv_in + 4 x (3 x 2 + 1) + conv_out
    CHECK(count_layers<ConvLayer>(plan) == 1 + 4 * 7 + 1);
    const auto& first = std::get<ConvLayer>(plan.layers.front());
    CHECK(first.spec == ConvSpec{1, plan.name == "content" ? 64 : 32, 7, 1, 1, false});
  }
  std::vector<int> dilations;
  for (const Layer& l : build_content_encoder(cfg).layers) {
    if (const auto* c = std::get_if<ConvLayer>(&l); c && c->spec.kernel_size == 7 && c->spec.stride == 1) {
      dilations.push_back(c->spec.dilation);
    }
  }
  CHECK(dilations == std::vector<int>{1, 1, 3, 9, 1, 3, 9, 1, 3, 9, 1, 3, 9});
}

TEST_CASE("decoder topology: FiLM in every block") {
  const ArchitectureConfig cfg;
  const GraphPlan plan = build_decoder(cfg);
  const PlanShape shape = plan.analyze();
  CHECK(shape.upsampling == 320);
  CHECK(shape.output_hop == 320);
  CHECK(shape.output_channels == 1);
  CHECK(plan.input_channels == 74);
  CHECK(plan.lookahead_frames == 2);
  CHECK(plan.condition_dim == 64);
  std::set<std::string> blocks;
  for (const Layer& l : plan.layers) {
    if (const auto* f = std::get_if<FilmLayer>(&l)) blocks.insert(f->name.substr(0, f->name.find(".film")));
  }
  CHECK(blocks == std::set<std::string>{"decoder.block0", "decoder.block1", "decoder.block2", "decoder.block3"});
  CHECK(std::holds_alternative<ActivationLayer>(plan.layers.back()));
  CHECK(std::get<ActivationLayer>(plan.layers.back()).fn == Activation::tanh);
}

TEST_CASE("shape contract at tiny scale") {
  const ModelWeights w = init_weights(kTiny, 4);
  const Model model(w, kTiny);
  const auto audio = gaussian(50 * 320, 1, 0.2f);
  const FeatureMap content = model.content_encoder()->run(FeatureMap(1, audio.size(), audio));
  CHECK(content.frames() == 50);
  CHECK(content.channels() == 8);
  CHECK(model.content_encoder()->run(FeatureMap(1, 320, gaussian(320, 2))).frames() == 1);
  CHECK(model.speaker_encoder()->run(FeatureMap(1, audio.size(), audio)).frames() == 50);

  const std::size_t in = kTiny.decoder_input_channels();
  const auto speaker = gaussian(8, 3);
  const FeatureMap one = model.decoder()->run(FeatureMap(in, 1, gaussian(in, 4)), speaker);
  CHECK(one.frames() == 320);
  const FeatureMap many = model.decoder()->run(FeatureMap(in, 50, gaussian(in * 50, 5)), speaker);
  CHECK(many.frames() == 16000);
  for (float v : many.data()) {
    CHECK(v >= -1.0f);
    CHECK(v <= 1.0f);
  }
}

TEST_CASE("networks agree with the double-precision reference") {
  const ModelWeights w = init_weights(kTiny, 8);
  const Model model(w, kTiny);
  const auto audio = gaussian(3 * 320, 9, 0.3f);
  const FeatureMap x(1, audio.size(), audio);
  for (const auto& g : {model.content_encoder(), model.speaker_encoder()}) {
    const auto ref = testing::reference_run(g->plan(), w, x);
    CHECK(testing::max_abs_diff(ref, g->run(x)) < 1e-3);
  }
  const std::size_t in = kTiny.decoder_input_channels();
  const FeatureMap z(in, 3, gaussian(in * 3, 10));
  const auto speaker = gaussian(8, 11);
  const auto ref = testing::reference_run(model.decoder()->plan(), w, z, speaker);
  CHECK(testing::max_abs_diff(ref, model.decoder()->run(z, speaker)) < 1e-4);
}

TEST_CASE("learnable pooling") {
  const FeatureMap frames(3, 4, {1, 2, 3, 4, 0, 0, 8, 8, -1, 1, -1, 1});
  const auto avg = learnable_pool(frames, std::vector<float>(3, 0.0f));
  CHECK(avg[0] == doctest::Approx(2.5));
  CHECK(avg[1] == doctest::Approx(4.0));
  CHECK(avg[2] == doctest::Approx(0.0));
  const FeatureMap single(3, 1, {0.3f, -2.0f, 7.0f});
  CHECK(learnable_pool(single, std::vector<float>{5, -3, 2}) == std::vector<float>{0.3f, -2.0f, 7.0f});
  CHECK_THROWS_AS(learnable_pool(FeatureMap(3, 0), std::vector<float>(3)), ArgumentError);

  const FeatureMap e(4, 20, gaussian(80, 12));
  const auto q = gaussian(4, 13);
  const auto w = pooling_weights(e, q);
  double sum = 0.0;
  for (float v : w) {
    CHECK(v > 0.0f);
    CHECK(v < 1.0f);
    sum += v;
  }
  CHECK(std::abs(sum - 1.0) < 1e-6);
  // Direct evaluation of softmax(q . e_i / sqrt(D)).
  std::vector<double> s(20);
  double peak = -1e300, z = 0.0;
  for (std::size_t i = 0; i < 20; ++i) {
    for (std::size_t c = 0; c < 4; ++c) s[i] += double(q[c]) * e.at(c, i);
    s[i] /= 2.0;
    peak = std::max(peak, s[i]);
  }
  for (double& v : s) z += (v = std::exp(v - peak));
  for (std::size_t i = 0; i < 20; ++i) CHECK(std::abs(w[i] - s[i] / z) < 1e-6);
}

TEST_CASE("pseudo-label head") {
  const ArchitectureConfig cfg;
  const ModelWeights w = init_weights(cfg, 2);
  const PseudoLabelHead head = PseudoLabelHead::from_weights(w, cfg);
  const auto latent = gaussian(64, 5, 3.0f);
  const auto p = predict_pseudo_labels(latent, head);
  REQUIRE(p.size() == 100);
  double sum = 0.0;
  for (float v : p) sum += v;
  CHECK(std::abs(sum - 1.0) < 1e-6);

  std::vector<float> scaled(latent);
  for (float& v : scaled) v *= 7.5f;
  const auto ps = predict_pseudo_labels(scaled, head);
  for (std::size_t i = 0; i < p.size(); ++i) CHECK(std::abs(ps[i] - p[i]) < 1e-5);

  PseudoLabelHead zero = head;
  std::fill(zero.proj_weight.begin(), zero.proj_weight.end(), 0.0f);
  std::fill(zero.proj_bias.begin(), zero.proj_bias.end(), 0.0f);
  for (float v : predict_pseudo_labels(latent, zero)) CHECK(v == doctest::Approx(0.01).epsilon(1e-6));

  const auto n = layer_norm(std::vector<float>{1, 2, 3}, std::vector<float>{1, 1, 1}, std::vector<float>{0, 0, 0});
  const double sigma = std::sqrt(2.0 / 3.0 + kLayerNormEpsilon);
  CHECK(n[0] == doctest::Approx(-1.0 / sigma));
  CHECK(n[1] == doctest::Approx(0.0));
  CHECK(n[2] == doctest::Approx(1.0 / sigma));
}

TEST_CASE("init_weights is deterministic and covers the manifest") {
  const ModelWeights a = init_weights(kTiny, 1);
  const ModelWeights b = init_weights(kTiny, 1);
  const ModelWeights c = init_weights(kTiny, 2);
  CHECK(a == b);
  CHECK(a.checksum() == b.checksum());
  CHECK(a.checksum() != c.checksum());
  CHECK(a.manifest() == model_manifest(kTiny));
  validate_weights(a, kTiny);
}

TEST_CASE("weight file round trip and corruption") {
  const ModelWeights w = init_weights(kTiny, 3);
  const auto path = temp_file("roundtrip.svw");
  save_weights(w, path);
  CHECK(load_weights(path) == w);
  CHECK(load_model_weights(path, kTiny) == w);

  std::string bytes = serialize_weights(w);
  CHECK(bytes.rfind("SVW1\n", 0) == 0);
  for (std::size_t pos : {bytes.size() / 3, bytes.size() - 1, bytes.find('\n', 5) + 3}) {
    std::string bad = bytes;
    bad[pos] ^= 0x01;
    CHECK_THROWS_AS(parse_weights(bad), ChecksumError);
  }
  std::string version = bytes;
  version[3] = '2';
  CHECK_THROWS_AS(parse_weights(version), VersionError);
  CHECK_THROWS_AS(parse_weights(bytes.substr(0, bytes.size() - 4)), FormatError);
  CHECK_THROWS_AS(load_weights(temp_file("does_not_exist.svw")), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("missing or reshaped layer is reported by name") {
  const ModelWeights w = init_weights(kTiny, 3);
  ModelWeights missing;
  for (const auto& [name, t] : w.tensors()) {
    if (name != "decoder.block2.film1.shift.weight") missing.set(name, t.shape, t.values);
  }
  const auto path = temp_file("missing.svw");
  save_weights(missing, path);
  try {
    load_model_weights(path, kTiny);
    FAIL("expected MissingLayerError");
  } catch (const MissingLayerError& e) {
    CHECK(e.layer() == "decoder.block2.film1.shift.weight");
    CHECK(std::string(e.what()).find("decoder.block2.film1.shift.weight") != std::string::npos);
  }
  std::filesystem::remove(path);

  ModelWeights extra = w;
  extra.set("decoder.unused", {1}, {0.0f});
  CHECK_THROWS_AS(validate_weights(extra, kTiny), WeightError);

  ModelWeights reshaped = w;
  reshaped.set("content.conv_in.bias", {3}, {0, 0, 0});
  try {
    validate_weights(reshaped, kTiny);
    FAIL("expected WeightShapeError");
  } catch (const WeightShapeError& e) {
    CHECK(e.layer() == "content.conv_in.bias");
  }
}

TEST_CASE("FiLM with unit scale and zero shift is the identity") {
  const ModelWeights w = init_weights(kTiny, 6);
  ModelWeights identity;
  for (const auto& [name, t] : w.tensors()) {
    std::vector<float> v = t.values;
    if (name.find(".film") != std::string::npos) {
      const bool scale_bias = name.ends_with(".scale.bias");
      std::fill(v.begin(), v.end(), scale_bias ? 1.0f : 0.0f);
    }
    identity.set(name, t.shape, v);
  }
  GraphPlan with = build_decoder(kTiny);
  GraphPlan without = with;
  std::erase_if(without.layers, [](const Layer& l) { return std::holds_alternative<FilmLayer>(l); });
  const CompiledGraph a(with, identity);
  const CompiledGraph b(without, identity);
  const std::size_t in = kTiny.decoder_input_channels();
  const FeatureMap z(in, 4, gaussian(in * 4, 7));
  CHECK(a.run(z, gaussian(8, 8)) == b.run(z));
}

TEST_CASE("decoder output depends on the speaker latent") {
  const ModelWeights w = init_weights(kTiny, 9);
  const Model model(w, kTiny);
  const std::size_t in = kTiny.decoder_input_channels();
  const FeatureMap z(in, 3, gaussian(in * 3, 10));
  const auto s1 = gaussian(8, 11);
  const auto s2 = gaussian(8, 12);
  CHECK(model.decoder()->run(z, s1) == model.decoder()->run(z, s1));
  CHECK_FALSE(model.decoder()->run(z, s1) == model.decoder()->run(z, s2));
}
