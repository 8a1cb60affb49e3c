#include "streamvc/streaming.hpp"

#include <algorithm>
#include <string>

#include "streamvc/error.hpp"

namespace streamvc {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::string layer_label(const GraphPlan& plan, std::size_t index) {
  return plan.name + " layer " + std::to_string(index);
}

Shape conv_weight_shape(const ConvSpec& s) { return {s.out_channels, s.in_channels, s.kernel_size}; }

}  // namespace

// ---------------------------------------------------------------------------
// GraphPlan

PlanShape GraphPlan::analyze() const {
  if (input_channels <= 0) throw ShapeError("input_channels", name + ": input_channels must be positive");
  if (input_hop <= 0) throw ShapeError("input_hop", name + ": input_hop must be positive");
  if (lookahead_frames < 0) throw ShapeError("lookahead_frames", name + ": lookahead must be non-negative");

  struct Frame {
    int channels;
    int hop;
  };
  PlanShape out;
  int channels = input_channels;
  int hop = input_hop;
  std::vector<Frame> skips;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string where = layer_label(*this, i);
    std::visit(Overloaded{
                   [&](const ConvLayer& l) {
                     l.spec.validate();
                     if (l.spec.in_channels != channels) {
                       throw ShapeError("in_channels", where + " (" + l.name + ") expects " +
                                                           std::to_string(l.spec.in_channels) + " channels, gets " +
                                                           std::to_string(channels));
                     }
                     if (l.spec.transposed) {
                       hop *= l.spec.stride;
                       out.upsampling *= l.spec.stride;
                     } else {
                       if (hop % l.spec.stride != 0) {
                         throw ShapeError("input_hop", where + " (" + l.name + "): step of " + std::to_string(hop) +
                                                           " frames is not divisible by stride " +
                                                           std::to_string(l.spec.stride));
                       }
                       hop /= l.spec.stride;
                       out.downsampling *= l.spec.stride;
                     }
                     channels = l.spec.out_channels;
                   },
                   [&](const ActivationLayer&) {},
                   [&](const FilmLayer& l) {
                     if (l.channels != channels) {
                       throw ShapeError("channels", where + " (" + l.name + ") modulates " +
                                                        std::to_string(l.channels) + " channels, gets " +
                                                        std::to_string(channels));
                     }
                     if (condition_dim <= 0) {
                       throw ShapeError("condition_dim", where + " (" + l.name + ") needs a conditioning vector");
                     }
                   },
                   [&](const SkipBegin&) { skips.push_back({channels, hop}); },
                   [&](const SkipEnd&) {
                     if (skips.empty()) throw ShapeError("skip", where + ": residual end without begin");
                     if (skips.back().channels != channels || skips.back().hop != hop) {
                       throw ShapeError("skip", where + ": residual branch changes channels or rate");
                     }
                     skips.pop_back();
                   },
               },
               layers[i]);
  }
  if (!skips.empty()) throw ShapeError("skip", name + ": unterminated residual bracket");
  out.output_channels = channels;
  out.output_hop = hop;
  return out;
}

std::vector<TensorInfo> GraphPlan::weight_manifest() const {
  std::vector<TensorInfo> out;
  for (const Layer& layer : layers) {
    if (const auto* conv = std::get_if<ConvLayer>(&layer)) {
      out.push_back({conv->name + ".weight", conv_weight_shape(conv->spec)});
      out.push_back({conv->name + ".bias", {conv->spec.out_channels}});
    } else if (const auto* film = std::get_if<FilmLayer>(&layer)) {
      for (const char* part : {".scale", ".shift"}) {
        out.push_back({film->name + part + ".weight", {film->channels, condition_dim}});
        out.push_back({film->name + part + ".bias", {film->channels}});
      }
    }
  }
  return out;
}

bool GraphPlan::has_film() const {
  return std::any_of(layers.begin(), layers.end(),
                     [](const Layer& l) { return std::holds_alternative<FilmLayer>(l); });
}

// ---------------------------------------------------------------------------
// CompiledGraph

struct FilmWeights {
  int channels;
  std::vector<float> scale_weight, scale_bias, shift_weight, shift_bias;
};

struct CompiledGraph::Node {
  std::variant<Conv1dKernel, ConvTranspose1dKernel, Activation, FilmWeights, SkipBegin, SkipEnd> op;
};

CompiledGraph::CompiledGraph(GraphPlan plan, const ModelWeights& weights)
    : plan_(std::move(plan)), shape_(plan_.analyze()) {
  nodes_.reserve(plan_.layers.size());
  for (const Layer& layer : plan_.layers) {
    std::visit(Overloaded{
                   [&](const ConvLayer& l) {
                     auto w = weights.require(l.name + ".weight", conv_weight_shape(l.spec));
                     auto b = weights.require(l.name + ".bias", {l.spec.out_channels});
                     if (l.spec.transposed) {
                       nodes_.push_back({ConvTranspose1dKernel(l.spec, w, b)});
                     } else {
                       nodes_.push_back({Conv1dKernel(l.spec, w, b)});
                     }
                   },
                   [&](const ActivationLayer& l) { nodes_.push_back({l.fn}); },
                   [&](const FilmLayer& l) {
                     const Shape ws{l.channels, plan_.condition_dim};
                     const Shape bs{l.channels};
                     auto copy = [&](const std::string& name, const Shape& shape) {
                       auto v = weights.require(name, shape);
                       return std::vector<float>(v.begin(), v.end());
                     };
                     nodes_.push_back({FilmWeights{l.channels, copy(l.name + ".scale.weight", ws),
                                                   copy(l.name + ".scale.bias", bs),
                                                   copy(l.name + ".shift.weight", ws),
                                                   copy(l.name + ".shift.bias", bs)}});
                   },
                   [&](const SkipBegin& s) { nodes_.push_back({s}); },
                   [&](const SkipEnd& s) { nodes_.push_back({s}); },
               },
               layer);
  }
}

CompiledGraph::~CompiledGraph() = default;
CompiledGraph::CompiledGraph(CompiledGraph&&) noexcept = default;

FeatureMap CompiledGraph::run(const FeatureMap& input, std::span<const float> condition) const {
  // A fresh state advanced once over the whole signal: the same code path
  // the streaming executor runs one step at a time.
  auto self = std::shared_ptr<const CompiledGraph>(std::shared_ptr<const CompiledGraph>{}, this);
  StreamState state(self, condition);
  return state.advance(input);
}

FeatureMap CompiledGraph::run_offline(const FeatureMap& input, std::span<const float> condition) const {
  if (input.frames() % plan_.input_hop != 0) {
    throw ArgumentError(plan_.name + ": offline input of " + std::to_string(input.frames()) +
                        " frames is not a whole number of " + std::to_string(plan_.input_hop) + "-frame steps");
  }
  const std::size_t lookahead = plan_.lookahead_frames;
  FeatureMap padded = input;
  if (padded.channels() == 0) padded = FeatureMap(plan_.input_channels, 0);
  padded.append(FeatureMap(plan_.input_channels, lookahead * plan_.input_hop));
  FeatureMap out = run(padded, condition);
  const std::size_t drop = lookahead * shape_.output_hop;
  return out.slice(drop, out.frames() - drop);
}

// ---------------------------------------------------------------------------
// StreamState

namespace {

struct ConvContext {
  std::vector<float> history;  // [in_channels][causal_padding]
};

struct TransposeCarry {
  std::vector<float> carry;  // [out_channels][k - stride]
};

struct FilmParams {
  std::vector<float> scale, shift;
};

using LayerState = std::variant<std::monostate, ConvContext, TransposeCarry, FilmParams>;

FeatureMap apply_conv(const Conv1dKernel& kernel, ConvContext& ctx, const FeatureMap& x) {
  const ConvSpec& spec = kernel.spec();
  if (x.channels() != static_cast<std::size_t>(spec.in_channels)) {
    throw ShapeError("in_channels", "conv input has " + std::to_string(x.channels()) + " channels, expected " +
                                        std::to_string(spec.in_channels));
  }
  const std::size_t pad = spec.causal_padding();
  const std::size_t n = x.frames();
  const std::size_t width = pad + n;
  std::vector<float> work(spec.in_channels * width);
  for (std::size_t c = 0; c < x.channels(); ++c) {
    float* row = work.data() + c * width;
    std::copy_n(ctx.history.data() + c * pad, pad, row);
    std::copy(x.channel(c).begin(), x.channel(c).end(), row + pad);
  }
  const std::size_t out_frames = (n + spec.stride - 1) / spec.stride;
  FeatureMap out(spec.out_channels, out_frames);
  kernel.forward(work.data(), static_cast<std::ptrdiff_t>(width), out_frames, out.data().data(),
                 static_cast<std::ptrdiff_t>(out_frames));
  for (std::size_t c = 0; c < x.channels() && pad > 0; ++c) {
    std::copy_n(work.data() + c * width + n, pad, ctx.history.data() + c * pad);
  }
  return out;
}

FeatureMap apply_transpose(const ConvTranspose1dKernel& kernel, TransposeCarry& state, const FeatureMap& x) {
  const ConvSpec& spec = kernel.spec();
  if (x.channels() != static_cast<std::size_t>(spec.in_channels)) {
    throw ShapeError("in_channels", "transposed conv input has " + std::to_string(x.channels()) +
                                        " channels, expected " + std::to_string(spec.in_channels));
  }
  const std::size_t overlap = spec.causal_padding();
  const std::size_t emit = x.frames() * spec.stride;
  const std::size_t width = emit + overlap;
  std::vector<float> acc(spec.out_channels * width, 0.0f);
  for (std::size_t o = 0; o < static_cast<std::size_t>(spec.out_channels); ++o) {
    std::copy_n(state.carry.data() + o * overlap, overlap, acc.data() + o * width);
  }
  kernel.accumulate(x.data().data(), static_cast<std::ptrdiff_t>(x.frames()), x.frames(), acc.data(),
                    static_cast<std::ptrdiff_t>(width));
  FeatureMap out(spec.out_channels, emit);
  kernel.finalize(acc.data(), static_cast<std::ptrdiff_t>(width), emit, out.data().data(),
                  static_cast<std::ptrdiff_t>(emit));
  for (std::size_t o = 0; o < static_cast<std::size_t>(spec.out_channels); ++o) {
    std::copy_n(acc.data() + o * width + emit, overlap, state.carry.data() + o * overlap);
  }
  return out;
}

void apply_film(const FilmParams& film, FeatureMap& x) {
  for (std::size_t c = 0; c < x.channels(); ++c) {
    const float scale = film.scale[c];
    const float shift = film.shift[c];
    for (float& v : x.channel(c)) v = scale * v + shift;
  }
}

void apply_activation(Activation fn, FeatureMap& x) {
  switch (fn) {
    case Activation::elu:
      elu_inplace(x.data());
      break;
    case Activation::tanh:
      tanh_inplace(x.data());
      break;
  }
}

}  // namespace

struct StreamState::Layers {
  std::vector<LayerState> states;
};

StreamState::StreamState(std::shared_ptr<const CompiledGraph> graph, std::span<const float> condition)
    : graph_(std::move(graph)), condition_(condition.begin(), condition.end()) {
  const GraphPlan& plan = graph_->plan();
  if (plan.has_film() && condition_.size() != static_cast<std::size_t>(plan.condition_dim)) {
    throw ShapeError("condition_dim", plan.name + ": conditioning vector has " + std::to_string(condition_.size()) +
                                          " values, expected " + std::to_string(plan.condition_dim));
  }
  reset();
}

StreamState::~StreamState() = default;
StreamState::StreamState(StreamState&&) noexcept = default;
StreamState& StreamState::operator=(StreamState&&) noexcept = default;

void StreamState::reset() {
  auto layers = std::make_unique<Layers>();
  layers->states.reserve(graph_->nodes_.size());
  for (const auto& node : graph_->nodes_) {
    std::visit(Overloaded{
                   [&](const Conv1dKernel& k) {
                     const auto& s = k.spec();
                     layers->states.emplace_back(
                         ConvContext{std::vector<float>(std::size_t(s.in_channels) * s.causal_padding(), 0.0f)});
                   },
                   [&](const ConvTranspose1dKernel& k) {
                     const auto& s = k.spec();
                     layers->states.emplace_back(
                         TransposeCarry{std::vector<float>(std::size_t(s.out_channels) * s.causal_padding(), 0.0f)});
                   },
                   [&](const FilmWeights& f) {
                     layers->states.emplace_back(FilmParams{affine(condition_, f.scale_weight, f.scale_bias),
                                                            affine(condition_, f.shift_weight, f.shift_bias)});
                   },
                   [&](const auto&) { layers->states.emplace_back(std::monostate{}); },
               },
               node.op);
  }
  layers_ = std::move(layers);
  consumed_ = 0;
  emitted_ = 0;
  advanced_ = 0;
  terminated_ = false;
}

FeatureMap StreamState::advance(const FeatureMap& chunk) {
  const auto& nodes = graph_->nodes_;
  FeatureMap x = chunk;
  std::vector<FeatureMap> skips;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    LayerState& state = layers_->states[i];
    std::visit(Overloaded{
                   [&](const Conv1dKernel& k) { x = apply_conv(k, std::get<ConvContext>(state), x); },
                   [&](const ConvTranspose1dKernel& k) {
                     x = apply_transpose(k, std::get<TransposeCarry>(state), x);
                   },
                   [&](const Activation& fn) { apply_activation(fn, x); },
                   [&](const FilmWeights&) { apply_film(std::get<FilmParams>(state), x); },
                   [&](const SkipBegin&) { skips.push_back(x); },
                   [&](const SkipEnd&) {
                     auto skip = skips.back().data();
                     auto out = x.data();
                     for (std::size_t j = 0; j < out.size(); ++j) out[j] += skip[j];
                     skips.pop_back();
                   },
               },
               nodes[i].op);
  }
  ++advanced_;
  return x;
}

std::optional<FeatureMap> StreamState::step(const FeatureMap& chunk) {
  if (terminated_) throw StateError(graph_->plan().name + ": step after flush");
  const GraphPlan& plan = graph_->plan();
  if (chunk.channels() != static_cast<std::size_t>(plan.input_channels) ||
      chunk.frames() != static_cast<std::size_t>(plan.input_hop)) {
    throw ArgumentError(plan.name + ": step expects " + std::to_string(plan.input_channels) + "x" +
                        std::to_string(plan.input_hop) + " chunk, got " + std::to_string(chunk.channels()) + "x" +
                        std::to_string(chunk.frames()));
  }
  FeatureMap out = advance(chunk);
  ++consumed_;
  if (advanced_ <= static_cast<std::size_t>(plan.lookahead_frames)) return std::nullopt;
  ++emitted_;
  return out;
}

std::vector<FeatureMap> StreamState::flush() {
  if (terminated_) throw StateError(graph_->plan().name + ": flush on terminated stream");
  const GraphPlan& plan = graph_->plan();
  std::vector<FeatureMap> out;
  const FeatureMap zeros(plan.input_channels, plan.input_hop);
  for (int i = 0; i < plan.lookahead_frames; ++i) {
    FeatureMap y = advance(zeros);
    if (advanced_ > static_cast<std::size_t>(plan.lookahead_frames)) {
      ++emitted_;
      out.push_back(std::move(y));
    }
  }
  terminated_ = true;
  return out;
}

std::size_t StreamState::warmup_steps() const { return graph_->plan().lookahead_frames; }

std::size_t StreamState::state_size() const {
  std::size_t n = 0;
  for (const auto& s : layers_->states) {
    if (const auto* c = std::get_if<ConvContext>(&s)) n += c->history.size();
    if (const auto* t = std::get_if<TransposeCarry>(&s)) n += t->carry.size();
  }
  return n;
}

StreamState stream_init(std::shared_ptr<const CompiledGraph> graph, std::span<const float> condition) {
  return StreamState(std::move(graph), condition);
}

}  // namespace streamvc
