#include "dgmn/backbone.hpp"

#include <algorithm>

namespace dgmn {

using i64 = std::int64_t;

Variant parse_variant(const std::string& name) {
  std::string s = name;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (s == "tiny") return Variant::kTiny;
  if (s == "small") return Variant::kSmall;
  if (s == "medium") return Variant::kMedium;
  if (s == "large") return Variant::kLarge;
  throw ConfigError("unknown backbone variant '" + name + "' (expected tiny, small, medium, large)");
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::kTiny: return "tiny";
    case Variant::kSmall: return "small";
    case Variant::kMedium: return "medium";
    case Variant::kLarge: return "large";
  }
  return "?";
}

BackboneMode parse_mode(const std::string& name) {
  if (name == "classify") return BackboneMode::kClassify;
  if (name == "dense") return BackboneMode::kDense;
  throw ConfigError("unknown backbone mode '" + name + "' (expected classify or dense)");
}

std::string to_string(BackboneMode m) { return m == BackboneMode::kClassify ? "classify" : "dense"; }

BackboneSpec BackboneSpec::make(Variant v, BackboneMode mode, int num_classes, int input_size) {
  if (num_classes < 1) throw ConfigError("num_classes must be positive");
  if (input_size < 32 || input_size % 32 != 0) {
    throw ConfigError("input_size must be a positive multiple of 32, got " + std::to_string(input_size));
  }
  std::array<int, 4> depths{};
  switch (v) {
    case Variant::kTiny: depths = {2, 2, 2, 2}; break;
    case Variant::kSmall: depths = {3, 4, 6, 3}; break;
    case Variant::kMedium: depths = {3, 4, 18, 3}; break;
    case Variant::kLarge: depths = {3, 8, 27, 3}; break;
  }
  constexpr std::array<i64, 4> dims{64, 128, 320, 512};
  constexpr std::array<int, 4> heads{1, 2, 5, 8};
  constexpr std::array<int, 4> expansions{8, 8, 4, 4};
  BackboneSpec spec;
  spec.variant = v;
  spec.mode = mode;
  spec.num_classes = num_classes;
  spec.input_size = input_size;
  for (std::size_t i = 0; i < 4; ++i) {
    auto& st = spec.stages[i];
    st.depth = depths[i];
    st.dim = dims[i];
    st.heads = heads[i];
    st.expansion = expansions[i];
    st.stem = i == 0;
    st.embed_stride = i == 0 ? 4 : 2;
    if (mode == BackboneMode::kDense && i >= 2) st.embed_stride = 1;
  }
  return spec;
}

std::array<int, 4> BackboneSpec::output_strides() const {
  std::array<int, 4> out{};
  int s = 1;
  for (std::size_t i = 0; i < 4; ++i) {
    s *= stages[i].embed_stride;
    out[i] = s;
  }
  return out;
}

i64 BackboneSpec::pretrain_grid(std::size_t stage) const {
  constexpr std::array<int, 4> classify_strides{4, 8, 16, 32};
  return input_size / classify_strides[stage];
}

PatchEmbedStem::PatchEmbedStem(i64 in, i64 out, Rng& rng)
    : units{ConvBnRelu(in, out, 2), ConvBnRelu(out, out, 1), ConvBnRelu(out, out, 2)} {
  for (auto& u : units) init_trunc_normal(u.conv, rng);
}

Tensor PatchEmbedStem::forward(const Tensor& image) {
  if (image.rank() != 4 || image.dim(2) % 4 != 0 || image.dim(3) % 4 != 0) {
    throw ShapeError("patch embedding stem needs [N,C,H,W] with H, W divisible by 4, got " +
                     shape_str(image.shape()));
  }
  Tensor x = image;
  for (auto& u : units) x = u.forward(x);
  return x;
}

void PatchEmbedStem::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  for (std::size_t i = 0; i < units.size(); ++i) units[i].collect_parameters(join_name(prefix, std::to_string(i)), out);
}

void PatchEmbedStem::collect_buffers(const std::string& prefix, NamedTensors& out) const {
  for (std::size_t i = 0; i < units.size(); ++i) units[i].collect_buffers(join_name(prefix, std::to_string(i)), out);
}

void PatchEmbedStem::set_training(bool on) {
  for (auto& u : units) u.set_training(on);
}

PatchEmbedDown::PatchEmbedDown(i64 in, i64 out, int stride, Rng& rng) : unit(in, out, stride) {
  if (stride != 1 && stride != 2) throw ConfigError("patch embedding stride must be 1 or 2");
  init_trunc_normal(unit.conv, rng);
}

void PatchEmbedDown::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  unit.collect_parameters(prefix, out);
}

void PatchEmbedDown::collect_buffers(const std::string& prefix, NamedTensors& out) const {
  unit.collect_buffers(prefix, out);
}

Backbone::Backbone(BackboneSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  Rng rng(seed);
  i64 in = 3;
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& st = spec_.stages[i];
    Stage stage;
    if (st.stem) {
      stage.embed = std::make_unique<PatchEmbedStem>(in, st.dim, rng);
    } else {
      stage.embed = std::make_unique<PatchEmbedDown>(in, st.dim, st.embed_stride, rng);
    }
    stage.pretrain_grid = spec_.pretrain_grid(i);
    Dgmn2Config cfg;
    cfg.dim = st.dim;
    cfg.heads = st.heads;
    cfg.K = spec_.K;
    cfg.rates = spec_.rates;
    cfg.ffn_expansion = st.expansion;
    cfg.relpos_extent = static_cast<int>(2 * stage.pretrain_grid - 1);
    for (int l = 0; l < st.depth; ++l) stage.layers.emplace_back(cfg, rng);
    stage.norm = LayerNorm(st.dim);
    stages_.push_back(std::move(stage));
    in = st.dim;
  }
  head_ = Linear(in, spec_.num_classes);
  init_trunc_normal(head_, rng);
}

std::vector<Tensor> Backbone::forward_features(const Tensor& image, std::vector<AttentionTrace>* traces) {
  if (image.rank() != 4 || image.dim(1) != 3) {
    throw ShapeError("backbone expects [N,3,H,W] images, got " + shape_str(image.shape()));
  }
  if (image.dim(2) % 32 != 0 || image.dim(3) % 32 != 0) {
    throw ShapeError("backbone input extents must be multiples of 32, got " + shape_str(image.shape()));
  }
  std::vector<Tensor> outs;
  Tensor x = image;
  for (auto& stage : stages_) {
    if (auto* stem = dynamic_cast<PatchEmbedStem*>(stage.embed.get())) {
      x = stem->forward(x);
    } else {
      x = static_cast<PatchEmbedDown*>(stage.embed.get())->forward(x);
    }
    const i64 extent = std::max(x.dim(2), x.dim(3));
    Tensor tokens = permute(x, {0, 2, 3, 1});
    for (auto& layer : stage.layers) {
      // Tables are sized for the pretraining grid; other resolutions resample them.
      layer.attn.relpos_offset_scale = static_cast<double>(stage.pretrain_grid) / static_cast<double>(extent);
      AttentionTrace* tr = nullptr;
      if (traces) tr = &traces->emplace_back();
      tokens = layer.forward_tokens(tokens, tr);
    }
    tokens = stage.norm.forward(tokens);
    x = permute(tokens, {0, 3, 1, 2});
    outs.push_back(x);
  }
  return outs;
}

Tensor Backbone::forward(const Tensor& image) {
  auto feats = forward_features(image);
  return head_.forward(global_average_pool(feats.back()));
}

void Backbone::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    const std::string sp = join_name(prefix, "stage" + std::to_string(i + 1));
    stages_[i].embed->collect_parameters(join_name(sp, "embed"), out);
    for (std::size_t l = 0; l < stages_[i].layers.size(); ++l) {
      stages_[i].layers[l].collect_parameters(join_name(sp, "layer" + std::to_string(l)), out);
    }
    stages_[i].norm.collect_parameters(join_name(sp, "norm"), out);
  }
  head_.collect_parameters(join_name(prefix, "head"), out);
}

void Backbone::collect_buffers(const std::string& prefix, NamedTensors& out) const {
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    stages_[i].embed->collect_buffers(join_name(join_name(prefix, "stage" + std::to_string(i + 1)), "embed"), out);
  }
}

void Backbone::set_training(bool on) {
  for (auto& s : stages_) s.embed->set_training(on);
}

}  // namespace dgmn
