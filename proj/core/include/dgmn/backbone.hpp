#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "dgmn/dgmn2.hpp"
#include "dgmn/nn.hpp"

namespace dgmn {

enum class Variant { kTiny, kSmall, kMedium, kLarge };
enum class BackboneMode { kClassify, kDense };

Variant parse_variant(const std::string& name);
std::string to_string(Variant v);
BackboneMode parse_mode(const std::string& name);
std::string to_string(BackboneMode m);

struct StageSpec {
  int depth = 2;
  std::int64_t dim = 64;
  int heads = 1;
  int expansion = 8;
  int embed_stride = 2;  // stride of the stage's patch embedding (stem: product of its three units)
  bool stem = false;     // true: three-unit C33 stem; false: one C31 unit
};

/// Four-stage pyramid description.
struct BackboneSpec {
  Variant variant = Variant::kTiny;
  BackboneMode mode = BackboneMode::kClassify;
  std::array<StageSpec, 4> stages;
  int num_classes = 1000;
  int input_size = 224;  // resolution the relative-position tables are sized for
  int K = 9;
  std::vector<int> rates = {1};

  static BackboneSpec make(Variant v, BackboneMode mode = BackboneMode::kClassify, int num_classes = 1000,
                           int input_size = 224);

  std::array<int, 4> output_strides() const;
  // Stage grid extent at `input_size` in classification mode.
  std::int64_t pretrain_grid(std::size_t stage) const;
};

/// Three 3x3 Conv-BN-ReLU units with strides 2, 1, 2: [N,3,H,W] -> [N,out,H/4,W/4].
class PatchEmbedStem : public Module {
 public:
  PatchEmbedStem() = default;
  PatchEmbedStem(std::int64_t in, std::int64_t out, Rng& rng);

  Tensor forward(const Tensor& image);
  void collect_parameters(const std::string& prefix, NamedTensors& out) const override;
  void collect_buffers(const std::string& prefix, NamedTensors& out) const override;
  void set_training(bool on) override;

  std::array<ConvBnRelu, 3> units;
};

/// One 3x3 Conv-BN-ReLU unit with stride 1 or 2.
class PatchEmbedDown : public Module {
 public:
  PatchEmbedDown() = default;
  PatchEmbedDown(std::int64_t in, std::int64_t out, int stride, Rng& rng);

  Tensor forward(const Tensor& x) { return unit.forward(x); }
  void collect_parameters(const std::string& prefix, NamedTensors& out) const override;
  void collect_buffers(const std::string& prefix, NamedTensors& out) const override;
  void set_training(bool on) override { unit.set_training(on); }

  int stride() const { return unit.conv.params.stride; }

  ConvBnRelu unit;
};

struct Stage {
  std::unique_ptr<Module> embed;  // PatchEmbedStem or PatchEmbedDown
  std::vector<Dgmn2Layer> layers;
  LayerNorm norm;
  std::int64_t pretrain_grid = 56;
};

/// DGMN2 pyramid backbone with an optional classification head
/// (stage-4 layer norm -> global average pool -> linear).
class Backbone : public Module {
 public:
  Backbone(BackboneSpec spec, std::uint64_t seed);

  /// Stage outputs [N, d_i, H_i, W_i], i = 1..4. When `traces` is given it
  /// receives one AttentionTrace per DGMN2 layer, stage-major.
  std::vector<Tensor> forward_features(const Tensor& image, std::vector<AttentionTrace>* traces = nullptr);
  /// Logits [N, num_classes]; requires classify mode.
  Tensor forward(const Tensor& image);

  void collect_parameters(const std::string& prefix, NamedTensors& out) const override;
  void collect_buffers(const std::string& prefix, NamedTensors& out) const override;
  void set_training(bool on) override;

  const BackboneSpec& spec() const { return spec_; }
  const std::vector<Stage>& stages() const { return stages_; }
  std::vector<Stage>& stages() { return stages_; }
  const Linear& head() const { return head_; }

 private:
  BackboneSpec spec_;
  std::vector<Stage> stages_;
  Linear head_;
};

}  // namespace dgmn
