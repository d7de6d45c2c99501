#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dgmn/dgmn2.hpp"
#include "dgmn/nn.hpp"

namespace dgmn {

enum class TaskKind { kClassifyBlobs, kSegmentStripes };

TaskKind parse_task(const std::string& name);
std::string to_string(TaskKind k);

/// Synthetic overfitting task; the dataset is a pure function of these fields.
///
/// classify_blobs: a blob in channel 0 and a blob in channel 1, displaced by
/// `offset` cells along both axes; the label is the quadrant of the second
/// blob relative to the first. Blobs sit on a `cell`-pixel lattice at least
/// `margin` cells from the border. segment_stripes: four quadrants filled
/// with stripes of random orientation; each pixel is labelled by orientation.
struct SyntheticTask {
  TaskKind kind = TaskKind::kClassifyBlobs;
  int samples = 16;
  int size = 32;
  int classes = 4;
  std::uint64_t seed = 0;

  int cell = 2;
  int offset = 8;
  int margin = 3;
  double sigma = 0.8;
  double radius = 1.0;
};

struct Dataset {
  Tensor images;            // [N, 3, S, S]
  std::vector<int> labels;  // [N] or [N * S * S]
  bool dense = false;       // per-pixel labels
};

Dataset make_dataset(const SyntheticTask& task);

struct ToyModelConfig {
  int patch = 2;
  std::int64_t dim = 8;
  int heads = 2;
  int layers = 2;
  std::vector<int> rates = {4};
  int K = 9;
  int ffn_expansion = 2;
  int classes = 4;
  bool dense = false;  // per-token logits instead of pooled
};

/// Patch embedding -> DGMN2 layers -> layer norm -> (pool) -> linear.
class ToyModel : public Module {
 public:
  ToyModel(ToyModelConfig cfg, int image_size, std::uint64_t seed);

  /// Pooled logits [N, classes], or per-token logits [N * h * w, classes]
  /// in dense mode (h = w = image_size / patch).
  Tensor forward(const Tensor& images, std::vector<AttentionTrace>* traces = nullptr) const;
  void collect_parameters(const std::string& prefix, NamedTensors& out) const override;

  const ToyModelConfig& config() const { return cfg_; }
  int grid() const { return grid_; }

  Conv2d embed;
  std::vector<Dgmn2Layer> layers;
  LayerNorm norm;
  Linear head;

 private:
  ToyModelConfig cfg_;
  int grid_ = 16;
};

struct TrainOptions {
  int steps = 1000;
  double lr = 3e-3;
  double weight_decay = 0.0;
  bool cosine = false;  // cosine decay to zero over `steps`
  // Stop once training accuracy reaches this value; above 1 never stops early.
  double stop_accuracy = 2.0;
};

struct StepMetrics {
  int step = 0;
  double loss = 0.0;
  double accuracy = 0.0;
};

/// Full-batch AdamW. Row t holds loss/accuracy of the model after t updates,
/// so the history has steps + 1 rows (fewer after an early stop). Throws TrainingError on a non-finite loss.
std::vector<StepMetrics> train(ToyModel& model, const Dataset& data, const TrainOptions& opts);

/// Labels the model is trained against: per-sample labels, or for dense tasks
/// the label at the center pixel of every patch.
std::vector<int> target_labels(const Dataset& data, int image_size, int patch);

/// Mean |walk| over every sampled node of every layer on `images`.
double mean_walk_magnitude(const ToyModel& model, const Tensor& images);

std::string metrics_csv(const std::vector<StepMetrics>& history);

}  // namespace dgmn
