#include "dgmn/toy.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>

#include "dgmn/optim.hpp"
#include "dgmn/rng.hpp"

namespace dgmn {

using i64 = std::int64_t;

TaskKind parse_task(const std::string& name) {
  if (name == "classify_blobs") return TaskKind::kClassifyBlobs;
  if (name == "segment_stripes") return TaskKind::kSegmentStripes;
  throw ConfigError("unknown task '" + name + "' (expected classify_blobs or segment_stripes)");
}

std::string to_string(TaskKind k) { return k == TaskKind::kClassifyBlobs ? "classify_blobs" : "segment_stripes"; }

namespace {

void shuffle(std::vector<int>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[static_cast<std::size_t>(rng.below(i))]);
}

void stamp_blob(Tensor& images, i64 n, i64 channel, double cy, double cx, const SyntheticTask& t) {
  const i64 s = t.size;
  auto px = images.data();
  const int reach = static_cast<int>(std::ceil(t.radius));
  for (i64 y = static_cast<i64>(std::floor(cy)) - reach; y <= static_cast<i64>(std::ceil(cy)) + reach; ++y)
    for (i64 x = static_cast<i64>(std::floor(cx)) - reach; x <= static_cast<i64>(std::ceil(cx)) + reach; ++x) {
      if (y < 0 || y >= s || x < 0 || x >= s) continue;
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      const double r2 = dy * dy + dx * dx;
      if (r2 > t.radius * t.radius) continue;
      px[static_cast<std::size_t>(((n * 3 + channel) * s + y) * s + x)] = std::exp(-r2 / (2.0 * t.sigma * t.sigma));
    }
}

Dataset make_blobs(const SyntheticTask& t) {
  const i64 grid = t.size / t.cell;
  const i64 lo = t.margin, hi = grid - 1 - t.margin;  // admissible cell range
  if (hi - lo < t.offset) {
    throw ConfigError("blob offset " + std::to_string(t.offset) + " does not fit a " + std::to_string(grid) +
                      "-cell grid with margin " + std::to_string(t.margin));
  }
  if (t.classes != 4) throw ConfigError("classify_blobs has exactly 4 classes (relative quadrants)");
  Rng rng(t.seed);
  Dataset d;
  d.images = Tensor({t.samples, 3, t.size, t.size});
  d.labels.resize(static_cast<std::size_t>(t.samples));
  for (int i = 0; i < t.samples; ++i) d.labels[static_cast<std::size_t>(i)] = i % 4;
  shuffle(d.labels, rng);
  // Cell centers; blobs are aligned to the lattice so every sample is a pure translation.
  auto center = [&](i64 c) { return static_cast<double>(c * t.cell) + static_cast<double>(t.cell - 1) / 2.0; };
  for (int i = 0; i < t.samples; ++i) {
    const int label = d.labels[static_cast<std::size_t>(i)];
    const i64 dy = (label & 2) ? t.offset : -t.offset;
    const i64 dx = (label & 1) ? t.offset : -t.offset;
    const i64 span = hi - lo - t.offset + 1;
    const i64 ay = lo + (dy > 0 ? 0 : t.offset) + static_cast<i64>(rng.below(static_cast<std::uint64_t>(span)));
    const i64 ax = lo + (dx > 0 ? 0 : t.offset) + static_cast<i64>(rng.below(static_cast<std::uint64_t>(span)));
    stamp_blob(d.images, i, 0, center(ay), center(ax), t);
    stamp_blob(d.images, i, 1, center(ay + dy), center(ax + dx), t);
  }
  return d;
}

Dataset make_stripes(const SyntheticTask& t) {
  if (t.classes != 4) throw ConfigError("segment_stripes has exactly 4 classes (orientations)");
  if (t.size % 2 != 0) throw ConfigError("segment_stripes needs an even image size");
  Rng rng(t.seed);
  const i64 s = t.size, half = s / 2;
  Dataset d;
  d.dense = true;
  d.images = Tensor({t.samples, 3, s, s});
  d.labels.assign(static_cast<std::size_t>(t.samples * s * s), 0);
  auto px = d.images.data();
  for (int n = 0; n < t.samples; ++n) {
    int orient[4];
    for (int& o : orient) o = static_cast<int>(rng.below(4));
    for (i64 y = 0; y < s; ++y)
      for (i64 x = 0; x < s; ++x) {
        const int o = orient[(y / half) * 2 + x / half];
        i64 phase = 0;
        switch (o) {
          case 0: phase = y; break;
          case 1: phase = x; break;
          case 2: phase = x + y; break;
          default: phase = x - y + s; break;
        }
        const double v = (phase / 2) % 2 == 0 ? 1.0 : 0.0;
        for (i64 c = 0; c < 3; ++c) px[static_cast<std::size_t>(((n * 3 + c) * s + y) * s + x)] = v;
        d.labels[static_cast<std::size_t>((n * s + y) * s + x)] = o;
      }
  }
  return d;
}

}  // namespace

Dataset make_dataset(const SyntheticTask& task) {
  if (task.size < 16) throw ConfigError("synthetic images must be at least 16 pixels, got " + std::to_string(task.size));
  if (task.samples < 1) throw ConfigError("synthetic task needs at least one sample");
  if (task.cell < 1 || task.size % task.cell != 0) throw ConfigError("blob cell must divide the image size");
  return task.kind == TaskKind::kClassifyBlobs ? make_blobs(task) : make_stripes(task);
}

ToyModel::ToyModel(ToyModelConfig cfg, int image_size, std::uint64_t seed) : cfg_(std::move(cfg)) {
  if (cfg_.patch < 1 || image_size % cfg_.patch != 0) {
    throw ConfigError("patch size " + std::to_string(cfg_.patch) + " must divide image size " +
                      std::to_string(image_size));
  }
  if (cfg_.layers < 1 || cfg_.classes < 2) throw ConfigError("toy model needs >= 1 layer and >= 2 classes");
  grid_ = image_size / cfg_.patch;
  Rng rng(seed);
  embed = Conv2d(3, cfg_.dim, cfg_.patch, Conv2dParams{.stride = cfg_.patch});
  init_trunc_normal(embed, rng);
  Dgmn2Config lc;
  lc.dim = cfg_.dim;
  lc.heads = cfg_.heads;
  lc.K = cfg_.K;
  lc.rates = cfg_.rates;
  lc.ffn_expansion = cfg_.ffn_expansion;
  lc.relpos_extent = 2 * grid_ - 1;
  for (int l = 0; l < cfg_.layers; ++l) layers.emplace_back(lc, rng);
  norm = LayerNorm(cfg_.dim);
  head = Linear(cfg_.dim, cfg_.classes);
  init_trunc_normal(head, rng);
}

Tensor ToyModel::forward(const Tensor& images, std::vector<AttentionTrace>* traces) const {
  if (images.rank() != 4 || images.dim(1) != 3 || images.dim(2) != grid_ * cfg_.patch ||
      images.dim(3) != grid_ * cfg_.patch) {
    throw ShapeError("toy model expects [N,3," + std::to_string(grid_ * cfg_.patch) + "," +
                     std::to_string(grid_ * cfg_.patch) + "], got " + shape_str(images.shape()));
  }
  Tensor x = permute(embed.forward(images), {0, 2, 3, 1});
  for (const auto& layer : layers) {
    AttentionTrace* tr = traces ? &traces->emplace_back() : nullptr;
    x = layer.forward_tokens(x, tr);
  }
  x = norm.forward(x);
  if (cfg_.dense) return head.forward(reshape(x, {-1, cfg_.dim}));
  return head.forward(global_average_pool(permute(x, {0, 3, 1, 2})));
}

void ToyModel::collect_parameters(const std::string& prefix, NamedTensors& out) const {
  embed.collect_parameters(join_name(prefix, "embed"), out);
  for (std::size_t l = 0; l < layers.size(); ++l) layers[l].collect_parameters(join_name(prefix, "layer" + std::to_string(l)), out);
  norm.collect_parameters(join_name(prefix, "norm"), out);
  head.collect_parameters(join_name(prefix, "head"), out);
}

std::vector<int> target_labels(const Dataset& data, int image_size, int patch) {
  if (!data.dense) return data.labels;
  const i64 n = data.images.dim(0), g = image_size / patch;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n * g * g));
  for (i64 b = 0; b < n; ++b)
    for (i64 y = 0; y < g; ++y)
      for (i64 x = 0; x < g; ++x) {
        const i64 py = y * patch + patch / 2, px = x * patch + patch / 2;
        out.push_back(data.labels[static_cast<std::size_t>((b * image_size + py) * image_size + px)]);
      }
  return out;
}

namespace {

double accuracy_of(const Tensor& logits, const std::vector<int>& labels) {
  const i64 rows = logits.dim(0), c = logits.dim(1);
  auto v = logits.data();
  i64 hits = 0;
  for (i64 r = 0; r < rows; ++r) {
    i64 best = 0;
    for (i64 k = 1; k < c; ++k)
      if (v[static_cast<std::size_t>(r * c + k)] > v[static_cast<std::size_t>(r * c + best)]) best = k;
    if (best == labels[static_cast<std::size_t>(r)]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(rows);
}

}  // namespace

std::vector<StepMetrics> train(ToyModel& model, const Dataset& data, const TrainOptions& opts) {
  if (opts.steps < 0) throw ConfigError("steps must be non-negative");
  if (!(opts.lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  const int size = static_cast<int>(data.images.dim(2));
  const auto labels = target_labels(data, size, model.config().patch);
  AdamWOptions ao;
  ao.lr = opts.lr;
  ao.weight_decay = opts.weight_decay;
  AdamW optim(model.parameters(), ao);
  std::vector<StepMetrics> history;
  history.reserve(static_cast<std::size_t>(opts.steps) + 1);
  for (int step = 0;; ++step) {
    const bool last = step == opts.steps;
    Tensor logits, loss;
    {
      std::optional<NoGradGuard> guard;
      if (last) guard.emplace();
      logits = model.forward(data.images);
      loss = cross_entropy_loss(logits, labels);
    }
    const double lv = loss.item();
    if (!std::isfinite(lv)) throw TrainingError(step, "loss is not finite");
    history.push_back({step, lv, accuracy_of(logits, labels)});
    if (last || history.back().accuracy >= opts.stop_accuracy) break;
    optim.zero_grad();
    backward(loss);
    if (opts.cosine) {
      optim.options().lr = 0.5 * opts.lr * (1.0 + std::cos(M_PI * static_cast<double>(step) / opts.steps));
    }
    optim.step();
  }
  return history;
}

double mean_walk_magnitude(const ToyModel& model, const Tensor& images) {
  NoGradGuard guard;
  std::vector<AttentionTrace> traces;
  model.forward(images, &traces);
  const i64 h = model.grid(), w = model.grid();
  double total = 0.0;
  i64 count = 0;
  for (std::size_t l = 0; l < traces.size(); ++l) {
    const auto& cfg = model.layers[l].config();
    for (std::size_t q = 0; q < traces[l].resolved.size(); ++q) {
      const Tensor base = uniform_grid(h, w, cfg.rates[q], cfg.K, cfg.anchor);
      auto r = traces[l].resolved[q].data();
      auto b = base.data();
      for (std::size_t i = 0; i < r.size(); ++i) {
        total += std::abs(r[i] - b[i % b.size()]);
        ++count;
      }
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

std::string metrics_csv(const std::vector<StepMetrics>& history) {
  std::string out = "step,loss,accuracy\n";
  char buf[96];
  for (const auto& m : history) {
    std::snprintf(buf, sizeof buf, "%d,%.12e,%.6f\n", m.step, m.loss, m.accuracy);
    out += buf;
  }
  return out;
}

}  // namespace dgmn
