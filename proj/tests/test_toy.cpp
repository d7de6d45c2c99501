#include <array>
#include <cmath>

#include "doctest.h"
#include "dgmn/toy.hpp"

using namespace dgmn;

TEST_CASE("blob labels are balanced over 512 samples") {
  SyntheticTask task;
  task.samples = 512;
  task.seed = 3;
  const Dataset d = make_dataset(task);
  std::array<int, 4> counts{};
  for (int l : d.labels) ++counts.at(static_cast<std::size_t>(l));
  for (int c : counts) CHECK(std::abs(c - 128) <= 12);
}

TEST_CASE("datasets are a pure function of the task") {
  SyntheticTask task;
  task.seed = 9;
  const Dataset a = make_dataset(task), b = make_dataset(task);
  CHECK(a.labels == b.labels);
  CHECK(std::equal(a.images.data().begin(), a.images.data().end(), b.images.data().begin()));
  task.seed = 10;
  CHECK_FALSE(std::equal(a.images.data().begin(), a.images.data().end(), make_dataset(task).images.data().begin()));
}

TEST_CASE("blob pair offsets encode the label") {
  SyntheticTask task;
  task.samples = 8;
  const Dataset d = make_dataset(task);
  const int S = task.size;
  for (int n = 0; n < task.samples; ++n) {
    std::array<std::array<int, 2>, 2> peak{};
    for (int ch = 0; ch < 2; ++ch) {
      double best = -1.0;
      for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
          const double v = d.images.data()[static_cast<std::size_t>(((n * 3 + ch) * S + y) * S + x)];
          if (v > best) {
            best = v;
            peak[ch] = {y, x};
          }
        }
    }
    const int dy = peak[1][0] - peak[0][0], dx = peak[1][1] - peak[0][1];
    CHECK(std::abs(dy) == task.offset * task.cell);
    CHECK(std::abs(dx) == task.offset * task.cell);
    CHECK(d.labels[n] == (dy > 0 ? 2 : 0) + (dx > 0 ? 1 : 0));
  }
}

TEST_CASE("stripe task labels every pixel") {
  SyntheticTask task;
  task.kind = TaskKind::kSegmentStripes;
  task.samples = 3;
  const Dataset d = make_dataset(task);
  CHECK(d.dense);
  CHECK(d.labels.size() == static_cast<std::size_t>(3 * 32 * 32));
  for (int l : d.labels) CHECK((l >= 0 && l < 4));
  CHECK(target_labels(d, 32, 2).size() == static_cast<std::size_t>(3 * 16 * 16));
}

TEST_CASE("task parsing") {
  CHECK(parse_task("classify_blobs") == TaskKind::kClassifyBlobs);
  CHECK(to_string(TaskKind::kSegmentStripes) == "segment_stripes");
  CHECK_THROWS_AS(parse_task("blobs"), ConfigError);
  SyntheticTask tight;
  tight.margin = 5;
  CHECK_THROWS_AS(make_dataset(tight), ConfigError);
}

TEST_CASE("zero learning rate keeps the loss constant") {
  SyntheticTask task;
  task.samples = 4;
  ToyModel m(ToyModelConfig{}, task.size, 1);
  TrainOptions opts;
  opts.steps = 5;
  opts.lr = 0.0;
  const auto h = train(m, make_dataset(task), opts);
  REQUIRE(h.size() == 6);
  for (const auto& r : h) CHECK(r.loss == h.front().loss);
}

TEST_CASE("a single sample is memorized within 500 steps") {
  SyntheticTask task;
  task.samples = 1;
  ToyModel m(ToyModelConfig{}, task.size, 2);
  TrainOptions opts;
  opts.steps = 500;
  opts.lr = 1e-2;
  const auto h = train(m, make_dataset(task), opts);
  bool reached = false;
  for (const auto& r : h) reached = reached || r.loss < 1e-3;
  CHECK(reached);
}

TEST_CASE("training is deterministic and moves the walks") {
  SyntheticTask task;
  task.samples = 4;
  const Dataset d = make_dataset(task);
  TrainOptions opts;
  opts.steps = 30;
  opts.lr = 1e-2;
  ToyModel a(ToyModelConfig{}, task.size, 4), b(ToyModelConfig{}, task.size, 4);
  CHECK(mean_walk_magnitude(a, d.images) == 0.0);
  const auto ha = train(a, d, opts), hb = train(b, d, opts);
  CHECK(metrics_csv(ha) == metrics_csv(hb));
  CHECK(mean_walk_magnitude(a, d.images) > 0.0);
  CHECK(metrics_csv(ha).rfind("step,loss,accuracy\n0,", 0) == 0);
}

TEST_CASE("a diverging run reports the step") {
  SyntheticTask task;
  task.samples = 4;
  ToyModel m(ToyModelConfig{}, task.size, 5);
  TrainOptions opts;
  opts.steps = 20;
  opts.lr = 1e200;
  CHECK_THROWS_AS(train(m, make_dataset(task), opts), TrainingError);
}
