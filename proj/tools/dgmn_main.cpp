// dgmn: forward runs, verification suites, complexity reports, toy training
// and sampled-node export from the command line.
//
// Exit codes: 0 success, 2 configuration or usage error, 3 data or shape
// error, 4 verification failure.

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dgmn/analysis.hpp"
#include "dgmn/backbone.hpp"
#include "dgmn/config.hpp"
#include "dgmn/fault.hpp"
#include "dgmn/io.hpp"
#include "dgmn/toy.hpp"
#include "dgmn/verify.hpp"

namespace {

using namespace dgmn;
using i64 = std::int64_t;

constexpr int kOk = 0;
constexpr int kUsage = 2;
constexpr int kData = 3;
constexpr int kVerify = 4;

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path + "'");
  out << text;
  if (!out) throw IoError("failed writing '" + path + "'");
}

std::string strides_str(const std::array<int, 4>& s) {
  return std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + "," + std::to_string(s[3]);
}

Shape parse_dims(const std::string& text, const char* what) {
  Shape out;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(part, &used);
      if (used != part.size() || v < 1) throw std::invalid_argument(part);
      out.push_back(v);
    } catch (const std::exception&) {
      throw ConfigError(std::string("bad ") + what + " '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError(std::string("empty ") + what);
  return out;
}

std::vector<std::array<i64, 2>> parse_positions(const std::string& text) {
  std::vector<std::array<i64, 2>> out;
  std::string norm = text;
  std::replace(norm.begin(), norm.end(), ';', ' ');
  std::stringstream ss(norm);
  std::string item;
  while (ss >> item) {
    const auto& yx = item;
    const auto comma = yx.find(',');
    if (comma == std::string::npos) throw ConfigError("position '" + item + "' must be y,x");
    try {
      out.push_back({std::stoll(yx.substr(0, comma)), std::stoll(yx.substr(comma + 1))});
    } catch (const std::exception&) {
      throw ConfigError("position '" + item + "' must be two integers");
    }
  }
  if (out.empty()) throw ConfigError("no positions given");
  return out;
}

Backbone build_model(const ModelConfig& cfg, std::uint64_t seed) {
  Backbone model(cfg.spec(), seed);
  if (cfg.checkpoint) load_state(model, load_checkpoint(*cfg.checkpoint));
  model.set_training(false);
  return model;
}

// Reads DGMN_THREADS. The engine runs on one thread; the variable is
// validated and otherwise only caps parallelism that does not exist yet.
void check_threads_env() {
  if (const char* v = std::getenv("DGMN_THREADS")) {
    char* end = nullptr;
    const long n = std::strtol(v, &end, 10);
    if (end == v || *end != '\0' || n < 1) throw ConfigError(std::string("DGMN_THREADS must be a positive integer, got '") + v + "'");
  }
}

struct ForwardArgs {
  std::string model, input, out;
  std::uint64_t seed = 0;
  bool dense = false;
};

int cmd_forward(const ForwardArgs& a) {
  ModelConfig cfg = ModelConfig::load(a.model);
  if (a.dense) cfg.mode = BackboneMode::kDense;
  Backbone model = build_model(cfg, a.seed);
  const Tensor x = load_tensor(a.input);
  NoGradGuard guard;
  const auto feats = model.forward_features(x);
  Tensor y;
  if (cfg.mode == BackboneMode::kClassify) {
    y = model.head().forward(global_average_pool(feats.back()));
  } else {
    y = feats.back();
  }
  save_tensor(a.out, y);
  std::cout << "model    " << to_string(cfg.variant) << " (" << to_string(cfg.mode) << ")\n"
            << "input    " << shape_str(x.shape()) << "\n"
            << "strides  " << strides_str(cfg.spec().output_strides()) << "\n";
  for (std::size_t i = 0; i < feats.size(); ++i) {
    std::cout << "stage" << i + 1 << "   " << shape_str(feats[i].shape()) << "\n";
  }
  std::cout << "output   " << shape_str(y.shape()) << "\n";
  return kOk;
}

int cmd_verify(const std::string& suite, std::uint64_t seed, const std::string& report, const std::string& fault) {
  if (!fault.empty()) {
    if (fault != "bilinear-backward-sign") throw ConfigError("unknown fault '" + fault + "'");
    testing::inject_fault(testing::Fault::kBilinearBackwardSign);
  }
  const auto r = verify::run_suite(suite, seed);
  if (report.empty()) {
    std::cout << r.to_json() << "\n";
  } else {
    write_file(report, r.to_json() + "\n");
    for (const auto& c : r.checks) {
      std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << "  value=" << c.value << " threshold=" << c.threshold
                << "\n";
    }
  }
  return r.passed() ? kOk : kVerify;
}

int cmd_flops(const std::string& model_path, const std::string& hw, bool compare_dense, bool json) {
  const ModelConfig cfg = ModelConfig::load(model_path);
  const Shape dims = parse_dims(hw, "--hw");
  if (dims.size() != 2) throw ConfigError("--hw takes H,W");
  const i64 H = dims[0], W = dims[1];
  if (H % 32 != 0 || W % 32 != 0) throw ShapeError("--hw extents must be multiples of 32");
  const Backbone model(cfg.spec(), 0);
  const OpLedger ledger = backbone_ledger(model, H, W);

  // Attention cost of the first stage at (H/4, W/4) and at twice the height.
  const auto& layer = model.stages()[0].layers[0];
  const auto s1 = model.spec().output_strides()[0];
  const i64 h1 = H / s1, w1 = W / s1;
  const double a1 = static_cast<double>(attention_ledger(layer.config(), h1, w1).total_macs());
  const double a2 = static_cast<double>(attention_ledger(layer.config(), 2 * h1, w1).total_macs());
  const i64 dim = layer.config().dim;
  const int heads = layer.config().heads;
  const double d1 = static_cast<double>(dense_attention_ledger(h1, w1, dim, heads).total_macs());
  const double d2 = static_cast<double>(dense_attention_ledger(2 * h1, w1, dim, heads).total_macs());

  const i64 params = count_params(model);
  char buf[160];
  if (json) {
    std::ostringstream os;
    os << "{\n  \"params\": " << params << ",\n  \"macs\": " << ledger.total_macs()
       << ",\n  \"attention_ratio_2x\": " << a2 / a1;
    if (compare_dense) os << ",\n  \"dense_ratio_2x\": " << d2 / d1;
    os << ",\n  \"ledger\": " << ledger.to_json() << "\n}\n";
    std::cout << os.str();
    return kOk;
  }
  std::cout << ledger.to_table();
  std::snprintf(buf, sizeof buf, "params               %lld (%.2fM)\n", static_cast<long long>(params),
                static_cast<double>(params) / 1e6);
  std::cout << buf;
  std::snprintf(buf, sizeof buf, "macs                 %lld (%.3fG)\n", static_cast<long long>(ledger.total_macs()),
                static_cast<double>(ledger.total_macs()) / 1e9);
  std::cout << buf;
  std::snprintf(buf, sizeof buf, "attention_ratio_2x   %.6f  (stage-1 attention, %lldx%lld -> %lldx%lld)\n", a2 / a1,
                static_cast<long long>(h1), static_cast<long long>(w1), static_cast<long long>(2 * h1),
                static_cast<long long>(w1));
  std::cout << buf;
  if (compare_dense) {
    std::snprintf(buf, sizeof buf, "dense_ratio_2x       %.6f\n", d2 / d1);
    std::cout << buf;
  }
  return kOk;
}

struct TrainArgs {
  std::string task = "classify_blobs";
  int steps = 0;
  std::uint64_t seed = 0;
  double lr = 0.0;
  int rate = 0;
  std::string metrics, checkpoint;
};

int cmd_train_toy(const TrainArgs& a) {
  SyntheticTask task;
  task.kind = parse_task(a.task);
  task.seed = a.seed;
  ToyModelConfig mc;
  if (task.kind == TaskKind::kSegmentStripes) {
    mc.dense = true;
    mc.rates = {1};
  }
  if (a.rate > 0) mc.rates = {a.rate};
  TrainOptions opts;
  opts.steps = a.steps;
  if (a.lr > 0.0) opts.lr = a.lr;
  const Dataset data = make_dataset(task);
  ToyModel model(mc, task.size, a.seed);
  const auto history = train(model, data, opts);
  const std::string csv = metrics_csv(history);
  if (a.metrics.empty()) {
    std::cout << csv;
  } else {
    write_file(a.metrics, csv);
    const auto& last = history.back();
    std::printf("steps %d  loss %.6f  accuracy %.4f\n", last.step, last.loss, last.accuracy);
  }
  if (!a.checkpoint.empty()) save_checkpoint(a.checkpoint, model);
  return kOk;
}

struct VisualizeArgs {
  std::string model, input, positions, svg, json;
  std::uint64_t seed = 0;
};

int cmd_visualize(const VisualizeArgs& a) {
  const ModelConfig cfg = ModelConfig::load(a.model);
  const auto positions = parse_positions(a.positions);
  Backbone model = build_model(cfg, a.seed);
  const Tensor x = load_tensor(a.input);
  const NodeExport ex = export_sampled_nodes(model, x, positions);
  write_file(a.json, ex.json + "\n");
  write_file(a.svg, ex.svg);
  std::cout << "exported " << ex.nodes.size() << " sampled nodes for " << positions.size() << " position(s)\n";
  return kOk;
}

int cmd_random_input(const std::string& shape, std::uint64_t seed, const std::string& out) {
  Rng rng(seed);
  save_tensor(out, rng.normal_tensor(parse_dims(shape, "--shape"), 1.0));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DGMN and DGMN2 backbones: forward, verify, flops, train-toy, visualize"};
  app.require_subcommand(1);

  ForwardArgs fa;
  auto* fwd = app.add_subcommand("forward", "Run a backbone on an input tensor");
  fwd->add_option("--model", fa.model, "Model config JSON")->required();
  fwd->add_option("--input", fa.input, "Input tensor (.dgt)")->required();
  fwd->add_option("--out", fa.out, "Output tensor (.dgt)")->required();
  fwd->add_option("--seed", fa.seed, "Weight initialization seed")->required();
  fwd->add_flag("--dense", fa.dense, "Dense-prediction strides (4,8,8,8); writes stage-4 features");

  std::string suite, report, fault;
  std::uint64_t verify_seed = 0;
  auto* ver = app.add_subcommand("verify", "Run verification suites");
  ver->add_option("--suite", suite, "oracles | grads | invariants | all")->required();
  ver->add_option("--seed", verify_seed, "Seed for random configurations")->required();
  ver->add_option("--report", report, "Write the JSON report here instead of stdout");
  ver->add_option("--inject-fault", fault)->group("");

  std::string flops_model, hw;
  bool compare_dense = false, flops_json = false;
  auto* flops = app.add_subcommand("flops", "Parameter and multiply-accumulate ledger");
  flops->add_option("--model", flops_model, "Model config JSON")->required();
  flops->add_option("--hw", hw, "Input height,width")->required();
  flops->add_flag("--compare-dense", compare_dense, "Also report the dense attention ratio");
  flops->add_flag("--json", flops_json, "Machine-readable report");

  TrainArgs ta;
  auto* toy = app.add_subcommand("train-toy", "Overfit a synthetic task");
  toy->add_option("--task", ta.task, "classify_blobs | segment_stripes");
  toy->add_option("--steps", ta.steps, "Optimizer steps")->required()->check(CLI::NonNegativeNumber);
  toy->add_option("--seed", ta.seed, "Data and initialization seed")->required();
  toy->add_option("--lr", ta.lr, "Learning rate (default: task default)")->check(CLI::PositiveNumber);
  toy->add_option("--rate", ta.rate, "Single sampling rate for the DGMN2 layers")->check(CLI::PositiveNumber);
  toy->add_option("--metrics", ta.metrics, "Write step,loss,accuracy CSV here instead of stdout");
  toy->add_option("--checkpoint", ta.checkpoint, "Save trained weights");

  VisualizeArgs va;
  auto* vis = app.add_subcommand("visualize", "Export sampled nodes as JSON and SVG");
  vis->add_option("--model", va.model, "Model config JSON")->required();
  vis->add_option("--input", va.input, "Input tensor [1,3,H,W] (.dgt)")->required();
  vis->add_option("--positions", va.positions, "Pixel positions 'y,x;y,x' (or space separated)")->required();
  vis->add_option("--out-svg", va.svg, "SVG output")->required();
  vis->add_option("--out-json", va.json, "JSON output")->required();
  vis->add_option("--seed", va.seed, "Weight initialization seed")->required();

  std::string shape, rand_out;
  std::uint64_t rand_seed = 0;
  auto* rnd = app.add_subcommand("random-input", "Write a standard-normal tensor");
  rnd->add_option("--shape", shape, "Comma-separated extents")->required();
  rnd->add_option("--seed", rand_seed, "Seed")->required();
  rnd->add_option("--out", rand_out, "Output tensor (.dgt)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    check_threads_env();
    if (*fwd) return cmd_forward(fa);
    if (*ver) return cmd_verify(suite, verify_seed, report, fault);
    if (*flops) return cmd_flops(flops_model, hw, compare_dense, flops_json);
    if (*toy) return cmd_train_toy(ta);
    if (*vis) return cmd_visualize(va);
    if (*rnd) return cmd_random_input(shape, rand_seed, rand_out);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return kData;
  } catch (const IoError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
