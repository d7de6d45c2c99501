#include "dgmn/analysis.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>

#include "json.hpp"

namespace dgmn {

using i64 = std::int64_t;
using nlohmann::ordered_json;

void OpLedger::add(std::string name, i64 params, i64 macs) { entries.push_back({std::move(name), params, macs}); }

void OpLedger::append(const OpLedger& other) { entries.insert(entries.end(), other.entries.begin(), other.entries.end()); }

i64 OpLedger::total_params() const {
  i64 n = 0;
  for (const auto& e : entries) n += e.params;
  return n;
}

i64 OpLedger::total_macs() const {
  i64 n = 0;
  for (const auto& e : entries) n += e.macs;
  return n;
}

std::string OpLedger::to_json() const {
  ordered_json rows = ordered_json::array();
  for (const auto& e : entries) rows.push_back({{"name", e.name}, {"params", e.params}, {"macs", e.macs}});
  ordered_json j;
  j["entries"] = rows;
  j["total_params"] = total_params();
  j["total_macs"] = total_macs();
  return j.dump(2);
}

std::string OpLedger::to_table() const {
  std::size_t width = 5;
  for (const auto& e : entries) width = std::max(width, e.name.size());
  std::ostringstream os;
  char buf[64];
  auto row = [&](const std::string& name, i64 params, i64 macs) {
    os << name << std::string(width - name.size() + 2, ' ');
    std::snprintf(buf, sizeof buf, "%14lld  %16lld\n", static_cast<long long>(params), static_cast<long long>(macs));
    os << buf;
  };
  os << "layer" << std::string(width - 3, ' ');
  std::snprintf(buf, sizeof buf, "%14s  %16s\n", "params", "macs");
  os << buf;
  for (const auto& e : entries) row(e.name, e.params, e.macs);
  row("total", total_params(), total_macs());
  return os.str();
}

i64 conv2d_macs(i64 n, i64 cin, i64 cout, i64 ho, i64 wo, i64 kh, i64 kw, i64 groups) {
  return n * cout * ho * wo * (cin / groups) * kh * kw;
}

i64 matmul_macs(i64 m, i64 k, i64 n) { return m * k * n; }

OpLedger attention_ledger(const Dgmn2Config& cfg, i64 H, i64 W, const std::string& prefix) {
  const i64 d = cfg.dim, hw = H * W, K = cfg.K, heads = cfg.heads;
  const i64 M = K * static_cast<i64>(cfg.rates.size());
  const i64 proj_params = d * d + d;
  OpLedger l;
  l.add(prefix + ".q", proj_params, hw * d * d);
  l.add(prefix + ".k", proj_params, hw * d * d);
  l.add(prefix + ".v", proj_params, hw * d * d);
  if (cfg.walks) {
    for (std::size_t q = 0; q < cfg.rates.size(); ++q) {
      l.add(prefix + ".walk" + std::to_string(q), 2 * K * d * 9 + 2 * K, conv2d_macs(1, d, 2 * K, H, W, 3, 3));
    }
  }
  l.add(prefix + ".sample", 0, hw * M * 2 * d * 4);
  l.add(prefix + ".relpos", 2 * heads * cfg.relpos_extent, hw * M * heads * 4);
  l.add(prefix + ".qk", 0, hw * M * d);
  l.add(prefix + ".av", 0, hw * M * d);
  l.add(prefix + ".proj", proj_params, hw * d * d);
  return l;
}

OpLedger dense_attention_ledger(i64 H, i64 W, i64 dim, int heads, const std::string& prefix) {
  const i64 p = H * W, hd = dim / heads;
  OpLedger l;
  l.add(prefix + ".qk", 0, heads * p * p * hd);
  l.add(prefix + ".av", 0, heads * p * p * hd);
  return l;
}

namespace {

i64 conv_out(i64 extent, const Conv2dParams& p, i64 k) {
  return (extent + 2 * p.padding - p.dilation * (k - 1) - 1) / p.stride + 1;
}

void add_unit(OpLedger& l, const std::string& name, const ConvBnRelu& u, i64& h, i64& w) {
  const i64 k = u.conv.weight.dim(2);
  h = conv_out(h, u.conv.params, k);
  w = conv_out(w, u.conv.params, k);
  const i64 params = u.conv.parameter_count() + u.bn.parameter_count();
  l.add(name, params, conv2d_macs(1, u.conv.weight.dim(1) * u.conv.params.groups, u.conv.weight.dim(0), h, w, k, k,
                                  u.conv.params.groups));
}

}  // namespace

OpLedger backbone_ledger(const Backbone& model, i64 H, i64 W) {
  OpLedger l;
  i64 h = H, w = W;
  const auto& stages = model.stages();
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const std::string sp = "stage" + std::to_string(i + 1);
    const auto& st = stages[i];
    if (const auto* stem = dynamic_cast<const PatchEmbedStem*>(st.embed.get())) {
      for (std::size_t u = 0; u < stem->units.size(); ++u) add_unit(l, sp + ".embed." + std::to_string(u), stem->units[u], h, w);
    } else {
      add_unit(l, sp + ".embed", static_cast<const PatchEmbedDown*>(st.embed.get())->unit, h, w);
    }
    for (std::size_t li = 0; li < st.layers.size(); ++li) {
      const auto& layer = st.layers[li];
      const std::string lp = sp + ".layer" + std::to_string(li);
      const i64 d = layer.config().dim;
      const i64 hidden = layer.fc1.weight.dim(0);
      l.add(lp + ".norm1", layer.norm1.parameter_count(), 0);
      const OpLedger a = attention_ledger(layer.config(), h, w);
      l.add(lp + ".attn", a.total_params(), a.total_macs());
      l.add(lp + ".alpha", layer.alpha.numel(), 0);
      l.add(lp + ".norm2", layer.norm2.parameter_count(), 0);
      l.add(lp + ".fc1", layer.fc1.parameter_count(), h * w * d * hidden);
      l.add(lp + ".fc2", layer.fc2.parameter_count(), h * w * hidden * d);
    }
    l.add(sp + ".norm", st.norm.parameter_count(), 0);
  }
  const auto& head = model.head();
  l.add("head", head.parameter_count(), head.weight.dim(0) * head.weight.dim(1));
  return l;
}

i64 count_params(const Module& model) { return model.parameter_count(); }

i64 count_flops(const Backbone& model, i64 H, i64 W) { return backbone_ledger(model, H, W).total_macs(); }

i64 count_flops(const Dgmn2Attention& attn, i64 H, i64 W) { return attention_ledger(attn.config(), H, W).total_macs(); }

std::vector<SampledNode> sampled_nodes(const AttentionTrace& trace, const Dgmn2Config& cfg, i64 H, i64 W,
                                       const std::vector<std::array<i64, 2>>& positions, int stage, int layer) {
  const i64 K = cfg.K, heads = cfg.heads, S = static_cast<i64>(cfg.rates.size()), M = K * S;
  if (static_cast<i64>(trace.resolved.size()) != S || trace.attention.shape() != Shape{trace.attention.dim(0), heads, H * W, M}) {
    throw ShapeError("attention trace does not match the layer configuration");
  }
  std::vector<SampledNode> out;
  for (const auto& [y, x] : positions) {
    if (y < 0 || y >= H || x < 0 || x >= W) {
      throw ConfigError("position (" + std::to_string(y) + "," + std::to_string(x) + ") outside the " +
                        std::to_string(H) + "x" + std::to_string(W) + " feature map");
    }
    for (i64 q = 0; q < S; ++q) {
      const auto coords = trace.resolved[static_cast<std::size_t>(q)].data();
      for (i64 j = 0; j < K; ++j) {
        SampledNode node;
        node.stage = stage;
        node.layer = layer;
        node.y = y;
        node.x = x;
        node.rate = cfg.rates[static_cast<std::size_t>(q)];
        node.node_index = static_cast<int>(q * K + j);
        const auto c = static_cast<std::size_t>(((y * W + x) * K + j) * 2);
        node.sampled_y = coords[c];
        node.sampled_x = coords[c + 1];
        double wsum = 0.0;
        for (i64 hd = 0; hd < heads; ++hd) {
          wsum += trace.attention.data()[static_cast<std::size_t>((hd * H * W + y * W + x) * M + q * K + j)];
        }
        node.weight = wsum / static_cast<double>(heads);
        out.push_back(node);
      }
    }
  }
  return out;
}

std::string nodes_to_json(const std::vector<SampledNode>& nodes) {
  ordered_json arr = ordered_json::array();
  for (const auto& n : nodes) {
    arr.push_back({{"stage", n.stage},
                   {"layer", n.layer},
                   {"y", n.y},
                   {"x", n.x},
                   {"rate", n.rate},
                   {"node_index", n.node_index},
                   {"sampled_y", n.sampled_y},
                   {"sampled_x", n.sampled_x},
                   {"weight", n.weight}});
  }
  ordered_json j;
  j["nodes"] = arr;
  return j.dump(2);
}

std::string nodes_to_svg(const std::vector<SampledNode>& nodes, const std::vector<std::array<i64, 2>>& grids) {
  constexpr double kPanel = 240.0, kGap = 20.0;
  std::map<std::pair<int, int>, std::vector<const SampledNode*>> panels;
  for (const auto& n : nodes) panels[{n.stage, n.layer}].push_back(&n);
  const double width = kGap + static_cast<double>(panels.size()) * (kPanel + kGap);
  std::ostringstream os;
  os.precision(6);
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
     << "<svg xmlns=\"http://www.w3.org/2000/svg\" version=\"1.1\" width=\"" << width << "\" height=\""
     << kPanel + 2 * kGap + 16 << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::size_t p = 0;
  for (const auto& [key, list] : panels) {
    const auto grid = p < grids.size() ? grids[p] : std::array<i64, 2>{1, 1};
    const double cell = kPanel / static_cast<double>(std::max(grid[0], grid[1]));
    const double ox = kGap + static_cast<double>(p) * (kPanel + kGap), oy = kGap + 16;
    os << "<g>\n<text x=\"" << ox << "\" y=\"" << kGap << "\" font-family=\"monospace\" font-size=\"12\">stage "
       << key.first << " layer " << key.second << "</text>\n";
    os << "<rect x=\"" << ox << "\" y=\"" << oy << "\" width=\"" << cell * static_cast<double>(grid[1]) << "\" height=\""
       << cell * static_cast<double>(grid[0]) << "\" fill=\"none\" stroke=\"#999\"/>\n";
    double wmax = 0.0;
    for (const auto* n : list) wmax = std::max(wmax, n->weight);
    for (const auto* n : list) {
      const double shade = wmax > 0.0 ? n->weight / wmax : 0.0;
      os << "<circle cx=\"" << ox + (n->sampled_x + 0.5) * cell << "\" cy=\"" << oy + (n->sampled_y + 0.5) * cell
         << "\" r=\"" << std::max(1.5, cell * 0.3) << "\" fill=\"#1f5fbf\" fill-opacity=\"" << 0.15 + 0.85 * shade
         << "\"/>\n";
    }
    for (const auto* n : list) {
      if (n->node_index != 0) continue;
      os << "<rect x=\"" << ox + static_cast<double>(n->x) * cell << "\" y=\"" << oy + static_cast<double>(n->y) * cell
         << "\" width=\"" << cell << "\" height=\"" << cell << "\" fill=\"none\" stroke=\"#d62728\" stroke-width=\"2\"/>\n";
    }
    os << "</g>\n";
    ++p;
  }
  os << "</svg>\n";
  return os.str();
}

NodeExport export_sampled_nodes(Backbone& model, const Tensor& image, const std::vector<std::array<i64, 2>>& positions) {
  if (image.rank() != 4 || image.dim(0) != 1) throw ShapeError("node export expects a single [1,3,H,W] image");
  const i64 H = image.dim(2), W = image.dim(3);
  for (const auto& [y, x] : positions) {
    if (y < 0 || y >= H || x < 0 || x >= W) {
      throw ConfigError("position (" + std::to_string(y) + "," + std::to_string(x) + ") outside the " +
                        std::to_string(H) + "x" + std::to_string(W) + " input");
    }
  }
  model.set_training(false);
  NoGradGuard guard;
  std::vector<AttentionTrace> traces;
  const auto feats = model.forward_features(image, &traces);
  const auto strides = model.spec().output_strides();
  NodeExport ex;
  std::vector<std::array<i64, 2>> grids;
  std::size_t t = 0;
  for (std::size_t s = 0; s < model.stages().size(); ++s) {
    const auto& stage = model.stages()[s];
    const i64 h = feats[s].dim(2), w = feats[s].dim(3);
    std::vector<std::array<i64, 2>> local;
    for (const auto& [y, x] : positions) local.push_back({y / strides[s], x / strides[s]});
    auto nodes = sampled_nodes(traces[t], stage.layers[0].config(), h, w, local, static_cast<int>(s + 1), 0);
    ex.nodes.insert(ex.nodes.end(), nodes.begin(), nodes.end());
    grids.push_back({h, w});
    t += stage.layers.size();
  }
  ex.json = nodes_to_json(ex.nodes);
  ex.svg = nodes_to_svg(ex.nodes, grids);
  return ex;
}

}  // namespace dgmn
