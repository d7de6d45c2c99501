#include "dgmn/io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace dgmn {

namespace {

void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                     static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  os.write(b, 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("truncated stream reading u32");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void put_f64(std::ostream& os, double d) {
  const auto v = std::bit_cast<std::uint64_t>(d);
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}

}  // namespace

void write_tensor(std::ostream& os, const Tensor& t) {
  os.write("DGT1", 4);
  put_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(os, static_cast<std::uint32_t>(d));
  for (double v : t.data()) put_f64(os, v);
}

Tensor read_tensor(std::istream& is) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "DGT1", 4) != 0) throw IoError("bad tensor magic (expected DGT1)");
  const auto rank = get_u32(is);
  if (rank > 16) throw IoError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& d : shape) d = get_u32(is);
  const auto n = static_cast<std::size_t>(numel_of(shape));
  std::vector<unsigned char> raw(n * 8);
  if (n && !is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw IoError("truncated tensor payload for shape " + shape_str(shape));
  }
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint64_t v = 0;
    for (int k = 0; k < 8; ++k) v |= static_cast<std::uint64_t>(raw[i * 8 + static_cast<std::size_t>(k)]) << (8 * k);
    values[i] = std::bit_cast<double>(v);
  }
  return Tensor(std::move(shape), std::move(values));
}

std::vector<char> encode_tensor(const Tensor& t) {
  std::ostringstream os(std::ios::binary);
  write_tensor(os, t);
  const auto s = os.str();
  return {s.begin(), s.end()};
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_tensor(os, t);
  if (!os) throw IoError("write failed for " + path);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_tensor(is);
}

void save_checkpoint(const std::string& path, const Module& module) {
  nlohmann::json entries = nlohmann::json::array();
  std::string payload;
  auto add = [&](const NamedTensors& list, const char* kind) {
    for (const auto& nt : list) {
      const auto bytes = encode_tensor(nt.tensor);
      entries.push_back({{"name", nt.name},
                         {"kind", kind},
                         {"shape", nt.tensor.shape()},
                         {"dtype", "f64"},
                         {"offset", payload.size()},
                         {"bytes", bytes.size()}});
      payload.append(bytes.begin(), bytes.end());
    }
  };
  add(module.named_parameters(), "parameter");
  add(module.named_buffers(), "buffer");
  const nlohmann::json manifest = {{"format", "dgmn-checkpoint"}, {"version", 1}, {"entries", entries}};
  const std::string text = manifest.dump();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write("DGCK", 4);
  put_u32(os, static_cast<std::uint32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  if (!os) throw IoError("write failed for " + path);
}

namespace {

nlohmann::json read_manifest(std::istream& is, const std::string& path) {
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "DGCK", 4) != 0) throw IoError(path + ": not a checkpoint (magic)");
  const auto len = get_u32(is);
  std::string text(len, '\0');
  if (!is.read(text.data(), len)) throw IoError(path + ": truncated manifest");
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw IoError(path + ": bad manifest: " + e.what());
  }
}

}  // namespace

std::string checkpoint_manifest(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_manifest(is, path).dump(2);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  const auto manifest = read_manifest(is, path);
  const auto base = is.tellg();
  Checkpoint ck;
  for (const auto& e : manifest.at("entries")) {
    is.seekg(base + static_cast<std::streamoff>(e.at("offset").get<std::int64_t>()));
    Tensor t = read_tensor(is);
    if (t.shape() != e.at("shape").get<Shape>()) throw IoError(path + ": shape mismatch for " + e.at("name").get<std::string>());
    auto& dst = e.at("kind") == "buffer" ? ck.buffers : ck.parameters;
    dst[e.at("name").get<std::string>()] = t;
  }
  return ck;
}

void load_state(Module& module, const Checkpoint& ckpt) {
  auto copy = [](const NamedTensors& targets, const std::map<std::string, Tensor>& src) {
    for (const auto& nt : targets) {
      auto it = src.find(nt.name);
      if (it == src.end()) throw ShapeError("checkpoint is missing '" + nt.name + "'");
      if (it->second.shape() != nt.tensor.shape()) {
        throw ShapeError("checkpoint '" + nt.name + "' has shape " + shape_str(it->second.shape()) + ", model expects " +
                         shape_str(nt.tensor.shape()));
      }
      Tensor dst = nt.tensor;
      std::copy(it->second.data().begin(), it->second.data().end(), dst.data().begin());
    }
  };
  copy(module.named_parameters(), ckpt.parameters);
  copy(module.named_buffers(), ckpt.buffers);
}

}  // namespace dgmn
