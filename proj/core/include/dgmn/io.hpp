#pragma once

#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "dgmn/nn.hpp"
#include "dgmn/tensor.hpp"

namespace dgmn {

// Binary tensor file:
//   "DGT1" | u32 rank | u32 x rank dims | f64 payload, all little-endian.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);
std::vector<char> encode_tensor(const Tensor& t);

// Checkpoint container:
//   "DGCK" | u32 manifest bytes | JSON manifest | concatenated DGT1 records.
// The manifest lists {name, kind, shape, dtype, offset, bytes} per record;
// offsets are relative to the first byte after the manifest.
struct Checkpoint {
  std::map<std::string, Tensor> parameters;
  std::map<std::string, Tensor> buffers;
};

void save_checkpoint(const std::string& path, const Module& module);
Checkpoint load_checkpoint(const std::string& path);
std::string checkpoint_manifest(const std::string& path);

/// Copies every parameter and buffer of `module` from `ckpt` by name.
/// Missing names or mismatched shapes raise ShapeError.
void load_state(Module& module, const Checkpoint& ckpt);

}  // namespace dgmn
