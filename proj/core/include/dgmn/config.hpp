#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dgmn/backbone.hpp"

namespace dgmn {

/// Model description accepted by the command-line tools.
///
///   {"variant": "tiny", "mode": "classify", "num_classes": 1000,
///    "input_size": 224, "K": 9, "rates": [1], "checkpoint": "w.dgck"}
///
/// Only "variant" is required. Unknown keys are rejected.
struct ModelConfig {
  Variant variant = Variant::kTiny;
  BackboneMode mode = BackboneMode::kClassify;
  int num_classes = 1000;
  int input_size = 224;
  int K = 9;
  std::vector<int> rates = {1};
  std::optional<std::string> checkpoint;

  static ModelConfig parse(const std::string& json_text);
  static ModelConfig load(const std::string& path);
  std::string dump() const;  // canonical JSON; parse(dump()) == *this

  BackboneSpec spec() const;

  bool operator==(const ModelConfig&) const = default;
};

}  // namespace dgmn
