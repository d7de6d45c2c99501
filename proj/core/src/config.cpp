#include "dgmn/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace dgmn {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

template <typename T>
T field(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("model config key '") + key + "': " + e.what());
  }
}

}  // namespace

ModelConfig ModelConfig::parse(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("model config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("model config must be a JSON object");
  static const std::set<std::string> known{"variant", "mode", "num_classes", "input_size", "K", "rates", "checkpoint"};
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown model config key '" + key + "'");
  }
  if (!j.contains("variant")) throw ConfigError("model config needs a 'variant'");
  ModelConfig c;
  c.variant = parse_variant(field<std::string>(j, "variant"));
  if (j.contains("mode")) c.mode = parse_mode(field<std::string>(j, "mode"));
  if (j.contains("num_classes")) c.num_classes = field<int>(j, "num_classes");
  if (j.contains("input_size")) c.input_size = field<int>(j, "input_size");
  if (j.contains("K")) c.K = field<int>(j, "K");
  if (j.contains("rates")) c.rates = field<std::vector<int>>(j, "rates");
  if (j.contains("checkpoint")) c.checkpoint = field<std::string>(j, "checkpoint");
  c.spec();  // validates ranges
  Dgmn2Config probe;
  probe.K = c.K;
  probe.rates = c.rates;
  probe.validate();
  return c;
}

ModelConfig ModelConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string ModelConfig::dump() const {
  ordered_json j;
  j["variant"] = to_string(variant);
  j["mode"] = to_string(mode);
  j["num_classes"] = num_classes;
  j["input_size"] = input_size;
  j["K"] = K;
  j["rates"] = rates;
  if (checkpoint) j["checkpoint"] = *checkpoint;
  return j.dump(2);
}

BackboneSpec ModelConfig::spec() const {
  BackboneSpec s = BackboneSpec::make(variant, mode, num_classes, input_size);
  s.K = K;
  s.rates = rates;
  return s;
}

}  // namespace dgmn
