#include <cstdio>
#include <filesystem>
#include <sstream>

#include "doctest.h"
#include "dgmn/config.hpp"
#include "dgmn/dgmn2.hpp"
#include "dgmn/io.hpp"

using namespace dgmn;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("tensor stream round trip") {
  Rng rng(1);
  const Tensor t = rng.normal_tensor({2, 3, 1}, 1.0);
  std::stringstream ss;
  write_tensor(ss, t);
  const Tensor u = read_tensor(ss);
  CHECK(u.shape() == t.shape());
  CHECK(std::equal(t.data().begin(), t.data().end(), u.data().begin()));
  std::stringstream junk("DGT2 nonsense");
  CHECK_THROWS_AS(read_tensor(junk), IoError);
}

TEST_CASE("checkpoint round trip restores every parameter") {
  Rng rng(2);
  Dgmn2Config cfg;
  cfg.dim = 8;
  cfg.heads = 2;
  cfg.rates = {1, 2};
  Dgmn2Layer a(cfg, rng), b(cfg, rng);
  for (double& v : a.alpha.data()) v = rng.normal();
  const std::string path = temp_path("dgmn_test_ckpt.dgck");
  save_checkpoint(path, a);
  CHECK(checkpoint_manifest(path).find("attn.rel_height") != std::string::npos);
  load_state(b, load_checkpoint(path));
  const auto pa = a.named_parameters(), pb = b.named_parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].name == pb[i].name);
    CHECK(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()));
  }
  Dgmn2Config other = cfg;
  other.dim = 4;
  Dgmn2Layer c(other, rng);
  CHECK_THROWS_AS(load_state(c, load_checkpoint(path)), ShapeError);
  std::remove(path.c_str());
}

TEST_CASE("model config round trip") {
  const ModelConfig c = ModelConfig::parse(R"({"variant": "small", "mode": "dense", "rates": [1, 2], "K": 9})");
  CHECK(c.variant == Variant::kSmall);
  CHECK(c.mode == BackboneMode::kDense);
  CHECK(ModelConfig::parse(c.dump()) == c);
  CHECK(ModelConfig::parse(c.dump()).dump() == c.dump());
}

TEST_CASE("model config is strict") {
  CHECK_THROWS_AS(ModelConfig::parse(R"({"variant": "tiny", "depth": 3})"), ConfigError);
  CHECK_THROWS_AS(ModelConfig::parse(R"({"mode": "dense"})"), ConfigError);
  CHECK_THROWS_AS(ModelConfig::parse(R"({"variant": "huge"})"), ConfigError);
  CHECK_THROWS_AS(ModelConfig::parse(R"({"variant": "tiny", "K": 8})"), ConfigError);
  CHECK_THROWS_AS(ModelConfig::parse(R"({"variant": "tiny", "rates": "1"})"), ConfigError);
  CHECK_THROWS_AS(ModelConfig::parse("{"), ConfigError);
  CHECK_THROWS_AS(ModelConfig::load("/nonexistent/model.json"), ConfigError);
}
