#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "phenotag/config.hpp"
#include "phenotag/errors.hpp"
#include "phenotag/fixture.hpp"

using namespace phenotag;

namespace fs = std::filesystem;

TEST_CASE("run config round trips through JSON") {
  const auto cfg = fixture_run_config(7);
  const Json j = cfg;
  const auto back = j.get<RunConfig>();
  CHECK(Json(back).dump() == j.dump());
  CHECK(config_hash(back) == config_hash(cfg));
  CHECK(config_hash(cfg).size() == 64);
}

TEST_CASE("config hash tracks content") {
  auto a = fixture_run_config(7);
  auto b = a;
  b.pretrain.lr *= 2;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b.seed = 8;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("missing keys keep defaults") {
  const auto cfg = Json::parse(R"({"kg_train": {"steps": 3}})").get<RunConfig>();
  CHECK(cfg.kg_train.steps == 3);
  CHECK(cfg.kg_train.negatives == KgTrainConfig{}.negatives);
  CHECK(cfg.root_id == "HP:0000118");
  CHECK_FALSE(cfg.seed);
}

TEST_CASE("unknown or mistyped keys are rejected") {
  CHECK_THROWS_AS(Json::parse(R"({"kg_trian": {}})").get<RunConfig>(), ConfigError);
  CHECK_THROWS_AS(Json::parse(R"({"pretrain": {"stpes": 1}})").get<RunConfig>(), ConfigError);
  CHECK_THROWS_AS(Json::parse(R"({"paths": {"ontology": 3}})").get<RunConfig>(), ConfigError);
  CHECK_THROWS_AS(Json::parse(R"({"inference": {"tau_p": "high"}})").get<RunConfig>(), ConfigError);
}

TEST_CASE("seed propagation") {
  RunConfig cfg;
  CHECK_THROWS_AS(cfg.propagate_seed(), ConfigError);
  cfg.seed = 42;
  cfg.propagate_seed();
  CHECK(cfg.kg_train.seed == 42);
  CHECK(cfg.pretrain.seed == 42);
  CHECK(cfg.finetune.seed == 42);
}

TEST_CASE("loading from disk") {
  const auto dir = fs::temp_directory_path() / "phenotag_config_test";
  fs::create_directories(dir);
  std::ofstream(dir / "bad.json") << "{ not json";
  CHECK_THROWS_AS(load_run_config(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "absent.json"), ConfigError);
  std::ofstream(dir / "ok.json") << Json(fixture_run_config(3)).dump(2);
  CHECK(load_run_config(dir / "ok.json").seed == 3u);
  CHECK(load_run_config(fs::path(PHENOTAG_FIXTURE_DIR) / "config.json").kg_model.dim == 32);
  fs::remove_all(dir);
}
