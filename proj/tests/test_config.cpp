#include <cstdlib>
#include <fstream>

#include <doctest.h>
#include <nlohmann/json.hpp>

#include "dinfogan/config.hpp"
#include "dinfogan/errors.hpp"
#include "support/fixtures.hpp"

using namespace dinfogan;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string error_of(const json& user, const std::vector<std::string>& overrides = {}) {
  try {
    resolve_run_config(user, overrides);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("run configs round trip through json") {
  for (const auto& name : dataset_names()) {
    CAPTURE(name);
    auto c = RunConfig::for_dataset(name);
    c.eval.grids = {GridKind::swap, GridKind::generate};
    c.eval.traverse_dims = {0, 2};
    c.dataset.sources.checksums["a.bin"] = "00";
    json j = c;
    CHECK(j.get<RunConfig>() == c);
    CHECK_FALSE(j.at("train").at("arch").contains("common_dim"));
    CHECK(c.problems().empty());
  }
}

TEST_CASE("defaults come from the dataset name") {
  auto c = resolve_run_config(json::object());
  CHECK(c.dataset.name == "micro");
  CHECK(c.train == TrainConfig::for_dataset("micro"));
  auto d = resolve_run_config({{"dataset", {{"name", "dsprites_mnist"}}}});
  CHECK(d.train.loops_g == 2);
  CHECK(d.train.arch.channels == 1);
  CHECK(d.output_dir == "runs/dsprites_mnist");
}

TEST_CASE("partial documents and overrides") {
  auto c = resolve_run_config({{"train", {{"lr_g", 1}, {"prior", {{"salient_dim", 5}}}}}},
                              {"train.batch_size=32", "output_dir=runs/x", "eval.grids=[\"swap\"]"});
  CHECK(c.train.lr_g == 1.0);
  CHECK(c.train.prior.salient_dim == 5);
  CHECK(c.train.arch.salient_dim == 5);
  CHECK(c.train.batch_size == 32);
  CHECK(c.output_dir == "runs/x");
  CHECK((c.eval.grids == std::vector<GridKind>{GridKind::swap}));
  CHECK(c.train.prior.common_dim == 8);

  json j = json::object();
  apply_override(j, "a.b.c=1.5");
  apply_override(j, "a.d=hello");
  apply_override(j, "e=true");
  CHECK(j == json{{"a", {{"b", {{"c", 1.5}}}, {"d", "hello"}}}, {"e", true}});
  CHECK_THROWS_AS(apply_override(j, "novalue"), ConfigError);
  CHECK_THROWS_AS(apply_override(j, "a..b=1"), ConfigError);
  CHECK_THROWS_AS(apply_override(j, "e.f=1"), ConfigError);
}

TEST_CASE("every problem is reported at once") {
  const auto msg = error_of({{"train", {{"lr_g", "fast"}, {"bogus", 1}, {"loops_d", 0}}}, {"eval", {{"folds", 1}}}},
                            {"dataset.micro.n_train=-3"});
  CHECK(msg.find("train.lr_g must be a real number") != std::string::npos);
  CHECK(msg.find("unknown key 'train.bogus'") != std::string::npos);
  CHECK(msg.find("train.loops_d must be >= 1") != std::string::npos);
  CHECK(msg.find("eval.folds") != std::string::npos);
  CHECK(msg.find("n_train") != std::string::npos);
  CHECK(msg.find("5 problems") != std::string::npos);

  CHECK(error_of({{"dataset", {{"name", "imagenet"}}}}).find("imagenet") != std::string::npos);
  CHECK(error_of({{"train", {{"arch", {{"channels", 3}}}}}}).find("channels must be 1 for micro") != std::string::npos);
  CHECK(error_of({{"train", {{"arch", {{"image_size", 64}}}}}}).find("dataset.image_size") != std::string::npos);
  CHECK(error_of({{"dataset", {{"image_size", 64}}}, {"train", {{"arch", {{"image_size", 64}}}}}}).empty());
  CHECK(error_of({{"train", {{"optimizer", "sgd"}}}}).find("sgd") != std::string::npos);
  CHECK(error_of({{"eval", {{"traverse_dims", {9}}}}}).find("traverse_dims") != std::string::npos);
  CHECK(error_of(json::array()).find("JSON object") != std::string::npos);
}

TEST_CASE("config files and the cache root") {
  const auto dir = fixtures::temp_dir("cfg");
  std::ofstream(dir / "ok.json") << R"({"dataset": {"name": "celeba"}, "cache_dir": "/tmp/c"})";
  std::ofstream(dir / "bad.json") << "{ not json";
  auto c = load_run_config(dir / "ok.json", {"train.epochs=3"});
  CHECK(c.dataset.name == "celeba");
  CHECK(c.train.epochs == 3);
  CHECK(resolve_cache_root(c) == fs::path("/tmp/c"));
  CHECK_THROWS_WITH_AS(load_run_config(dir / "bad.json"), doctest::Contains("not valid JSON"), ConfigError);
  CHECK_THROWS_AS(load_run_config(dir / "missing.json"), ConfigError);
  c.cache_dir.clear();
  setenv("DINFOGAN_CACHE", "/tmp/env-cache", 1);
  CHECK(resolve_cache_root(c) == fs::path("/tmp/env-cache"));
  unsetenv("DINFOGAN_CACHE");
  CHECK(resolve_cache_root(c) == fs::path(".dinfogan-cache"));
  fs::remove_all(dir);
}
