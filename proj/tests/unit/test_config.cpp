#include <doctest.h>

#include <cstdlib>
#include <fstream>

#include "kdsel/config.hpp"
#include "kdsel/errors.hpp"
#include "support/oracles.hpp"

using namespace kdsel;

namespace {

struct ScopedEnv {
  std::string name;
  ScopedEnv(std::string n, const char* value) : name(std::move(n)) { ::setenv(name.c_str(), value, 1); }
  ~ScopedEnv() { ::unsetenv(name.c_str()); }
};

}  // namespace

TEST_CASE("TOML subset parsing") {
  const auto t = parse_toml(R"(# run
epochs = 12
learning_rate = 0.5   # trailing comment
encoder = "temporal-conv"
pisl = true
name = "has # hash"

[detectors]
lof_k = 7
)");
  CHECK(std::get<std::int64_t>(t.at("").at("epochs")) == 12);
  CHECK(std::get<double>(t.at("").at("learning_rate")) == 0.5);
  CHECK(std::get<std::string>(t.at("").at("encoder")) == "temporal-conv");
  CHECK(std::get<bool>(t.at("").at("pisl")));
  CHECK(std::get<std::string>(t.at("").at("name")) == "has # hash");
  CHECK(std::get<std::int64_t>(t.at("detectors").at("lof_k")) == 7);
}

TEST_CASE("TOML errors carry line numbers") {
  auto line_of = [](const std::string& text) {
    try {
      parse_toml(text);
    } catch (const ParseError& e) {
      return e.line();
    }
    return std::size_t{0};
  };
  CHECK(line_of("a = 1\nb\n") == 2);
  CHECK(line_of("a = 1\na = 2\n") == 2);
  CHECK(line_of("\n\nx = \"open\n") == 3);
  CHECK(line_of("[t\n") == 1);
  CHECK(line_of("a = [1, 2]\n") == 1);
}

TEST_CASE("config from TOML and round trip") {
  const auto c = train_config_from_toml(R"(
epochs = 3
window = 32
pisl = true
alpha = 0.25
prune = "pa"
prune_ratio = 0.5
[detectors]
lof_k = 4
mp_subsequence = 10
)");
  CHECK(c.epochs == 3);
  CHECK(c.window == 32);
  CHECK(c.effective_stride() == 16);
  CHECK(c.pisl);
  CHECK(c.alpha == 0.25);
  CHECK(c.prune == PruneMode::Pa);
  CHECK(c.detectors.lof_k == 4);
  CHECK(c.detector_params().mp_subsequence == 10);

  const auto again = train_config_from_toml(to_toml(c));
  CHECK(to_json(again) == to_json(c));
  CHECK(train_config_from_json(to_json(c)).epochs == 3);

  // Without an explicit subsequence length, MP follows the window.
  CHECK(train_config_from_toml("window = 40\n").detector_params().mp_subsequence == 20);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(train_config_from_json({{"epocs", 3}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"detectors", {{"k", 1}}}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"alpha", 1.5}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"batch_size", -1}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"pisl", "yes"}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"prune", "random"}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"encoder", "lstm"}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json({{"embedder", "precomputed"}}), ConfigError);
  CHECK_THROWS_AS(train_config_from_json(nlohmann::json::array()), ConfigError);
  CHECK_NOTHROW(train_config_from_json(nlohmann::json::object()));
}

TEST_CASE("seed environment override") {
  TrainConfig c;
  c.seed = 5;
  {
    ScopedEnv env("KDSELECT_SEED", "99");
    apply_env_overrides(c);
  }
  CHECK(c.seed == 99);
  {
    ScopedEnv env("KDSELECT_SEED", "abc");
    CHECK_THROWS_AS(apply_env_overrides(c), ConfigError);
  }
  apply_env_overrides(c);
  CHECK(c.seed == 99);
}

TEST_CASE("run files resolve data paths relative to the file") {
  testing::TempDir dir("config");
  const auto sub = dir.path() / "runs";
  std::filesystem::create_directories(sub);
  {
    std::ofstream(sub / "run.toml") << "epochs = 2\n\n[data]\ncorpus = \"../data/train.csv\"\nlabels = \"/abs/labels.csv\"\n";
  }
  const auto run = load_run_file(sub / "run.toml");
  CHECK(run.config.epochs == 2);
  CHECK(run.inputs.corpus == sub / "../data/train.csv");
  CHECK(run.inputs.labels == "/abs/labels.csv");
  CHECK(run.inputs.metadata.empty());

  { std::ofstream(sub / "bad.toml") << "[data]\ncorpra = \"x.csv\"\n"; }
  CHECK_THROWS_AS(load_run_file(sub / "bad.toml"), ConfigError);
  CHECK_THROWS_AS(load_run_file(sub / "missing.toml"), ConfigError);
}
