#include <doctest.h>

#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "support/oracles.hpp"
#include "support/process.hpp"

using nlohmann::json;

namespace {

kdsel::testing::CommandResult kdselect(const std::string& args) {
  return kdsel::testing::run_command(std::string(KDSEL_CLI_PATH) + " " + args);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("usage errors exit with status 2") {
  CHECK(kdselect("--help").code == 0);
  CHECK(kdselect("").code == 2);
  CHECK(kdselect("train --no-such-flag").code == 2);
  CHECK(kdselect("frobnicate").code == 2);
  CHECK(kdselect("detect --series x.csv --detector HBOS --model m.kdsl").code == 2);
}

TEST_CASE("missing inputs are usage errors, malformed inputs runtime errors") {
  CHECK(kdselect("select --model /nonexistent.kdsl --series /nonexistent.csv").code == 2);
  kdsel::testing::TempDir dir("cli-bad");
  const auto bad = dir.path() / "bad.csv";
  std::ofstream(bad) << "series_id,value,label\nx,notanumber,0\n";
  CHECK(kdselect("ingest --input " + bad.string() + " --out " + (dir.path() / "out.csv").string()).code == 1);
  CHECK(kdselect("select --model " + bad.string() + " --series " + bad.string()).code == 1);
}

TEST_CASE("synth, ingest, label, train, select, detect, eval") {
  kdsel::testing::TempDir dir("cli");
  const auto d = dir.path();
  const std::string p = d.string() + "/";
  REQUIRE(kdselect("synth --out " + p + "all.csv --metadata-out " + p + "meta.json --series-per-family 2 --length 320")
              .code == 0);

  const auto ingest = kdselect("ingest --input " + p + "all.csv --metadata " + p + "meta.json --out " + p +
                               "clean.csv --train-out " + p + "train.csv --test-out " + p + "test.csv --fraction 0.5");
  REQUIRE(ingest.code == 0);
  const auto summary = json::parse(ingest.out);
  CHECK(summary.at("series") == 6);

  {
    std::ofstream(d / "run.toml") << "window = 32\nepochs = 3\nbatch_size = 16\nseed = 4\n";
  }
  REQUIRE(kdselect("label --corpus " + p + "train.csv --config " + p + "run.toml --out " + p + "labels.csv").code == 0);
  CHECK(std::filesystem::file_size(d / "labels.csv") > 0);

  const std::string train_args = "train --config " + p + "run.toml --corpus " + p + "train.csv --labels " + p +
                                 "labels.csv --pisl --prune infobatch --out ";
  REQUIRE(kdselect(train_args + p + "a.kdsl").code == 0);
  REQUIRE(kdselect(train_args + p + "b.kdsl --events " + p + "b.ndjson").code == 0);
  CHECK(slurp(d / "a.kdsl") == slurp(d / "b.kdsl"));
  CHECK(slurp(d / "a.kdsl").substr(0, 4) == "KDSL");
  std::ifstream events(d / "events.ndjson");
  std::string line;
  std::size_t epochs = 0;
  while (std::getline(events, line)) epochs += json::parse(line).at("type") == "epoch";
  CHECK(epochs == 3);

  const auto sel = kdselect("select --model " + p + "a.kdsl --series " + p + "test.csv");
  REQUIRE(sel.code == 0);
  const auto picks = json::parse(sel.out);
  REQUIRE(picks.is_array());
  CHECK(picks.size() == 3);
  CHECK(picks[0].contains("selected"));

  const auto det = kdselect("detect --model " + p + "a.kdsl --series " + p + "test.csv --series-id " +
                            picks[0].at("series_id").get<std::string>() + " --no-scores");
  REQUIRE(det.code == 0);
  CHECK(json::parse(det.out).contains("result"));

  REQUIRE(kdselect("eval --model " + p + "a.kdsl --corpus " + p + "test.csv --report " + p + "r1.csv").code == 0);
  REQUIRE(kdselect("eval --model " + p + "a.kdsl --corpus " + p + "test.csv --report " + p + "r2.csv").code == 0);
  CHECK(slurp(d / "r1.csv") == slurp(d / "r2.csv"));
  CHECK(json::parse(slurp(d / "r1.json")).contains("average_auc_pr"));
}
