#include <doctest.h>

#include <httplib.h>

#include <fstream>
#include <sstream>
#include <thread>

#include "kdsel/errors.hpp"
#include "kdsel/synthetic.hpp"
#include "service/jobs.hpp"
#include "service/registry.hpp"
#include "service/server.hpp"
#include "service/workspace.hpp"
#include "support/oracles.hpp"
#include "support/schema.hpp"

using namespace kdsel;
using namespace kdsel::service;
using nlohmann::json;

namespace {

std::string corpus_csv(std::size_t per_family, std::uint64_t seed = 1) {
  SyntheticOptions o;
  o.series_per_family = per_family;
  o.length = 320;
  o.seed = seed;
  std::ostringstream os;
  write_corpus(make_synthetic_corpus(o), os);
  return os.str();
}

json quick_config() { return {{"window", 32}, {"epochs", 2}, {"batch_size", 16}, {"seed", 5}}; }

void expect_schema(const std::vector<std::string>& errors) {
  for (const auto& e : errors) FAIL_CHECK(e);
}

// Server on a free port, served from a background thread.
struct RunningServer {
  Server server;
  int port = 0;
  std::thread thread;

  explicit RunningServer(const std::filesystem::path& dir) : server(ServerOptions{"127.0.0.1", 0, dir}) {
    port = server.bind();
    thread = std::thread([this] { server.run(); });
  }
  ~RunningServer() {
    server.stop();
    thread.join();
  }
  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port);
    c.set_read_timeout(60, 0);
    return c;
  }
};

}  // namespace

TEST_CASE("registry CRUD and persistence") {
  testing::TempDir dir("registry");
  const auto index = dir.path() / "index.json";
  {
    Registry reg(index);
    CHECK(reg.list().empty());
    SelectorRecord a;
    a.selector_id = "a";
    a.metrics = {{"auc", 0.5}};
    const auto stored = reg.put(a);
    CHECK(stored.sequence == 1);
    CHECK_FALSE(stored.created_at.empty());
    SelectorRecord b;
    b.selector_id = "b";
    CHECK(reg.put(b).sequence == 2);
    // Replacing keeps the original sequence and timestamp.
    a.metrics = {{"auc", 0.7}};
    const auto replaced = reg.put(a);
    CHECK(replaced.sequence == 1);
    CHECK(replaced.created_at == stored.created_at);
    CHECK(reg.get("a").metrics.at("auc") == 0.7);
    CHECK_THROWS_AS(reg.get("zzz"), NotFound);
    CHECK_FALSE(reg.find("zzz").has_value());
  }
  {
    Registry reg(index);
    const auto list = reg.list();
    REQUIRE(list.size() == 2);
    CHECK(list[0].selector_id == "a");
    CHECK(list[1].selector_id == "b");
    reg.remove("b");
    CHECK_THROWS_AS(reg.remove("b"), NotFound);
    SelectorRecord c;
    c.selector_id = "c";
    CHECK(reg.put(c).sequence == 3);  // sequence numbers are not reused
  }
  Registry reg(index);
  CHECK(reg.list().size() == 2);
  CHECK(record_from_json(to_json(reg.get("c"))) == reg.get("c"));
}

TEST_CASE("workspace stores content-addressed corpora") {
  testing::TempDir dir("workspace");
  Workspace ws(dir.path());
  const auto csv = corpus_csv(1);
  const auto first = ws.store_corpus(csv);
  CHECK(first.created);
  CHECK(first.corpus->size() == 3);
  const auto second = ws.store_corpus(csv);
  CHECK_FALSE(second.created);
  CHECK(second.corpus_id == first.corpus_id);
  CHECK(ws.store_corpus(csv, {{"spike-0", {{"dataset_name", "X"}}}}).corpus_id != first.corpus_id);

  Workspace reopened(dir.path());
  CHECK(reopened.corpus(first.corpus_id)->size() == 3);
  CHECK_THROWS_AS(reopened.corpus("corpus-missing"), NotFound);
  CHECK_THROWS_AS(reopened.series(*first.corpus, "nope"), NotFound);
  CHECK_THROWS_AS(ws.store_corpus("series_id,value,label\nbad\n"), ParseError);
  CHECK_THROWS_AS(ws.report("r"), NotFound);

  CHECK(valid_identifier("sel-abc_1.2"));
  CHECK_FALSE(valid_identifier("../etc"));
  CHECK_FALSE(valid_identifier(".hidden"));
  CHECK_FALSE(valid_identifier(""));
  CHECK_FALSE(valid_identifier(std::string(200, 'a')));
}

TEST_CASE("job queue runs jobs in submission order") {
  testing::TempDir dir("jobs");
  Workspace ws(dir.path());
  const auto corpus = ws.store_corpus(corpus_csv(2)).corpus_id;
  JobQueue queue(ws);
  const auto config = train_config_from_json(quick_config());
  const auto a = queue.submit({config, corpus, "first"});
  const auto b = queue.submit({config, corpus, "second"});
  const auto c = queue.submit({config, corpus, ""});
  CHECK(queue.status(b).at("state") == "queued");
  const auto cancelled = queue.cancel(c);
  CHECK(cancelled.at("state") == "cancelled");

  REQUIRE(queue.wait(a, std::chrono::minutes(2)));
  REQUIRE(queue.wait(b, std::chrono::minutes(2)));
  CHECK(queue.state(a) == JobState::Finished);
  CHECK(queue.state(b) == JobState::Finished);
  CHECK(queue.state(c) == JobState::Cancelled);
  CHECK(ws.registry().get("first").sequence < ws.registry().get("second").sequence);
  expect_schema(testing::check_job_status(queue.status(a)));

  const auto batch = queue.events(a, 0);
  CHECK(batch.finished);
  REQUIRE_FALSE(batch.lines.empty());
  std::size_t seq = 0;
  for (const auto& line : batch.lines) {
    const auto ev = json::parse(line);
    CHECK(ev.at("seq") == seq++);
    expect_schema(testing::check_train_event(ev));
  }
  CHECK(json::parse(batch.lines.back()).at("type") == "done");
  CHECK(queue.events(a, batch.next).lines.empty());

  const auto report_id = queue.status(a).at("report_id").get<std::string>();
  expect_schema(testing::check_report(ws.report(report_id)));
  CHECK(std::filesystem::exists(ws.model_path("first")));

  CHECK_THROWS_AS(queue.submit({config, "corpus-none", ""}), NotFound);
  CHECK_THROWS_AS(queue.status("job-none"), NotFound);
  queue.shutdown();
}

TEST_CASE("HTTP round trip") {
  testing::TempDir dir("http");
  RunningServer srv(dir.path());
  auto cli = srv.client();

  auto health = cli.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  CHECK(json::parse(health->body).at("status") == "ok");

  const auto csv = corpus_csv(2);
  auto up = cli.Post("/corpora", csv, "text/csv");
  REQUIRE(up);
  CHECK(up->status == 201);
  const auto corpus = json::parse(up->body);
  expect_schema(testing::check_corpus_response(corpus));
  CHECK(corpus.at("series") == 6);
  auto again = cli.Post("/corpora", json{{"csv", csv}}.dump(), "application/json");
  REQUIRE(again);
  CHECK(again->status == 200);

  const json job_body = {{"config", quick_config()}, {"corpus_id", corpus.at("corpus_id")}, {"selector_id", "web"},
                         {"flags", {{"pisl", true}}}};
  httplib::Headers idem{{"X-Request-Id", "req-1"}};
  auto job = cli.Post("/jobs/train", idem, job_body.dump(), "application/json");
  REQUIRE(job);
  CHECK(job->status == 202);
  const auto job_id = json::parse(job->body).at("job_id").get<std::string>();
  auto replay = cli.Post("/jobs/train", idem, job_body.dump(), "application/json");
  REQUIRE(replay);
  CHECK(replay->get_header_value("X-Idempotent-Replay") == "true");
  CHECK(json::parse(replay->body).at("job_id") == job_id);

  // SSE stream until the end frame.
  auto sse = cli.Get("/jobs/" + job_id + "/events");
  REQUIRE(sse);
  CHECK(sse->get_header_value("Content-Type").find("text/event-stream") != std::string::npos);
  CHECK(sse->body.find("event: train\n") != std::string::npos);
  const auto end = sse->body.find("event: end\ndata: ");
  REQUIRE(end != std::string::npos);
  const auto final_status = json::parse(sse->body.substr(end + 17, sse->body.find('\n', end + 17) - end - 17));
  CHECK(final_status.at("state") == "finished");

  auto nd = cli.Get("/jobs/" + job_id + "/events?format=ndjson&since=2");
  REQUIRE(nd);
  CHECK(nd->get_header_value("X-Job-State") == "finished");
  std::istringstream lines(nd->body);
  std::string line;
  std::getline(lines, line);
  CHECK(json::parse(line).at("seq") == 2);

  auto sels = cli.Get("/selectors");
  REQUIRE(sels);
  const auto list = json::parse(sels->body).at("selectors");
  REQUIRE(list.size() == 1);
  expect_schema(testing::check_selector_record(list[0]));
  CHECK(list[0].at("config").at("pisl") == true);

  const auto series = json{{"corpus_id", corpus.at("corpus_id")}, {"series_id", "spike-0"}};
  auto sel = cli.Post("/select", json{{"selector_id", "web"}, {"corpus_id", corpus.at("corpus_id")}, {"series_id", "spike-0"}}.dump(),
                      "application/json");
  REQUIRE(sel);
  CHECK(sel->status == 200);
  expect_schema(testing::check_selection(json::parse(sel->body)));

  json inline_series = {{"id", "inline"}, {"values", json::array()}, {"labels", json::array()}};
  for (int t = 0; t < 100; ++t) {
    inline_series["values"].push_back(t == 50 ? 9.0 : std::sin(t * 0.3));
    inline_series["labels"].push_back(t == 50 ? 1 : 0);
  }
  auto det = cli.Post("/detect", json{{"detector", "HBOS"}, {"series", inline_series}, {"compare", true}}.dump(),
                      "application/json");
  REQUIRE(det);
  CHECK(det->status == 200);
  const auto det_body = json::parse(det->body);
  expect_schema(testing::check_detection(det_body));
  CHECK(det_body.at("alternatives").size() == kNumDetectors);
  CHECK(det_body.at("result").at("auc_pr") == 1.0);

  auto det_sel = cli.Post("/detect", json{{"selector_id", "web"}, {"series", inline_series}, {"include_scores", false}}.dump(),
                          "application/json");
  REQUIRE(det_sel);
  CHECK(det_sel->status == 200);
  expect_schema(testing::check_selection(json::parse(det_sel->body).at("selection")));

  const auto status = json::parse(cli.Get("/jobs/" + job_id)->body);
  auto report = cli.Get("/reports/" + status.at("report_id").get<std::string>());
  REQUIRE(report);
  expect_schema(testing::check_report(json::parse(report->body)));

  // Register a copy of the model file, then delete it.
  const auto model_file = dir.path() / "selectors" / "web.kdsl";
  auto reg = cli.Post("/selectors", json{{"model_path", model_file.string()}, {"selector_id", "copy"}}.dump(),
                      "application/json");
  REQUIRE(reg);
  CHECK(reg->status == 201);
  auto del = cli.Delete("/selectors/copy");
  REQUIRE(del);
  CHECK(del->status == 200);
  CHECK(cli.Get("/selectors/copy")->status == 404);
  CHECK(cli.Delete("/selectors/copy")->status == 404);
}

TEST_CASE("HTTP errors") {
  testing::TempDir dir("http-errors");
  RunningServer srv(dir.path());
  auto cli = srv.client();
  CHECK(cli.Get("/jobs/job-none")->status == 404);
  CHECK(cli.Get("/reports/none")->status == 404);
  CHECK(cli.Get("/nowhere")->status == 404);
  CHECK(cli.Post("/jobs/train", "{not json", "application/json")->status == 400);
  CHECK(cli.Post("/jobs/train", json{{"corpus_id", "x"}, {"config", {{"epocs", 1}}}}.dump(), "application/json")->status ==
        400);
  CHECK(cli.Post("/jobs/train", json{{"corpus_id", "corpus-none"}}.dump(), "application/json")->status == 404);
  CHECK(cli.Post("/corpora", "series_id,value,label\nx,abc,0\n", "text/csv")->status == 400);
  CHECK(cli.Post("/detect", json{{"detector", "NOPE"}, {"series", {{"id", "s"}, {"values", {1, 2, 3}}}}}.dump(),
                 "application/json")
            ->status == 400);
  auto skip = cli.Post("/detect", json{{"detector", "MP"}, {"series", {{"id", "s"}, {"values", {1, 2}}}}}.dump(),
                       "application/json");
  REQUIRE(skip);
  CHECK(skip->status == 200);
  CHECK(json::parse(skip->body).at("fallback_used") == true);
  const auto err = json::parse(cli.Get("/jobs/job-none")->body);
  CHECK(err.contains("error"));
}

TEST_CASE("binding a busy port fails cleanly") {
  testing::TempDir dir("busy");
  RunningServer srv(dir.path());
  Server other(ServerOptions{"127.0.0.1", srv.port, dir.path() / "other"});
  CHECK_THROWS_AS(other.bind(), Error);
}
