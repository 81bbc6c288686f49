#include "server.hpp"

#include <httplib.h>

#include <atomic>
#include <functional>
#include <map>
#include <mutex>

#include <nlohmann/json.hpp>

#include "jobs.hpp"
#include "kdsel/errors.hpp"
#include "kdsel/pipeline.hpp"
#include "workspace.hpp"

namespace kdsel::service {

using nlohmann::json;

std::string service_version() { return KDSEL_VERSION; }

namespace {

struct Reply {
  int status = 200;
  json body;
};

struct CachedReply {
  int status;
  std::string body;
};

json error_body(const std::string& message) { return {{"error", message}}; }

json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return json::object();
  try {
    return json::parse(req.body);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("request body is not valid JSON: ") + e.what());
  }
}

LabeledSeries inline_series(const json& doc) {
  LabeledSeries s;
  s.id = doc.value("id", std::string("inline"));
  if (!doc.contains("values") || !doc.at("values").is_array()) throw ValidationError("series.values must be an array");
  s.values = doc.at("values").get<std::vector<double>>();
  if (doc.contains("labels")) {
    for (const auto& v : doc.at("labels")) {
      const int label = v.get<int>();
      if (label != 0 && label != 1) throw ValidationError("series.labels must hold 0 or 1");
      s.point_labels.push_back(static_cast<std::uint8_t>(label));
    }
    if (s.point_labels.size() != s.values.size()) throw ValidationError("series.labels and series.values differ in length");
  } else {
    s.point_labels.assign(s.values.size(), 0);
  }
  if (s.values.empty()) throw ValidationError("series.values must not be empty");
  s.dataset_name = doc.value("dataset_name", std::string{});
  s.domain_text = doc.value("domain_description", std::string{});
  return s;
}

}  // namespace

struct Server::Impl {
  ServerOptions options;
  Workspace ws;
  JobQueue jobs;
  httplib::Server http;
  std::mutex mutation_mu;
  std::map<std::string, CachedReply> replay;
  std::atomic<bool> stopping{false};
  bool bound = false;

  explicit Impl(ServerOptions opts) : options(std::move(opts)), ws(options.data_dir), jobs(ws) {
    // httplib also sets SO_REUSEPORT, which would let a second instance share
    // the port instead of failing.
    http.set_socket_options([](socket_t sock) {
      int yes = 1;
      setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const void*>(&yes), sizeof(yes));
    });
    routes();
  }

  // Resolves {corpus_id, series_id} or an inline series object.
  LabeledSeries resolve_series(const json& body) {
    if (body.contains("series") && body.at("series").is_object()) return inline_series(body.at("series"));
    const std::string corpus_id = body.value("corpus_id", std::string{});
    std::string series_id = body.value("series_id", std::string{});
    if (series_id.empty() && body.contains("series") && body.at("series").is_string()) series_id = body.at("series");
    if (corpus_id.empty() || series_id.empty())
      throw ValidationError("give either series {values, labels} or corpus_id with series_id");
    const auto corpus = ws.corpus(corpus_id);
    return ws.series(*corpus, series_id);
  }

  static void send(httplib::Response& res, int status, const std::string& body) {
    res.status = status;
    res.set_content(body, "application/json");
  }

  static Reply guarded(const std::function<Reply()>& fn) {
    try {
      return fn();
    } catch (const NotFound& e) {
      return {404, error_body(e.what())};
    } catch (const DetectorSkip& e) {
      return {422, error_body(e.what())};
    } catch (const ParseError& e) {
      return {400, error_body(e.what())};
    } catch (const ValidationError& e) {
      return {400, error_body(e.what())};
    } catch (const ConfigError& e) {
      return {400, error_body(e.what())};
    } catch (const LookupError& e) {
      return {400, error_body(e.what())};
    } catch (const DimensionError& e) {
      return {400, error_body(e.what())};
    } catch (const LoadError& e) {
      return {400, error_body(e.what())};
    } catch (const json::exception& e) {
      return {400, error_body(std::string("bad request field: ") + e.what())};
    } catch (const std::invalid_argument& e) {
      return {400, error_body(std::string("bad request parameter: ") + e.what())};
    } catch (const std::out_of_range& e) {
      return {400, error_body(std::string("bad request parameter: ") + e.what())};
    } catch (const std::exception& e) {
      return {500, error_body(e.what())};
    }
  }

  using ReqHandler = std::function<Reply(const httplib::Request&)>;

  httplib::Server::Handler read_only(ReqHandler fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
      const auto reply = guarded([&] { return fn(req); });
      send(res, reply.status, reply.body.dump());
    };
  }

  // Mutations run one at a time. With X-Request-Id the first response is
  // stored and replayed for retries of the same method and path.
  httplib::Server::Handler mutation(ReqHandler fn) {
    return [this, fn](const httplib::Request& req, httplib::Response& res) {
      std::lock_guard lock(mutation_mu);
      const std::string request_id = req.get_header_value("X-Request-Id");
      const std::string key = req.method + " " + req.path + " " + request_id;
      if (!request_id.empty()) {
        if (auto it = replay.find(key); it != replay.end()) {
          res.set_header("X-Idempotent-Replay", "true");
          send(res, it->second.status, it->second.body);
          return;
        }
      }
      const auto reply = guarded([&] { return fn(req); });
      const std::string body = reply.body.dump();
      if (!request_id.empty() && reply.status < 500) replay[key] = {reply.status, body};
      send(res, reply.status, body);
    };
  }

  void routes() {
    http.Get("/health", read_only([](const httplib::Request&) -> Reply {
               return {200, {{"status", "ok"}, {"version", service_version()}}};
             }));

    http.Post("/corpora", mutation([this](const httplib::Request& req) -> Reply {
                std::string csv = req.body;
                json metadata = json::object();
                const auto type = req.get_header_value("Content-Type");
                if (type.find("application/json") != std::string::npos) {
                  const auto body = parse_body(req);
                  csv = body.at("csv").get<std::string>();
                  metadata = body.value("metadata", json::object());
                }
                const auto stored = ws.store_corpus(csv, metadata);
                json ids = json::array();
                std::size_t points = 0, anomalous = 0;
                for (const auto& s : *stored.corpus) {
                  ids.push_back(s.id);
                  points += s.size();
                  anomalous += s.positives();
                }
                return {stored.created ? 201 : 200,
                        {{"corpus_id", stored.corpus_id},
                         {"series", stored.corpus->size()},
                         {"points", points},
                         {"anomalous_points", anomalous},
                         {"series_ids", ids}}};
              }));

    http.Post("/jobs/train", mutation([this](const httplib::Request& req) -> Reply {
                const auto body = parse_body(req);
                JobSpec spec;
                spec.config = train_config_from_json(body.value("config", json::object()));
                apply_env_overrides(spec.config);
                if (body.contains("flags")) {
                  const auto& flags = body.at("flags");
                  if (flags.contains("pisl")) spec.config.pisl = flags.at("pisl").get<bool>();
                  if (flags.contains("mki")) spec.config.mki = flags.at("mki").get<bool>();
                  if (flags.contains("prune")) spec.config.prune = prune_mode_from_name(flags.at("prune").get<std::string>());
                }
                spec.corpus_id = body.at("corpus_id").get<std::string>();
                spec.selector_id = body.value("selector_id", std::string{});
                const auto id = jobs.submit(std::move(spec));
                return {202, jobs.status(id)};
              }));

    http.Get(R"(/jobs/([^/]+))", read_only([this](const httplib::Request& req) -> Reply {
               return {200, jobs.status(req.matches[1])};
             }));

    http.Post(R"(/jobs/([^/]+)/cancel)", mutation([this](const httplib::Request& req) -> Reply {
                return {200, jobs.cancel(req.matches[1])};
              }));

    http.Get(R"(/jobs/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
      const std::string job_id = req.matches[1];
      std::size_t since = 0;
      const auto reply = guarded([&]() -> Reply {
        if (req.has_param("since")) since = std::stoul(req.get_param_value("since"));
        if (req.has_header("Last-Event-ID")) since = std::stoul(req.get_header_value("Last-Event-ID")) + 1;
        jobs.status(job_id);
        return {200, json::object()};
      });
      if (reply.status != 200) {
        send(res, reply.status, reply.body.dump());
        return;
      }
      if (req.get_param_value("format") == "ndjson") {
        const auto wait_ms = req.has_param("wait_ms") ? std::stol(req.get_param_value("wait_ms")) : 0L;
        const auto batch = jobs.events(job_id, since, std::chrono::milliseconds(std::clamp(wait_ms, 0L, 30000L)));
        std::string body;
        for (const auto& line : batch.lines) body += line + "\n";
        res.set_header("X-Next-Since", std::to_string(batch.next));
        res.set_header("X-Job-State", job_state_name(jobs.state(job_id)));
        res.set_content(body, "application/x-ndjson");
        return;
      }
      auto cursor = std::make_shared<std::size_t>(since);
      res.set_header("Cache-Control", "no-cache");
      res.set_chunked_content_provider("text/event-stream", [this, job_id, cursor](std::size_t, httplib::DataSink& sink) {
        if (stopping) {
          sink.done();
          return true;
        }
        const auto batch = jobs.events(job_id, *cursor, std::chrono::milliseconds(500));
        for (const auto& line : batch.lines) {
          const std::string frame = "id: " + std::to_string((*cursor)++) + "\nevent: train\ndata: " + line + "\n\n";
          if (!sink.write(frame.data(), frame.size())) return false;
        }
        if (batch.finished) {
          const std::string frame = "event: end\ndata: " + jobs.status(job_id).dump() + "\n\n";
          sink.write(frame.data(), frame.size());
          sink.done();
        } else if (batch.lines.empty()) {
          static const std::string keepalive = ": keep-alive\n\n";
          if (!sink.write(keepalive.data(), keepalive.size())) return false;
        }
        return true;
      });
    });

    http.Get("/selectors", read_only([this](const httplib::Request&) -> Reply {
               json list = json::array();
               for (const auto& r : ws.registry().list()) list.push_back(to_json(r));
               return {200, {{"selectors", list}}};
             }));

    http.Get(R"(/selectors/([^/]+))", read_only([this](const httplib::Request& req) -> Reply {
               return {200, to_json(ws.registry().get(req.matches[1]))};
             }));

    // Registers an existing model file under a new or replaced selector id.
    http.Post("/selectors", mutation([this](const httplib::Request& req) -> Reply {
                const auto body = parse_body(req);
                const std::string source = body.at("model_path").get<std::string>();
                const auto model = load_model(std::filesystem::path(source));
                SelectorRecord record;
                record.selector_id = body.value("selector_id", std::string{});
                if (record.selector_id.empty()) record.selector_id = "sel-" + sha256_hex(model.config_json + source).substr(0, 12);
                const auto target = ws.model_path(record.selector_id);
                save_model(model, target);
                ws.forget_model(record.selector_id);
                record.config = model.config_json.empty() ? json::object() : json::parse(model.config_json);
                record.metrics = body.value("metrics", json::object());
                record.model_path = target.string();
                const bool existed = ws.registry().find(record.selector_id).has_value();
                return {existed ? 200 : 201, to_json(ws.registry().put(record))};
              }));

    http.Delete(R"(/selectors/([^/]+))", mutation([this](const httplib::Request& req) -> Reply {
                  const std::string id = req.matches[1];
                  ws.registry().remove(id);
                  ws.forget_model(id);
                  return {200, {{"deleted", id}}};
                }));

    http.Post("/select", read_only([this](const httplib::Request& req) -> Reply {
                const auto body = parse_body(req);
                const auto model = ws.model(body.at("selector_id").get<std::string>());
                const auto series = resolve_series(body);
                TrainConfig config;
                if (!model->config_json.empty()) config = train_config_from_json(json::parse(model->config_json));
                const auto stride = body.value("stride", config.effective_stride());
                auto out = to_json(select(*model, series, std::max<std::size_t>(1, stride)));
                out["selector_id"] = body.at("selector_id");
                return {200, out};
              }));

    http.Post("/detect", read_only([this](const httplib::Request& req) -> Reply {
                const auto body = parse_body(req);
                const auto series = resolve_series(body);
                TrainConfig config;
                std::vector<std::size_t> votes;
                DetectorKind detector = DetectorKind::IForest;
                json selection = nullptr;
                if (body.contains("selector_id")) {
                  const auto id = body.at("selector_id").get<std::string>();
                  const auto model = ws.model(id);
                  if (!model->config_json.empty()) config = train_config_from_json(json::parse(model->config_json));
                  const auto sel = select(*model, series, config.effective_stride());
                  votes = sel.votes;
                  detector = sel.selected;
                  selection = to_json(sel);
                } else if (body.contains("detector")) {
                  detector = detector_from_name(body.at("detector").get<std::string>());
                } else {
                  throw ValidationError("give either detector or selector_id");
                }
                const bool compare = body.value("compare", false);
                const bool scores = body.value("include_scores", true);
                auto out = to_json(detect_and_score(series, detector, config.detector_params(), compare, votes), scores);
                out["selection"] = selection;
                return {200, out};
              }));

    http.Get(R"(/reports/([^/]+))", read_only([this](const httplib::Request& req) -> Reply {
               return {200, ws.report(req.matches[1])};
             }));

    http.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (res.body.empty()) res.set_content(error_body("no route for this request").dump(), "application/json");
    });
  }
};

Server::Server(ServerOptions options) : impl_(std::make_unique<Impl>(std::move(options))) {}

Server::~Server() { stop(); }

int Server::bind() {
  int port = impl_->options.port;
  if (port == 0) {
    port = impl_->http.bind_to_any_port(impl_->options.host);
    if (port < 0) throw Error("cannot bind " + impl_->options.host);
  } else if (!impl_->http.bind_to_port(impl_->options.host, port)) {
    throw Error("cannot bind " + impl_->options.host + ":" + std::to_string(port) + " (address in use?)");
  }
  impl_->bound = true;
  return port;
}

void Server::run() {
  if (!impl_->bound) throw Error("Server::run called before bind");
  impl_->http.listen_after_bind();
}

void Server::stop() {
  if (!impl_ || impl_->stopping.exchange(true)) return;
  impl_->http.stop();
  impl_->jobs.shutdown();
  impl_->ws.registry().flush();
}

}  // namespace kdsel::service
