#include "arachnet/api.hpp"

#include "arachnet/error.hpp"

#include <httplib.h>

namespace arachnet {

int http_status(ErrorCode code) {
  switch (code) {
    case ErrorCode::kNotFound: return 404;
    case ErrorCode::kWrongState: return 409;
    case ErrorCode::kInvalidEdit: return 422;
    case ErrorCode::kSchemaViolation:
    case ErrorCode::kConfigError:
    case ErrorCode::kIntentError:
    case ErrorCode::kUnknownGoalKind: return 400;
    default: return 500;
  }
}

namespace {

void send(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(2), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
  send(res, http_status(e.code()),
       {{"error", std::string(error_code_name(e.code()))}, {"message", e.what()}, {"details", e.details()}});
}

Json run_summary(const RunRecord& r) {
  Json stages = Json::object();
  for (int s = 1; s <= kStageCount; ++s) stages[std::string(stage_name(s))] = to_string(r.stage(s).status);
  return {{"run_id", r.run_id},   {"query", r.query},           {"mode", to_string(r.mode)},
          {"state", r.state()},   {"stages", stages},           {"created_ms", r.created_ms},
          {"updated_ms", r.updated_ms}};
}

std::size_t query_number(const httplib::Request& req, const char* key, std::size_t fallback) {
  if (!req.has_param(key)) return fallback;
  try {
    return std::stoul(req.get_param_value(key));
  } catch (const std::exception&) {
    throw Error(ErrorCode::kSchemaViolation, std::string("query parameter '") + key + "' must be a number");
  }
}

}  // namespace

struct ApiServer::Impl {
  Orchestrator& orchestrator;
  RegistryStore& registry;
  httplib::Server server;

  Impl(Orchestrator& o, RegistryStore& r) : orchestrator(o), registry(r) { routes(); }

  // Runs a handler, mapping library errors to JSON error responses.
  template <typename F>
  auto guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      try {
        f(req, res);
      } catch (const Error& e) {
        send_error(res, e);
      } catch (const Json::exception& e) {
        send(res, 400, {{"error", "SchemaViolation"}, {"message", e.what()}, {"details", Json::array()}});
      } catch (const std::exception& e) {
        send(res, 500, {{"error", "Internal"}, {"message", e.what()}, {"details", Json::array()}});
      }
    };
  }

  Json artifact(const std::string& run_id, int stage) {
    auto record = orchestrator.get(run_id);
    const auto& name = record.stage(stage).artifact;
    auto doc = name.empty() ? std::nullopt : orchestrator.store().get_document(run_id, name);
    if (!doc) throw Error(ErrorCode::kNotFound, "stage " + std::string(stage_name(stage)) + " has no artifact yet");
    return *doc;
  }

  void routes() {
    server.Options(R"(/api/.*)", [](const httplib::Request&, httplib::Response& res) {
      res.set_header("Access-Control-Allow-Origin", "*");
      res.set_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS");
      res.set_header("Access-Control-Allow-Headers", "Content-Type");
      res.status = 204;
    });

    server.Post("/api/runs", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto body = Json::parse(req.body);
      if (!body.is_object() || !body.contains("query") || !body["query"].is_string())
        throw Error(ErrorCode::kSchemaViolation, "body needs a string 'query'");
      for (const auto& [key, _] : body.items())
        if (key != "query" && key != "mode") throw Error(ErrorCode::kSchemaViolation, "unknown field '" + key + "'");
      auto mode = parse_run_mode(body.value("mode", std::string("standard")));
      auto id = orchestrator.start_run(body["query"].get<std::string>(), mode);
      send(res, 201, {{"run_id", id}});
    }));

    server.Get("/api/runs", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto ids = orchestrator.store().list();
      std::reverse(ids.begin(), ids.end());  // newest first
      auto offset = query_number(req, "offset", 0);
      auto limit = std::min<std::size_t>(query_number(req, "limit", 50), 500);
      Json runs = Json::array();
      for (std::size_t i = offset; i < ids.size() && i < offset + limit; ++i)
        runs.push_back(run_summary(orchestrator.get(ids[i])));
      send(res, 200, {{"runs", runs}, {"total", ids.size()}, {"offset", offset}, {"limit", limit}});
    }));

    server.Get(R"(/api/runs/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      send(res, 200, to_json(orchestrator.get(req.matches[1])));
    }));

    server.Get(R"(/api/runs/([^/]+)/result)", guarded([this](const httplib::Request& req, httplib::Response& res) {
      std::string id = req.matches[1];
      orchestrator.get(id);
      auto doc = orchestrator.store().get_document(id, kResultDocument);
      if (!doc) throw Error(ErrorCode::kNotFound, "run " + id + " has no execution result yet");
      send(res, 200, *doc);
    }));

    server.Get(R"(/api/runs/([^/]+)/stages/([^/]+)/artifact)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 send(res, 200, artifact(req.matches[1], parse_stage(req.matches[2].str())));
               }));

    server.Get(R"(/api/runs/([^/]+)/stages/([^/]+)/artifact\.dot)",
               guarded([this](const httplib::Request& req, httplib::Response& res) {
                 int stage = parse_stage(req.matches[2].str());
                 auto dot = artifact_dot(stage, artifact(req.matches[1], stage));
                 res.status = 200;
                 res.set_content(dot, "text/vnd.graphviz");
               }));

    server.Post(R"(/api/runs/([^/]+)/stages/([^/]+)/review)",
                guarded([this](const httplib::Request& req, httplib::Response& res) {
                  std::string id = req.matches[1];
                  int stage = parse_stage(req.matches[2].str());
                  orchestrator.get(id);
                  auto decision = review_decision_from_json(Json::parse(req.body), stage);
                  send(res, 200, to_json(orchestrator.submit_review(id, decision)));
                }));

    server.Get("/api/registry", guarded([this](const httplib::Request&, httplib::Response& res) {
      auto reg = registry.load_latest();
      Json entries = Json::array();
      for (const auto& [id, e] : reg->entries) {
        Json inputs = Json::array(), outputs = Json::array();
        for (const auto& p : e.inputs) inputs.push_back(p.data.kind);
        for (const auto& p : e.outputs) outputs.push_back(p.data.kind);
        entries.push_back({{"id", id},
                           {"framework", e.framework},
                           {"description", e.description},
                           {"inputs", inputs},
                           {"outputs", outputs},
                           {"cost_hint", to_string(e.cost_hint)},
                           {"reliability", to_string(e.reliability)},
                           {"provenance", e.provenance == Provenance::kManual ? "manual" : "curated"}});
      }
      send(res, 200, {{"version", reg->version}, {"entries", entries}, {"translations", reg->translations.size()}});
    }));

    server.Get(R"(/api/registry/([^/]+))", guarded([this](const httplib::Request& req, httplib::Response& res) {
      auto reg = registry.load_latest();
      const auto* e = reg->find(req.matches[1].str());
      if (!e) throw Error(ErrorCode::kNotFound, "no capability '" + req.matches[1].str() + "'");
      send(res, 200, to_json(*e));
    }));
  }
};

ApiServer::ApiServer(Orchestrator& orchestrator, RegistryStore& registry)
    : impl_(std::make_unique<Impl>(orchestrator, registry)) {}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw Error(ErrorCode::kConfigError, "cannot bind " + host + ":" + std::to_string(port));
  return bound;
}

void ApiServer::serve() { impl_->server.listen_after_bind(); }

void ApiServer::stop() {
  if (impl_) impl_->server.stop();
}

bool ApiServer::running() const { return impl_->server.is_running(); }

}  // namespace arachnet
