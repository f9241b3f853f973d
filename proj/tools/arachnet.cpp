// arachnet command-line front end over the run store, registry and HTTP API.
//
// Store root: $ARACHNET_HOME (default ./.arachnet), holding runs/, registry/v<N>
// and an optional config.json with pipeline settings.

#include "arachnet/api.hpp"
#include "arachnet/error.hpp"
#include "arachnet/orchestrator.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

using namespace arachnet;
namespace fs = std::filesystem;

namespace {

struct Options {
  fs::path registry_seed = fs::path(ARACHNET_SOURCE_DIR) / "fixtures" / "registry";
  fs::path config_file;
  std::string backend;
  std::string endpoint;
  std::string model;
  std::string auth_env;
};

fs::path home_dir() {
  const char* env = std::getenv("ARACHNET_HOME");
  return env && *env ? fs::path(env) : fs::current_path() / ".arachnet";
}

PipelineConfig load_config(const Options& o) {
  PipelineConfig config;
  auto file = o.config_file.empty() ? home_dir() / "config.json" : o.config_file;
  if (fs::exists(file)) config = pipeline_config_from_json(read_json_file(file));
  else if (!o.config_file.empty()) throw Error(ErrorCode::kConfigError, "config file not found: " + file.string());
  if (!o.backend.empty()) {
    auto doc = config.backend.to_json();
    doc["kind"] = o.backend;
    if (!o.endpoint.empty()) doc["endpoint"] = o.endpoint;
    if (!o.model.empty()) doc["model"] = o.model;
    if (!o.auth_env.empty()) doc["auth_env"] = o.auth_env;
    config.backend = backend_config_from_json(doc);
  }
  return config;
}

struct Session {
  SystemClock clock;
  RegistryStore registry;
  FsRunStore runs;
  std::unique_ptr<ArachnetStages> stages;
  std::unique_ptr<Orchestrator> orch;

  explicit Session(const Options& o) : registry(home_dir() / "registry"), runs(home_dir() / "runs") {
    auto config = load_config(o);
    registry.initialize_from(o.registry_seed);
    std::shared_ptr<PlannerBackend> backend = make_backend(config.backend);
    stages = std::make_unique<ArachnetStages>(registry, backend, config, &clock);
    orch = std::make_unique<Orchestrator>(runs, *stages, clock, [this] { return registry.latest_version(); });
  }
};

void print_record(const RunRecord& r) {
  std::cout << r.run_id << "  " << r.state() << "  (" << to_string(r.mode) << ")\n";
  for (int s = 1; s <= kStageCount; ++s) {
    const auto& st = r.stage(s);
    std::cout << "  " << s << " " << stage_name(s) << ": " << to_string(st.status);
    if (st.edited) std::cout << " [edited]";
    if (!st.error.empty()) std::cout << " - " << st.error;
    std::cout << "\n";
  }
}

void print_result(Session& s, const std::string& id) {
  auto doc = s.runs.get_document(id, kResultDocument);
  if (!doc) return;
  auto result = execution_result_from_json(*doc);
  std::cout << "result: " << (result.success ? "success" : "failed") << ", "
            << result.executed.size() << " steps executed, confidence "
            << to_string(result.plan_confidence_posterior) << "\n";
  if (doc->contains("success_criteria"))
    for (const auto& c : (*doc)["success_criteria"])
      std::cout << "  [" << (c.value("passed", false) ? "met" : "not met") << "] "
                << c.value("description", std::string()) << "\n";
}

Json latest_artifact(Session& s, const RunRecord& r, int& stage) {
  for (int k = stage ? stage : kStageCount; k >= 1; --k) {
    if (r.stage(k).artifact.empty()) {
      if (stage) break;
      continue;
    }
    stage = k;
    return *s.runs.get_document(r.run_id, r.stage(k).artifact);
  }
  throw Error(ErrorCode::kNotFound, "run " + r.run_id + " has no artifact" +
                                        (stage ? " for stage " + std::string(stage_name(stage)) : ""));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"arachnet: measurement workflows from natural-language queries"};
  app.require_subcommand(1);
  Options o;
  app.add_option("--registry", o.registry_seed, "registry used to seed an empty store");
  app.add_option("--config", o.config_file, "pipeline config (default $ARACHNET_HOME/config.json)");
  app.add_option("--backend", o.backend, "planner backend")->check(CLI::IsMember({"deterministic", "llm"}));
  app.add_option("--endpoint", o.endpoint, "llm endpoint URL");
  app.add_option("--model", o.model, "llm model name");
  app.add_option("--auth-env", o.auth_env, "environment variable holding the llm key");

  auto* run = app.add_subcommand("run", "start a run");
  std::string query, mode = "standard";
  run->add_option("query", query)->required();
  run->add_option("--mode", mode)->check(CLI::IsMember({"standard", "expert"}));

  auto* review = app.add_subcommand("review", "decide on a stage awaiting review");
  std::string run_id, stage_text, edit_file, reject_msg, reviewer = "cli";
  bool approve = false;
  review->add_option("run", run_id)->required();
  review->add_option("stage", stage_text)->required();
  auto* g = review->add_option_group("decision");
  g->add_flag("--approve", approve);
  g->add_option("--edit", edit_file, "replacement artifact (JSON)");
  g->add_option("--reject", reject_msg, "reason");
  g->require_option(1);
  review->add_option("--reviewer", reviewer);

  auto* resume = app.add_subcommand("resume", "advance a run, re-running an interrupted stage");
  resume->add_option("run", run_id)->required();

  app.add_subcommand("runs", "list runs");

  auto* show = app.add_subcommand("show", "show a run record or one stage artifact");
  show->add_option("run", run_id)->required();
  show->add_option("--stage", stage_text);

  auto* exp = app.add_subcommand("export", "export a run's plan or latest artifact");
  std::string format = "dot";
  exp->add_option("run", run_id)->required();
  exp->add_option("--format", format)->check(CLI::IsMember({"dot", "markdown", "json"}));
  exp->add_option("--stage", stage_text);

  auto* reg = app.add_subcommand("registry", "inspect and grow the capability registry");
  reg->require_subcommand(1);
  reg->add_subcommand("list", "list capabilities");
  auto* reg_show = reg->add_subcommand("show", "print one capability");
  std::string cap_id;
  reg_show->add_option("id", cap_id)->required();
  auto* reg_promote = reg->add_subcommand("promote", "mine stored runs and promote validated composites");
  std::vector<std::string> only;
  bool dry_run = false;
  reg_promote->add_option("--id", only, "promote only these composite ids");
  reg_promote->add_flag("--dry-run", dry_run, "print proposals without promoting");

  auto* serve = app.add_subcommand("serve", "serve the HTTP API");
  std::string host = "127.0.0.1";
  int port = 8080;
  serve->add_option("--host", host);
  serve->add_option("--port", port);

  CLI11_PARSE(app, argc, argv);

  try {
    Session s(o);
    if (*run) {
      auto id = s.orch->start_run(query, parse_run_mode(mode));
      auto r = s.orch->get(id);
      print_record(r);
      print_result(s, id);
      return r.state() == "failed" ? 1 : 0;
    }
    if (*review) {
      ReviewDecision d;
      d.stage = parse_stage(stage_text);
      d.reviewer = reviewer;
      if (approve) d.kind = DecisionKind::kApprove;
      else if (!edit_file.empty()) {
        d.kind = DecisionKind::kEdit;
        d.replacement = read_json_file(edit_file);
      } else {
        d.kind = DecisionKind::kReject;
        d.reason = reject_msg;
      }
      auto r = s.orch->submit_review(run_id, d);
      print_record(r);
      print_result(s, run_id);
      return 0;
    }
    if (*resume) {
      auto r = s.orch->advance(run_id);
      print_record(r);
      print_result(s, run_id);
      return 0;
    }
    if (app.got_subcommand("runs")) {
      for (const auto& id : s.runs.list()) {
        auto r = s.runs.load_record(id);
        std::cout << id << "  " << r.state() << "  " << r.query << "\n";
      }
      return 0;
    }
    if (*show) {
      auto r = s.orch->get(run_id);
      if (stage_text.empty()) {
        std::cout << to_json(r).dump(2) << "\n";
      } else {
        int stage = parse_stage(stage_text);
        std::cout << latest_artifact(s, r, stage).dump(2) << "\n";
      }
      return 0;
    }
    if (*exp) {
      auto r = s.orch->get(run_id);
      int stage = stage_text.empty() ? 0 : parse_stage(stage_text);
      if (!stage && !r.stage(3).artifact.empty()) stage = 3;
      auto artifact = latest_artifact(s, r, stage);
      if (format == "json") std::cout << artifact.dump(2) << "\n";
      else if (stage == 3) std::cout << export_plan(executable_plan_from_json(artifact), parse_export_format(format));
      else if (format == "dot") std::cout << artifact_dot(stage, artifact);
      else throw Error(ErrorCode::kConfigError, "markdown export needs a compiled plan (stage 3)");
      return 0;
    }
    if (*reg) {
      auto latest = s.registry.load_latest();
      if (reg->got_subcommand("list")) {
        std::cout << "registry v" << latest->version << "\n";
        for (const auto& [id, e] : latest->entries)
          std::cout << "  " << id << "  [" << e.framework << "]  cost " << to_string(e.cost_hint) << "\n";
        return 0;
      }
      if (*reg_show) {
        const auto* e = latest->find(cap_id);
        if (!e) throw Error(ErrorCode::kNotFound, "no capability '" + cap_id + "'");
        std::cout << to_json(*e).dump(2) << "\n";
        return 0;
      }
      auto proposal = s.stages->propose(s.runs);
      if (!only.empty()) proposal["selected"] = only;
      if (dry_run) {
        std::cout << proposal.dump(2) << "\n";
        return 0;
      }
      auto out = s.stages->promote_selected(proposal, s.runs);
      for (const auto& p : out["promoted"])
        std::cout << "promoted " << p["id"].get<std::string>() << " (registry v" << p["registry_version"] << ")\n";
      for (const auto& p : out["skipped"])
        std::cout << "skipped " << p["id"].get<std::string>() << ": " << p["reason"].get<std::string>() << "\n";
      if (out["promoted"].empty() && out["skipped"].empty()) std::cout << "nothing to promote\n";
      return 0;
    }
    if (*serve) {
      ApiServer server(*s.orch, s.registry);
      int bound = server.bind(host, port);
      std::cerr << "listening on http://" << host << ":" << bound << "\n";
      server.serve();
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    for (const auto& d : e.details()) std::cerr << "  - " << d << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
