#include "arachnet/executor.hpp"

#include "arachnet/error.hpp"
#include "arachnet/jsonread.hpp"

#include <algorithm>
#include <future>
#include <sstream>

namespace arachnet {

namespace jr = jsonread;

// ---------------------------------------------------------------------------
// Blob stores

void MemoryBlobStore::put(const std::string& digest, const Json& content) {
  std::lock_guard lock(mutex_);
  blobs_.emplace(digest, content);
}

std::optional<Json> MemoryBlobStore::get(const std::string& digest) const {
  std::lock_guard lock(mutex_);
  auto it = blobs_.find(digest);
  if (it == blobs_.end()) return std::nullopt;
  return std::optional<Json>(std::in_place, it->second);
}

std::size_t MemoryBlobStore::size() const {
  std::lock_guard lock(mutex_);
  return blobs_.size();
}

FsBlobStore::FsBlobStore(std::filesystem::path dir) : dir_(std::move(dir)) { std::filesystem::create_directories(dir_); }

void FsBlobStore::put(const std::string& digest, const Json& content) {
  auto path = dir_ / (digest + ".json");
  if (std::filesystem::exists(path)) return;
  write_text_file(path, canonical_dump(content));
}

std::optional<Json> FsBlobStore::get(const std::string& digest) const {
  auto path = dir_ / (digest + ".json");
  if (!std::filesystem::exists(path)) return std::nullopt;
  return Json::parse(read_text_file(path));
}

DataValue load_value(const BlobStore& blobs, const std::string& digest) {
  auto content = blobs.get(digest);
  if (!content) throw Error(ErrorCode::kNotFound, "blob " + digest + " is not stored");
  DataValue v;
  v.data = data_kind_from_json(content->at("data"));
  v.payload = content->at("payload");
  return v;
}

// ---------------------------------------------------------------------------
// Result documents

std::string_view to_string(CheckStatus status) {
  switch (status) {
    case CheckStatus::kPass: return "pass";
    case CheckStatus::kFail: return "fail";
    case CheckStatus::kSkipped: return "skipped";
  }
  return "skipped";
}

Json to_json(const ExecutionResult& r, bool with_timeline) {
  Json outputs = Json::object();
  for (const auto& [key, rec] : r.step_outputs)
    outputs[key] = {{"digest", rec.digest},
                    {"data", to_json(rec.data)},
                    {"provenance", rec.provenance},
                    {"confidence", to_string(rec.confidence)}};
  Json quality = Json::array();
  for (const auto& q : r.quality)
    quality.push_back(
        {{"check_id", q.check_id}, {"outcome", to_string(q.status)}, {"severity", to_string(q.severity)}, {"value", q.value}});
  Json status = r.success ? Json{{"state", "success"}}
                          : Json{{"state", "failed"}, {"step_id", r.failed_step}, {"reason", r.reason}};
  Json doc{{"plan_id", r.plan_id},
           {"status", status},
           {"step_outputs", outputs},
           {"run_inputs", r.run_inputs},
           {"executed", r.executed},
           {"skipped", r.skipped},
           {"quality", quality},
           {"plan_confidence_posterior", to_string(r.plan_confidence_posterior)}};
  if (with_timeline) {
    Json timeline = Json::array();
    for (const auto& t : r.timeline) timeline.push_back({{"step_id", t.step_id}, {"start_ms", t.start_ms}, {"end_ms", t.end_ms}});
    doc["timeline"] = timeline;
  }
  return doc;
}

std::string ExecutionResult::digest() const { return digest_of(to_json(*this, false)); }

ExecutionResult execution_result_from_json(const Json& doc) {
  const std::string root = "result";
  jr::check_keys(doc, {"plan_id", "status", "step_outputs", "run_inputs", "executed", "skipped", "quality",
                       "plan_confidence_posterior", "timeline", "success_criteria"},
                 root);
  ExecutionResult r;
  r.plan_id = jr::string_field(doc, "plan_id", root);
  const auto& status = jr::field(doc, "status", root);
  auto state = jr::string_field(status, "state", root + ".status");
  r.success = state == "success";
  if (!r.success) {
    r.failed_step = jr::opt_string(status, "step_id", root + ".status");
    r.reason = jr::opt_string(status, "reason", root + ".status");
  }
  for (const auto& [key, rec] : jr::field(doc, "step_outputs", root).items()) {
    auto w = root + ".step_outputs." + key;
    StepOutputRecord s;
    s.digest = jr::string_field(rec, "digest", w);
    s.data = data_kind_from_json(jr::field(rec, "data", w));
    s.provenance = jr::opt_string(rec, "provenance", w);
    s.confidence = jr::rational_field(rec, "confidence", w);
    r.step_outputs[key] = s;
  }
  r.run_inputs = jr::string_map(doc, "run_inputs", root);
  r.executed = jr::string_list(doc, "executed", root, false);
  r.skipped = jr::string_list(doc, "skipped", root, false);
  for (const auto& q : jr::array_field(doc, "quality", root)) {
    CheckOutcome c;
    c.check_id = jr::string_field(q, "check_id", root + ".quality");
    auto outcome = jr::string_field(q, "outcome", root + ".quality");
    c.status = outcome == "pass" ? CheckStatus::kPass : outcome == "fail" ? CheckStatus::kFail : CheckStatus::kSkipped;
    c.severity = jr::string_field(q, "severity", root + ".quality") == "error" ? Severity::kError : Severity::kWarn;
    c.value = jr::opt_string(q, "value", root + ".quality");
    r.quality.push_back(c);
  }
  r.plan_confidence_posterior = jr::rational_field(doc, "plan_confidence_posterior", root);
  if (doc.contains("timeline"))
    for (const auto& t : doc["timeline"])
      r.timeline.push_back({t.at("step_id").get<std::string>(), t.at("start_ms").get<std::int64_t>(),
                            t.at("end_ms").get<std::int64_t>()});
  return r;
}

// ---------------------------------------------------------------------------
// Checks

std::optional<Rational> numeric_value(const Json& cell) {
  if (cell.is_number_integer()) return Rational(cell.get<std::int64_t>());
  if (cell.is_number_float() || cell.is_string()) {
    try {
      return parse_rational(cell.is_string() ? cell.get<std::string>() : cell.dump());
    } catch (const Error&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

namespace {

std::size_t size_of(const DataValue& v) {
  if (v.data.format == DataFormat::kGraph) return v.payload.contains("nodes") ? v.payload["nodes"].size() : 0;
  if (v.data.format == DataFormat::kScalar) return 1;
  return v.payload.is_array() ? v.payload.size() : 0;
}

// The number a value is compared by across sources.
std::optional<Rational> aggregate(const DataValue& v) {
  switch (v.data.format) {
    case DataFormat::kScalar: return numeric_value(v.payload);
    case DataFormat::kSeries: {
      if (v.payload.empty()) return Rational(0);
      Rational sum = 0;
      for (const auto& p : v.payload) sum += numeric_value(p.at(1)).value_or(0);
      return sum / static_cast<long>(v.payload.size());
    }
    case DataFormat::kTable: {
      bool impact = !v.payload.empty() && v.payload.front().contains("impact");
      if (!impact) return Rational(static_cast<long>(v.payload.size()));
      Rational sum = 0;
      for (const auto& row : v.payload) sum += numeric_value(row.at("impact")).value_or(0);
      return sum;
    }
    case DataFormat::kGraph: return Rational(static_cast<long>(size_of(v)));
  }
  return std::nullopt;
}

std::optional<std::int64_t> onset_of(const DataValue& v) {
  if (!v.payload.is_array() || v.payload.empty()) return std::nullopt;
  const auto& o = v.payload.front().at("onset");
  return o.is_string() ? parse_iso8601(o.get<std::string>()) : o.get<std::int64_t>();
}

Rational abs(const Rational& r) { return r < 0 ? Rational(-r) : r; }

}  // namespace

CheckOutcome evaluate_check(const QualityCheck& check, const std::map<PortRef, DataValue>& outputs) {
  CheckOutcome out;
  out.check_id = check.id;
  out.severity = check.severity;
  auto target = outputs.find(check.target);
  if (target == outputs.end()) {
    out.value = "target not materialized";
    return out;
  }
  const auto& v = target->second;
  auto verdict = [&](bool ok, std::string value) {
    out.status = ok ? CheckStatus::kPass : CheckStatus::kFail;
    out.value = std::move(value);
    return out;
  };
  switch (check.kind) {
    case QualityCheckKind::kSchema: {
      auto reason = check_payload_shape(v.data, v.payload);
      return verdict(!reason, reason.value_or("conforms to " + v.data.label()));
    }
    case QualityCheckKind::kNonempty: {
      auto n = size_of(v);
      return verdict(n > 0, "size=" + std::to_string(n));
    }
    case QualityCheckKind::kRange: {
      std::vector<Json> cells;
      if (v.data.format == DataFormat::kTable) {
        for (const auto& row : v.payload)
          for (const auto& [k, cell] : row.items())
            if (check.column.empty() || k == check.column) cells.push_back(cell);
      } else if (v.data.format == DataFormat::kSeries) {
        for (const auto& p : v.payload) cells.push_back(p.at(1));
      } else if (v.data.format == DataFormat::kScalar) {
        cells.push_back(v.payload);
      }
      for (const auto& cell : cells) {
        auto x = numeric_value(cell);
        if (x && (*x < check.min || *x > check.max))
          return verdict(false, "value " + to_string(*x) + " outside [" + to_string(check.min) + ", " +
                                    to_string(check.max) + "]");
      }
      return verdict(true, "all values in [" + to_string(check.min) + ", " + to_string(check.max) + "]");
    }
    case QualityCheckKind::kConsistency: {
      auto other = outputs.find(check.other);
      if (other == outputs.end()) {
        out.value = "comparison source not materialized";
        return out;
      }
      if (check.tolerance_mode == ToleranceMode::kAbsoluteSeconds) {
        auto a = onset_of(v), b = onset_of(other->second);
        if (!a && !b) return verdict(true, "neither source reports an anomaly");
        if (!a || !b) return verdict(false, "only one source reports an anomaly");
        auto gap = *a > *b ? *a - *b : *b - *a;
        return verdict(Rational(gap) <= check.tolerance, "onset gap " + std::to_string(gap) + "s");
      }
      auto a = aggregate(v), b = aggregate(other->second);
      if (!a || !b) return verdict(false, "non-numeric aggregate");
      auto scale = std::max(abs(*a), abs(*b));
      Rational diff = scale == 0 ? Rational(0) : Rational(abs(*a - *b) / scale);
      return verdict(diff <= check.tolerance, "relative difference " + to_string(diff));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// translate / execute

DataValue translate(const DataValue& value, const Translation& translation, const AdapterSet& adapters) {
  if (value.data != translation.from)
    throw Error(ErrorCode::kAdapterMismatch, "adapter " + translation.adapter_id + " expects " +
                                                 translation.from.label() + ", got " + value.data.label());
  const auto* adapter = adapters.find(translation.adapter_id);
  if (!adapter) throw Error(ErrorCode::kMissingAdapter, "no adapter implements " + translation.adapter_id);
  auto out = adapter->invoke(translation.adapter_id, {{"in", value}}, {});
  auto it = out.find("out");
  if (it == out.end() || it->second.data != translation.to)
    throw Error(ErrorCode::kAdapterMismatch, "adapter " + translation.adapter_id + " did not produce " +
                                                 translation.to.label());
  DataValue result = it->second;
  result.confidence = value.confidence;
  if (translation.lossy) result.confidence *= parse_rational(kLossyConfidenceFactor);
  result.provenance = translation.adapter_id;
  return result;
}

namespace {

struct StepRun {
  PortValues outputs;
  std::string error;  // non-empty on failure
  std::int64_t start_ms = 0, end_ms = 0;
};

}  // namespace

ExecutionResult execute(const ExecutablePlan& plan, const AdapterSet& adapters,
                        const std::map<std::string, DataValue>& run_inputs, BlobStore& blobs,
                        const ExecutorOptions& options) {
  std::vector<std::string> missing;
  for (const auto& s : plan.steps)
    if (!adapters.find(s.capability_id)) missing.push_back(s.capability_id);
  if (!missing.empty())
    throw Error(ErrorCode::kMissingAdapter, "no adapter supports: " + join(missing, ", "), missing);
  std::set<std::string> needed;
  for (const auto& [name, _] : plan.run_inputs) needed.insert(name);
  for (const auto& s : plan.steps)
    for (const auto& [_, src] : s.input_bindings)
      if (src.kind == Source::Kind::kRunInput) needed.insert(src.ref);
  for (const auto& m : plan.outputs_manifest)
    if (m.source.kind == Source::Kind::kRunInput) needed.insert(m.source.ref);
  std::vector<std::string> absent;
  for (const auto& name : needed)
    if (!run_inputs.count(name)) absent.push_back(name);
  if (!absent.empty())
    throw Error(ErrorCode::kMissingRunInput, "missing run inputs: " + join(absent, ", "), absent);

  SystemClock system_clock;
  Clock& clock = options.clock ? *options.clock : system_clock;

  ExecutionResult result;
  result.plan_id = plan.plan_id;
  std::map<PortRef, DataValue> values;
  for (const auto& name : needed) {
    const auto& v = run_inputs.at(name);
    blobs.put(v.digest(), v.content());
    result.run_inputs[name] = v.digest();
  }

  std::map<std::string, std::vector<const QualityCheck*>> step_checks;
  for (const auto& c : plan.checks)
    if (c.kind != QualityCheckKind::kConsistency) step_checks[c.target.step].push_back(&c);
  std::map<std::string, CheckOutcome> outcomes;

  auto run_step = [&](const PlanStep& step, const PortValues& inputs) {
    StepRun run;
    if (options.before_step) options.before_step(step);
    run.start_ms = clock.now_ms();
    try {
      if (step.is_adapter) {
        if (!step.translation) throw Error(ErrorCode::kCompileError, "adapter step without translation");
        run.outputs["out"] = translate(inputs.at("in"), *step.translation, adapters);
      } else {
        run.outputs = adapters.find(step.capability_id)->invoke(step.capability_id, inputs, step.params);
        Rational confidence = 1;
        for (const auto& [_, v] : inputs) confidence = std::min(confidence, v.confidence);
        for (const auto& port : step.outputs) {
          auto it = run.outputs.find(port.name);
          if (it == run.outputs.end())
            throw Error(ErrorCode::kAdapterMismatch, "missing output port '" + port.name + "'");
          if (it->second.data != port.data)
            throw Error(ErrorCode::kAdapterMismatch, "port '" + port.name + "' produced " + it->second.data.label() +
                                                         ", declared " + port.data.label());
          it->second.provenance = step.id;
          it->second.confidence = step.reliability * confidence;
        }
      }
    } catch (const Error& e) {
      run.error = std::string(error_code_name(e.code())) + ": " + e.what();
    } catch (const std::exception& e) {
      run.error = std::string("adapter failure: ") + e.what();
    }
    run.end_ms = clock.now_ms();
    return run;
  };

  auto inputs_of = [&](const PlanStep& step) {
    PortValues inputs;
    for (const auto& [port, src] : step.input_bindings) {
      switch (src.kind) {
        case Source::Kind::kStepOutput: inputs[port] = values.at({src.ref, src.port}); break;
        case Source::Kind::kRunInput: inputs[port] = run_inputs.at(src.ref); break;
        case Source::Kind::kParam: {
          DataValue v;
          v.data = {"param", DataFormat::kScalar, ""};
          v.payload = Json::parse(src.ref);
          v.provenance = "param";
          inputs[port] = v;
          break;
        }
      }
    }
    return inputs;
  };

  std::set<std::string> done, blocked;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < plan.steps.size(); ++i) index[plan.steps[i].id] = i;
  std::optional<std::size_t> first_failure;
  std::map<std::size_t, std::string> failures;

  // Merges a finished step in plan order; returns whether it succeeded.
  auto merge = [&](const PlanStep& step, StepRun run) {
    result.timeline.push_back({step.id, run.start_ms, run.end_ms});
    if (run.error.empty()) {
      std::map<PortRef, DataValue> local;
      for (auto& [port, v] : run.outputs) local[{step.id, port}] = v;
      for (const auto* c : step_checks[step.id]) {
        auto o = evaluate_check(*c, local);
        if (o.status == CheckStatus::kFail && c->severity == Severity::kError && run.error.empty())
          run.error = "check " + c->id + " failed: " + o.value;
        outcomes[c->id] = o;
      }
      for (auto& [port, v] : run.outputs) {
        auto digest = v.digest();
        blobs.put(digest, v.content());
        result.step_outputs[step.id + "." + port] = {digest, v.data, v.provenance, v.confidence};
        values[{step.id, port}] = v;
      }
    }
    result.executed.push_back(step.id);
    if (!run.error.empty()) {
      failures[index[step.id]] = run.error;
      blocked.insert(step.id);
      return false;
    }
    done.insert(step.id);
    return true;
  };

  auto deps_of = [](const PlanStep& s) {
    std::set<std::string> d;
    for (const auto& [_, src] : s.input_bindings)
      if (src.kind == Source::Kind::kStepOutput) d.insert(src.ref);
    return d;
  };

  if (!options.parallel) {
    for (const auto& step : plan.steps) {
      auto deps = deps_of(step);
      if (std::any_of(deps.begin(), deps.end(), [&](const std::string& d) { return !done.count(d); })) {
        blocked.insert(step.id);
        result.skipped.push_back(step.id);
        continue;
      }
      merge(step, run_step(step, inputs_of(step)));
    }
  } else {
    std::set<std::string> settled;
    while (settled.size() < plan.steps.size()) {
      std::vector<const PlanStep*> wave;
      for (const auto& step : plan.steps) {
        if (settled.count(step.id)) continue;
        auto deps = deps_of(step);
        if (std::any_of(deps.begin(), deps.end(), [&](const std::string& d) { return blocked.count(d) > 0; })) {
          blocked.insert(step.id);
          settled.insert(step.id);
          continue;
        }
        if (std::all_of(deps.begin(), deps.end(), [&](const std::string& d) { return done.count(d) > 0; }))
          wave.push_back(&step);
      }
      if (wave.empty()) continue;
      std::vector<std::future<StepRun>> futures;
      for (const auto* step : wave) {
        auto inputs = inputs_of(*step);
        futures.push_back(std::async(std::launch::async, [&, step, inputs] { return run_step(*step, inputs); }));
      }
      std::vector<StepRun> runs;
      for (auto& f : futures) runs.push_back(f.get());
      for (std::size_t i = 0; i < wave.size(); ++i) {
        merge(*wave[i], std::move(runs[i]));
        settled.insert(wave[i]->id);
      }
    }
    // Canonical plan order for the schedule-independent fields.
    std::sort(result.executed.begin(), result.executed.end(),
              [&](const std::string& a, const std::string& b) { return index[a] < index[b]; });
    std::sort(result.timeline.begin(), result.timeline.end(),
              [&](const TimelineEntry& a, const TimelineEntry& b) { return index[a.step_id] < index[b.step_id]; });
    for (const auto& step : plan.steps)
      if (blocked.count(step.id) && !failures.count(index[step.id])) result.skipped.push_back(step.id);
  }

  for (const auto& c : plan.checks) {
    if (c.kind == QualityCheckKind::kConsistency) outcomes[c.id] = evaluate_check(c, values);
    auto it = outcomes.find(c.id);
    if (it != outcomes.end()) {
      result.quality.push_back(it->second);
    } else {
      CheckOutcome skipped;
      skipped.check_id = c.id;
      skipped.severity = c.severity;
      skipped.value = "target not materialized";
      result.quality.push_back(skipped);
    }
  }
  if (!failures.empty()) {
    first_failure = failures.begin()->first;
    result.success = false;
    result.failed_step = plan.steps[*first_failure].id;
    result.reason = failures.begin()->second;
  }

  std::optional<Rational> posterior;
  for (const auto& m : plan.outputs_manifest) {
    Rational c = 1;
    if (m.source.kind == Source::Kind::kStepOutput) {
      auto it = values.find({m.source.ref, m.source.port});
      if (it == values.end()) continue;
      c = it->second.confidence;
    }
    posterior = posterior ? std::min(*posterior, c) : c;
  }
  result.plan_confidence_posterior = posterior.value_or(result.success ? Rational(1) : Rational(0));
  return result;
}

// ---------------------------------------------------------------------------
// Success criteria

std::vector<CriterionOutcome> evaluate_criteria(const SubProblemGraph& graph, const ExecutablePlan& plan,
                                                const ExecutionResult& result, const BlobStore& blobs) {
  std::vector<CriterionOutcome> out;
  for (const auto& c : graph.success_criteria) {
    CriterionOutcome o;
    o.description = c.description;
    const ManifestEntry* entry = nullptr;
    for (const auto& m : plan.outputs_manifest)
      if (m.sub_problem == c.sub_problem) entry = &m;
    std::optional<DataValue> value;
    if (entry) {
      std::string digest;
      if (entry->source.kind == Source::Kind::kStepOutput) {
        auto it = result.step_outputs.find(entry->source.ref + "." + entry->source.port);
        if (it != result.step_outputs.end()) digest = it->second.digest;
      } else if (entry->source.kind == Source::Kind::kRunInput) {
        auto it = result.run_inputs.find(entry->source.ref);
        if (it != result.run_inputs.end()) digest = it->second;
      }
      if (!digest.empty() && blobs.get(digest)) value = load_value(blobs, digest);
    }
    if (!value) {
      o.detail = "output of '" + c.sub_problem + "' was not materialized";
      out.push_back(o);
      continue;
    }
    switch (c.check) {
      case CheckKind::kOutputPresent:
        o.passed = true;
        o.detail = "materialized";
        break;
      case CheckKind::kOutputNonempty: {
        auto n = size_of(*value);
        o.passed = n > 0;
        o.detail = "size=" + std::to_string(n);
        break;
      }
      case CheckKind::kThreshold: {
        o.passed = true;
        o.detail = "every " + c.column + " " + c.op + " " + to_string(c.value);
        for (const auto& row : value->payload) {
          if (!row.is_object() || !row.contains(c.column)) continue;
          auto x = numeric_value(row[c.column]);
          bool ok = x && ((c.op == "<=" && *x <= c.value) || (c.op == "<" && *x < c.value) ||
                          (c.op == ">=" && *x >= c.value) || (c.op == ">" && *x > c.value) ||
                          (c.op == "==" && *x == c.value));
          if (!ok) {
            o.passed = false;
            o.detail = c.column + " value " + (x ? to_string(*x) : row[c.column].dump()) + " violates " + c.op + " " +
                       to_string(c.value);
            break;
          }
        }
        break;
      }
    }
    out.push_back(o);
  }
  return out;
}

Json to_json(const std::vector<CriterionOutcome>& outcomes) {
  Json out = Json::array();
  for (const auto& o : outcomes) out.push_back({{"description", o.description}, {"passed", o.passed}, {"detail", o.detail}});
  return out;
}

}  // namespace arachnet
