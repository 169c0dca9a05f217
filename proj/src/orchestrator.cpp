#include "vulnloop/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace vulnloop {

using nlohmann::json;

namespace {

constexpr std::string_view kStageNames[] = {"S1_Generate",   "S2_Identify", "S2_Fix",
                                            "S3_Crosscheck", "S3_Refix",    "S3_Recheck",
                                            "Done"};

constexpr std::string_view kTerminationNames[] = {
    "SecureConfirmed", "BudgetExhausted", "ProviderFailure", "BuildFailureFinal",
    "UserAbort",       "ParseFailure",    "AnalyzerFailure"};

constexpr double kEps = 1e-9;

const char* const kIdentifyReminder =
    "Your previous reply did not follow the required output format. If the code has no "
    "vulnerabilities, reply exactly \"no vulnerabilities\". Otherwise list each one as:\n"
    "Vulnerability Type | CWE ID | Justification | Response";

const char* const kCodeReminder =
    "Your previous reply did not contain a fenced code block. Reply with the complete program "
    "in a single fenced code block tagged with its language.";

json cwe_list(const std::vector<Cwe>& cwes) {
    json out = json::array();
    for (const auto& c : cwes) out.push_back(c.str());
    return out;
}

json finding_json(const AnalyzerFinding& f) {
    return json{{"rule_id", f.rule_id},   {"cwes", cwe_list(f.cwes)},  {"message", f.message},
                {"file", f.file},         {"start_line", f.start_line}, {"end_line", f.end_line},
                {"severity", f.severity}};
}

json report_json(const VulnReport& r) {
    return json{{"vuln_type", r.vuln_type},
                {"cwe", r.cwe.str()},
                {"address", r.address},
                {"justification", r.justification},
                {"response", r.response},
                {"span", {r.span.begin, r.span.end}}};
}

double round_temp(double t) { return std::round(t * 1e6) / 1e6; }

void log_entry(const RunServices& services, EntryKind kind, json payload) {
    if (services.log) services.log->append(kind, std::move(payload));
}

void snapshot(const RunServices& services, const CodeArtifact& code, const std::string& label) {
    if (services.log) services.log->snapshot(code, label);
}

json termination_json(const TerminationReason& t) {
    return json{{"kind", std::string(to_string(t.kind))}, {"detail", t.detail}};
}

void move_to(RunState& s, Stage to, const RunServices& services, json extra = json::object()) {
    json payload{{"from", std::string(to_string(s.stage))},
                 {"to", std::string(to_string(to))},
                 {"iteration", s.iteration},
                 {"total_iterations", s.total_iterations},
                 {"escalation_level", s.escalation_level},
                 {"temperature", s.temperature}};
    if (to == Stage::Done && s.termination) payload["termination"] = termination_json(*s.termination);
    for (auto& [k, v] : extra.items()) payload[k] = v;
    log_entry(services, EntryKind::Transition, std::move(payload));
    s.stage = to;
}

void finish(RunState& s, TerminationKind kind, std::string detail, const RunServices& services) {
    s.termination = TerminationReason{kind, std::move(detail)};
    s.pending_vulns.clear();
    s.pending_findings.clear();
    move_to(s, Stage::Done, services);
}

std::vector<Cwe> unique_cwes(const std::vector<Cwe>& in) {
    std::vector<Cwe> out;
    for (const auto& c : in) {
        if (!c.str().empty() && std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
    }
    return out;
}

std::vector<Cwe> cwes_of(const std::vector<VulnReport>& reports) {
    std::vector<Cwe> out;
    for (const auto& r : reports) out.push_back(r.cwe);
    return unique_cwes(out);
}

std::vector<Cwe> cwes_of(const std::vector<AnalyzerFinding>& findings) {
    std::vector<Cwe> out;
    for (const auto& f : findings) out.insert(out.end(), f.cwes.begin(), f.cwes.end());
    return unique_cwes(out);
}

std::vector<Cwe> cwes_of(const std::vector<FixedItem>& items) {
    std::vector<Cwe> out;
    for (const auto& i : items) out.push_back(i.cwe);
    return unique_cwes(out);
}

/// One prompt/reply exchange, kept so a format reminder can continue it.
struct Exchange {
    std::string purpose;
    std::vector<ChatMessage> messages;
    std::string reply;
};

class Step {
public:
    Step(RunState& s, const RunConfig& c, const RunServices& sv) : s_(s), c_(c), sv_(sv) {}

    RenderContext context() const {
        RenderContext ctx;
        ctx.nl_prompt = s_.nl_prompt;
        if (!s_.current_code.source.empty()) ctx.code = s_.current_code;
        ctx.language = c_.target_language;
        ctx.score_current = s_.score.current();
        ctx.cwe_catalog = sv_.templates->cwe_catalog();
        return ctx;
    }

    PromptVariant fix_variant(TemplateId id) const {
        if (!c_.ep_enabled && c_.strategy == FixStrategy::Ep) return strip_ep(id);
        return PromptVariant{id, c_.ep_enabled, c_.strategy};
    }

    /// Adds example pairs when adaptive prompting is armed; returns skipped CWEs.
    json arm_examples(RenderContext& ctx, const std::vector<Cwe>& cwes) const {
        json skipped = json::array();
        if (!s_.adaptive_armed || sv_.adaptive == nullptr) return skipped;
        ctx = inject_adaptive(std::move(ctx), *sv_.adaptive, cwes,
                              [&](const Cwe& c) { skipped.push_back(c.str()); });
        return skipped;
    }

    Exchange ask(const std::string& purpose, const PromptVariant& variant, RenderContext ctx) {
        RenderedPrompt p = sv_.templates->render(variant, ctx);
        Exchange ex{purpose, {{"system", p.system}, {"user", p.user}}, {}};
        try {
            ex.reply = complete(ex);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::TokenBudgetExceeded) throw;
            if (!shrink(ctx, variant)) throw;
            p = sv_.templates->render(variant, ctx);
            ex.messages = {{"system", p.system}, {"user", p.user}};
            ex.reply = complete(ex);
        }
        return ex;
    }

    /// Parses a reply; on a format failure sends one reminder and parses again.
    template <class T, class Parse>
    T parse_with_reminder(Exchange& ex, const char* reminder, Parse parse,
                          const std::function<json(const T&)>& describe) {
        try {
            T value = parse(ex.reply);
            log_parse(ex.purpose, true, describe(value), false, "");
            return value;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Unparseable && e.kind() != ErrorKind::NoCodeBlock) throw;
            log_parse(ex.purpose, false, json(), true, e.what());
        }
        ex.messages.push_back({"assistant", ex.reply});
        ex.messages.push_back({"user", reminder});
        ex.reply = complete(ex);
        try {
            T value = parse(ex.reply);
            log_parse(ex.purpose, true, describe(value), false, "");
            return value;
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::Unparseable && e.kind() != ErrorKind::NoCodeBlock) throw;
            log_parse(ex.purpose, false, json(), false, e.what());
            throw;
        }
    }

    Identification identify(const std::string& purpose, const PromptVariant& variant,
                            RenderContext ctx) {
        Exchange ex = ask(purpose, variant, std::move(ctx));
        return parse_with_reminder<Identification>(
            ex, kIdentifyReminder, [](const std::string& r) { return parse_identification(r); },
            [](const Identification& id) {
                json reports = json::array();
                if (!id.clean()) {
                    for (const auto& r : id.reports()) reports.push_back(report_json(r));
                }
                json out{{"clean", id.clean()}, {"reports", reports}};
                out["self_reported_score"] =
                    id.self_reported_score ? json(*id.self_reported_score) : json();
                return out;
            });
    }

    FixReport fix(const std::string& purpose, const PromptVariant& variant, RenderContext ctx) {
        Exchange ex = ask(purpose, variant, std::move(ctx));
        const int fallback = s_.score.current();
        const Language lang = c_.target_language;
        return parse_with_reminder<FixReport>(
            ex, kCodeReminder,
            [fallback, lang](const std::string& r) { return parse_fix(r, fallback, lang); },
            [](const FixReport& f) {
                json fixed = json::array();
                for (const auto& i : f.fixed_list) {
                    fixed.push_back({{"cwe", i.cwe.str()}, {"description", i.description}});
                }
                return json{{"fixed_list", fixed},
                            {"original_score", f.original_score},
                            {"updated_score", f.updated_score},
                            {"scores_inferred", f.scores_inferred},
                            {"lineage", f.fixed_code.lineage},
                            {"code_digest", sha256_hex(f.fixed_code.source)}};
            });
    }

    CodeArtifact code_reply(const std::string& purpose, const PromptVariant& variant,
                            RenderContext ctx) {
        Exchange ex = ask(purpose, variant, std::move(ctx));
        const Language lang = c_.target_language;
        return parse_with_reminder<CodeArtifact>(
            ex, kCodeReminder, [lang](const std::string& r) { return extract_code(r, lang); },
            [](const CodeArtifact& a) {
                return json{{"lineage", a.lineage}, {"code_digest", sha256_hex(a.source)}};
            });
    }

    void settle(const std::vector<Cwe>& found) {
        if (!s_.settlement) return;
        const auto events = s_.score.settle_round(s_.settlement->iteration,
                                                  s_.settlement->claimed, found);
        for (const auto& e : events) {
            log_entry(sv_, EntryKind::ScoreEvent,
                      json{{"iteration", e.iteration},
                           {"kind", std::string(to_string(e.kind))},
                           {"cwe", e.cwe ? json(e.cwe->str()) : json()},
                           {"delta", e.delta},
                           {"current", s_.score.current()}});
        }
        s_.settlement.reset();
    }

    /// Installs new code from a fix round and counts the iteration.
    void adopt(CodeArtifact code, const std::string& round, std::vector<Cwe> claimed) {
        const int version = s_.current_code.version + 1;
        code.version = version;
        code.language = c_.target_language;
        code.lineage = "fix:" + round + ":" + code.lineage;
        s_.current_code = std::move(code);
        ++s_.iteration;
        ++s_.total_iterations;
        s_.history.push_back({s_.total_iterations, s_.escalation_level, round, claimed,
                              sha256_hex(s_.current_code.source), s_.temperature});
        snapshot(sv_, s_.current_code, round);
    }

private:
    std::string complete(const Exchange& ex) {
        ModelRequest req;
        req.messages = ex.messages;
        req.temperature = s_.temperature;
        req.max_output_tokens = c_.max_output_tokens;
        const std::string purpose = ex.purpose;
        const RunServices& sv = sv_;
        const auto observer = [&sv, &purpose](const CallRecord& rec) {
            json payload{{"purpose", purpose},
                         {"request", rec.request.to_json()},
                         {"request_digest", rec.request_digest},
                         {"temperature", rec.request.temperature},
                         {"estimated_tokens", rec.estimated_tokens},
                         {"retries", rec.retries},
                         {"reached_provider", rec.reached_provider}};
            if (rec.reply) {
                payload["reply"] = rec.reply->text;
                payload["reply_digest"] = rec.reply_digest;
                payload["tokens_in"] = rec.reply->tokens_in;
                payload["tokens_out"] = rec.reply->tokens_out;
                payload["latency_ms"] = rec.reply->latency.count();
                payload["provider"] = rec.reply->provider;
            } else {
                payload["reply"] = nullptr;
                payload["error_kind"] = rec.error_kind ? std::string(to_string(*rec.error_kind)) : "";
                payload["error"] = rec.error;
            }
            log_entry(sv, EntryKind::ModelCall, std::move(payload));
        };
        return sv_.gateway->complete(req, observer).text;
    }

    /// Drops the least important context until the estimate fits. Returns
    /// false when nothing could be dropped.
    bool shrink(RenderContext& ctx, const PromptVariant& variant) const {
        const auto fits = [&] {
            const auto p = sv_.templates->render(variant, ctx);
            return estimate_tokens(p.system) + estimate_tokens(p.user) <= c_.provider.token_limit;
        };
        bool changed = false;
        while (!fits()) {
            if (!ctx.adaptive_examples.empty()) {
                ctx.adaptive_examples.erase(ctx.adaptive_examples.begin());
            } else if (ctx.vuln_reports.size() > 1) {
                ctx.vuln_reports.erase(ctx.vuln_reports.begin());
            } else if (ctx.analyzer_findings.size() > 1) {
                ctx.analyzer_findings.erase(ctx.analyzer_findings.begin());
            } else if (ctx.fixed_history.size() > 1) {
                ctx.fixed_history.erase(ctx.fixed_history.begin());
            } else {
                break;
            }
            changed = true;
        }
        return changed;
    }

    void log_parse(const std::string& purpose, bool ok, json detail, bool reprompt,
                   const std::string& error) {
        json payload{{"purpose", purpose}, {"ok", ok}};
        if (ok) {
            payload["result"] = std::move(detail);
        } else {
            payload["error"] = error;
            payload["reprompt"] = reprompt;
        }
        log_entry(sv_, EntryKind::ParseResult, std::move(payload));
    }

    RunState& s_;
    const RunConfig& c_;
    const RunServices& sv_;
};

void step_generate(RunState& s, const RunConfig& c, const RunServices& sv) {
    Step step(s, c, sv);
    RenderContext ctx = step.context();
    CodeArtifact code = step.code_reply("generate", PromptVariant{TemplateId::GenWrapper_P1}, ctx);
    code.version = 0;
    code.language = c.target_language;
    code.lineage = "generated:" + code.lineage;
    s.current_code = std::move(code);
    snapshot(sv, s.current_code, "generated");
    move_to(s, Stage::S2_Identify, sv);
}

/// Routes a non-clean identification to a fix round, or ends the run when
/// the budget is spent.
void route_reports(RunState& s, const RunConfig& c, const RunServices& sv,
                   std::vector<VulnReport> reports) {
    if (s.iteration >= c.max_iterations) {
        finish(s, TerminationKind::BudgetExhausted,
               std::to_string(reports.size()) + " vulnerabilities still reported after " +
                   std::to_string(s.iteration) + " iterations",
               sv);
        return;
    }
    s.pending_vulns = std::move(reports);
    move_to(s, Stage::S2_Fix, sv);
}

void step_identify(RunState& s, const RunConfig& c, const RunServices& sv) {
    Step step(s, c, sv);
    const TemplateId id = s.identified_once ? TemplateId::IdentifyPrime_P2p : TemplateId::Identify_P2;
    const Identification result =
        step.identify(s.identified_once ? "identify-prime" : "identify", PromptVariant{id, c.ep_enabled},
                      step.context());
    s.identified_once = true;
    const std::vector<Cwe> found = result.clean() ? std::vector<Cwe>{} : cwes_of(result.reports());
    step.settle(found);
    if (result.clean()) {
        if (c.crosscheck_enabled) {
            move_to(s, Stage::S3_Crosscheck, sv);
        } else {
            finish(s, TerminationKind::SecureConfirmed, "model verdict clean", sv);
        }
        return;
    }
    route_reports(s, c, sv, result.reports());
}

void step_fix(RunState& s, const RunConfig& c, const RunServices& sv) {
    Step step(s, c, sv);
    RenderContext ctx = step.context();
    ctx.vuln_reports = s.pending_vulns;
    const json skipped = step.arm_examples(ctx, cwes_of(s.pending_vulns));
    FixReport fix = step.fix("fix", step.fix_variant(TemplateId::Fix_P3), ctx);

    std::vector<FixedItem> fixed = fix.fixed_list;
    if (fixed.empty()) {
        for (const auto& r : s.pending_vulns) fixed.push_back({r.cwe, r.vuln_type});
    }
    std::vector<Cwe> claimed = cwes_of(fixed);
    step.adopt(std::move(fix.fixed_code), "S2_Fix", claimed);
    s.settlement = PendingSettlement{s.iteration, claimed};
    s.last_fixed = std::move(fixed);
    s.pending_vulns.clear();
    json extra = json::object();
    if (!skipped.empty()) extra["adaptive_skipped"] = skipped;
    move_to(s, Stage::S2_Identify, sv, extra);
}

json scan_payload(const std::string& outcome, const CodeArtifact& code) {
    return json{{"outcome", outcome},
                {"code_digest", sha256_hex(code.source)},
                {"findings", json::array()},
                {"build", {{"success", outcome != "build_failed"}, {"compiler_log", ""}}},
                {"detail", ""}};
}

void step_crosscheck(RunState& s, const RunConfig& c, const RunServices& sv) {
    if (sv.analyzer == nullptr) {
        throw Error(ErrorKind::InvalidConfig, "cross-check enabled but no analyzer configured");
    }
    ++s.analyzer_invocations;
    AnalyzerReport report;
    try {
        report = sv.analyzer->scan(s.current_code);
    } catch (const BuildFailedError& b) {
        json payload = scan_payload("build_failed", s.current_code);
        payload["build"]["compiler_log"] = b.compiler_log();
        log_entry(sv, EntryKind::AnalyzerScan, std::move(payload));
        ++s.consecutive_build_failures;
        if (s.consecutive_build_failures > 2) {
            finish(s, TerminationKind::BuildFailureFinal,
                   "build still failing after 2 header-repair rounds", sv);
            return;
        }
        if (s.iteration >= c.max_iterations) {
            finish(s, TerminationKind::BudgetExhausted, "build failing with no budget left", sv);
            return;
        }
        Step step(s, c, sv);
        RenderContext ctx = step.context();
        ctx.compiler_log = b.compiler_log();
        CodeArtifact repaired =
            step.code_reply("header-repair", PromptVariant{TemplateId::HeaderRepair}, ctx);
        step.adopt(std::move(repaired), "HeaderRepair", {});
        move_to(s, Stage::S3_Crosscheck, sv, json{{"reason", "header-repair"}});
        return;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::AnalyzerCrashed && e.kind() != ErrorKind::Timeout &&
            e.kind() != ErrorKind::MalformedSarif) {
            throw;
        }
        json payload = scan_payload(e.kind() == ErrorKind::Timeout ? "timeout" : "crashed",
                                    s.current_code);
        payload["detail"] = e.what();
        log_entry(sv, EntryKind::AnalyzerScan, std::move(payload));
        finish(s, TerminationKind::AnalyzerFailure, e.what(), sv);
        return;
    }

    s.consecutive_build_failures = 0;
    json payload = scan_payload("report", s.current_code);
    for (const auto& f : report.findings) payload["findings"].push_back(finding_json(f));
    payload["build"]["compiler_log"] = report.build.compiler_log;
    const std::size_t total = report.findings.size();
    std::vector<AnalyzerFinding> capped = cap_findings(report.findings, c.findings_cap);
    if (capped.size() < total) payload["capped_to"] = capped.size();
    log_entry(sv, EntryKind::AnalyzerScan, std::move(payload));

    if (report.findings.empty() && report.build.success) {
        finish(s, TerminationKind::SecureConfirmed, "analyzer report empty", sv);
        return;
    }
    if (report.findings.empty()) {
        finish(s, TerminationKind::AnalyzerFailure, "analyzer reported a failed build", sv);
        return;
    }
    if (s.iteration >= c.max_iterations) {
        finish(s, TerminationKind::BudgetExhausted,
               std::to_string(total) + " analyzer findings remain after " +
                   std::to_string(s.iteration) + " iterations",
               sv);
        return;
    }
    s.pending_findings = std::move(capped);
    move_to(s, Stage::S3_Refix, sv);
}

void step_refix(RunState& s, const RunConfig& c, const RunServices& sv) {
    Step step(s, c, sv);
    RenderContext ctx = step.context();
    ctx.analyzer_findings = s.pending_findings;
    const json skipped = step.arm_examples(ctx, cwes_of(s.pending_findings));
    FixReport fix = step.fix("refix", step.fix_variant(TemplateId::FixPrime_P3p), ctx);

    std::vector<FixedItem> fixed = fix.fixed_list;
    if (fixed.empty()) {
        for (const auto& f : s.pending_findings) {
            if (f.cwes.empty()) {
                fixed.push_back({Cwe{}, f.rule_id + ": " + f.message});
            } else {
                for (const auto& cwe : f.cwes) fixed.push_back({cwe, f.message});
            }
        }
    }
    std::vector<Cwe> claimed = cwes_of(fixed);
    step.adopt(std::move(fix.fixed_code), "S3_Refix", claimed);
    s.settlement = PendingSettlement{s.iteration, claimed};
    s.last_fixed = std::move(fixed);
    s.pending_findings.clear();
    json extra = json::object();
    if (!skipped.empty()) extra["adaptive_skipped"] = skipped;
    move_to(s, Stage::S3_Recheck, sv, extra);
}

void step_recheck(RunState& s, const RunConfig& c, const RunServices& sv) {
    Step step(s, c, sv);
    RenderContext ctx = step.context();
    ctx.fixed_history = s.last_fixed;
    const Identification result =
        step.identify("recheck", PromptVariant{TemplateId::Recheck_P4, c.ep_enabled}, ctx);
    const std::vector<Cwe> found = result.clean() ? std::vector<Cwe>{} : cwes_of(result.reports());
    step.settle(found);
    if (result.clean()) {
        move_to(s, Stage::S3_Crosscheck, sv);
        return;
    }
    route_reports(s, c, sv, result.reports());
}

std::optional<TerminationKind> termination_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::ProviderFailure:
        case ErrorKind::ScriptExhausted:
        case ErrorKind::TokenBudgetExceeded:
            return TerminationKind::ProviderFailure;
        case ErrorKind::Unparseable:
        case ErrorKind::NoCodeBlock:
            return TerminationKind::ParseFailure;
        case ErrorKind::AnalyzerCrashed:
        case ErrorKind::Timeout:
        case ErrorKind::MalformedSarif:
            return TerminationKind::AnalyzerFailure;
        default:
            return std::nullopt;
    }
}

RunOutcome collect(const RunState& s, const RunServices& sv) {
    RunOutcome out;
    out.run_id = sv.log ? sv.log->run_id() : std::string();
    out.final_code = s.current_code;
    out.termination = s.termination.value_or(TerminationReason{});
    out.iterations = s.history;
    out.total_iterations = s.total_iterations;
    out.analyzer_invocations = s.analyzer_invocations;
    out.score = s.score.current();
    if (sv.log) out.transitions = transitions_from_log(sv.log->entries());
    return out;
}

RunOutcome drive(RunState state, const RunConfig& config, const RunServices& services) {
    while (true) {
        while (state.stage != Stage::Done) state = advance(std::move(state), config, services);
        if (!can_escalate(state, config)) break;
        state = escalate(std::move(state), config, services);
    }
    const TerminationReason& t = *state.termination;
    log_entry(services, EntryKind::Termination,
              json{{"kind", std::string(to_string(t.kind))},
                   {"detail", t.detail},
                   {"final_code_digest", sha256_hex(state.current_code.source)},
                   {"total_iterations", state.total_iterations},
                   {"escalation_level", state.escalation_level},
                   {"score", state.score.current()},
                   {"analyzer_invocations", state.analyzer_invocations}});
    return collect(state, services);
}

void check_services(const RunServices& sv) {
    if (sv.gateway == nullptr || sv.templates == nullptr) {
        throw Error(ErrorKind::InvalidArgument, "run needs a gateway and a template library");
    }
}

json analyzer_to_json(const AnalyzerProfile& a) {
    json fallback = json::object();
    for (const auto& [rule, cwes] : a.fallback_map) fallback[rule] = cwe_list(cwes);
    return json{{"kind", a.kind == AnalyzerKind::CodeQL ? "codeql" : "offline"},
                {"executable_path", a.executable_path.string()},
                {"query_suite", a.query_suite},
                {"language_packs", a.language_packs},
                {"scan_timeout_ms", a.scan_timeout.count()},
                {"compile_check", a.compile_check},
                {"c_compiler", a.c_compiler},
                {"cpp_compiler", a.cpp_compiler},
                {"keep_workspace", a.keep_workspace},
                {"fallback_map", fallback}};
}

AnalyzerProfile analyzer_from_json(const json& j) {
    AnalyzerProfile a;
    const std::string kind = j.value("kind", std::string("offline"));
    if (kind == "codeql") a.kind = AnalyzerKind::CodeQL;
    else if (kind == "offline") a.kind = AnalyzerKind::OfflinePattern;
    else throw Error(ErrorKind::InvalidConfig, "unknown analyzer kind '" + kind + "'");
    a.executable_path = j.value("executable_path", std::string());
    a.query_suite = j.value("query_suite", std::string());
    a.language_packs = j.value("language_packs", std::vector<std::string>{});
    a.scan_timeout = std::chrono::milliseconds(
        j.value("scan_timeout_ms", static_cast<std::int64_t>(a.scan_timeout.count())));
    a.compile_check = j.value("compile_check", a.compile_check);
    a.c_compiler = j.value("c_compiler", a.c_compiler);
    a.cpp_compiler = j.value("cpp_compiler", a.cpp_compiler);
    a.keep_workspace = j.value("keep_workspace", a.keep_workspace);
    if (auto fm = j.find("fallback_map"); fm != j.end() && fm->is_object()) {
        for (const auto& [rule, cwes] : fm->items()) {
            std::vector<Cwe> list;
            for (const auto& c : cwes) list.push_back(Cwe::from(c.get<std::string>()));
            a.fallback_map[rule] = std::move(list);
        }
    }
    return a;
}

}  // namespace

std::string_view to_string(Stage stage) { return kStageNames[static_cast<int>(stage)]; }

std::optional<Stage> parse_stage(std::string_view text) {
    for (std::size_t i = 0; i < std::size(kStageNames); ++i) {
        if (kStageNames[i] == text) return static_cast<Stage>(i);
    }
    return std::nullopt;
}

std::string_view to_string(TerminationKind kind) {
    return kTerminationNames[static_cast<int>(kind)];
}

std::optional<TerminationKind> parse_termination_kind(std::string_view text) {
    for (std::size_t i = 0; i < std::size(kTerminationNames); ++i) {
        if (kTerminationNames[i] == text) return static_cast<TerminationKind>(i);
    }
    return std::nullopt;
}

bool is_legal_edge(Stage from, Stage to) {
    using S = Stage;
    if (from == S::Done) return to == S::S2_Identify;
    if (to == S::Done) return true;
    switch (from) {
        case S::S1_Generate: return to == S::S2_Identify;
        case S::S2_Identify: return to == S::S2_Fix || to == S::S3_Crosscheck;
        case S::S2_Fix: return to == S::S2_Identify;
        case S::S3_Crosscheck: return to == S::S3_Refix || to == S::S3_Crosscheck;
        case S::S3_Refix: return to == S::S3_Recheck;
        case S::S3_Recheck: return to == S::S3_Crosscheck || to == S::S2_Fix;
        case S::Done: return false;
    }
    return false;
}

void RunConfig::validate() const {
    const auto bad = [](const std::string& m) { throw Error(ErrorKind::InvalidConfig, m); };
    if (max_iterations < 1) bad("max_iterations must be >= 1");
    if (temperature_initial < 0.0 || temperature_initial > 2.0) {
        bad("temperature_initial must be in [0, 2]");
    }
    if (temperature_step <= 0.0) bad("temperature_step must be > 0");
    if (temperature_initial > temperature_cap + kEps) bad("temperature_initial exceeds temperature_cap");
    if (temperature_cap > provider.temperature_cap + kEps) {
        bad("temperature_cap exceeds the provider's temperature limit");
    }
    if (max_output_tokens < 1) bad("max_output_tokens must be >= 1");
    if (findings_cap < 1) bad("findings_cap must be >= 1");
    provider.validate();
    if (crosscheck_enabled) analyzer.validate();
}

int RunConfig::escalation_levels() const {
    if (!escalation_enabled) return 0;
    int levels = 0;
    double t = temperature_initial;
    while (t + kEps < temperature_cap) {
        t = std::min(temperature_cap, round_temp(t + temperature_step));
        ++levels;
    }
    if (!adaptive_enabled) ++levels;
    return levels;
}

int RunConfig::max_total_iterations() const { return max_iterations * (1 + escalation_levels()); }

json RunConfig::to_json() const {
    return json{{"provider", provider.to_json()},
                {"target_language", std::string(to_string(target_language))},
                {"max_iterations", max_iterations},
                {"temperature_initial", temperature_initial},
                {"temperature_step", temperature_step},
                {"temperature_cap", temperature_cap},
                {"ep_enabled", ep_enabled},
                {"crosscheck_enabled", crosscheck_enabled},
                {"adaptive_enabled", adaptive_enabled},
                {"escalation_enabled", escalation_enabled},
                {"strategy", std::string(to_string(strategy))},
                {"analyzer", analyzer_to_json(analyzer)},
                {"max_output_tokens", max_output_tokens},
                {"findings_cap", findings_cap}};
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    try {
        if (j.contains("provider")) c.provider = ProviderProfile::from_json(j.at("provider"));
        if (j.contains("target_language")) {
            const auto lang = parse_language(j.at("target_language").get<std::string>());
            if (!lang) throw Error(ErrorKind::InvalidConfig, "unknown target_language");
            c.target_language = *lang;
        }
        c.max_iterations = j.value("max_iterations", c.max_iterations);
        c.temperature_initial = j.value("temperature_initial", c.temperature_initial);
        c.temperature_step = j.value("temperature_step", c.temperature_step);
        c.temperature_cap = j.value("temperature_cap", c.temperature_cap);
        c.ep_enabled = j.value("ep_enabled", c.ep_enabled);
        c.crosscheck_enabled = j.value("crosscheck_enabled", c.crosscheck_enabled);
        c.adaptive_enabled = j.value("adaptive_enabled", c.adaptive_enabled);
        c.escalation_enabled = j.value("escalation_enabled", c.escalation_enabled);
        if (j.contains("strategy")) {
            const auto s = parse_strategy(j.at("strategy").get<std::string>());
            if (!s) throw Error(ErrorKind::InvalidConfig, "unknown strategy");
            c.strategy = *s;
        }
        if (j.contains("analyzer")) c.analyzer = analyzer_from_json(j.at("analyzer"));
        c.max_output_tokens = j.value("max_output_tokens", c.max_output_tokens);
        c.findings_cap = j.value("findings_cap", c.findings_cap);
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, std::string("run config: ") + e.what());
    }
    return c;
}

RunState initial_state(const std::string& nl_prompt, const RunConfig& config) {
    RunState s;
    s.stage = Stage::S1_Generate;
    s.nl_prompt = nl_prompt;
    s.temperature = config.temperature_initial;
    s.adaptive_armed = config.adaptive_enabled;
    s.current_code.language = config.target_language;
    return s;
}

RunState initial_fix_state(const CodeArtifact& code, const RunConfig& config) {
    RunState s = initial_state("", config);
    s.stage = Stage::S2_Identify;
    s.current_code = code;
    s.current_code.language = config.target_language;
    s.current_code.version = 0;
    if (s.current_code.lineage.empty()) s.current_code.lineage = "ground-truth";
    return s;
}

RunState advance(RunState state, const RunConfig& config, const RunServices& services) {
    check_services(services);
    if (state.stage == Stage::Done) {
        throw Error(ErrorKind::InvalidArgument, "advance called on a finished run");
    }
    if (services.abort && services.abort->load()) {
        finish(state, TerminationKind::UserAbort, "aborted by user", services);
        return state;
    }
    try {
        switch (state.stage) {
            case Stage::S1_Generate: step_generate(state, config, services); break;
            case Stage::S2_Identify: step_identify(state, config, services); break;
            case Stage::S2_Fix: step_fix(state, config, services); break;
            case Stage::S3_Crosscheck: step_crosscheck(state, config, services); break;
            case Stage::S3_Refix: step_refix(state, config, services); break;
            case Stage::S3_Recheck: step_recheck(state, config, services); break;
            case Stage::Done: break;
        }
    } catch (const Error& e) {
        const auto kind = termination_for(e.kind());
        if (!kind) throw;
        finish(state, *kind, std::string(to_string(e.kind())) + ": " + e.what(), services);
    }
    return state;
}

bool can_escalate(const RunState& state, const RunConfig& config) {
    if (!config.escalation_enabled || state.stage != Stage::Done || !state.termination ||
        state.termination->kind != TerminationKind::BudgetExhausted) {
        return false;
    }
    return state.temperature + kEps < config.temperature_cap || !state.adaptive_armed;
}

RunState escalate(RunState state, const RunConfig& config, const RunServices& services) {
    if (!can_escalate(state, config)) return state;
    json info;
    if (state.temperature + kEps < config.temperature_cap) {
        state.temperature =
            std::min(config.temperature_cap, round_temp(state.temperature + config.temperature_step));
        info = {{"action", "temperature"}, {"temperature", state.temperature}};
    } else {
        state.adaptive_armed = true;
        info = {{"action", "adaptive"}, {"temperature", state.temperature}};
    }
    ++state.escalation_level;
    info["level"] = state.escalation_level;
    state.iteration = 0;
    state.termination.reset();
    state.pending_vulns.clear();
    state.pending_findings.clear();
    state.settlement.reset();
    state.consecutive_build_failures = 0;
    move_to(state, Stage::S2_Identify, services, json{{"escalation", info}});
    return state;
}

RunOutcome execute_run(const std::string& nl_prompt, const RunConfig& config,
                       const RunServices& services) {
    if (trim(nl_prompt).empty()) throw Error(ErrorKind::InvalidArgument, "empty prompt");
    config.validate();
    check_services(services);
    RunLog local("run");
    RunServices sv = services;
    if (sv.log == nullptr) sv.log = &local;
    sv.log->append(EntryKind::RunStart, json{{"mode", "generate"},
                                             {"nl_prompt", nl_prompt},
                                             {"config", config.to_json()}});
    return drive(initial_state(nl_prompt, config), config, sv);
}

RunOutcome execute_fix_run(const CodeArtifact& code, const RunConfig& config,
                           const RunServices& services) {
    if (code.source.empty()) throw Error(ErrorKind::InvalidArgument, "empty code");
    config.validate();
    check_services(services);
    RunLog local("run");
    RunServices sv = services;
    if (sv.log == nullptr) sv.log = &local;
    RunState state = initial_fix_state(code, config);
    sv.log->append(EntryKind::RunStart, json{{"mode", "fix"},
                                             {"code", state.current_code.source},
                                             {"lineage", state.current_code.lineage},
                                             {"config", config.to_json()}});
    snapshot(sv, state.current_code, "ground-truth");
    return drive(std::move(state), config, sv);
}

std::vector<TransitionRecord> transitions_from_log(const std::vector<RunLogEntry>& entries) {
    std::vector<TransitionRecord> out;
    for (const auto& e : entries) {
        if (e.kind != EntryKind::Transition) continue;
        const auto from = parse_stage(e.payload.value("from", std::string()));
        const auto to = parse_stage(e.payload.value("to", std::string()));
        if (!from || !to) throw Error(ErrorKind::LogCorrupt, "transition with unknown stage");
        out.push_back({*from, *to});
    }
    return out;
}

}  // namespace vulnloop
