#include "vulnloop/replay.hpp"

#include <deque>

namespace vulnloop {

using nlohmann::json;

namespace {

ErrorKind error_kind_named(const std::string& name) {
    for (int i = 0; i <= static_cast<int>(ErrorKind::DivergenceDetected); ++i) {
        const auto kind = static_cast<ErrorKind>(i);
        if (to_string(kind) == name) return kind;
    }
    return ErrorKind::ProviderFailure;
}

class ReplayProvider : public ModelProvider {
public:
    explicit ReplayProvider(std::deque<json> calls) : calls_(std::move(calls)) {}

    ModelReply send(const ModelRequest& request) override {
        if (calls_.empty()) {
            throw Error(ErrorKind::DivergenceDetected, "replay issued more model calls than recorded");
        }
        const json call = std::move(calls_.front());
        calls_.pop_front();
        if (call.value("request_digest", std::string()) != request.digest()) {
            throw Error(ErrorKind::DivergenceDetected,
                        "request digest differs from recording (" +
                            call.value("purpose", std::string("?")) + ")");
        }
        const auto& reply = call.at("reply");
        if (reply.is_null()) {
            throw Error(error_kind_named(call.value("error_kind", std::string())),
                        call.value("error", std::string("recorded failure")));
        }
        ModelReply out;
        out.text = reply.get<std::string>();
        out.tokens_in = call.value("tokens_in", std::int64_t{0});
        out.tokens_out = call.value("tokens_out", std::int64_t{0});
        out.provider = "replay";
        return out;
    }

    std::string name() const override { return "replay"; }
    std::size_t remaining() const { return calls_.size(); }

private:
    std::deque<json> calls_;
};

ScriptedScan scan_from(const json& payload) {
    ScriptedScan s;
    const std::string outcome = payload.at("outcome").get<std::string>();
    if (outcome == "report") {
        s.kind = ScriptedScan::Kind::Report;
        for (const auto& f : payload.at("findings")) {
            AnalyzerFinding af;
            af.rule_id = f.at("rule_id").get<std::string>();
            for (const auto& c : f.at("cwes")) af.cwes.push_back(Cwe::from(c.get<std::string>()));
            af.message = f.at("message").get<std::string>();
            af.file = f.value("file", std::string());
            af.start_line = f.value("start_line", 1);
            af.end_line = f.value("end_line", af.start_line);
            af.severity = f.value("severity", std::string());
            s.report.findings.push_back(std::move(af));
        }
        s.report.build.success = payload.at("build").value("success", true);
        s.report.build.compiler_log = payload.at("build").value("compiler_log", std::string());
    } else if (outcome == "build_failed") {
        s.kind = ScriptedScan::Kind::BuildFailed;
        s.detail = payload.at("build").value("compiler_log", std::string());
    } else if (outcome == "timeout") {
        s.kind = ScriptedScan::Kind::Timeout;
        s.detail = payload.value("detail", std::string());
    } else if (outcome == "crashed") {
        s.kind = ScriptedScan::Kind::Crashed;
        s.detail = payload.value("detail", std::string());
    } else {
        throw Error(ErrorKind::LogCorrupt, "unknown analyzer outcome '" + outcome + "'");
    }
    return s;
}

}  // namespace

RunOutcome replay_entries(const std::vector<RunLogEntry>& entries, const TemplateLibrary& templates,
                          const AdaptiveStore& adaptive) {
    if (entries.empty() || entries.front().kind != EntryKind::RunStart) {
        throw Error(ErrorKind::LogCorrupt, "log does not begin with a RunStart entry");
    }
    if (entries.back().kind != EntryKind::Termination) {
        throw Error(ErrorKind::LogCorrupt, "log has no Termination entry");
    }

    std::deque<json> calls;
    std::deque<json> scans;
    try {
        for (const auto& e : entries) {
            if (e.kind == EntryKind::ModelCall && e.payload.value("reached_provider", false)) {
                calls.push_back(e.payload);
            } else if (e.kind == EntryKind::AnalyzerScan) {
                scans.push_back(e.payload);
            }
        }
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::LogCorrupt, ex.what());
    }

    const json& start = entries.front().payload;
    RunConfig config;
    try {
        config = RunConfig::from_json(start.at("config"));
    } catch (const json::exception& ex) {
        throw Error(ErrorKind::LogCorrupt, std::string("RunStart config: ") + ex.what());
    }
    config.provider.kind = ProviderKind::Mock;
    config.provider.max_retries = 0;
    config.analyzer.kind = AnalyzerKind::OfflinePattern;

    auto provider = std::make_shared<ReplayProvider>(std::move(calls));
    Gateway gateway(config.provider, provider, [](std::chrono::milliseconds) {});
    ScriptedAnalyzer analyzer(
        [&scans](const CodeArtifact& code) {
            if (scans.empty()) {
                throw Error(ErrorKind::DivergenceDetected,
                            "replay issued more analyzer scans than recorded");
            }
            const json scan = std::move(scans.front());
            scans.pop_front();
            if (scan.value("code_digest", std::string()) != sha256_hex(code.source)) {
                throw Error(ErrorKind::DivergenceDetected, "scanned code differs from recording");
            }
            return scan_from(scan);
        },
        "replay");

    RunLog sink(entries.front().run_id + ".replay");
    RunServices services;
    services.gateway = &gateway;
    services.analyzer = &analyzer;
    services.templates = &templates;
    services.adaptive = &adaptive;
    services.log = &sink;

    RunOutcome outcome;
    const std::string mode = start.value("mode", std::string("generate"));
    if (mode == "generate") {
        outcome = execute_run(start.at("nl_prompt").get<std::string>(), config, services);
    } else if (mode == "fix") {
        CodeArtifact code;
        code.source = start.at("code").get<std::string>();
        code.language = config.target_language;
        code.lineage = start.value("lineage", std::string("ground-truth"));
        outcome = execute_fix_run(code, config, services);
    } else {
        throw Error(ErrorKind::LogCorrupt, "unknown run mode '" + mode + "'");
    }
    outcome.run_id = entries.front().run_id;

    const auto recorded = transitions_from_log(entries);
    if (recorded != outcome.transitions) {
        std::size_t i = 0;
        while (i < recorded.size() && i < outcome.transitions.size() &&
               recorded[i] == outcome.transitions[i]) {
            ++i;
        }
        throw Error(ErrorKind::DivergenceDetected,
                    "transition sequence diverges at transition " + std::to_string(i));
    }
    const std::string recorded_digest =
        entries.back().payload.value("final_code_digest", std::string());
    if (recorded_digest != sha256_hex(outcome.final_code.source)) {
        throw Error(ErrorKind::DivergenceDetected, "final code digest differs from recording");
    }
    if (provider->remaining() != 0 || !scans.empty()) {
        throw Error(ErrorKind::DivergenceDetected, "replay left recorded events unconsumed");
    }
    return outcome;
}

RunOutcome replay_run(const std::filesystem::path& runs_root, const std::string& run_id,
                      const TemplateLibrary& templates, const AdaptiveStore& adaptive) {
    return replay_entries(read_run_log(runs_root, run_id), templates, adaptive);
}

}  // namespace vulnloop
