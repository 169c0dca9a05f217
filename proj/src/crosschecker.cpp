#include "vulnloop/crosschecker.hpp"

#include "vulnloop/process.hpp"

#include <regex>
#include <set>

namespace vulnloop {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kMaxLogBytes = 16 * 1024;

std::string clip_log(std::string log) {
    if (log.size() > kMaxLogBytes) {
        log.resize(kMaxLogBytes);
        log += "\n[log truncated]";
    }
    return log;
}

std::string source_name(Language lang) { return "main." + std::string(file_extension(lang)); }

/// Writes the artifact into a fresh workspace: src/, db/, out/.
fs::path prepare_workspace(const TempDir& dir, const CodeArtifact& code) {
    fs::create_directories(dir.path() / "src");
    fs::create_directories(dir.path() / "db");
    fs::create_directories(dir.path() / "out");
    const fs::path src = dir.path() / "src" / source_name(code.language);
    write_file(src.string(), code.source);
    return src;
}

std::vector<std::string> compile_command(const CodeArtifact& code, const fs::path& src,
                                         const fs::path& binary, const AnalyzerProfile& profile) {
    if (code.language == Language::Cpp) {
        return {profile.cpp_compiler, "-std=c++17", "-Wall", "-o", binary.string(), src.string(),
                "-lm"};
    }
    return {profile.c_compiler, "-Wall", "-Werror=implicit-function-declaration", "-o",
            binary.string(), src.string(), "-lm"};
}

/// Strips a trailing line comment; string literals containing the marker are rare
/// enough in the fixed rule set to ignore.
std::string code_part(const std::string& line, Language lang) {
    const std::string marker = lang == Language::Python ? "#" : "//";
    const auto pos = line.find(marker);
    return pos == std::string::npos ? line : line.substr(0, pos);
}

std::string first_data_argument(const std::string& call_tail) {
    // call_tail starts right after the format literal's closing quote
    std::size_t i = 0;
    while (i < call_tail.size() && (call_tail[i] == ' ' || call_tail[i] == ',')) ++i;
    std::string arg;
    int depth = 0;
    for (; i < call_tail.size(); ++i) {
        const char c = call_tail[i];
        if (c == '(') ++depth;
        if (c == ')') {
            if (depth == 0) break;
            --depth;
        }
        if (c == ',' && depth == 0) break;
        arg.push_back(c);
    }
    return trim(arg);
}

}  // namespace

void AnalyzerProfile::validate() const {
    if (kind == AnalyzerKind::CodeQL) {
        if (executable_path.empty() || !fs::exists(executable_path)) {
            throw Error(ErrorKind::InvalidConfig,
                        "CodeQL profile requires an existing executable_path, got '" +
                            executable_path.string() + "'");
        }
    }
    if (scan_timeout.count() <= 0) {
        throw Error(ErrorKind::InvalidConfig, "scan_timeout must be positive");
    }
}

std::unique_ptr<Analyzer> make_analyzer(const AnalyzerProfile& profile) {
    profile.validate();
    if (profile.kind == AnalyzerKind::CodeQL) return std::make_unique<CodeQlAnalyzer>(profile);
    return std::make_unique<OfflinePatternAnalyzer>(profile);
}

BuildOutcome compile_check(const CodeArtifact& code, const fs::path& workspace,
                           const AnalyzerProfile& profile) {
    BuildOutcome outcome;
    outcome.artifact_dir = (workspace / "out").string();
    if (!is_c_family(code.language)) return outcome;
    const fs::path src = workspace / "src" / source_name(code.language);
    fs::create_directories(workspace / "src");
    fs::create_directories(workspace / "out");
    write_file(src.string(), code.source);
    const auto cmd = compile_command(code, src, workspace / "out" / "a.out", profile);
    const auto res = run_process(cmd, workspace / "src", profile.scan_timeout);
    if (res.timed_out) throw Error(ErrorKind::Timeout, "compiler timed out");
    if (res.exit_code == 127 && res.output.find("exec failed") != std::string::npos) {
        throw Error(ErrorKind::AnalyzerCrashed, "compiler not found: " + cmd.front());
    }
    outcome.success = res.exit_code == 0;
    outcome.compiler_log = clip_log(res.output);
    if (!outcome.success && trim(outcome.compiler_log).empty()) {
        outcome.compiler_log = "compiler exited with status " + std::to_string(res.exit_code);
    }
    return outcome;
}

OfflinePatternAnalyzer::OfflinePatternAnalyzer(AnalyzerProfile profile)
    : profile_(std::move(profile)) {}

std::vector<AnalyzerFinding> OfflinePatternAnalyzer::match_patterns(const CodeArtifact& code,
                                                                    const std::string& file_name) {
    static const std::regex fixed_buffer(R"(\bchar\s+(\w+)\s*\[\s*\w+\s*\])");
    static const std::regex unbounded_scanf(R"re(\b(?:f?scanf)\s*\([^;]*"[^"]*%s)re");
    static const std::regex sprintf_call(R"re(\bsprintf\s*\(\s*(\w+)\s*,\s*"(?:[^"\\]|\\.)*")re");
    static const std::regex request_taint(R"(^\s*(\w+)\s*=.*\brequest\.)");
    static const std::regex eval_call(R"(\beval\s*\(([^)]*)\))");
    static const std::regex run_debug(R"(\.run\s*\(.*\bdebug\s*=\s*True)");
    static const std::regex debug_attr(R"(\b\w+\.debug\s*=\s*True)");

    std::vector<AnalyzerFinding> out;
    const auto lines = split_lines(code.source);
    const auto emit = [&](const char* rule, std::vector<Cwe> cwes, std::string message, int line,
                          const char* severity) {
        out.push_back({rule, std::move(cwes), std::move(message), file_name, line, line, severity});
    };

    if (is_c_family(code.language)) {
        std::set<std::string> buffers;
        for (const auto& raw : lines) {
            const std::string line = code_part(raw, code.language);
            for (auto it = std::sregex_iterator(line.begin(), line.end(), fixed_buffer);
                 it != std::sregex_iterator(); ++it) {
                buffers.insert((*it)[1].str());
            }
        }
        for (std::size_t i = 0; i < lines.size(); ++i) {
            const std::string line = code_part(lines[i], code.language);
            const int n = static_cast<int>(i + 1);
            if (std::regex_search(line, unbounded_scanf)) {
                emit("offline/unbounded-scanf", {Cwe::from("CWE-120"), Cwe::from("CWE-787")},
                     "Unbounded read with a %s conversion may overflow the destination buffer.", n,
                     "error");
            }
            std::smatch m;
            if (std::regex_search(line, m, sprintf_call) && buffers.contains(m[1].str())) {
                std::string source = first_data_argument(m.suffix().str());
                if (source.empty()) source = "a format string";
                emit("offline/sprintf-overflow", {Cwe::from("CWE-190"), Cwe::from("CWE-787")},
                     "This 'call to sprintf' with input from " + source +
                         " may overflow the destination.",
                     n, "error");
            }
        }
    } else {
        std::set<std::string> tainted;
        for (std::size_t i = 0; i < lines.size(); ++i) {
            const std::string line = code_part(lines[i], code.language);
            const int n = static_cast<int>(i + 1);
            std::smatch m;
            if (std::regex_search(line, m, request_taint)) tainted.insert(m[1].str());
            if (std::regex_search(line, m, eval_call)) {
                const std::string arg = m[1].str();
                bool from_request = arg.find("request.") != std::string::npos;
                for (const auto& t : tainted) {
                    if (std::regex_search(arg, std::regex("\\b" + t + "\\b"))) from_request = true;
                }
                if (from_request) {
                    emit("offline/eval-request-data", {Cwe::from("CWE-94"), Cwe::from("CWE-95")},
                         "This code execution depends on a user-provided value.", n, "error");
                }
            }
            if (std::regex_search(line, run_debug) || std::regex_search(line, debug_attr)) {
                emit("offline/flask-debug", {Cwe::from("CWE-215"), Cwe::from("CWE-489")},
                     "A Flask app appears to be run in debug mode. This may allow an attacker to "
                     "run arbitrary code through the debugger.",
                     n, "warning");
            }
        }
    }
    return out;
}

AnalyzerReport OfflinePatternAnalyzer::scan(const CodeArtifact& code) {
    TempDir ws("vulnloop-scan");
    if (profile_.keep_workspace) ws.keep();
    prepare_workspace(ws, code);
    AnalyzerReport report;
    report.build.artifact_dir = (ws.path() / "out").string();
    if (profile_.compile_check && is_c_family(code.language)) {
        report.build = compile_check(code, ws.path(), profile_);
        if (!report.build.success) throw BuildFailedError(report.build.compiler_log);
    }
    auto findings = match_patterns(code, "src/" + source_name(code.language));
    for (auto& f : findings) {
        if (f.cwes.empty()) f.cwes = map_rule_to_cwe(f.rule_id, {}, profile_.fallback_map);
    }
    report.findings = dedupe_findings(std::move(findings));
    return report;
}

CodeQlAnalyzer::CodeQlAnalyzer(AnalyzerProfile profile) : profile_(std::move(profile)) {}

std::vector<std::string> CodeQlAnalyzer::create_args(const CodeArtifact& code,
                                                     const fs::path& workspace) const {
    const std::string lang = is_c_family(code.language) ? "cpp" : "python";
    std::vector<std::string> args{profile_.executable_path.string(),
                                  "database",
                                  "create",
                                  (workspace / "db").string(),
                                  "--language=" + lang,
                                  "--source-root=" + (workspace / "src").string(),
                                  "--overwrite"};
    if (is_c_family(code.language)) {
        const fs::path src = workspace / "src" / source_name(code.language);
        std::string cmd;
        for (const auto& part : compile_command(code, src, workspace / "out" / "a.out", profile_)) {
            if (!cmd.empty()) cmd += ' ';
            cmd += part;
        }
        args.push_back("--command=" + cmd);
    }
    return args;
}

std::vector<std::string> CodeQlAnalyzer::analyze_args(const CodeArtifact& code,
                                                      const fs::path& workspace) const {
    const std::string lang = is_c_family(code.language) ? "cpp" : "python";
    const std::string suite_name =
        profile_.query_suite.empty() ? std::string("security-extended") : profile_.query_suite;
    std::string suite = suite_name;
    if (suite_name.find(':') == std::string::npos && suite_name.find('/') == std::string::npos &&
        suite_name.find(".qls") == std::string::npos) {
        suite = "codeql/" + lang + "-queries:codeql-suites/" + lang + "-" + suite_name + ".qls";
    }
    std::vector<std::string> args{profile_.executable_path.string(),
                                  "database",
                                  "analyze",
                                  (workspace / "db").string(),
                                  suite};
    for (const auto& pack : profile_.language_packs) args.push_back(pack);
    args.push_back("--format=sarif-latest");
    args.push_back("--output=" + (workspace / "out" / "results.sarif").string());
    return args;
}

AnalyzerReport CodeQlAnalyzer::scan(const CodeArtifact& code) {
    TempDir ws("vulnloop-codeql");
    if (profile_.keep_workspace) ws.keep();
    prepare_workspace(ws, code);

    AnalyzerReport report;
    report.build = compile_check(code, ws.path(), profile_);
    if (!report.build.success) throw BuildFailedError(report.build.compiler_log);

    const auto create = run_process(create_args(code, ws.path()), ws.path(), profile_.scan_timeout);
    if (create.timed_out) throw Error(ErrorKind::Timeout, "codeql database create timed out");
    if (create.exit_code != 0) {
        throw Error(ErrorKind::AnalyzerCrashed,
                    "codeql database create failed:\n" + clip_log(create.output));
    }
    const auto analyze =
        run_process(analyze_args(code, ws.path()), ws.path(), profile_.scan_timeout);
    if (analyze.timed_out) throw Error(ErrorKind::Timeout, "codeql database analyze timed out");
    if (analyze.exit_code != 0) {
        throw Error(ErrorKind::AnalyzerCrashed,
                    "codeql database analyze failed:\n" + clip_log(analyze.output));
    }
    const fs::path sarif = ws.path() / "out" / "results.sarif";
    if (!fs::exists(sarif)) throw Error(ErrorKind::AnalyzerCrashed, "codeql produced no SARIF");
    auto findings = parse_sarif(read_file(sarif.string()));
    for (auto& f : findings) f.cwes = map_rule_to_cwe(f.rule_id, f.cwes, profile_.fallback_map);
    report.findings = dedupe_findings(std::move(findings));
    return report;
}

ScriptedAnalyzer::ScriptedAnalyzer(Responder responder, std::string name)
    : responder_(std::move(responder)), name_(std::move(name)) {}

AnalyzerReport ScriptedAnalyzer::scan(const CodeArtifact& code) {
    ScriptedScan outcome;
    {
        std::lock_guard lock(mutex_);
        ++invocations_;
        outcome = responder_(code);
    }
    switch (outcome.kind) {
        case ScriptedScan::Kind::Report: return outcome.report;
        case ScriptedScan::Kind::BuildFailed:
            throw BuildFailedError(outcome.detail.empty() ? "build failed" : outcome.detail);
        case ScriptedScan::Kind::Crashed:
            throw Error(ErrorKind::AnalyzerCrashed, outcome.detail.empty() ? "crashed" : outcome.detail);
        case ScriptedScan::Kind::Timeout:
            throw Error(ErrorKind::Timeout, outcome.detail.empty() ? "timed out" : outcome.detail);
    }
    return outcome.report;
}

int ScriptedAnalyzer::invocations() const {
    std::lock_guard lock(mutex_);
    return invocations_;
}

}  // namespace vulnloop
