#pragma once

#include "vulnloop/common.hpp"

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace vulnloop {

struct AnalyzerFinding {
    std::string rule_id;
    std::vector<Cwe> cwes;
    std::string message;
    std::string file;
    int start_line = 1;
    int end_line = 1;
    /// SARIF level ("error", "warning", "note") or a numeric security-severity.
    std::string severity;
};

struct BuildOutcome {
    bool success = true;
    std::string compiler_log;
    std::string artifact_dir;
};

struct AnalyzerReport {
    std::vector<AnalyzerFinding> findings;
    BuildOutcome build;

    bool clean() const { return build.success && findings.empty(); }
};

/// Carries the compiler log so the orchestrator can feed it to a header-repair round.
class BuildFailedError : public Error {
public:
    explicit BuildFailedError(std::string compiler_log)
        : Error(ErrorKind::BuildFailed, "build failed"), log_(std::move(compiler_log)) {}
    const std::string& compiler_log() const noexcept { return log_; }

private:
    std::string log_;
};

enum class AnalyzerKind { CodeQL, OfflinePattern };

struct AnalyzerProfile {
    AnalyzerKind kind = AnalyzerKind::OfflinePattern;
    std::filesystem::path executable_path;
    std::string query_suite;
    std::vector<std::string> language_packs;
    std::chrono::milliseconds scan_timeout{std::chrono::minutes(10)};
    /// Offline analyzer only: compile C/C++ before pattern matching.
    bool compile_check = true;
    std::string c_compiler = "cc";
    std::string cpp_compiler = "c++";
    /// Leave the scan workspace on disk for inspection.
    bool keep_workspace = false;
    std::map<std::string, std::vector<Cwe>> fallback_map;

    /// Throws Error(InvalidConfig) when a CodeQL profile has no executable.
    void validate() const;
};

/// Static-analysis backend. Implementations must be safe to call from
/// concurrent runs.
class Analyzer {
public:
    virtual ~Analyzer() = default;
    /// Throws BuildFailedError, Error(AnalyzerCrashed) or Error(Timeout);
    /// a failure is never reported as a clean report.
    virtual AnalyzerReport scan(const CodeArtifact& code) = 0;
    virtual std::string name() const = 0;
};

std::unique_ptr<Analyzer> make_analyzer(const AnalyzerProfile& profile);

/// Single-file build check (warnings kept as notes, linking on). Writes the
/// source to <workspace>/src first.
BuildOutcome compile_check(const CodeArtifact& code, const std::filesystem::path& workspace,
                           const AnalyzerProfile& profile);

/// Hermetic pattern analyzer with a small fixed rule set: unbounded
/// scanf("%s"), sprintf into a fixed-size buffer, eval on request data,
/// Flask debug mode.
class OfflinePatternAnalyzer : public Analyzer {
public:
    explicit OfflinePatternAnalyzer(AnalyzerProfile profile);
    AnalyzerReport scan(const CodeArtifact& code) override;
    std::string name() const override { return "offline-pattern"; }

    /// Pattern matching only, no build step.
    static std::vector<AnalyzerFinding> match_patterns(const CodeArtifact& code,
                                                       const std::string& file_name);

private:
    AnalyzerProfile profile_;
};

/// CodeQL driver: database create (with a compile command for C/C++), then
/// database analyze to SARIF.
class CodeQlAnalyzer : public Analyzer {
public:
    explicit CodeQlAnalyzer(AnalyzerProfile profile);
    AnalyzerReport scan(const CodeArtifact& code) override;
    std::string name() const override { return "codeql"; }

    /// Arguments for the two subprocess invocations; exposed for tests.
    std::vector<std::string> create_args(const CodeArtifact& code,
                                         const std::filesystem::path& workspace) const;
    std::vector<std::string> analyze_args(const CodeArtifact& code,
                                          const std::filesystem::path& workspace) const;

private:
    AnalyzerProfile profile_;
};

/// Outcome the scripted analyzer should produce for one scan.
struct ScriptedScan {
    enum class Kind { Report, BuildFailed, Crashed, Timeout };
    Kind kind = Kind::Report;
    AnalyzerReport report;
    std::string detail;
};

/// Analyzer whose outcomes come from a callback; used by tests and replay.
class ScriptedAnalyzer : public Analyzer {
public:
    using Responder = std::function<ScriptedScan(const CodeArtifact&)>;
    explicit ScriptedAnalyzer(Responder responder, std::string name = "scripted");
    AnalyzerReport scan(const CodeArtifact& code) override;
    std::string name() const override { return name_; }
    int invocations() const;

private:
    Responder responder_;
    std::string name_;
    mutable std::mutex mutex_;
    int invocations_ = 0;
};

/// Throws Error(MalformedSarif).
std::vector<AnalyzerFinding> parse_sarif(std::string_view document);

/// SARIF-derived CWEs win; otherwise the fallback table; otherwise empty.
std::vector<Cwe> map_rule_to_cwe(const std::string& rule_id, const std::vector<Cwe>& sarif_cwes,
                                 const std::map<std::string, std::vector<Cwe>>& fallback_table);

/// Loads a JSON object of rule id -> ["CWE-..", ...].
std::map<std::string, std::vector<Cwe>> load_rule_map(const std::filesystem::path& path);

/// Dedupes on (rule_id, file, start_line), keeping first occurrence order.
std::vector<AnalyzerFinding> dedupe_findings(std::vector<AnalyzerFinding> findings);

/// Keeps the `cap` highest-severity findings, stable within equal severity.
std::vector<AnalyzerFinding> cap_findings(std::vector<AnalyzerFinding> findings,
                                          std::size_t cap = 10);

double severity_rank(const std::string& severity);

}  // namespace vulnloop
