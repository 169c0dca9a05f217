#pragma once

#include "vulnloop/common.hpp"
#include "vulnloop/crosschecker.hpp"
#include "vulnloop/model_gateway.hpp"
#include "vulnloop/prompt_forge.hpp"
#include "vulnloop/response_parser.hpp"
#include "vulnloop/runstore.hpp"
#include "vulnloop/scorekeeper.hpp"

#include <atomic>
#include <optional>
#include <string>
#include <vector>

namespace vulnloop {

struct RunConfig {
    ProviderProfile provider;
    Language target_language = Language::C;
    int max_iterations = 10;
    double temperature_initial = 0.0;
    double temperature_step = 0.1;
    double temperature_cap = 0.5;
    bool ep_enabled = true;
    bool crosscheck_enabled = true;
    /// Adaptive examples from the first fix round on.
    bool adaptive_enabled = false;
    /// Climb the temperature/adaptive ladder when the budget runs out.
    bool escalation_enabled = false;
    FixStrategy strategy = FixStrategy::Ep;
    AnalyzerProfile analyzer;
    int max_output_tokens = 4096;
    std::size_t findings_cap = 10;

    /// Throws Error(InvalidConfig).
    void validate() const;
    /// Number of budgets a run can consume: one plus every escalation level.
    int escalation_levels() const;
    int max_total_iterations() const;

    nlohmann::json to_json() const;
    static RunConfig from_json(const nlohmann::json& j);
};

enum class Stage { S1_Generate, S2_Identify, S2_Fix, S3_Crosscheck, S3_Refix, S3_Recheck, Done };

std::string_view to_string(Stage stage);
std::optional<Stage> parse_stage(std::string_view text);

/// True for every transition the state machine may log.
bool is_legal_edge(Stage from, Stage to);

enum class TerminationKind {
    SecureConfirmed,
    BudgetExhausted,
    ProviderFailure,
    BuildFailureFinal,
    UserAbort,
    ParseFailure,
    AnalyzerFailure,
};

std::string_view to_string(TerminationKind kind);
std::optional<TerminationKind> parse_termination_kind(std::string_view text);

struct TerminationReason {
    TerminationKind kind = TerminationKind::SecureConfirmed;
    std::string detail;
};

/// Claims from the last fix round, settled at the next identification.
struct PendingSettlement {
    int iteration = 0;
    std::vector<Cwe> claimed;
};

struct IterationRecord {
    int iteration = 0;
    int escalation_level = 0;
    /// "S2_Fix", "S3_Refix" or "HeaderRepair".
    std::string round;
    std::vector<Cwe> claimed;
    std::string code_digest;
    double temperature = 0.0;
};

struct RunState {
    Stage stage = Stage::S1_Generate;
    /// Interactive iterations in the current escalation level.
    int iteration = 0;
    /// Interactive iterations across all levels.
    int total_iterations = 0;
    CodeArtifact current_code;
    ScoreLedger score;
    std::vector<VulnReport> pending_vulns;
    std::vector<AnalyzerFinding> pending_findings;
    int escalation_level = 0;
    double temperature = 0.0;
    bool adaptive_armed = false;
    std::optional<TerminationReason> termination;

    std::string nl_prompt;
    bool identified_once = false;
    std::optional<PendingSettlement> settlement;
    std::vector<FixedItem> last_fixed;
    int consecutive_build_failures = 0;
    int analyzer_invocations = 0;
    std::vector<IterationRecord> history;
};

struct TransitionRecord {
    Stage from = Stage::S1_Generate;
    Stage to = Stage::S1_Generate;

    bool operator==(const TransitionRecord&) const = default;
};

struct RunOutcome {
    std::string run_id;
    CodeArtifact final_code;
    TerminationReason termination;
    std::vector<IterationRecord> iterations;
    std::vector<TransitionRecord> transitions;
    int total_iterations = 0;
    int analyzer_invocations = 0;
    int score = 0;

    bool secure() const { return termination.kind == TerminationKind::SecureConfirmed; }
};

/// Collaborators for one run. The analyzer may be null when cross-checking
/// is disabled.
struct RunServices {
    const Gateway* gateway = nullptr;
    Analyzer* analyzer = nullptr;
    const TemplateLibrary* templates = nullptr;
    const AdaptiveStore* adaptive = nullptr;
    RunLog* log = nullptr;
    const std::atomic<bool>* abort = nullptr;
};

/// Fresh state for a generation run.
RunState initial_state(const std::string& nl_prompt, const RunConfig& config);
/// Fresh state for a fix-only run starting from existing code at S2_Identify.
RunState initial_fix_state(const CodeArtifact& code, const RunConfig& config);

/// Performs exactly one state-machine transition and logs it.
RunState advance(RunState state, const RunConfig& config, const RunServices& services);

/// Next rung of the escalation ladder for a run that ended BudgetExhausted.
/// Returns the state unchanged (still Done) when the ladder is spent.
RunState escalate(RunState state, const RunConfig& config, const RunServices& services);

/// True when escalate() would change the state.
bool can_escalate(const RunState& state, const RunConfig& config);

/// Drives a run to completion. Writes a RunStart entry first and a
/// Termination entry last.
RunOutcome execute_run(const std::string& nl_prompt, const RunConfig& config,
                       const RunServices& services);
/// Fix-only variant: skips generation.
RunOutcome execute_fix_run(const CodeArtifact& code, const RunConfig& config,
                           const RunServices& services);

/// Collects the outcome fields that can be read back from a log.
std::vector<TransitionRecord> transitions_from_log(const std::vector<RunLogEntry>& entries);

}  // namespace vulnloop
