#pragma once

#include "vulnloop/common.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vulnloop {

/// Where the FSR denominator comes from: runs still vulnerable after
/// generation (zero iterations), or runs whose ground truth lists a CWE.
enum class BaselineMode { AfterGeneration, GroundTruth };

std::string_view to_string(BaselineMode mode);
std::optional<BaselineMode> parse_baseline_mode(std::string_view text);

/// Per-run outcome as the ledger needs it.
struct RunResult {
    std::string run_id;
    bool secure = false;
    /// Cumulative interactive iterations when the run ended.
    int iterations = 0;
    std::string termination;
    bool ground_truth_vulnerable = false;
};

/// Vulnerable-sample counts per cumulative iteration, for iterations 0..horizon.
/// A run counts as remaining at k unless it ended SecureConfirmed within k
/// iterations.
class BatchLedger {
public:
    explicit BatchLedger(int horizon = 10, BaselineMode mode = BaselineMode::AfterGeneration);

    void record(const RunResult& run);

    /// Builds a ledger from aggregate counts only (no per-run outcomes).
    static BatchLedger from_counts(std::size_t total_samples, std::size_t initially_vulnerable,
                                   std::map<int, std::size_t> remaining, BaselineMode mode);

    std::size_t total_samples() const noexcept { return total_; }
    std::size_t initially_vulnerable() const;
    /// Throws Error(UnknownIteration).
    std::size_t remaining(int k) const;
    const std::map<int, std::size_t>& remaining_by_iteration() const noexcept { return remaining_; }
    const std::vector<RunResult>& runs() const noexcept { return runs_; }
    BaselineMode mode() const noexcept { return mode_; }
    int horizon() const noexcept { return horizon_; }

    nlohmann::json to_json() const;
    static BatchLedger from_json(const nlohmann::json& j);

private:
    int horizon_;
    BaselineMode mode_;
    std::size_t total_ = 0;
    std::size_t ground_truth_vulnerable_ = 0;
    std::optional<std::size_t> fixed_initial_;
    std::map<int, std::size_t> remaining_;
    std::vector<RunResult> runs_;
};

/// (initial - remaining(k)) / initial; 1.0 when nothing was vulnerable.
/// Throws Error(UnknownIteration).
double fsr(const BatchLedger& ledger, int k);

/// Same quantity recomputed straight from per-run outcomes.
double fsr_from_runs(const std::vector<RunResult>& runs, int k, BaselineMode mode);

struct FunctionalResult {
    std::string sample;
    bool passed = false;
};

/// Fraction passing; absent for an empty list.
std::optional<double> pass_at_1(const std::vector<FunctionalResult>& results);

/// Runs a user-supplied shell command with every "{path}" replaced by the
/// quoted code path. Exit status 0 counts as a pass.
FunctionalResult run_functional_test(const std::string& sample, const std::string& command_template,
                                     const std::filesystem::path& code_path,
                                     std::chrono::milliseconds timeout);

enum class ReportFormat { Text, Json, Csv };

std::optional<ReportFormat> parse_report_format(std::string_view text);

struct ReportOptions {
    std::string label = "LLM + cross-check";
    /// Iterations to list; empty means 1..horizon.
    std::vector<int> iterations;
    std::optional<double> pass_at_1;
};

std::string render_report(const BatchLedger& ledger, ReportFormat format,
                          const ReportOptions& options = {});

}  // namespace vulnloop
