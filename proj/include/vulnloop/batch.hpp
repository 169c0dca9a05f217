#pragma once

#include "vulnloop/corpus.hpp"
#include "vulnloop/metrics.hpp"
#include "vulnloop/orchestrator.hpp"

#include <atomic>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace vulnloop {

using ProviderFactory = std::function<std::shared_ptr<ModelProvider>(const PromptRecord&)>;
using AnalyzerFactory = std::function<std::shared_ptr<Analyzer>(const PromptRecord&)>;

struct BatchServices {
    ProviderFactory providers;
    /// Only consulted when cross-checking is enabled.
    AnalyzerFactory analyzers;
    const TemplateLibrary* templates = nullptr;
    const AdaptiveStore* adaptive = nullptr;
    Gateway::Sleeper sleeper;
};

struct BatchOptions {
    int jobs = 1;
    /// Where run logs and the manifest go; empty keeps logs in memory.
    std::filesystem::path runs_root;
    bool durable = true;
    /// Start from each record's ground_truth_code instead of generating.
    bool fix_mode = false;
    BaselineMode baseline = BaselineMode::AfterGeneration;
    const std::atomic<bool>* abort = nullptr;
};

struct BatchRun {
    PromptRecord record;
    std::string run_id;
    std::optional<RunOutcome> outcome;
    /// Set when the run could not be driven at all (bad record, I/O failure).
    std::string error;
    /// Full log, kept for in-memory batches.
    std::vector<RunLogEntry> log;
};

struct BatchResult {
    std::vector<BatchRun> runs;
    BatchLedger ledger;
};

/// Runs every record through the pipeline on a pool of `jobs` workers. Each
/// run gets its own provider, analyzer and log. Results keep record order.
BatchResult run_batch(const std::vector<PromptRecord>& records, const RunConfig& base,
                      const BatchServices& services, const BatchOptions& options);

/// Unique, filesystem-safe run ids in record order.
std::vector<std::string> assign_run_ids(const std::vector<PromptRecord>& records);

}  // namespace vulnloop
