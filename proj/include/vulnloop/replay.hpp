#pragma once

#include "vulnloop/orchestrator.hpp"

#include <filesystem>
#include <vector>

namespace vulnloop {

/// Re-drives a recorded run, serving model replies and analyzer outcomes from
/// the log. Throws Error(LogCorrupt) for an incomplete or inconsistent log and
/// Error(DivergenceDetected) when a request digest, the transition sequence or
/// the final code digest differs from the recording.
RunOutcome replay_entries(const std::vector<RunLogEntry>& entries, const TemplateLibrary& templates,
                          const AdaptiveStore& adaptive);

RunOutcome replay_run(const std::filesystem::path& runs_root, const std::string& run_id,
                      const TemplateLibrary& templates, const AdaptiveStore& adaptive);

}  // namespace vulnloop
