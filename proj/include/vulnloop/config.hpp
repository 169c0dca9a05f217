#pragma once

#include "vulnloop/orchestrator.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vulnloop {

/// Everything a CLI invocation needs, read from one JSON file. Relative paths
/// resolve against the file's directory.
struct AppConfig {
    RunConfig run;
    std::filesystem::path templates_dir;
    /// Mock provider replies, see MockScenario.
    std::filesystem::path scenario_path;
    std::filesystem::path output_dir = "vulnloop-out";
    int jobs = 1;
    /// Set when the file spells out run.escalation_enabled; batch mode
    /// otherwise escalates by default.
    std::optional<bool> escalation;
};

/// Throws Error(InvalidConfig) or Error(MissingFile).
AppConfig load_app_config(const std::filesystem::path& path);
AppConfig app_config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir);

/// Canned replies for the mock provider: {"replies": [...]} shared by every
/// run, and/or {"runs": {"<record id>": [...]}} per run.
struct MockScenario {
    std::vector<std::string> replies;
    std::map<std::string, std::vector<std::string>> runs;

    /// Per-run replies when present, else the shared list.
    std::vector<std::string> replies_for(const std::string& run_id) const;
};

MockScenario load_mock_scenario(const std::filesystem::path& path);

}  // namespace vulnloop
