#include "vulnloop/config.hpp"

#include <set>

namespace vulnloop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void check_keys(const json& obj, const std::string& section, const std::set<std::string>& allowed) {
    if (!obj.is_object()) throw Error(ErrorKind::InvalidConfig, section + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.contains(key)) {
            throw Error(ErrorKind::InvalidConfig, "unknown key '" + key + "' in " + section);
        }
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    const fs::path path(p);
    return path.is_absolute() ? path : base / path;
}

std::chrono::milliseconds seconds_ms(double s) {
    return std::chrono::milliseconds(static_cast<std::int64_t>(s * 1000.0));
}

}  // namespace

AppConfig app_config_from_json(const json& j, const fs::path& base_dir) {
    AppConfig app;
    try {
        check_keys(j, "config", {"run", "provider", "analyzer", "templates_dir", "output_dir", "jobs"});

        json run = j.value("run", json::object());
        check_keys(run, "run",
                   {"target_language", "max_iterations", "temperature_initial", "temperature_step",
                    "temperature_cap", "ep_enabled", "crosscheck_enabled", "adaptive_enabled",
                    "escalation_enabled", "strategy", "max_output_tokens", "findings_cap"});
        app.run = RunConfig::from_json(run);
        if (run.contains("escalation_enabled")) app.escalation = app.run.escalation_enabled;

        if (j.contains("provider")) {
            const json& p = j.at("provider");
            check_keys(p, "provider",
                       {"name", "kind", "endpoint", "model_id", "auth_ref", "token_limit",
                        "request_timeout_s", "max_retries", "backoff_base_ms", "temperature_cap",
                        "scenario"});
            json profile = p;
            profile.erase("scenario");
            profile.erase("request_timeout_s");
            app.run.provider = ProviderProfile::from_json(profile);
            if (p.contains("request_timeout_s")) {
                app.run.provider.request_timeout = seconds_ms(p.at("request_timeout_s").get<double>());
            }
            app.scenario_path = resolve(base_dir, p.value("scenario", std::string()));
        }

        if (j.contains("analyzer")) {
            const json& a = j.at("analyzer");
            check_keys(a, "analyzer",
                       {"kind", "executable_path", "query_suite", "language_packs", "scan_timeout_s",
                        "compile_check", "c_compiler", "cpp_compiler", "keep_workspace", "rule_map"});
            json as_run = a;
            as_run.erase("rule_map");
            as_run.erase("scan_timeout_s");
            if (a.contains("executable_path")) {
                as_run["executable_path"] =
                    resolve(base_dir, a.at("executable_path").get<std::string>()).string();
            }
            app.run.analyzer = RunConfig::from_json(json{{"analyzer", as_run}}).analyzer;
            if (a.contains("scan_timeout_s")) {
                app.run.analyzer.scan_timeout = seconds_ms(a.at("scan_timeout_s").get<double>());
            }
            if (a.contains("rule_map")) {
                app.run.analyzer.fallback_map =
                    load_rule_map(resolve(base_dir, a.at("rule_map").get<std::string>()));
            }
        }

        if (j.contains("templates_dir")) {
            app.templates_dir = resolve(base_dir, j.at("templates_dir").get<std::string>());
        }
        if (j.contains("output_dir")) {
            app.output_dir = resolve(base_dir, j.at("output_dir").get<std::string>());
        }
        app.jobs = j.value("jobs", app.jobs);
        if (app.jobs < 1) throw Error(ErrorKind::InvalidConfig, "jobs must be >= 1");
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, e.what());
    }
    return app;
}

AppConfig load_app_config(const fs::path& path) {
    if (!fs::exists(path)) throw Error(ErrorKind::MissingFile, "config not found: " + path.string());
    json j;
    try {
        j = json::parse(read_file(path.string()));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
    }
    return app_config_from_json(j, path.parent_path());
}

std::vector<std::string> MockScenario::replies_for(const std::string& run_id) const {
    if (const auto it = runs.find(run_id); it != runs.end()) return it->second;
    return replies;
}

MockScenario load_mock_scenario(const fs::path& path) {
    if (!fs::exists(path)) throw Error(ErrorKind::MissingFile, "scenario not found: " + path.string());
    MockScenario s;
    try {
        const json j = json::parse(read_file(path.string()));
        check_keys(j, "scenario", {"replies", "runs"});
        s.replies = j.value("replies", std::vector<std::string>{});
        if (j.contains("runs")) {
            for (const auto& [id, replies] : j.at("runs").items()) {
                s.runs[id] = replies.get<std::vector<std::string>>();
            }
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, path.string() + ": " + e.what());
    }
    return s;
}

}  // namespace vulnloop
