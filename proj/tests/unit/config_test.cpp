#include "vulnloop/config.hpp"
#include "vulnloop/process.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace vulnloop;
using nlohmann::json;

TEST(Config, DefaultsAndOverrides) {
    const auto app = app_config_from_json(json::object(), "/base");
    EXPECT_EQ(app.run.max_iterations, 10);
    EXPECT_FALSE(app.escalation.has_value());
    EXPECT_EQ(app.jobs, 1);

    const auto custom = app_config_from_json(
        json{{"run", {{"max_iterations", 5}, {"ep_enabled", false}, {"escalation_enabled", false}}},
             {"provider", {{"kind", "chat-completions"}, {"endpoint", "https://x/v1"},
                           {"model_id", "m"}, {"auth_ref", "API_KEY"}, {"request_timeout_s", 2.5}}},
             {"analyzer", {{"kind", "codeql"}, {"executable_path", "bin/codeql"}, {"scan_timeout_s", 30}}},
             {"jobs", 3}},
        "/base");
    EXPECT_EQ(custom.run.max_iterations, 5);
    EXPECT_FALSE(custom.run.ep_enabled);
    ASSERT_TRUE(custom.escalation.has_value());
    EXPECT_FALSE(*custom.escalation);
    EXPECT_EQ(custom.run.provider.kind, ProviderKind::ChatCompletions);
    EXPECT_EQ(custom.run.provider.auth_ref, "API_KEY");
    EXPECT_EQ(custom.run.provider.request_timeout, std::chrono::milliseconds(2500));
    EXPECT_EQ(custom.run.analyzer.executable_path, std::filesystem::path("/base/bin/codeql"));
    EXPECT_EQ(custom.run.analyzer.scan_timeout, std::chrono::milliseconds(30000));
    EXPECT_EQ(custom.jobs, 3);
}

TEST(Config, UnknownKeysRejected) {
    for (const json& j : {json{{"runs", json::object()}},
                          json{{"run", {{"max_iteration", 3}}}},
                          json{{"provider", {{"api_key", "sk-123"}}}},
                          json{{"analyzer", {{"flavor", "x"}}}},
                          json{{"jobs", 0}},
                          json{{"run", {{"max_iterations", "ten"}}}}}) {
        try {
            app_config_from_json(j, ".");
            ADD_FAILURE() << j.dump();
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig) << j.dump();
        }
    }
}

TEST(Config, FileAndRelativePaths) {
    TempDir dir("vulnloop-config");
    std::ofstream(dir.path() / "cfg.json")
        << R"({"templates_dir": "tpl", "output_dir": "/abs/out", "provider": {"scenario": "s.json"}})";
    const auto app = load_app_config(dir.path() / "cfg.json");
    EXPECT_EQ(app.templates_dir, dir.path() / "tpl");
    EXPECT_EQ(app.output_dir, std::filesystem::path("/abs/out"));
    EXPECT_EQ(app.scenario_path, dir.path() / "s.json");

    std::ofstream(dir.path() / "broken.json") << "{";
    try {
        load_app_config(dir.path() / "broken.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::InvalidConfig);
    }
    try {
        load_app_config(dir.path() / "absent.json");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::MissingFile);
    }
}

TEST(Config, MockScenario) {
    TempDir dir("vulnloop-scenario");
    std::ofstream(dir.path() / "s.json") << R"({"replies": ["a"], "runs": {"r1": ["b", "c"]}})";
    const auto s = load_mock_scenario(dir.path() / "s.json");
    EXPECT_EQ(s.replies_for("r1"), (std::vector<std::string>{"b", "c"}));
    EXPECT_EQ(s.replies_for("other"), (std::vector<std::string>{"a"}));
    std::ofstream(dir.path() / "bad.json") << R"({"reply": []})";
    EXPECT_THROW(load_mock_scenario(dir.path() / "bad.json"), Error);
}
