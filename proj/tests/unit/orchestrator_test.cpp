#include "vulnloop/orchestrator.hpp"

#include "../support/sim.hpp"

#include <gtest/gtest.h>

using namespace vulnloop;
using nlohmann::json;
using S = Stage;

namespace {

struct Harness {
    explicit Harness(std::shared_ptr<ModelProvider> provider, RunConfig cfg = {})
        : config(std::move(cfg)),
          provider(std::move(provider)),
          gateway(config.provider, this->provider, [](std::chrono::milliseconds) {}),
          templates(TemplateLibrary::load_default()),
          log("unit") {
        config.analyzer.compile_check = false;
    }

    RunServices services(Analyzer* analyzer) {
        return RunServices{&gateway, analyzer, &templates, &adaptive, &log, &abort};
    }

    std::vector<std::string> purposes() const {
        std::vector<std::string> out;
        for (const auto& e : log.entries()) {
            if (e.kind == EntryKind::ModelCall) out.push_back(e.payload["purpose"]);
        }
        return out;
    }

    int score_event_sum() const {
        int sum = 0;
        for (const auto& e : log.entries()) {
            if (e.kind == EntryKind::ScoreEvent) sum += e.payload["delta"].get<int>();
        }
        return sum;
    }

    RunConfig config;
    std::shared_ptr<ModelProvider> provider;
    Gateway gateway;
    TemplateLibrary templates;
    AdaptiveStore adaptive;
    RunLog log;
    std::atomic<bool> abort{false};
};

RunConfig base_config(bool crosscheck) {
    RunConfig c;
    c.crosscheck_enabled = crosscheck;
    c.analyzer.compile_check = false;
    return c;
}

void expect_legal(const std::vector<TransitionRecord>& ts) {
    for (const auto& t : ts) {
        EXPECT_TRUE(is_legal_edge(t.from, t.to)) << to_string(t.from) << " -> " << to_string(t.to);
    }
}

}  // namespace

TEST(Orchestrator, CrosscheckPath) {
    Harness h(sim::provider_for({1, 1, {}}), base_config(true));
    OfflinePatternAnalyzer analyzer(h.config.analyzer);
    const auto out = execute_run("Write a greeter.", h.config, h.services(&analyzer));

    EXPECT_TRUE(out.secure());
    EXPECT_EQ(out.total_iterations, 2);
    EXPECT_EQ(out.analyzer_invocations, 2);
    const std::vector<TransitionRecord> expected{
        {S::S1_Generate, S::S2_Identify},  {S::S2_Identify, S::S2_Fix},
        {S::S2_Fix, S::S2_Identify},       {S::S2_Identify, S::S3_Crosscheck},
        {S::S3_Crosscheck, S::S3_Refix},   {S::S3_Refix, S::S3_Recheck},
        {S::S3_Recheck, S::S3_Crosscheck}, {S::S3_Crosscheck, S::Done},
    };
    EXPECT_EQ(out.transitions, expected);
    EXPECT_EQ(h.purposes(), (std::vector<std::string>{"generate", "identify", "fix",
                                                      "identify-prime", "refix", "recheck"}));
    EXPECT_EQ(sim::count_visible(out.final_code.source), 0);
    EXPECT_EQ(sim::count_hidden(out.final_code.source), 0);
    EXPECT_EQ(out.score, h.score_event_sum());
    ASSERT_EQ(out.iterations.size(), 2u);
    EXPECT_EQ(out.iterations[0].round, "S2_Fix");
    EXPECT_EQ(out.iterations[1].round, "S3_Refix");

    const auto entries = h.log.entries();
    EXPECT_EQ(entries.front().kind, EntryKind::RunStart);
    EXPECT_EQ(entries.back().kind, EntryKind::Termination);
    EXPECT_EQ(entries.back().payload["kind"], "SecureConfirmed");
    EXPECT_EQ(entries.back().payload["final_code_digest"], sha256_hex(out.final_code.source));
}

TEST(Orchestrator, ModelOnlyPathNeverScans) {
    Harness h(sim::provider_for({3, 2, {}}), base_config(false));
    const auto out = execute_run("Write a greeter.", h.config, h.services(nullptr));
    EXPECT_TRUE(out.secure());
    EXPECT_EQ(out.total_iterations, 3);
    EXPECT_EQ(out.analyzer_invocations, 0);
    // Hidden issues stay, since only the analyzer could see them.
    EXPECT_EQ(sim::count_hidden(out.final_code.source), 2);
    for (const auto& e : h.log.entries()) EXPECT_NE(e.kind, EntryKind::AnalyzerScan);
    expect_legal(out.transitions);
}

TEST(Orchestrator, SettlementScoresClaims) {
    Harness h(sim::provider_for({2, 0, {}}), base_config(false));
    const auto out = execute_run("Write a greeter.", h.config, h.services(nullptr));
    EXPECT_TRUE(out.secure());
    EXPECT_EQ(out.total_iterations, 2);
    EXPECT_EQ(out.score, h.score_event_sum());
    int bonuses = 0;
    for (const auto& e : h.log.entries()) {
        if (e.kind == EntryKind::ScoreEvent && e.payload["kind"] == "AllFixedBonus") ++bonuses;
    }
    EXPECT_GE(bonuses, 1);
}

TEST(Orchestrator, FailedRoundsCostIterations) {
    Harness h(sim::provider_for({2, 0, {0}}), base_config(false));
    const auto out = execute_run("Write a greeter.", h.config, h.services(nullptr));
    EXPECT_TRUE(out.secure());
    EXPECT_EQ(out.total_iterations, sim::iterations_needed({2, 0, {0}}, false));
    EXPECT_EQ(out.total_iterations, 3);
}

TEST(Orchestrator, BudgetExhausted) {
    auto cfg = base_config(false);
    cfg.max_iterations = 3;
    Harness h(sim::provider_for({6, 0, {}}), cfg);
    const auto out = execute_run("Write a greeter.", h.config, h.services(nullptr));
    EXPECT_EQ(out.termination.kind, TerminationKind::BudgetExhausted);
    EXPECT_EQ(out.total_iterations, 3);
    EXPECT_EQ(sim::count_visible(out.final_code.source), 3);
}

TEST(Orchestrator, EscalationClimbsLadder) {
    auto cfg = base_config(false);
    cfg.max_iterations = 2;
    cfg.escalation_enabled = true;
    cfg.temperature_initial = 0.0;
    cfg.temperature_step = 0.25;
    cfg.temperature_cap = 0.5;
    EXPECT_EQ(cfg.escalation_levels(), 3);  // 0.25, 0.5, then adaptive examples
    EXPECT_EQ(cfg.max_total_iterations(), 8);

    Harness h(sim::provider_for({20, 0, {}}), cfg);
    const auto out = execute_run("Write a greeter.", h.config, h.services(nullptr));
    EXPECT_EQ(out.termination.kind, TerminationKind::BudgetExhausted);
    EXPECT_EQ(out.total_iterations, 8);
    int restarts = 0;
    for (const auto& t : out.transitions) restarts += t.from == S::Done && t.to == S::S2_Identify;
    EXPECT_EQ(restarts, 3);
    expect_legal(out.transitions);

    std::vector<double> temps;
    for (const auto& e : h.log.entries()) {
        if (e.kind == EntryKind::ModelCall && e.payload["purpose"] == "fix") {
            temps.push_back(e.payload["temperature"]);
        }
    }
    ASSERT_EQ(temps.size(), 8u);
    EXPECT_DOUBLE_EQ(temps[0], 0.0);
    EXPECT_DOUBLE_EQ(temps[2], 0.25);
    EXPECT_DOUBLE_EQ(temps[4], 0.5);
    EXPECT_DOUBLE_EQ(temps[7], 0.5);
    EXPECT_EQ(h.log.entries().back().payload["escalation_level"], 3);
}

TEST(Orchestrator, EscalationStopsWhenSecure) {
    auto cfg = base_config(false);
    cfg.max_iterations = 2;
    cfg.escalation_enabled = true;
    Harness h(sim::provider_for({3, 0, {}}), cfg);
    const auto out = execute_run("Write a greeter.", h.config, h.services(nullptr));
    EXPECT_TRUE(out.secure());
    EXPECT_EQ(out.total_iterations, 3);
}

TEST(Orchestrator, HeaderRepairThenSecure) {
    int scans = 0;
    ScriptedAnalyzer analyzer([&](const CodeArtifact&) {
        ScriptedScan s;
        if (scans++ == 0) {
            s.kind = ScriptedScan::Kind::BuildFailed;
            s.detail = "main.c:3: error: implicit declaration of function 'puts'";
        }
        return s;
    });
    Harness h(sim::provider_for({0, 0, {}}), base_config(true));
    const auto out = execute_run("Write a greeter.", h.config, h.services(&analyzer));
    EXPECT_TRUE(out.secure());
    EXPECT_EQ(out.analyzer_invocations, 2);
    EXPECT_EQ(h.purposes().back(), "header-repair");
    ASSERT_EQ(out.iterations.size(), 1u);
    EXPECT_EQ(out.iterations[0].round, "HeaderRepair");
    EXPECT_EQ(out.total_iterations, 1);
}

TEST(Orchestrator, PersistentBuildFailureIsFinal) {
    ScriptedAnalyzer analyzer([](const CodeArtifact&) {
        ScriptedScan s;
        s.kind = ScriptedScan::Kind::BuildFailed;
        s.detail = "fatal error: missing.h";
        return s;
    });
    Harness h(sim::provider_for({0, 0, {}}), base_config(true));
    const auto out = execute_run("Write a greeter.", h.config, h.services(&analyzer));
    EXPECT_EQ(out.termination.kind, TerminationKind::BuildFailureFinal);
    EXPECT_EQ(out.analyzer_invocations, 3);
    EXPECT_FALSE(out.secure());
}

TEST(Orchestrator, AnalyzerCrashIsNotSecure) {
    ScriptedAnalyzer analyzer([](const CodeArtifact&) {
        ScriptedScan s;
        s.kind = ScriptedScan::Kind::Crashed;
        s.detail = "segfault";
        return s;
    });
    Harness h(sim::provider_for({0, 0, {}}), base_config(true));
    const auto out = execute_run("Write a greeter.", h.config, h.services(&analyzer));
    EXPECT_EQ(out.termination.kind, TerminationKind::AnalyzerFailure);
}

TEST(Orchestrator, ProviderFailureEndsRun) {
    Harness h(std::make_shared<ScriptedProvider>(), base_config(false));
    const auto out = execute_run("Write a greeter.", h.config, h.services(nullptr));
    EXPECT_EQ(out.termination.kind, TerminationKind::ProviderFailure);
    EXPECT_TRUE(h.log.closed());
}

TEST(Orchestrator, AbortFlag) {
    Harness h(sim::provider_for({1, 0, {}}), base_config(false));
    h.abort = true;
    const auto out = execute_run("Write a greeter.", h.config, h.services(nullptr));
    EXPECT_EQ(out.termination.kind, TerminationKind::UserAbort);
    EXPECT_TRUE(h.purposes().empty());
}

TEST(Orchestrator, FixRunStartsFromGivenCode) {
    Harness h(sim::provider_for({0, 0, {}}), base_config(false));
    const CodeArtifact code{sim::program(2, 0), Language::C, 7, ""};
    const auto out = execute_fix_run(code, h.config, h.services(nullptr));
    EXPECT_TRUE(out.secure());
    EXPECT_EQ(out.total_iterations, 2);
    EXPECT_EQ(h.purposes().front(), "identify");
    ASSERT_FALSE(out.transitions.empty());
    EXPECT_EQ(out.transitions.front().from, S::S2_Identify);
    const auto entries = h.log.entries();
    EXPECT_EQ(entries[0].payload["mode"], "fix");
    EXPECT_EQ(entries[1].kind, EntryKind::CodeSnapshot);
    EXPECT_EQ(entries[1].payload["lineage"], "ground-truth");
}

TEST(Orchestrator, SingleStepAdvance) {
    Harness h(sim::provider_for({1, 0, {}}), base_config(false));
    const auto sv = h.services(nullptr);
    RunState s = initial_state("Write a greeter.", h.config);
    s = advance(std::move(s), h.config, sv);
    EXPECT_EQ(s.stage, S::S2_Identify);
    EXPECT_EQ(sim::count_visible(s.current_code.source), 1);
    s = advance(std::move(s), h.config, sv);
    EXPECT_EQ(s.stage, S::S2_Fix);
    EXPECT_EQ(s.pending_vulns.size(), 1u);
    s = advance(std::move(s), h.config, sv);
    EXPECT_EQ(s.stage, S::S2_Identify);
    EXPECT_EQ(s.iteration, 1);
    EXPECT_TRUE(s.settlement.has_value());
    s = advance(std::move(s), h.config, sv);
    EXPECT_EQ(s.stage, S::Done);
    EXPECT_THROW(advance(s, h.config, sv), Error);
}

TEST(Orchestrator, LegalEdges) {
    EXPECT_TRUE(is_legal_edge(S::S1_Generate, S::S2_Identify));
    EXPECT_TRUE(is_legal_edge(S::S3_Recheck, S::S2_Fix));
    EXPECT_TRUE(is_legal_edge(S::S3_Crosscheck, S::S3_Crosscheck));
    EXPECT_TRUE(is_legal_edge(S::S2_Fix, S::Done));
    EXPECT_TRUE(is_legal_edge(S::Done, S::S2_Identify));
    EXPECT_FALSE(is_legal_edge(S::S1_Generate, S::S2_Fix));
    EXPECT_FALSE(is_legal_edge(S::S2_Fix, S::S3_Crosscheck));
    EXPECT_FALSE(is_legal_edge(S::Done, S::S1_Generate));
}

TEST(RunConfigTest, ValidateAndRoundTrip) {
    RunConfig c;
    EXPECT_NO_THROW(c.validate());
    EXPECT_EQ(RunConfig::from_json(c.to_json()).to_json(), c.to_json());
    c.max_iterations = 0;
    EXPECT_THROW(c.validate(), Error);
    c = RunConfig{};
    c.temperature_cap = 5.0;
    EXPECT_THROW(c.validate(), Error);
    EXPECT_THROW(RunConfig::from_json(json{{"strategy", "vibes"}}), Error);
    EXPECT_EQ(RunConfig{}.escalation_levels(), 0);
}
