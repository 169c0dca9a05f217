#include "vulnloop/batch.hpp"
#include "vulnloop/process.hpp"

#include "../support/sim.hpp"

#include <gtest/gtest.h>

using namespace vulnloop;

namespace {

struct Fixture {
    Fixture() : templates(TemplateLibrary::load_default()) {
        config.crosscheck_enabled = false;
        config.max_iterations = 4;
        services.templates = &templates;
        services.adaptive = &adaptive;
        services.sleeper = [](std::chrono::milliseconds) {};
    }
    RunConfig config;
    TemplateLibrary templates;
    AdaptiveStore adaptive;
    BatchServices services;
};

}  // namespace

TEST(Batch, RunIdsAreUniqueAndSafe) {
    std::vector<PromptRecord> recs(4);
    recs[0].id = "a/b";
    recs[1].id = "a_b";
    recs[2].id = "a/b";
    recs[3].id = "";
    EXPECT_EQ(assign_run_ids(recs), (std::vector<std::string>{"a_b", "a_b-2", "a_b-3", "run"}));
}

TEST(Batch, JobsDoNotChangeResults) {
    const std::vector<sim::RunPlan> plans{{0, 0, {}}, {1, 0, {}}, {3, 0, {0}}, {9, 0, {}}, {2, 0, {}}};
    const auto recs = sim::records(plans.size());
    Fixture f;
    f.services.providers = sim::provider_factory(plans);

    BatchOptions serial;
    const auto one = run_batch(recs, f.config, f.services, serial);
    BatchOptions parallel;
    parallel.jobs = 4;
    const auto four = run_batch(recs, f.config, f.services, parallel);

    ASSERT_EQ(one.runs.size(), plans.size());
    EXPECT_EQ(one.ledger.to_json(), four.ledger.to_json());
    const std::vector<int> iterations{0, 1, 4, 4, 2};
    for (std::size_t i = 0; i < plans.size(); ++i) {
        ASSERT_TRUE(one.runs[i].outcome.has_value()) << one.runs[i].error;
        EXPECT_EQ(one.runs[i].run_id, recs[i].id);
        EXPECT_EQ(one.runs[i].outcome->total_iterations, iterations[i]) << i;
        EXPECT_EQ(four.runs[i].outcome->final_code.source, one.runs[i].outcome->final_code.source);
        EXPECT_FALSE(one.runs[i].log.empty());
    }
    EXPECT_EQ(one.ledger.initially_vulnerable(), 4u);
    EXPECT_EQ(one.ledger.remaining(1), 3u);
    EXPECT_EQ(one.ledger.remaining(2), 2u);
    EXPECT_EQ(one.ledger.remaining(4), 1u);
}

TEST(Batch, WritesRunsAndManifest) {
    TempDir root("vulnloop-batch");
    const std::vector<sim::RunPlan> plans{{1, 0, {}}, {0, 0, {}}};
    Fixture f;
    f.services.providers = sim::provider_factory(plans);
    BatchOptions opt;
    opt.runs_root = root.path();
    opt.durable = false;
    const auto res = run_batch(sim::records(2), f.config, f.services, opt);
    for (const auto& run : res.runs) {
        EXPECT_TRUE(std::filesystem::exists(root.path() / run.run_id / "final.c"));
        EXPECT_TRUE(std::filesystem::exists(root.path() / run.run_id / "log.jsonl"));
        EXPECT_TRUE(run.log.empty());
    }
    const auto manifest = read_file((root.path() / "manifest.jsonl").string());
    EXPECT_EQ(split_lines(manifest).size(), 2u);
}

TEST(Batch, FixModeNeedsGroundTruth) {
    auto recs = sim::records(2);
    recs[0].ground_truth_code = sim::program(1, 0);
    recs[0].ground_truth_cwes = std::vector<Cwe>{Cwe::from("CWE-120")};
    Fixture f;
    f.services.providers = sim::provider_factory({{0, 0, {}}, {0, 0, {}}});
    BatchOptions opt;
    opt.fix_mode = true;
    opt.baseline = BaselineMode::GroundTruth;
    const auto res = run_batch(recs, f.config, f.services, opt);
    ASSERT_TRUE(res.runs[0].outcome.has_value());
    EXPECT_TRUE(res.runs[0].outcome->secure());
    EXPECT_EQ(res.runs[0].outcome->total_iterations, 1);
    EXPECT_FALSE(res.runs[1].outcome.has_value());
    EXPECT_NE(res.runs[1].error.find("ground_truth_code"), std::string::npos);
    EXPECT_EQ(res.ledger.initially_vulnerable(), 1u);
    EXPECT_DOUBLE_EQ(fsr(res.ledger, 1), 1.0);
}

TEST(Batch, CrosscheckUsesOwnAnalyzerPerRun) {
    Fixture f;
    f.config.crosscheck_enabled = true;
    f.config.analyzer.compile_check = false;
    const std::vector<sim::RunPlan> plans{{0, 1, {}}, {0, 2, {}}, {0, 0, {}}};
    f.services.providers = sim::provider_factory(plans);
    std::atomic<int> made{0};
    f.services.analyzers = [&](const PromptRecord&) {
        ++made;
        return std::make_shared<OfflinePatternAnalyzer>(f.config.analyzer);
    };
    BatchOptions opt;
    opt.jobs = 2;
    const auto res = run_batch(sim::records(3), f.config, f.services, opt);
    EXPECT_EQ(made.load(), 3);
    EXPECT_EQ(res.runs[0].outcome->total_iterations, 1);
    EXPECT_EQ(res.runs[1].outcome->total_iterations, 2);
    EXPECT_EQ(res.runs[2].outcome->total_iterations, 0);
    for (const auto& r : res.runs) EXPECT_TRUE(r.outcome->secure());
}

TEST(Batch, RejectsBadSetup) {
    Fixture f;
    BatchOptions opt;
    EXPECT_THROW(run_batch(sim::records(1), f.config, f.services, opt), Error);
    f.services.providers = sim::provider_factory({{0, 0, {}}});
    opt.jobs = 0;
    EXPECT_THROW(run_batch(sim::records(1), f.config, f.services, opt), Error);
    opt.jobs = 1;
    f.config.crosscheck_enabled = true;
    EXPECT_THROW(run_batch(sim::records(1), f.config, f.services, opt), Error);
}
