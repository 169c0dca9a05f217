#include "vulnloop/replay.hpp"

#include "vulnloop/process.hpp"

#include "../support/sim.hpp"

#include <gtest/gtest.h>

#include <fstream>

using namespace vulnloop;

namespace {

struct Recorded {
    RunOutcome outcome;
    std::vector<RunLogEntry> entries;
};

Recorded record(const sim::RunPlan& plan, bool crosscheck, RunLog& log) {
    RunConfig cfg;
    cfg.crosscheck_enabled = crosscheck;
    cfg.analyzer.compile_check = false;
    auto provider = sim::provider_for(plan);
    Gateway gw(cfg.provider, provider);
    const auto templates = TemplateLibrary::load_default();
    AdaptiveStore adaptive;
    OfflinePatternAnalyzer analyzer(cfg.analyzer);
    RunServices sv{&gw, crosscheck ? &analyzer : nullptr, &templates, &adaptive, &log, nullptr};
    Recorded r;
    r.outcome = execute_run("Write a greeter.", cfg, sv);
    r.entries = log.entries();
    return r;
}

}  // namespace

TEST(Replay, ReproducesRecordedRun) {
    RunLog log("r");
    const auto rec = record({2, 1, {1}}, true, log);
    const auto again = replay_entries(rec.entries, TemplateLibrary::load_default(), AdaptiveStore{});
    EXPECT_EQ(again.termination.kind, rec.outcome.termination.kind);
    EXPECT_EQ(again.final_code.source, rec.outcome.final_code.source);
    EXPECT_EQ(again.transitions, rec.outcome.transitions);
    EXPECT_EQ(again.score, rec.outcome.score);
    EXPECT_EQ(again.total_iterations, rec.outcome.total_iterations);
}

TEST(Replay, FromDisk) {
    TempDir root("vulnloop-replay");
    {
        RunLog log(root.path(), "disk-run");
        record({1, 0, {}}, false, log);
    }
    const auto out = replay_run(root.path(), "disk-run", TemplateLibrary::load_default(), AdaptiveStore{});
    EXPECT_TRUE(out.secure());
}

TEST(Replay, DetectsTemplateDrift) {
    RunLog log("r");
    const auto rec = record({1, 0, {}}, false, log);
    TempDir dir("vulnloop-tpl");
    std::filesystem::copy(default_template_dir(), dir.path(),
                          std::filesystem::copy_options::recursive);
    {
        std::ofstream out(dir.path() / TemplateLibrary::file_name(TemplateId::Fix_P3),
                          std::ios::app);
        out << "Please be careful.\n";
    }
    try {
        replay_entries(rec.entries, TemplateLibrary::load(dir.path()), AdaptiveStore{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::DivergenceDetected);
    }
}

TEST(Replay, IncompleteLogIsCorrupt) {
    RunLog log("r");
    auto rec = record({1, 0, {}}, false, log);
    rec.entries.pop_back();
    try {
        replay_entries(rec.entries, TemplateLibrary::load_default(), AdaptiveStore{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::LogCorrupt);
    }
    try {
        replay_entries({}, TemplateLibrary::load_default(), AdaptiveStore{});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::LogCorrupt);
    }
}

TEST(Replay, AlteredReplyDiverges) {
    RunLog log("r");
    auto rec = record({2, 0, {}}, false, log);
    for (auto& e : rec.entries) {
        if (e.kind == EntryKind::ModelCall && e.payload["purpose"] == "identify") {
            e.payload["reply"] = "There are no vulnerabilities in this code.";
            e.payload_digest = payload_digest(e.payload);
            break;
        }
    }
    EXPECT_THROW(replay_entries(rec.entries, TemplateLibrary::load_default(), AdaptiveStore{}), Error);
}
