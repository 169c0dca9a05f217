#include "vulnloop/cli.hpp"
#include "vulnloop/process.hpp"

#include "../support/sim.hpp"

#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

using namespace vulnloop;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code = -1;
    std::string out;
    std::string err;
};

Result cli(std::vector<std::string> args) {
    args.insert(args.begin(), "vulnloop");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    std::ostringstream out;
    std::ostringstream err;
    Result r;
    r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
    r.out = out.str();
    r.err = err.str();
    return r;
}

// Replies for a model-only run that fixes one visible issue per round.
std::vector<std::string> model_only_replies(int visible, int rounds) {
    std::vector<std::string> replies;
    std::string code = sim::program(visible, 0);
    replies.push_back(sim::code_reply(code));
    replies.push_back(sim::identification_reply(code));
    for (int i = 0; i < rounds; ++i) {
        code = sim::fix_first_visible(code);
        replies.push_back(sim::fix_reply(code, 0, {"CWE-120"}));
        replies.push_back(sim::identification_reply(code));
    }
    return replies;
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir = std::make_unique<TempDir>("vulnloop-cli");
        out_dir = (dir->path() / "out").string();
    }
    std::string write(const std::string& name, const std::string& text) {
        const fs::path p = dir->path() / name;
        std::ofstream(p, std::ios::binary) << text;
        return p.string();
    }
    std::string scenario(const json& j) { return write("scenario.json", j.dump()); }

    std::unique_ptr<TempDir> dir;
    std::string out_dir;
};

}  // namespace

TEST_F(CliTest, HelpAndUsage) {
    EXPECT_EQ(cli({"--help"}).code, 0);
    EXPECT_NE(cli({"--help"}).out.find("batch"), std::string::npos);
    EXPECT_EQ(cli({}).code, 1);
    EXPECT_EQ(cli({"frobnicate"}).code, 1);
    EXPECT_EQ(cli({"generate", "--prompt", "x", "--prompt-file", "y"}).code, 1);
}

TEST_F(CliTest, GenerateSecure) {
    const auto s = scenario({{"replies", model_only_replies(1, 1)}});
    const auto r = cli({"generate", "--prompt", "Greet the user.", "--run-id", "g1", "--no-crosscheck",
                        "--scenario", s, "--output-dir", out_dir});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("run g1: SecureConfirmed"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("iterations: 1"), std::string::npos);
    EXPECT_TRUE(fs::exists(fs::path(out_dir) / "runs" / "g1" / "final.c"));
    EXPECT_TRUE(fs::exists(fs::path(out_dir) / "runs" / "manifest.jsonl"));

    const auto replay = cli({"replay", "--run", "g1", "--runs-dir", out_dir + "/runs"});
    EXPECT_EQ(replay.code, 0) << replay.err;
    EXPECT_NE(replay.out.find("replay g1: reproduced"), std::string::npos);
    EXPECT_NE(replay.out.find("SecureConfirmed"), std::string::npos);
}

TEST_F(CliTest, GenerateBudgetExhaustedExitsTwo) {
    const auto s = scenario({{"replies", model_only_replies(2, 1)}});
    const auto r = cli({"generate", "--prompt", "Greet twice.", "--run-id", "g2", "--no-crosscheck",
                        "--max-iterations", "1", "--scenario", s, "--output-dir", out_dir});
    EXPECT_EQ(r.code, 2) << r.err;
    EXPECT_NE(r.out.find("BudgetExhausted"), std::string::npos);
}

TEST_F(CliTest, FixFromFile) {
    const std::string code = sim::program(1, 0);
    const auto file = write("input.c", code);
    std::vector<std::string> replies{sim::identification_reply(code)};
    const std::string fixed = sim::fix_first_visible(code);
    replies.push_back(sim::fix_reply(fixed, 0, {"CWE-120"}));
    replies.push_back(sim::identification_reply(fixed));
    const auto s = scenario({{"replies", replies}});
    const auto r = cli({"fix", "--code-file", file, "--run-id", "f1", "--no-crosscheck", "--scenario", s,
                        "--output-dir", out_dir});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(read_file((fs::path(out_dir) / "runs" / "f1" / "final.c").string()), trim(fixed));
}

TEST_F(CliTest, BatchWritesReportAndLedger) {
    write("corpus.jsonl",
          R"({"id":"p1","nl_prompt":"Greet.","target_language":"c"}
{"id":"p2","nl_prompt":"Greet twice.","target_language":"c"}
)");
    const auto s = scenario({{"runs", {{"p1", model_only_replies(1, 1)}, {"p2", model_only_replies(2, 2)}}}});
    const auto r = cli({"batch", "--corpus", (dir->path() / "corpus.jsonl").string(), "--no-crosscheck",
                        "--no-escalation", "--scenario", s, "--output-dir", out_dir, "--format", "csv"});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_EQ(r.out.rfind("iteration,remaining,total,fsr\n", 0), 0u) << r.out;
    EXPECT_NE(r.out.find("1,1,2,0.5000\n"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("2,0,2,1.0000\n"), std::string::npos) << r.out;
    EXPECT_TRUE(fs::exists(fs::path(out_dir) / "report.csv"));

    const auto rep = cli({"report", "--ledger", out_dir + "/ledger.json", "--label", "mine"});
    EXPECT_EQ(rep.code, 0) << rep.err;
    EXPECT_NE(rep.out.find("Configuration: mine"), std::string::npos);
    EXPECT_NE(rep.out.find("I2         0/2          1.0000"), std::string::npos) << rep.out;
}

TEST_F(CliTest, BatchRunErrorsExitOne) {
    write("corpus.jsonl", R"({"id":"p1","nl_prompt":"Greet.","target_language":"c"})" "\n");
    const auto s = scenario({{"replies", model_only_replies(1, 1)}});
    const auto r = cli({"batch", "--corpus", (dir->path() / "corpus.jsonl").string(), "--no-crosscheck",
                        "--fix-mode", "--scenario", s, "--output-dir", out_dir});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("vulnloop: error[run p1]"), std::string::npos) << r.err;
}

TEST_F(CliTest, AnalyzeExitCodes) {
    const auto dirty = write("dirty.c", sim::program(1, 0));
    auto r = cli({"analyze", "--code-file", dirty});
    EXPECT_EQ(r.code, 2) << r.err;
    EXPECT_NE(r.out.find("offline/unbounded-scanf"), std::string::npos) << r.out;

    const auto clean = write("clean.c", sim::program(0, 0));
    r = cli({"analyze", "--code-file", clean});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("clean"), std::string::npos);

    const auto broken = write("broken", "int main(void) { return nope; }\n");
    r = cli({"analyze", "--code-file", broken, "--language", "c"});
    EXPECT_EQ(r.code, 2) << r.err;
    EXPECT_NE(r.out.find("build failed"), std::string::npos);
}

TEST_F(CliTest, ErrorsAreTagged) {
    auto r = cli({"generate", "--prompt", "x"});
    EXPECT_EQ(r.code, 1);
    EXPECT_EQ(r.err.rfind("vulnloop: error[InvalidConfig]:", 0), 0u) << r.err;

    const auto cfg = write("cfg.json", R"({"provider": {"api_key": "sk-live-123"}})");
    r = cli({"generate", "--prompt", "x", "--config", cfg});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("error[InvalidConfig]"), std::string::npos);
    EXPECT_EQ(r.err.find("sk-live-123"), std::string::npos);

    r = cli({"generate", "--prompt", "x", "--provider", "mock", "--scenario", "s", "--escalate",
             "--no-escalation"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("conflict"), std::string::npos);
}

TEST_F(CliTest, CorpusStats) {
    write("c.jsonl",
          R"({"id":"a","nl_prompt":"Copy the user string into a buffer","target_language":"c","source":"S"}
{"id":"b","nl_prompt":"Copy the user string into a buffer.","target_language":"c","source":"S"}
{"id":"c","nl_prompt":"Serve files","target_language":"python","source":"T"}
)");
    const auto r = cli({"corpus-stats", "--corpus", (dir->path() / "c.jsonl").string()});
    EXPECT_EQ(r.code, 0) << r.err;
    EXPECT_NE(r.out.find("records: 2"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("duplicate: b ~ a (1.000)"), std::string::npos) << r.out;
    const auto raw = cli({"corpus-stats", "--corpus", (dir->path() / "c.jsonl").string(), "--no-dedupe"});
    EXPECT_NE(raw.out.find("records: 3"), std::string::npos);
}
