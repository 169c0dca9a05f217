#include "vulnloop/crosschecker.hpp"

#include "../support/canonical.hpp"

#include <gtest/gtest.h>

using namespace vulnloop;
using namespace vulnloop::testdata;

TEST(Sarif, ParsesFixture) {
    const auto findings = parse_sarif(read_fixture("tainted_arithmetic.sarif"));
    ASSERT_EQ(findings.size(), 2u);
    EXPECT_EQ(findings[0].rule_id, "cpp/tainted-arithmetic");
    EXPECT_EQ(findings[0].start_line, 27);
    EXPECT_NE(findings[0].message.find("might overflow"), std::string::npos);
    ASSERT_FALSE(findings[0].cwes.empty());
    EXPECT_EQ(findings[0].cwes.front(), Cwe::from("CWE-190"));
    EXPECT_EQ(findings[1].rule_id, "cpp/world-writable-file-creation");
    EXPECT_EQ(findings[1].start_line, 41);
}

TEST(Sarif, EmptyRunHasNoFindings) {
    const auto findings = parse_sarif(R"({"version":"2.1.0","runs":[{"tool":{"driver":{"name":"x"}},"results":[]}]})");
    EXPECT_TRUE(findings.empty());
}

TEST(Sarif, MalformedThrows) {
    for (const char* doc : {"not json", "{}", R"({"runs": 3})"}) {
        try {
            parse_sarif(doc);
            ADD_FAILURE() << doc;
        } catch (const Error& e) {
            EXPECT_EQ(e.kind(), ErrorKind::MalformedSarif) << doc;
        }
    }
}

TEST(Sarif, RuleMapFallback) {
    const auto table = load_rule_map(default_template_dir() / "rule_cwe_map.json");
    const auto mapped = map_rule_to_cwe("cpp/toctou-race-condition", {}, table);
    ASSERT_EQ(mapped.size(), 1u);
    EXPECT_EQ(mapped[0], Cwe::from("CWE-367"));

    const auto own = map_rule_to_cwe("cpp/toctou-race-condition", {Cwe::from("CWE-362")}, table);
    ASSERT_EQ(own.size(), 1u);
    EXPECT_EQ(own[0], Cwe::from("CWE-362"));

    EXPECT_TRUE(map_rule_to_cwe("cpp/unknown-rule", {}, table).empty());
}

TEST(Sarif, DedupeKeepsFirst) {
    std::vector<AnalyzerFinding> in{
        {"r1", {}, "first", "a.c", 3, 3, "error"},
        {"r2", {}, "other", "a.c", 3, 3, "error"},
        {"r1", {}, "dup", "a.c", 3, 4, "warning"},
        {"r1", {}, "later", "a.c", 9, 9, "error"},
    };
    const auto out = dedupe_findings(in);
    ASSERT_EQ(out.size(), 3u);
    EXPECT_EQ(out[0].message, "first");
    EXPECT_EQ(out[1].rule_id, "r2");
    EXPECT_EQ(out[2].start_line, 9);
}

TEST(Sarif, CapKeepsHighestSeverity) {
    std::vector<AnalyzerFinding> in;
    for (int i = 0; i < 12; ++i) {
        in.push_back({"r" + std::to_string(i), {}, "", "a.c", i, i, i % 3 == 0 ? "note" : "warning"});
    }
    in.push_back({"crit", {}, "", "a.c", 99, 99, "9.8"});
    const auto out = cap_findings(in, 10);
    ASSERT_EQ(out.size(), 10u);
    EXPECT_EQ(out[0].rule_id, "crit");
    EXPECT_EQ(out[1].rule_id, "r1");
    EXPECT_EQ(out[2].rule_id, "r2");
    EXPECT_EQ(out.back().severity, "note");

    EXPECT_GT(severity_rank("error"), severity_rank("warning"));
    EXPECT_GT(severity_rank("warning"), severity_rank("note"));
    EXPECT_DOUBLE_EQ(severity_rank("6.1"), 6.1);
    EXPECT_DOUBLE_EQ(severity_rank("bogus"), 0.0);
}
