#include "../support/canonical.hpp"

#include "vulnloop/response_parser.hpp"

#include <gtest/gtest.h>

using namespace vulnloop;

TEST(ParseIdentification, TwoFindingFixture) {
    const auto id = parse_identification(testdata::read_fixture("identification_two_findings.txt"));
    ASSERT_FALSE(id.clean());
    const auto& r = id.reports();
    ASSERT_EQ(r.size(), 2u);
    EXPECT_EQ(r[0].cwe.str(), "CWE-120");
    EXPECT_EQ(r[0].vuln_type, "Buffer Copy without Checking Size of Input ('Classic Buffer Overflow')");
    EXPECT_EQ(r[0].address, "scanf(\"%s\", filename);");
    EXPECT_NE(r[0].justification.find("does not limit the size"), std::string::npos);
    EXPECT_NE(r[0].response.find("fgets(filename"), std::string::npos);
    EXPECT_EQ(r[1].cwe.str(), "CWE-367");
    EXPECT_EQ(r[1].address, "file = fopen(filename, \"rb\");");
    EXPECT_LT(r[0].span.end, r[1].span.begin + 1);
}

TEST(ParseIdentification, CleanSentinels) {
    for (const char* reply : {"no vulnerabilities", "None", "  No vulnerabilities.\n", "none"}) {
        EXPECT_TRUE(parse_identification(reply).clean()) << reply;
    }
}

TEST(ParseIdentification, VerdictLineSaysNo) {
    const auto id = parse_identification(
        "A. Vulnerabilities Description:\n(none)\nB. Score: 0\nC. Is Code Vulnerable: no vulnerabilities\n"
        "    - Reason: input is bounded\n");
    EXPECT_TRUE(id.clean());
}

TEST(ParseIdentification, PipeRows) {
    const auto id = parse_identification(
        "Vulnerability Type | CWE ID | Justification | Response\n"
        "Integer Overflow | CWE-190 | size * count can wrap | check before multiplying\n"
        "Path Traversal | CWE-22 | name is joined to a directory | reject '..'\n");
    ASSERT_FALSE(id.clean());
    ASSERT_EQ(id.reports().size(), 2u);
    EXPECT_EQ(id.reports()[0].cwe.str(), "CWE-190");
    EXPECT_EQ(id.reports()[0].vuln_type, "Integer Overflow");
    EXPECT_EQ(id.reports()[1].cwe.str(), "CWE-22");
}

TEST(ParseIdentification, SelfReportedScoreKept) {
    const auto id = parse_identification(
        "1. CWE-787: Out-of-bounds Write\nAddress: buf[i] = c;\nJustification: i is unchecked\n"
        "Response: bound i\n\nB. Score: -1\nC. Is Code Vulnerable: Yes\n");
    ASSERT_FALSE(id.clean());
    ASSERT_TRUE(id.self_reported_score);
    EXPECT_EQ(*id.self_reported_score, -1);
}

TEST(ParseIdentification, CweInsideCodeIsIgnored) {
    EXPECT_THROW(parse_identification("Looks fine.\n```c\n/* CWE-120 */\nint main(void){return 0;}\n```\n"),
                 Error);
}

TEST(ParseIdentification, ProseIsUnparseable) {
    try {
        parse_identification("It reads a file and sums the bytes.");
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::Unparseable);
    }
}

TEST(ExtractCode, PrefersTaggedFence) {
    const auto code = extract_code("```python\nprint(1)\n```\n```c\nint main(void) { return 0; }\n```\n",
                                   Language::C);
    EXPECT_EQ(code.source, "int main(void) { return 0; }");
    EXPECT_EQ(code.lineage, "tagged-fence");
}

TEST(ExtractCode, FallsBackToUntagged) {
    const auto code = extract_code("```\nint x;\n```", Language::C);
    EXPECT_EQ(code.lineage, "untagged-fallback");
    EXPECT_EQ(code.source, "int x;");
}

TEST(ExtractCode, NoFenceThrows) {
    try {
        extract_code("int main(void) { return 0; }", Language::C);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::NoCodeBlock);
    }
}

TEST(ExtractCode, EmbedRoundTripsBackticks) {
    const std::string src = "const char* s = \"```\";\nint main(void) { return 0; }";
    EXPECT_EQ(extract_code(embed_code(src, Language::C), Language::C).source, src);
}

TEST(FencedBlocks, TildeAndLongerClosers) {
    const auto blocks = find_fenced_blocks("~~~py\na = 1\n~~~\n````c\nx\n`````\n");
    ASSERT_EQ(blocks.size(), 2u);
    EXPECT_EQ(blocks[0].tag, "py");
    EXPECT_EQ(blocks[0].body, "a = 1");
    EXPECT_EQ(blocks[1].body, "x");
}

TEST(ParseFix, ScoresAndFixedList) {
    const auto fix = parse_fix(
        "Fixed version:\n```c\nint main(void) { return 0; }\n```\nOriginal Score: 2\nUpdated Score: 4\n"
        "List of Fixed Vulnerabilities & CWE ID:\n- CWE-120: Buffer Copy without Checking Size of Input\n"
        "- CWE-367: TOCTOU Race Condition\n",
        0, Language::C);
    EXPECT_EQ(fix.original_score, 2);
    EXPECT_EQ(fix.updated_score, 4);
    EXPECT_FALSE(fix.scores_inferred);
    ASSERT_EQ(fix.fixed_list.size(), 2u);
    EXPECT_EQ(fix.fixed_list[0].cwe.str(), "CWE-120");
    EXPECT_EQ(fix.fixed_list[0].description, "Buffer Copy without Checking Size of Input");
    EXPECT_EQ(fix.fixed_list[1].cwe.str(), "CWE-367");
}

TEST(ParseFix, MissingScoresInferred) {
    const auto fix = parse_fix("```c\nint main(void){return 0;}\n```\nFixed: CWE-190\n", 5, Language::C);
    EXPECT_TRUE(fix.scores_inferred);
    EXPECT_EQ(fix.original_score, 5);
    EXPECT_EQ(fix.updated_score, 6);
}

TEST(CweMentions, OrderAndSpellings) {
    const auto m = cwe_mentions("CWE 79 then cwe-89 and CWE_22");
    ASSERT_EQ(m.size(), 3u);
    EXPECT_EQ(m[0].str(), "CWE-79");
    EXPECT_EQ(m[1].str(), "CWE-89");
    EXPECT_EQ(m[2].str(), "CWE-22");
}
