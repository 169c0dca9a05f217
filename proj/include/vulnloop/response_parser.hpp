#pragma once

#include "vulnloop/common.hpp"

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace vulnloop {

/// Half-open character range [begin, end) into the reply a record was parsed from.
struct SourceSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
};

/// One structured vulnerability record taken from model output.
struct VulnReport {
    std::string vuln_type;
    Cwe cwe;
    std::string address;
    std::string justification;
    std::string response;
    SourceSpan span;
};

struct FixedItem {
    Cwe cwe;
    std::string description;
};

struct FixReport {
    CodeArtifact fixed_code;
    int original_score = 0;
    int updated_score = 0;
    /// True when either score was absent from the reply and filled in.
    bool scores_inferred = false;
    std::vector<FixedItem> fixed_list;
};

struct CleanVerdict {
    std::string reason;
};

struct Identification {
    std::variant<CleanVerdict, std::vector<VulnReport>> result;
    /// "Score: -1 * (...)" line from the P2' format, kept for audit only.
    std::optional<int> self_reported_score;

    bool clean() const { return std::holds_alternative<CleanVerdict>(result); }
    const std::vector<VulnReport>& reports() const {
        return std::get<std::vector<VulnReport>>(result);
    }
};

/// A fenced block located in a reply.
struct FencedBlock {
    std::string tag;
    std::string body;
    std::size_t line_count = 0;
    SourceSpan span;
};

/// Finds every ``` or ~~~ fenced block. Closing fences must use the same
/// character and be at least as long as the opener. One newline before the
/// closing fence belongs to the fence, not the body.
std::vector<FencedBlock> find_fenced_blocks(std::string_view text);

/// Embeds code in a fence that round-trips through extract_code byte-exactly.
std::string embed_code(std::string_view code, Language language);

/// Throws Error(Unparseable) when neither the clean sentinel nor a CWE-bearing
/// block is present.
Identification parse_identification(std::string_view reply);

/// Throws Error(NoCodeBlock) when the reply carries no fenced code.
FixReport parse_fix(std::string_view reply, int fallback_score, Language language);

/// Throws Error(NoCodeBlock). Lineage is "tagged-fence", "untagged-fallback"
/// or "other-tag-fallback".
CodeArtifact extract_code(std::string_view reply, Language language);

/// All CWE mentions in order of appearance, outside fenced code.
std::vector<Cwe> cwe_mentions(std::string_view text);

}  // namespace vulnloop
