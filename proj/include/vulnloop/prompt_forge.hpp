#pragma once

#include "vulnloop/common.hpp"
#include "vulnloop/response_parser.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace vulnloop {

struct AnalyzerFinding;

enum class TemplateId {
    GenWrapper_P1,
    Identify_P2,
    IdentifyPrime_P2p,
    Fix_P3,
    FixPrime_P3p,
    Recheck_P4,
    HeaderRepair,
};

std::string_view to_string(TemplateId id);
/// Throws Error(UnknownTemplate).
TemplateId parse_template_id(std::string_view name);

/// Fix-prompt family. Only `ep` carries the reward block; `cot` and `coc`
/// are thin reasoning variants without it.
enum class FixStrategy { Ep, Cot, Coc, Plain };

std::string_view to_string(FixStrategy s);
std::optional<FixStrategy> parse_strategy(std::string_view text);

/// A template plus the switches that shape its render.
struct PromptVariant {
    TemplateId id = TemplateId::Identify_P2;
    bool with_ep = true;
    FixStrategy strategy = FixStrategy::Ep;

    bool operator==(const PromptVariant&) const = default;
};

/// Returns the reward-free variant of Fix_P3 / FixPrime_P3p.
/// Throws Error(NotAnEpTemplate) for any other template.
PromptVariant strip_ep(TemplateId id);

struct ExamplePair {
    Cwe cwe;
    std::string vulnerable_snippet;
    std::string fixed_snippet;
    std::string note;
};

struct RenderContext {
    std::string nl_prompt;
    std::optional<CodeArtifact> code;
    Language language = Language::C;
    std::vector<VulnReport> vuln_reports;
    int score_current = 0;
    std::vector<AnalyzerFinding> analyzer_findings;
    std::vector<FixedItem> fixed_history;
    std::vector<ExamplePair> adaptive_examples;
    std::string cwe_catalog;
    std::string compiler_log;
};

struct RenderedPrompt {
    std::string system;
    std::string user;
    std::int64_t estimated_tokens = 0;
};

/// CWE-keyed vulnerable/fixed example pairs for adaptive prompting.
/// On disk: <dir>/CWE-119.vulnerable.txt + <dir>/CWE-119.fixed.txt; a first
/// line of the form "note: ..." in the vulnerable file becomes the pair's note.
class AdaptiveStore {
public:
    static AdaptiveStore load(const std::filesystem::path& dir);

    void add(ExamplePair pair);
    const ExamplePair* find(const Cwe& cwe) const;
    std::size_t size() const noexcept { return pairs_.size(); }

private:
    std::map<Cwe, ExamplePair> pairs_;
};

/// Extends ctx.adaptive_examples with at most one pair per requested CWE.
/// CWEs without a stored example are reported to `on_skip`; ones already
/// present are left alone.
RenderContext inject_adaptive(RenderContext ctx, const AdaptiveStore& store,
                              const std::vector<Cwe>& cwes,
                              const std::function<void(const Cwe&)>& on_skip = {});

/// Loaded template directory: one file per TemplateId plus the Top-25 catalog.
///
/// Template syntax: `{{name}}` substitutes a value, `{{#flag}}...{{/flag}}`
/// keeps its body when the flag is set, `{{^flag}}...{{/flag}}` when it is
/// not. A file starts with a "#system" line, then the system text, then a
/// "#user" line and the user text.
class TemplateLibrary {
public:
    static TemplateLibrary load(const std::filesystem::path& dir);
    /// Directory baked in at build time.
    static TemplateLibrary load_default();

    static std::string file_name(TemplateId id);

    RenderedPrompt render(const PromptVariant& variant, const RenderContext& ctx) const;
    RenderedPrompt render(TemplateId id, const RenderContext& ctx) const {
        return render(PromptVariant{id}, ctx);
    }

    const std::string& cwe_catalog() const noexcept { return catalog_; }
    const std::filesystem::path& directory() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
    std::map<TemplateId, std::string> sources_;
    std::string catalog_;
};

/// Renders a template body against string values and boolean flags.
/// Unknown placeholders throw Error(MissingContextField).
std::string render_template_text(std::string_view text,
                                 const std::map<std::string, std::string>& values,
                                 const std::map<std::string, bool>& flags);

std::filesystem::path default_template_dir();

}  // namespace vulnloop
