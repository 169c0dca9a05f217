#include "vulnloop/prompt_forge.hpp"

#include "vulnloop/crosschecker.hpp"

#include <sstream>

namespace vulnloop {

namespace {

struct TemplateFile {
    TemplateId id;
    const char* file;
    const char* name;
};

constexpr TemplateFile kTemplates[] = {
    {TemplateId::GenWrapper_P1, "gen_wrapper_p1.txt", "GenWrapper_P1"},
    {TemplateId::Identify_P2, "identify_p2.txt", "Identify_P2"},
    {TemplateId::IdentifyPrime_P2p, "identify_prime_p2p.txt", "IdentifyPrime_P2p"},
    {TemplateId::Fix_P3, "fix_p3.txt", "Fix_P3"},
    {TemplateId::FixPrime_P3p, "fix_prime_p3p.txt", "FixPrime_P3p"},
    {TemplateId::Recheck_P4, "recheck_p4.txt", "Recheck_P4"},
    {TemplateId::HeaderRepair, "header_repair.txt", "HeaderRepair"},
};

constexpr const char* kCatalogFile = "mitre_top25_2023.txt";

[[noreturn]] void missing(TemplateId id, const char* field) {
    throw Error(ErrorKind::MissingContextField,
                std::string(to_string(id)) + " requires context field '" + field + "'");
}

/// A section tag alone on its line takes the whole line with it.
std::string drop_standalone_tag_lines(std::string_view text) {
    std::string out;
    out.reserve(text.size());
    std::size_t start = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        const bool has_nl = nl != std::string_view::npos;
        const std::size_t end = has_nl ? nl : text.size();
        const std::string_view line = text.substr(start, end - start);
        const std::string t = trim(line);
        const bool standalone = t.size() > 4 && t.rfind("{{", 0) == 0 &&
                                t.compare(t.size() - 2, 2, "}}") == 0 &&
                                (t[2] == '#' || t[2] == '^' || t[2] == '/' || t[2] == '!') &&
                                t.find("{{", 2) == std::string::npos;
        if (standalone) {
            out += t;
        } else {
            out += line;
            if (has_nl) out += '\n';
        }
        start = has_nl ? nl + 1 : text.size();
    }
    return out;
}

void render_into(std::string_view text, const std::map<std::string, std::string>& values,
                 const std::map<std::string, bool>& flags, std::string& out) {
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto open = text.find("{{", pos);
        if (open == std::string_view::npos) {
            out.append(text.substr(pos));
            return;
        }
        out.append(text.substr(pos, open - pos));
        const auto close = text.find("}}", open + 2);
        if (close == std::string_view::npos) {
            throw Error(ErrorKind::InvalidArgument, "unterminated template tag");
        }
        const std::string tag = trim(text.substr(open + 2, close - open - 2));
        pos = close + 2;
        if (tag.empty()) throw Error(ErrorKind::InvalidArgument, "empty template tag");
        const char sigil = tag.front();
        if (sigil == '!') continue;
        if (sigil == '/') throw Error(ErrorKind::InvalidArgument, "unbalanced tag " + tag);
        if (sigil == '#' || sigil == '^') {
            const std::string name = trim(std::string_view(tag).substr(1));
            // find the matching close, honoring nested sections of the same name
            int depth = 1;
            std::size_t scan = pos;
            std::size_t body_end = std::string_view::npos;
            std::size_t after = std::string_view::npos;
            while (depth > 0) {
                const auto o = text.find("{{", scan);
                if (o == std::string_view::npos) break;
                const auto c = text.find("}}", o + 2);
                if (c == std::string_view::npos) break;
                const std::string inner = trim(text.substr(o + 2, c - o - 2));
                if (inner.size() > 1 && (inner[0] == '#' || inner[0] == '^') &&
                    trim(std::string_view(inner).substr(1)) == name) {
                    ++depth;
                } else if (inner.size() > 1 && inner[0] == '/' &&
                           trim(std::string_view(inner).substr(1)) == name) {
                    if (--depth == 0) {
                        body_end = o;
                        after = c + 2;
                    }
                }
                scan = c + 2;
            }
            if (body_end == std::string_view::npos) {
                throw Error(ErrorKind::InvalidArgument, "unclosed section " + name);
            }
            const auto flag = flags.find(name);
            if (flag == flags.end()) {
                throw Error(ErrorKind::MissingContextField, "no flag named '" + name + "'");
            }
            if (flag->second == (sigil == '#')) {
                render_into(text.substr(pos, body_end - pos), values, flags, out);
            }
            pos = after;
            continue;
        }
        const auto v = values.find(tag);
        if (v == values.end()) {
            throw Error(ErrorKind::MissingContextField, "no value for placeholder '" + tag + "'");
        }
        out.append(v->second);
    }
}

std::string format_reports(const std::vector<VulnReport>& reports) {
    std::ostringstream os;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        const auto& r = reports[i];
        if (i) os << '\n';
        os << (i + 1) << ". " << (r.vuln_type.empty() ? "Unspecified" : r.vuln_type) << " | "
           << r.cwe.str() << " | " << r.justification << " | "
           << (r.response.empty() ? "-" : r.response);
        if (!r.address.empty()) os << "\n   Address: " << r.address;
    }
    return os.str();
}

std::string format_findings(const std::vector<AnalyzerFinding>& findings) {
    std::ostringstream os;
    for (std::size_t i = 0; i < findings.size(); ++i) {
        const auto& f = findings[i];
        if (i) os << '\n';
        os << (i + 1) << ". [" << f.rule_id << "]";
        if (!f.cwes.empty()) {
            os << " (";
            for (std::size_t k = 0; k < f.cwes.size(); ++k) {
                if (k) os << ", ";
                os << f.cwes[k].str();
            }
            os << ")";
        }
        os << " line " << f.start_line;
        if (f.end_line != f.start_line) os << "-" << f.end_line;
        os << ": " << f.message;
    }
    return os.str();
}

std::string format_history(const std::vector<FixedItem>& history) {
    std::ostringstream os;
    for (std::size_t i = 0; i < history.size(); ++i) {
        if (i) os << '\n';
        const auto& item = history[i];
        os << "- " << item.cwe.str();
        if (!item.description.empty()) os << (item.cwe.str().empty() ? "" : ": ") << item.description;
    }
    return os.str();
}

std::string format_examples(const std::vector<ExamplePair>& pairs, Language lang) {
    std::ostringstream os;
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        if (i) os << "\n\n";
        os << "Example for " << p.cwe.str();
        if (!p.note.empty()) os << " (" << p.note << ")";
        os << ":\n";
        std::string body = "// Vulnerable code\n" + p.vulnerable_snippet;
        if (!body.empty() && body.back() != '\n') body += '\n';
        body += "\n// Fixed version\n" + p.fixed_snippet;
        if (!body.empty() && body.back() == '\n') body.pop_back();
        os << embed_code(body, lang);
    }
    return os.str();
}

}  // namespace

std::string_view to_string(TemplateId id) {
    for (const auto& t : kTemplates) {
        if (t.id == id) return t.name;
    }
    return "Unknown";
}

TemplateId parse_template_id(std::string_view name) {
    for (const auto& t : kTemplates) {
        if (name == t.name) return t.id;
    }
    throw Error(ErrorKind::UnknownTemplate, "unknown template " + std::string(name));
}

std::string_view to_string(FixStrategy s) {
    switch (s) {
        case FixStrategy::Ep: return "ep";
        case FixStrategy::Cot: return "cot";
        case FixStrategy::Coc: return "coc";
        case FixStrategy::Plain: return "plain";
    }
    return "ep";
}

std::optional<FixStrategy> parse_strategy(std::string_view text) {
    const std::string t = to_lower(text);
    if (t == "ep") return FixStrategy::Ep;
    if (t == "cot") return FixStrategy::Cot;
    if (t == "coc") return FixStrategy::Coc;
    if (t == "plain") return FixStrategy::Plain;
    return std::nullopt;
}

PromptVariant strip_ep(TemplateId id) {
    if (id != TemplateId::Fix_P3 && id != TemplateId::FixPrime_P3p) {
        throw Error(ErrorKind::NotAnEpTemplate,
                    std::string(to_string(id)) + " has no encouragement block");
    }
    return PromptVariant{id, false, FixStrategy::Plain};
}

AdaptiveStore AdaptiveStore::load(const std::filesystem::path& dir) {
    AdaptiveStore store;
    if (!std::filesystem::is_directory(dir)) return store;
    const std::string suffix = ".vulnerable.txt";
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const std::string fname = entry.path().filename().string();
        if (fname.size() <= suffix.size() ||
            fname.compare(fname.size() - suffix.size(), suffix.size(), suffix) != 0) {
            continue;
        }
        const std::string key = fname.substr(0, fname.size() - suffix.size());
        const auto cwe = Cwe::parse(key);
        const auto fixed_path = dir / (key + ".fixed.txt");
        if (!cwe || !std::filesystem::exists(fixed_path)) continue;
        ExamplePair pair;
        pair.cwe = *cwe;
        std::string vuln = read_file(entry.path().string());
        if (vuln.rfind("note:", 0) == 0) {
            const auto nl = vuln.find('\n');
            pair.note = trim(vuln.substr(5, nl == std::string::npos ? std::string::npos : nl - 5));
            vuln = nl == std::string::npos ? "" : vuln.substr(nl + 1);
        }
        pair.vulnerable_snippet = vuln;
        pair.fixed_snippet = read_file(fixed_path.string());
        store.add(std::move(pair));
    }
    return store;
}

void AdaptiveStore::add(ExamplePair pair) {
    if (trim(pair.vulnerable_snippet).empty() || trim(pair.fixed_snippet).empty()) {
        throw Error(ErrorKind::InvalidArgument, "example pair snippets must be non-empty");
    }
    if (pair.cwe.str().empty()) {
        throw Error(ErrorKind::InvalidArgument, "example pair needs a CWE");
    }
    const Cwe key = pair.cwe;
    pairs_.insert_or_assign(key, std::move(pair));
}

const ExamplePair* AdaptiveStore::find(const Cwe& cwe) const {
    const auto it = pairs_.find(cwe);
    return it == pairs_.end() ? nullptr : &it->second;
}

RenderContext inject_adaptive(RenderContext ctx, const AdaptiveStore& store,
                              const std::vector<Cwe>& cwes,
                              const std::function<void(const Cwe&)>& on_skip) {
    for (const auto& cwe : cwes) {
        const bool present = std::any_of(ctx.adaptive_examples.begin(), ctx.adaptive_examples.end(),
                                         [&](const ExamplePair& p) { return p.cwe == cwe; });
        if (present) continue;
        if (const auto* pair = store.find(cwe)) {
            ctx.adaptive_examples.push_back(*pair);
        } else if (on_skip) {
            on_skip(cwe);
        }
    }
    return ctx;
}

std::string render_template_text(std::string_view text,
                                 const std::map<std::string, std::string>& values,
                                 const std::map<std::string, bool>& flags) {
    std::string out;
    render_into(drop_standalone_tag_lines(text), values, flags, out);
    return out;
}

std::filesystem::path default_template_dir() {
    if (const char* env = std::getenv("VULNLOOP_TEMPLATE_DIR"); env && *env) return env;
    return VULNLOOP_DEFAULT_TEMPLATE_DIR;
}

std::string TemplateLibrary::file_name(TemplateId id) {
    for (const auto& t : kTemplates) {
        if (t.id == id) return t.file;
    }
    throw Error(ErrorKind::UnknownTemplate, "unknown template id");
}

TemplateLibrary TemplateLibrary::load(const std::filesystem::path& dir) {
    TemplateLibrary lib;
    lib.dir_ = dir;
    for (const auto& t : kTemplates) {
        const auto path = dir / t.file;
        if (!std::filesystem::exists(path)) {
            throw Error(ErrorKind::UnknownTemplate, "template file missing: " + path.string());
        }
        lib.sources_[t.id] = read_file(path.string());
    }
    const auto catalog = dir / kCatalogFile;
    if (std::filesystem::exists(catalog)) {
        lib.catalog_ = read_file(catalog.string());
        while (!lib.catalog_.empty() && lib.catalog_.back() == '\n') lib.catalog_.pop_back();
    }
    return lib;
}

TemplateLibrary TemplateLibrary::load_default() { return load(default_template_dir()); }

RenderedPrompt TemplateLibrary::render(const PromptVariant& variant,
                                       const RenderContext& ctx) const {
    const TemplateId id = variant.id;
    const auto src = sources_.find(id);
    if (src == sources_.end()) {
        throw Error(ErrorKind::UnknownTemplate, std::string(to_string(id)) + " not loaded");
    }

    const bool needs_code = id != TemplateId::GenWrapper_P1;
    if (needs_code && (!ctx.code || ctx.code->source.empty())) missing(id, "code");
    switch (id) {
        case TemplateId::GenWrapper_P1:
            if (trim(ctx.nl_prompt).empty()) missing(id, "nl_prompt");
            break;
        case TemplateId::Fix_P3:
            if (ctx.vuln_reports.empty()) missing(id, "vuln_reports");
            break;
        case TemplateId::FixPrime_P3p:
            if (ctx.analyzer_findings.empty()) missing(id, "analyzer_findings");
            break;
        case TemplateId::Recheck_P4:
            if (ctx.fixed_history.empty()) missing(id, "fixed_history");
            break;
        case TemplateId::HeaderRepair:
            if (trim(ctx.compiler_log).empty()) missing(id, "compiler_log");
            break;
        case TemplateId::IdentifyPrime_P2p:
            if (ctx.cwe_catalog.empty() && catalog_.empty()) missing(id, "cwe_catalog");
            break;
        default:
            break;
    }

    const bool fix_family = id == TemplateId::Fix_P3 || id == TemplateId::FixPrime_P3p;
    const bool ep = variant.with_ep && (!fix_family || variant.strategy == FixStrategy::Ep);

    std::map<std::string, std::string> values{
        {"nl_prompt", trim(ctx.nl_prompt)},
        {"language", std::string(display_name(ctx.language))},
        {"code_block", ctx.code ? embed_code(ctx.code->source, ctx.language) : std::string()},
        {"vuln_reports", format_reports(ctx.vuln_reports)},
        {"score", std::to_string(ctx.score_current)},
        {"findings", format_findings(ctx.analyzer_findings)},
        {"fixed_history", format_history(ctx.fixed_history)},
        {"adaptive_examples", format_examples(ctx.adaptive_examples, ctx.language)},
        {"cwe_catalog", ctx.cwe_catalog.empty() ? catalog_ : ctx.cwe_catalog},
        {"compiler_log", trim(ctx.compiler_log)},
    };
    std::map<std::string, bool> flags{
        {"ep", ep},
        {"cot", fix_family && variant.strategy == FixStrategy::Cot},
        {"coc", fix_family && variant.strategy == FixStrategy::Coc},
        {"adaptive", !ctx.adaptive_examples.empty()},
        {"c_family", is_c_family(ctx.language)},
        {"python", ctx.language == Language::Python},
    };

    std::string_view body = src->second;
    std::string_view system;
    std::string_view user = body;
    if (body.rfind("#system\n", 0) == 0) {
        const auto marker = body.find("\n#user\n");
        if (marker == std::string_view::npos) {
            throw Error(ErrorKind::InvalidArgument, "template without #user section");
        }
        system = body.substr(8, marker - 8 + 1);
        user = body.substr(marker + 7);
    } else if (body.rfind("#user\n", 0) == 0) {
        user = body.substr(6);
    }

    RenderedPrompt out;
    out.system = render_template_text(system, values, flags);
    out.user = render_template_text(user, values, flags);
    while (!out.system.empty() && out.system.back() == '\n') out.system.pop_back();
    while (!out.user.empty() && out.user.back() == '\n') out.user.pop_back();
    out.estimated_tokens = estimate_tokens(out.system) + estimate_tokens(out.user);
    return out;
}

}  // namespace vulnloop
