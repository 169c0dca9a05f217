#include "vulnloop/response_parser.hpp"

#include <algorithm>
#include <cctype>
#include <regex>

namespace vulnloop {

namespace {

struct Line {
    std::string_view text;
    std::size_t begin = 0;
    std::size_t end = 0;  // excludes the newline
};

std::vector<Line> lines_with_offsets(std::string_view text) {
    std::vector<Line> out;
    std::size_t start = 0;
    while (start < text.size()) {
        auto nl = text.find('\n', start);
        const std::size_t end = nl == std::string_view::npos ? text.size() : nl;
        out.push_back({text.substr(start, end - start), start, end});
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    return out;
}

struct FenceOpen {
    char ch = '`';
    std::size_t len = 0;
    std::string tag;
};

std::optional<FenceOpen> fence_opener(std::string_view line) {
    std::size_t i = 0;
    while (i < line.size() && i < 3 && line[i] == ' ') ++i;
    if (i >= line.size() || (line[i] != '`' && line[i] != '~')) return std::nullopt;
    const char ch = line[i];
    std::size_t j = i;
    while (j < line.size() && line[j] == ch) ++j;
    const std::size_t len = j - i;
    if (len < 3) return std::nullopt;
    std::string_view info = line.substr(j);
    if (ch == '`' && info.find('`') != std::string_view::npos) return std::nullopt;
    std::string tag = trim(info);
    const auto sp = tag.find_first_of(" \t{");
    if (sp != std::string::npos) tag.resize(sp);
    return FenceOpen{ch, len, to_lower(tag)};
}

bool is_fence_closer(std::string_view line, const FenceOpen& open) {
    std::size_t i = 0;
    while (i < line.size() && i < 3 && line[i] == ' ') ++i;
    std::size_t j = i;
    while (j < line.size() && line[j] == open.ch) ++j;
    if (j - i < open.len) return false;
    for (std::size_t k = j; k < line.size(); ++k) {
        if (!std::isspace(static_cast<unsigned char>(line[k]))) return false;
    }
    return true;
}

/// Copy of `text` with fenced regions blanked (newlines kept) so offsets survive.
std::string mask_fences(std::string_view text) {
    std::string masked(text);
    for (const auto& block : find_fenced_blocks(text)) {
        for (std::size_t i = block.span.begin; i < block.span.end && i < masked.size(); ++i) {
            if (masked[i] != '\n') masked[i] = ' ';
        }
    }
    return masked;
}

const std::regex& cwe_regex() {
    static const std::regex re(R"(\bCWE[ \t_:#\-]*(\d{1,4})(?!\d))", std::regex::icase);
    return re;
}

struct Mention {
    Cwe cwe;
    std::size_t pos = 0;
    std::size_t len = 0;
};

std::vector<Mention> find_mentions(std::string_view text) {
    std::vector<Mention> out;
    const std::string s(text);
    for (auto it = std::sregex_iterator(s.begin(), s.end(), cwe_regex());
         it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        if (auto c = Cwe::parse("CWE-" + m[1].str())) {
            out.push_back({*c, static_cast<std::size_t>(m.position(0)),
                           static_cast<std::size_t>(m.length(0))});
        }
    }
    return out;
}

/// Lowercased alphanumeric words joined by single spaces.
std::string normalize_words(std::string_view text) {
    std::string out;
    bool pending_space = false;
    for (unsigned char c : text) {
        if (std::isalnum(c)) {
            if (pending_space && !out.empty()) out.push_back(' ');
            pending_space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        } else {
            pending_space = true;
        }
    }
    return out;
}

std::string strip_chars(std::string_view text, std::string_view chars) {
    std::size_t b = 0;
    std::size_t e = text.size();
    while (b < e && (chars.find(text[b]) != std::string_view::npos ||
                     std::isspace(static_cast<unsigned char>(text[b])))) {
        ++b;
    }
    while (e > b && (chars.find(text[e - 1]) != std::string_view::npos ||
                     std::isspace(static_cast<unsigned char>(text[e - 1])))) {
        --e;
    }
    return std::string(text.substr(b, e - b));
}

/// Removes list numbering and markdown emphasis from the start of a line.
std::string strip_list_marker(std::string_view line) {
    static const std::regex marker(R"(^\s*(?:[#>*+\-•]+\s*)*(?:\(?\d+[.)]\s*)?(?:[A-Z][.)]\s+)?)");
    std::string s(line);
    std::smatch m;
    if (std::regex_search(s, m, marker)) s = s.substr(static_cast<std::size_t>(m.length(0)));
    return s;
}

bool starts_with_marker(std::string_view line) {
    const std::string t = trim(line);
    if (t.empty()) return false;
    const char c = t.front();
    if (c == '#' || c == '*' || c == '-' || c == '+' || c == '>' || c == '_') return true;
    static const std::regex numbered(R"(^\(?\d+[.)])");
    return std::regex_search(t, numbered);
}

enum class Field { None, Type, CweLabel, Address, Justification, Response, Section, Unknown };

struct Labeled {
    Field field = Field::None;
    std::string value;
    std::size_t value_offset = 0;
};

Field classify_label(std::string label) {
    label = normalize_words(label);
    if (label == "address" || label == "vulnerable line" || label == "vulnerable lines" ||
        label == "vulnerable line s" || label == "vulnerable line s of code" ||
        label == "vulnerable code" || label == "location" || label == "line" ||
        label == "lines" || label == "affected line" || label == "affected code" ||
        label == "vulnerable lines of code") {
        return Field::Address;
    }
    if (label == "justification" || label == "explanation") return Field::Justification;
    if (label == "response" || label == "mitigation" || label == "fix" ||
        label == "remediation" || label == "recommendation" || label == "suggested fix") {
        return Field::Response;
    }
    if (label == "vulnerability type" || label == "type" || label == "vulnerability" ||
        label == "vulnerability name" || label == "name") {
        return Field::Type;
    }
    if (label == "cwe" || label == "cwe id") return Field::CweLabel;
    if (label == "is code vulnerable" || label == "score" ||
        label == "cwe of found vulnerabilities" || label == "vulnerabilities description" ||
        label == "reason" || label == "output") {
        return Field::Section;
    }
    return Field::Unknown;
}

Labeled detect_label(std::string_view line) {
    static const std::regex label_re(
        R"(^(\s*(?:[#>*+\-]+\s*)?(?:\(?\d+[.)]\s*)?(?:[A-Z][.)]\s+)?[*_]*\s*)([A-Za-z][A-Za-z ()/'\-]{0,40}?)(\s*[*_]*\s*:\s*[*_]*\s*))");
    const std::string s(line);
    std::smatch m;
    if (!std::regex_search(s, m, label_re)) return {};
    const std::string label = m[2].str();
    // "CWE-120: ..." style headings are not labels.
    if (Cwe::parse(label)) return {};
    Labeled out;
    out.field = classify_label(label);
    out.value_offset = static_cast<std::size_t>(m.length(0));
    out.value = strip_chars(s.substr(out.value_offset), "*_");
    return out;
}

std::string strip_backticks(std::string value) {
    value = trim(value);
    if (value.size() >= 2 && value.front() == '`' && value.back() == '`') {
        value = trim(std::string_view(value).substr(1, value.size() - 2));
    }
    return value;
}

struct Draft {
    std::optional<Cwe> cwe;
    std::string vuln_type;
    std::string address;
    std::string justification;
    std::string response;
    Field last = Field::None;
    std::size_t begin = 0;
    std::size_t end = 0;
    std::string raw;

    bool has_body() const {
        return !address.empty() || !justification.empty() || !response.empty();
    }

    std::string* slot(Field f) {
        switch (f) {
            case Field::Address: return &address;
            case Field::Justification: return &justification;
            case Field::Response: return &response;
            case Field::Type: return &vuln_type;
            default: return nullptr;
        }
    }

    void set(Field f, const std::string& value) {
        if (auto* s = slot(f)) {
            std::string v = f == Field::Address ? strip_backticks(value) : trim(value);
            if (s->empty()) {
                *s = v;
            } else if (!v.empty()) {
                *s += " " + v;
            }
            last = f;
        }
    }

    void extend(const Line& line) {
        if (raw.empty()) begin = line.begin;
        end = line.end;
        if (!raw.empty()) raw += " ";
        raw += trim(line.text);
    }
};

// Strips punctuation around a heading fragment, keeping balanced parentheses
// such as "('Classic Buffer Overflow')".
std::string heading_text(std::string_view text) {
    std::string s = strip_chars(text, ":-*_|#.");
    for (bool changed = true; changed && !s.empty();) {
        changed = false;
        const auto open = std::count(s.begin(), s.end(), '(');
        const auto close = std::count(s.begin(), s.end(), ')');
        if (s.back() == '(' || (s.back() == ')' && close > open)) {
            s.pop_back();
            changed = true;
        } else if (s.front() == ')' || (s.front() == '(' && open > close)) {
            s.erase(0, 1);
            changed = true;
        }
        if (changed) s = strip_chars(s, ":-*_|#.");
    }
    return s;
}

std::string type_from_heading(std::string_view stripped, const Mention& m) {
    const std::string after = heading_text(stripped.substr(m.pos + m.len));
    if (!after.empty()) return after;
    return heading_text(stripped.substr(0, m.pos));
}

std::optional<Draft> pipe_row(const Line& line) {
    if (std::count(line.text.begin(), line.text.end(), '|') < 2) return std::nullopt;
    std::vector<std::string> cells;
    std::size_t start = 0;
    const std::string row(line.text);
    while (true) {
        const auto bar = row.find('|', start);
        cells.push_back(trim(row.substr(start, bar == std::string::npos ? std::string::npos : bar - start)));
        if (bar == std::string::npos) break;
        start = bar + 1;
    }
    while (!cells.empty() && cells.front().empty()) cells.erase(cells.begin());
    while (!cells.empty() && cells.back().empty()) cells.pop_back();
    std::optional<std::size_t> cwe_cell;
    std::optional<Cwe> cwe;
    for (std::size_t i = 0; i < cells.size(); ++i) {
        const auto ms = find_mentions(cells[i]);
        if (!ms.empty()) {
            cwe_cell = i;
            cwe = ms.front().cwe;
            break;
        }
    }
    if (!cwe_cell) return std::nullopt;

    Draft d;
    d.cwe = cwe;
    d.begin = line.begin;
    d.end = line.end;
    d.raw = trim(line.text);
    std::string type;
    for (std::size_t i = 0; i < *cwe_cell; ++i) {
        const std::string cell = strip_chars(strip_list_marker(cells[i]), "*_");
        if (cell.empty()) continue;
        if (!type.empty()) type += " - ";
        type += cell;
    }
    if (type.empty()) {
        const auto ms = find_mentions(cells[*cwe_cell]);
        type = type_from_heading(cells[*cwe_cell], ms.front());
    }
    d.vuln_type = type;
    std::vector<std::string> rest(cells.begin() + static_cast<long>(*cwe_cell) + 1, cells.end());
    if (rest.size() == 1) {
        d.set(Field::Justification, rest[0]);
    } else if (rest.size() == 2) {
        d.set(Field::Justification, rest[0]);
        d.set(Field::Response, rest[1]);
    } else if (rest.size() >= 3) {
        d.set(Field::Justification, rest[0]);
        d.set(Field::Address, rest[1]);
        for (std::size_t i = 2; i < rest.size(); ++i) d.set(Field::Response, rest[i]);
    }
    return d;
}

void finalize(std::optional<Draft>& cur, std::vector<VulnReport>& out) {
    if (!cur) return;
    if (cur->cwe) {
        VulnReport r;
        r.cwe = *cur->cwe;
        r.vuln_type = cur->vuln_type;
        r.address = cur->address;
        r.justification = cur->justification.empty() ? cur->raw : cur->justification;
        r.response = cur->response;
        r.span = {cur->begin, cur->end};
        out.push_back(std::move(r));
    }
    cur.reset();
}

std::vector<VulnReport> segment_reports(std::string_view masked) {
    std::vector<VulnReport> out;
    std::optional<Draft> cur;
    for (const auto& line : lines_with_offsets(masked)) {
        if (trim(line.text).empty()) continue;
        if (trim(line.text).find_first_not_of("|-: ") == std::string::npos) continue;

        if (auto row = pipe_row(line)) {
            finalize(cur, out);
            cur = std::move(row);
            continue;
        }

        const Labeled lab = detect_label(line.text);
        switch (lab.field) {
            case Field::Section:
                finalize(cur, out);
                continue;
            case Field::Address:
            case Field::Justification:
            case Field::Response:
                if (!cur) cur.emplace();
                cur->extend(line);
                cur->set(lab.field, lab.value);
                continue;
            case Field::Type: {
                if (cur && (!cur->vuln_type.empty() || cur->has_body())) finalize(cur, out);
                if (!cur) cur.emplace();
                cur->extend(line);
                const auto ms = find_mentions(lab.value);
                if (!ms.empty()) {
                    if (!cur->cwe) cur->cwe = ms.front().cwe;
                    cur->set(Field::Type, type_from_heading(lab.value, ms.front()));
                } else {
                    cur->set(Field::Type, lab.value);
                }
                continue;
            }
            case Field::CweLabel: {
                const auto ms = find_mentions(lab.value);
                if (ms.empty()) continue;
                if (cur && cur->cwe) finalize(cur, out);
                if (!cur) cur.emplace();
                cur->extend(line);
                cur->cwe = ms.front().cwe;
                if (cur->vuln_type.empty()) {
                    cur->vuln_type = type_from_heading(lab.value, ms.front());
                }
                cur->last = Field::CweLabel;
                continue;
            }
            case Field::None:
            case Field::Unknown:
                break;
        }

        const std::string stripped = strip_list_marker(line.text);
        const auto ms = find_mentions(stripped);
        if (!ms.empty()) {
            const bool heading = starts_with_marker(line.text) || ms.front().pos < 12;
            const bool continuation = cur && cur->cwe && !heading &&
                                      (cur->last == Field::Justification ||
                                       cur->last == Field::Response ||
                                       cur->last == Field::Address);
            if (continuation) {
                cur->extend(line);
                cur->set(cur->last, std::string(line.text));
                continue;
            }
            if (cur && !cur->cwe && !cur->has_body()) {
                cur->cwe = ms.front().cwe;
                if (cur->vuln_type.empty()) cur->vuln_type = type_from_heading(stripped, ms.front());
                cur->extend(line);
                continue;
            }
            finalize(cur, out);
            cur.emplace();
            cur->cwe = ms.front().cwe;
            cur->vuln_type = type_from_heading(stripped, ms.front());
            cur->extend(line);
            continue;
        }
        if (cur && cur->last != Field::None && cur->last != Field::CweLabel &&
            cur->last != Field::Type) {
            cur->extend(line);
            cur->set(cur->last, std::string(line.text));
        }
    }
    finalize(cur, out);
    return out;
}

bool is_sentinel(std::string_view text) {
    const std::string norm = normalize_words(text);
    return norm == "no vulnerabilities" || norm == "none" || norm == "no vulnerabilities found";
}

const std::vector<std::string>& tags_for(Language lang) {
    static const std::vector<std::string> c{"c", "h"};
    static const std::vector<std::string> cpp{"cpp", "c++", "cc", "cxx", "hpp", "hh"};
    static const std::vector<std::string> py{"python", "py", "python3"};
    switch (lang) {
        case Language::C: return c;
        case Language::Cpp: return cpp;
        case Language::Python: return py;
    }
    return c;
}

std::optional<int> labeled_number(std::string_view text, const char* label) {
    const std::regex re(std::string(label) + R"(\s*[*_]*\s*[:=|\-]?\s*[*_]*\s*\(?\s*(-?\d+))",
                        std::regex::icase);
    const std::string s(text);
    std::smatch m;
    if (std::regex_search(s, m, re)) return std::stoi(m[1].str());
    return std::nullopt;
}

}  // namespace

std::vector<FencedBlock> find_fenced_blocks(std::string_view text) {
    std::vector<FencedBlock> out;
    const auto lines = lines_with_offsets(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto open = fence_opener(lines[i].text);
        if (!open) continue;
        const std::size_t body_begin = std::min(lines[i].end + 1, text.size());
        std::size_t j = i + 1;
        while (j < lines.size() && !is_fence_closer(lines[j].text, *open)) ++j;
        FencedBlock block;
        block.tag = open->tag;
        std::size_t body_end;
        if (j < lines.size()) {
            body_end = lines[j].begin;
            block.span = {lines[i].begin, lines[j].end};
        } else {
            body_end = text.size();
            block.span = {lines[i].begin, text.size()};
        }
        std::string_view body = text.substr(body_begin, body_end > body_begin ? body_end - body_begin : 0);
        if (j < lines.size() && !body.empty() && body.back() == '\n') body.remove_suffix(1);
        block.body = std::string(body);
        block.line_count = j > i + 1 ? j - i - 1 : 0;
        out.push_back(std::move(block));
        i = j;
    }
    return out;
}

std::string embed_code(std::string_view code, Language language) {
    std::size_t longest = 0;
    std::size_t run = 0;
    for (char c : code) {
        run = c == '`' ? run + 1 : 0;
        longest = std::max(longest, run);
    }
    const std::string fence(std::max<std::size_t>(3, longest + 1), '`');
    std::string out;
    out.reserve(code.size() + 2 * fence.size() + 16);
    out += fence;
    out += fence_tag(language);
    out += '\n';
    out += code;
    out += '\n';
    out += fence;
    return out;
}

std::vector<Cwe> cwe_mentions(std::string_view text) {
    std::vector<Cwe> out;
    for (const auto& m : find_mentions(mask_fences(text))) out.push_back(m.cwe);
    return out;
}

Identification parse_identification(std::string_view reply) {
    if (trim(reply).empty()) throw Error(ErrorKind::Unparseable, "empty reply");
    Identification ident;
    const std::string masked = mask_fences(reply);
    ident.self_reported_score = labeled_number(masked, R"((?:^|\n)\s*(?:B[.)]\s*)?Score)");

    if (is_sentinel(masked)) {
        ident.result = CleanVerdict{"sentinel"};
        return ident;
    }

    bool verdict_clean = false;
    for (const auto& line : lines_with_offsets(masked)) {
        const Labeled lab = detect_label(line.text);
        if (lab.field != Field::Section) continue;
        const std::string label_norm = normalize_words(line.text.substr(0, lab.value_offset));
        if (label_norm.find("is code vulnerable") == std::string::npos) continue;
        const std::string v = normalize_words(lab.value);
        if (v.rfind("no vulnerabilities", 0) == 0 || v == "no" || v == "none") verdict_clean = true;
    }
    if (verdict_clean) {
        ident.result = CleanVerdict{"is-code-vulnerable: no"};
        return ident;
    }

    auto reports = segment_reports(masked);
    if (!reports.empty()) {
        ident.result = std::move(reports);
        return ident;
    }
    if (normalize_words(masked).find("no vulnerabilities") != std::string::npos) {
        ident.result = CleanVerdict{"sentinel-in-text"};
        return ident;
    }
    throw Error(ErrorKind::Unparseable,
                "reply has neither a clean sentinel nor a CWE-bearing finding");
}

CodeArtifact extract_code(std::string_view reply, Language language) {
    const auto blocks = find_fenced_blocks(reply);
    const auto& wanted = tags_for(language);
    const auto pick = [&](auto pred) -> const FencedBlock* {
        const FencedBlock* best = nullptr;
        for (const auto& b : blocks) {
            if (!pred(b) || trim(b.body).empty()) continue;
            if (!best || b.line_count > best->line_count ||
                (b.line_count == best->line_count && b.body.size() > best->body.size())) {
                best = &b;
            }
        }
        return best;
    };
    std::string method = "tagged-fence";
    const FencedBlock* chosen = pick([&](const FencedBlock& b) {
        return std::find(wanted.begin(), wanted.end(), b.tag) != wanted.end();
    });
    if (!chosen) {
        method = "untagged-fallback";
        chosen = pick([](const FencedBlock& b) { return b.tag.empty(); });
    }
    if (!chosen) {
        method = "other-tag-fallback";
        chosen = pick([](const FencedBlock&) { return true; });
    }
    if (!chosen) throw Error(ErrorKind::NoCodeBlock, "no fenced code block in reply");
    CodeArtifact art;
    art.source = chosen->body;
    art.language = language;
    art.lineage = method;
    return art;
}

FixReport parse_fix(std::string_view reply, int fallback_score, Language language) {
    if (trim(reply).empty()) throw Error(ErrorKind::NoCodeBlock, "empty reply");
    FixReport fix;
    fix.fixed_code = extract_code(reply, language);
    const std::string masked = mask_fences(reply);

    const auto original = labeled_number(masked, "original\\s*score");
    const auto updated = labeled_number(masked, "updated\\s*score");

    for (const auto& line : lines_with_offsets(masked)) {
        const std::string lower = to_lower(line.text);
        if (lower.find("original score") != std::string::npos ||
            lower.find("updated score") != std::string::npos) {
            // a score line may still list CWEs after the numbers
            if (find_mentions(line.text).empty()) continue;
        }
        const std::string stripped = strip_list_marker(line.text);
        for (const auto& m : find_mentions(stripped)) {
            const bool seen = std::any_of(fix.fixed_list.begin(), fix.fixed_list.end(),
                                          [&](const FixedItem& f) { return f.cwe == m.cwe; });
            if (seen) continue;
            fix.fixed_list.push_back({m.cwe, type_from_heading(stripped, m)});
        }
    }

    fix.original_score = original.value_or(fallback_score);
    fix.updated_score =
        updated.value_or(fix.original_score + static_cast<int>(fix.fixed_list.size()));
    fix.scores_inferred = !original || !updated;
    return fix;
}

}  // namespace vulnloop
