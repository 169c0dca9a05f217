#include "vulnloop/corpus.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cctype>
#include <set>
#include <sstream>

namespace vulnloop {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

const std::vector<std::string> kColumns = {"id",     "nl_prompt",         "target_language",
                                           "source", "ground_truth_cwes", "ground_truth_code"};

/// Shared by both readers. Throws Error(InvalidArgument) with a row-level message.
PromptRecord make_record(const std::string& id, const std::string& nl_prompt,
                         const std::string& language, const std::string& source,
                         const std::vector<std::string>& cwes, const std::string& code) {
    PromptRecord r;
    if (trim(id).empty()) throw Error(ErrorKind::InvalidArgument, "missing id");
    if (trim(nl_prompt).empty()) throw Error(ErrorKind::InvalidArgument, "missing nl_prompt");
    const auto lang = parse_language(language);
    if (!lang) throw Error(ErrorKind::InvalidArgument, "unknown target_language '" + language + "'");
    r.id = id;
    r.nl_prompt = nl_prompt;
    r.target_language = *lang;
    r.source = source;
    if (!cwes.empty()) {
        std::vector<Cwe> list;
        for (const auto& c : cwes) {
            const auto parsed = Cwe::parse(c);
            if (!parsed) throw Error(ErrorKind::InvalidArgument, "malformed CWE '" + c + "'");
            list.push_back(*parsed);
        }
        r.ground_truth_cwes = std::move(list);
    }
    if (!code.empty()) r.ground_truth_code = code;
    return r;
}

std::string string_field(const json& j, const char* key) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return {};
    if (!it->is_string()) throw Error(ErrorKind::InvalidArgument, std::string(key) + " is not a string");
    return it->get<std::string>();
}

std::vector<std::string> split_cwe_cell(const std::string& cell) {
    std::vector<std::string> out;
    std::string cur;
    for (const char c : cell) {
        if (c == ';' || c == ',' || c == '|') {
            if (!trim(cur).empty()) out.push_back(trim(cur));
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    if (!trim(cur).empty()) out.push_back(trim(cur));
    return out;
}

/// RFC 4180 reader: quoted fields may hold commas, doubled quotes and line breaks.
/// Returns records with the 1-based record index of their start.
std::vector<std::vector<std::string>> read_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool field_started = false;
    std::size_t i = 0;
    const auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    const auto end_row = [&] {
        end_field();
        if (!(row.size() == 1 && row[0].empty())) rows.push_back(std::move(row));
        row.clear();
    };
    while (i < text.size()) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    i += 2;
                    continue;
                }
                quoted = false;
                ++i;
                continue;
            }
            field.push_back(c);
            ++i;
            continue;
        }
        if (c == '"' && !field_started) {
            quoted = true;
            field_started = true;
            ++i;
        } else if (c == ',') {
            end_field();
            ++i;
        } else if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') {
            end_row();
            i += 2;
        } else if (c == '\n') {
            end_row();
            ++i;
        } else {
            field.push_back(c);
            field_started = true;
            ++i;
        }
    }
    if (quoted) throw Error(ErrorKind::InvalidArgument, "unterminated quoted field");
    if (field_started || !row.empty()) end_row();
    return rows;
}

std::string csv_field(const std::string& value) {
    const bool needs_quotes = value.find_first_of(",\"\r\n") != std::string::npos ||
                              (!value.empty() && (std::isspace(static_cast<unsigned char>(value.front())) ||
                                                  std::isspace(static_cast<unsigned char>(value.back()))));
    if (!needs_quotes) return value;
    std::string out = "\"";
    for (const char c : value) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += '"';
    return out;
}

std::string join_cwes(const std::optional<std::vector<Cwe>>& cwes) {
    std::string out;
    if (!cwes) return out;
    for (const auto& c : *cwes) {
        if (!out.empty()) out += ';';
        out += c.str();
    }
    return out;
}

}  // namespace

CorpusFormat format_for(const fs::path& path) {
    return to_lower(path.extension().string()) == ".csv" ? CorpusFormat::Csv : CorpusFormat::Jsonl;
}

LoadResult parse_jsonl_corpus(std::string_view text) {
    LoadResult out;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception& e) {
                throw Error(ErrorKind::InvalidArgument, std::string("invalid JSON: ") + e.what());
            }
            if (!j.is_object()) throw Error(ErrorKind::InvalidArgument, "row is not an object");
            std::vector<std::string> cwes;
            if (auto it = j.find("ground_truth_cwes"); it != j.end() && !it->is_null()) {
                if (!it->is_array()) {
                    throw Error(ErrorKind::InvalidArgument, "ground_truth_cwes is not an array");
                }
                for (const auto& c : *it) {
                    if (!c.is_string()) throw Error(ErrorKind::InvalidArgument, "CWE entry is not a string");
                    cwes.push_back(c.get<std::string>());
                }
            }
            out.records.push_back(make_record(string_field(j, "id"), string_field(j, "nl_prompt"),
                                              string_field(j, "target_language"),
                                              string_field(j, "source"), cwes,
                                              string_field(j, "ground_truth_code")));
        } catch (const Error& e) {
            out.errors.push_back({line_no, e.what()});
        }
    }
    return out;
}

LoadResult parse_csv_corpus(std::string_view text) {
    LoadResult out;
    const auto rows = read_csv(text);
    if (rows.empty()) return out;
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < rows[0].size(); ++i) col[trim(rows[0][i])] = i;
    for (const char* required : {"id", "nl_prompt", "target_language"}) {
        if (!col.contains(required)) {
            throw Error(ErrorKind::InvalidArgument,
                        std::string("CSV header lacks required column ") + required);
        }
    }
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto& row = rows[r];
        const auto cell = [&](const std::string& name) -> std::string {
            const auto it = col.find(name);
            if (it == col.end() || it->second >= row.size()) return {};
            return row[it->second];
        };
        try {
            if (row.size() != rows[0].size()) {
                throw Error(ErrorKind::InvalidArgument,
                            "expected " + std::to_string(rows[0].size()) + " fields, got " +
                                std::to_string(row.size()));
            }
            out.records.push_back(make_record(cell("id"), cell("nl_prompt"), cell("target_language"),
                                              cell("source"), split_cwe_cell(cell("ground_truth_cwes")),
                                              cell("ground_truth_code")));
        } catch (const Error& e) {
            out.errors.push_back({r, e.what()});
        }
    }
    return out;
}

LoadResult load_corpus(const fs::path& path, CorpusFormat format) {
    if (!fs::exists(path)) throw Error(ErrorKind::MissingFile, "corpus not found: " + path.string());
    const std::string text = read_file(path.string());
    LoadResult res = format == CorpusFormat::Csv ? parse_csv_corpus(text) : parse_jsonl_corpus(text);
    if (res.records.empty()) {
        throw Error(ErrorKind::EmptyCorpus, "no usable records in " + path.string() + " (" +
                                                std::to_string(res.errors.size()) + " row errors)");
    }
    return res;
}

LoadResult load_corpus(const fs::path& path) { return load_corpus(path, format_for(path)); }

std::string to_jsonl(const std::vector<PromptRecord>& records) {
    std::string out;
    for (const auto& r : records) {
        ordered_json j;
        j["id"] = r.id;
        j["nl_prompt"] = r.nl_prompt;
        j["target_language"] = std::string(to_string(r.target_language));
        j["source"] = r.source;
        if (r.ground_truth_cwes) {
            ordered_json list = ordered_json::array();
            for (const auto& c : *r.ground_truth_cwes) list.push_back(c.str());
            j["ground_truth_cwes"] = list;
        } else {
            j["ground_truth_cwes"] = nullptr;
        }
        if (r.ground_truth_code) j["ground_truth_code"] = *r.ground_truth_code;
        else j["ground_truth_code"] = nullptr;
        out += j.dump(-1, ' ', false, json::error_handler_t::replace);
        out += '\n';
    }
    return out;
}

std::string to_csv(const std::vector<PromptRecord>& records) {
    std::string out;
    for (std::size_t i = 0; i < kColumns.size(); ++i) {
        if (i) out += ',';
        out += kColumns[i];
    }
    out += '\n';
    for (const auto& r : records) {
        out += csv_field(r.id) + ',' + csv_field(r.nl_prompt) + ',' +
               std::string(to_string(r.target_language)) + ',' + csv_field(r.source) + ',' +
               csv_field(join_cwes(r.ground_truth_cwes)) + ',' +
               csv_field(r.ground_truth_code.value_or("")) + '\n';
    }
    return out;
}

void save_corpus(const fs::path& path, const std::vector<PromptRecord>& records,
                 CorpusFormat format) {
    write_file(path.string(), format == CorpusFormat::Csv ? to_csv(records) : to_jsonl(records));
}

std::vector<std::string> prompt_tokens(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (const char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

double token_jaccard(std::string_view a, std::string_view b) {
    const auto ta = prompt_tokens(a);
    const auto tb = prompt_tokens(b);
    const std::set<std::string> sa(ta.begin(), ta.end());
    const std::set<std::string> sb(tb.begin(), tb.end());
    if (sa.empty() && sb.empty()) return 1.0;
    std::size_t inter = 0;
    for (const auto& t : sa) inter += sb.count(t);
    const std::size_t uni = sa.size() + sb.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

DedupeResult dedupe(const std::vector<PromptRecord>& records, double threshold) {
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw Error(ErrorKind::InvalidArgument, "dedupe threshold must be in (0, 1]");
    }
    DedupeResult out;
    for (const auto& r : records) {
        const PromptRecord* match = nullptr;
        double best = 0.0;
        for (const auto& k : out.kept) {
            const double s = token_jaccard(r.nl_prompt, k.nl_prompt);
            if (s >= threshold && s > best) {
                best = s;
                match = &k;
            }
        }
        if (match) {
            out.pairs.push_back({r.id, match->id, best});
            out.removed.push_back(r);
        } else {
            out.kept.push_back(r);
        }
    }
    return out;
}

CorpusSummary summarize(const std::vector<PromptRecord>& records, std::size_t duplicates_removed) {
    CorpusSummary s;
    s.total = records.size();
    s.duplicates_removed = duplicates_removed;
    for (const auto& r : records) {
        ++s.by_source[r.source.empty() ? std::string("(unspecified)") : r.source];
        ++s.by_language[std::string(display_name(r.target_language))];
        if (r.ground_truth_code) ++s.with_ground_truth_code;
    }
    return s;
}

std::string render_summary(const CorpusSummary& s) {
    std::ostringstream out;
    out << "records: " << s.total << "\n";
    out << "duplicates removed: " << s.duplicates_removed << "\n";
    out << "with ground-truth code: " << s.with_ground_truth_code << "\n";
    out << "by source:\n";
    for (const auto& [k, v] : s.by_source) out << "  " << k << ": " << v << "\n";
    out << "by language:\n";
    for (const auto& [k, v] : s.by_language) out << "  " << k << ": " << v << "\n";
    return out.str();
}

}  // namespace vulnloop
