#include "vulnloop/crosschecker.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <set>
#include <tuple>

namespace vulnloop {

using nlohmann::json;

namespace {

struct RuleMeta {
    std::vector<Cwe> cwes;
    std::string security_severity;
    std::string default_level;
    std::string short_description;
};

std::vector<Cwe> cwes_from_tags(const json& rule) {
    std::vector<Cwe> out;
    const auto props = rule.find("properties");
    if (props == rule.end() || !props->is_object()) return out;
    const auto tags = props->find("tags");
    if (tags == props->end() || !tags->is_array()) return out;
    static const std::string prefix = "external/cwe/";
    for (const auto& t : *tags) {
        if (!t.is_string()) continue;
        const std::string tag = to_lower(t.get<std::string>());
        if (tag.rfind(prefix, 0) != 0) continue;
        if (auto c = Cwe::parse(tag.substr(prefix.size()))) {
            if (std::find(out.begin(), out.end(), *c) == out.end()) out.push_back(*c);
        }
    }
    return out;
}

std::string string_at(const json& obj, const char* key) {
    if (!obj.is_object()) return {};
    const auto it = obj.find(key);
    if (it == obj.end()) return {};
    if (it->is_string()) return it->get<std::string>();
    if (it->is_number()) return it->dump();
    return {};
}

RuleMeta meta_of(const json& rule) {
    RuleMeta m;
    m.cwes = cwes_from_tags(rule);
    if (auto p = rule.find("properties"); p != rule.end() && p->is_object()) {
        m.security_severity = string_at(*p, "security-severity");
    }
    if (auto dc = rule.find("defaultConfiguration"); dc != rule.end()) {
        m.default_level = string_at(*dc, "level");
    }
    if (auto sd = rule.find("shortDescription"); sd != rule.end()) {
        m.short_description = string_at(*sd, "text");
    }
    return m;
}

int int_at(const json& obj, const char* key, int fallback) {
    if (!obj.is_object()) return fallback;
    const auto it = obj.find(key);
    if (it == obj.end() || !it->is_number_integer()) return fallback;
    return it->get<int>();
}

}  // namespace

std::vector<AnalyzerFinding> parse_sarif(std::string_view document) {
    json doc;
    try {
        doc = json::parse(document);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::MalformedSarif, std::string("SARIF is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw Error(ErrorKind::MalformedSarif, "SARIF root is not an object");
    if (auto v = doc.find("version"); v != doc.end() && (!v->is_string() || v->get<std::string>() != "2.1.0")) {
        throw Error(ErrorKind::MalformedSarif, "unsupported SARIF version");
    }
    const auto runs = doc.find("runs");
    if (runs == doc.end() || !runs->is_array()) {
        throw Error(ErrorKind::MalformedSarif, "SARIF document has no runs array");
    }

    std::vector<AnalyzerFinding> out;
    for (const auto& run : *runs) {
        if (!run.is_object()) throw Error(ErrorKind::MalformedSarif, "run is not an object");
        std::map<std::string, RuleMeta> rules;
        std::vector<std::string> driver_rule_ids;
        if (auto tool = run.find("tool"); tool != run.end() && tool->is_object()) {
            const auto collect = [&](const json& component, bool is_driver) {
                const auto rs = component.find("rules");
                if (rs == component.end() || !rs->is_array()) return;
                for (const auto& r : *rs) {
                    const std::string id = string_at(r, "id");
                    if (is_driver) driver_rule_ids.push_back(id);
                    if (!id.empty()) rules.emplace(id, meta_of(r));
                }
            };
            if (auto drv = tool->find("driver"); drv != tool->end() && drv->is_object()) {
                collect(*drv, true);
            }
            if (auto ext = tool->find("extensions"); ext != tool->end() && ext->is_array()) {
                for (const auto& e : *ext) {
                    if (e.is_object()) collect(e, false);
                }
            }
        }

        const auto results = run.find("results");
        if (results == run.end() || results->is_null()) continue;
        if (!results->is_array()) throw Error(ErrorKind::MalformedSarif, "results is not an array");
        for (const auto& res : *results) {
            if (!res.is_object()) throw Error(ErrorKind::MalformedSarif, "result is not an object");
            AnalyzerFinding f;
            f.rule_id = string_at(res, "ruleId");
            if (f.rule_id.empty()) {
                if (auto r = res.find("rule"); r != res.end()) f.rule_id = string_at(*r, "id");
            }
            if (f.rule_id.empty()) {
                const int idx = int_at(res, "ruleIndex", -1);
                if (idx >= 0 && static_cast<std::size_t>(idx) < driver_rule_ids.size()) {
                    f.rule_id = driver_rule_ids[static_cast<std::size_t>(idx)];
                }
            }
            const RuleMeta* meta = nullptr;
            if (auto it = rules.find(f.rule_id); it != rules.end()) meta = &it->second;

            if (auto msg = res.find("message"); msg != res.end()) {
                f.message = string_at(*msg, "text");
                if (f.message.empty()) f.message = string_at(*msg, "markdown");
            }
            if (f.message.empty()) {
                f.message = meta && !meta->short_description.empty() ? meta->short_description
                                                                     : f.rule_id;
            }
            if (f.message.empty()) f.message = "(no message)";

            if (auto locs = res.find("locations"); locs != res.end() && locs->is_array() &&
                                                   !locs->empty()) {
                const auto& loc = (*locs)[0];
                if (auto phys = loc.find("physicalLocation"); phys != loc.end()) {
                    if (auto art = phys->find("artifactLocation"); art != phys->end()) {
                        f.file = string_at(*art, "uri");
                    }
                    if (auto region = phys->find("region"); region != phys->end()) {
                        f.start_line = int_at(*region, "startLine", 1);
                        f.end_line = int_at(*region, "endLine", f.start_line);
                    }
                }
            }
            if (f.end_line < f.start_line) f.end_line = f.start_line;

            if (meta && !meta->security_severity.empty()) {
                f.severity = meta->security_severity;
            } else if (auto lvl = string_at(res, "level"); !lvl.empty()) {
                f.severity = lvl;
            } else if (meta && !meta->default_level.empty()) {
                f.severity = meta->default_level;
            } else {
                f.severity = "warning";
            }
            if (meta) f.cwes = meta->cwes;
            out.push_back(std::move(f));
        }
    }
    return out;
}

std::vector<Cwe> map_rule_to_cwe(const std::string& rule_id, const std::vector<Cwe>& sarif_cwes,
                                 const std::map<std::string, std::vector<Cwe>>& fallback_table) {
    if (!sarif_cwes.empty()) return sarif_cwes;
    if (const auto it = fallback_table.find(rule_id); it != fallback_table.end()) return it->second;
    return {};
}

std::map<std::string, std::vector<Cwe>> load_rule_map(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_file(path.string()));
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidConfig, "rule map " + path.string() + ": " + e.what());
    }
    std::map<std::string, std::vector<Cwe>> table;
    for (const auto& [rule, cwes] : doc.items()) {
        std::vector<Cwe> list;
        for (const auto& c : cwes) list.push_back(Cwe::from(c.get<std::string>()));
        table.emplace(rule, std::move(list));
    }
    return table;
}

std::vector<AnalyzerFinding> dedupe_findings(std::vector<AnalyzerFinding> findings) {
    std::set<std::tuple<std::string, std::string, int>> seen;
    std::vector<AnalyzerFinding> out;
    for (auto& f : findings) {
        if (seen.emplace(f.rule_id, f.file, f.start_line).second) out.push_back(std::move(f));
    }
    return out;
}

double severity_rank(const std::string& severity) {
    try {
        std::size_t used = 0;
        const double v = std::stod(severity, &used);
        if (used == severity.size()) return v;
    } catch (const std::exception&) {
    }
    const std::string s = to_lower(severity);
    if (s == "error") return 7.5;
    if (s == "warning") return 5.0;
    if (s == "note" || s == "recommendation") return 2.0;
    return 0.0;
}

std::vector<AnalyzerFinding> cap_findings(std::vector<AnalyzerFinding> findings, std::size_t cap) {
    std::stable_sort(findings.begin(), findings.end(),
                     [](const AnalyzerFinding& a, const AnalyzerFinding& b) {
                         return severity_rank(a.severity) > severity_rank(b.severity);
                     });
    if (findings.size() > cap) findings.resize(cap);
    return findings;
}

}  // namespace vulnloop
