#include "vulnloop/metrics.hpp"

#include "vulnloop/process.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace vulnloop {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string fixed4(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

double round4(double v) { return std::round(v * 10000.0) / 10000.0; }

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (const char c : s) {
        if (c == '\'') out += "'\\''";
        else out.push_back(c);
    }
    out += '\'';
    return out;
}

}  // namespace

std::string_view to_string(BaselineMode mode) {
    return mode == BaselineMode::AfterGeneration ? "after-generation" : "ground-truth";
}

std::optional<BaselineMode> parse_baseline_mode(std::string_view text) {
    const std::string t = to_lower(text);
    if (t == "after-generation") return BaselineMode::AfterGeneration;
    if (t == "ground-truth") return BaselineMode::GroundTruth;
    return std::nullopt;
}

BatchLedger::BatchLedger(int horizon, BaselineMode mode) : horizon_(horizon), mode_(mode) {
    if (horizon < 0) throw Error(ErrorKind::InvalidArgument, "horizon must be >= 0");
    for (int k = 0; k <= horizon_; ++k) remaining_[k] = 0;
}

void BatchLedger::record(const RunResult& run) {
    ++total_;
    runs_.push_back(run);
    if (run.ground_truth_vulnerable) ++ground_truth_vulnerable_;
    if (mode_ == BaselineMode::GroundTruth && !run.ground_truth_vulnerable) return;
    for (int k = 0; k <= horizon_; ++k) {
        if (!(run.secure && run.iterations <= k)) ++remaining_[k];
    }
}

BatchLedger BatchLedger::from_counts(std::size_t total_samples, std::size_t initially_vulnerable,
                                     std::map<int, std::size_t> remaining, BaselineMode mode) {
    int horizon = 0;
    for (const auto& [k, n] : remaining) {
        if (k < 0) throw Error(ErrorKind::InvalidArgument, "negative iteration");
        if (n > initially_vulnerable) {
            throw Error(ErrorKind::InvalidArgument, "remaining exceeds initially vulnerable");
        }
        horizon = std::max(horizon, k);
    }
    BatchLedger l(0, mode);
    l.horizon_ = horizon;
    l.total_ = total_samples;
    l.fixed_initial_ = initially_vulnerable;
    l.remaining_ = std::move(remaining);
    return l;
}

std::size_t BatchLedger::initially_vulnerable() const {
    if (fixed_initial_) return *fixed_initial_;
    if (mode_ == BaselineMode::GroundTruth) return ground_truth_vulnerable_;
    return remaining_.at(0);
}

std::size_t BatchLedger::remaining(int k) const {
    const auto it = remaining_.find(k);
    if (it == remaining_.end()) {
        throw Error(ErrorKind::UnknownIteration, "iteration " + std::to_string(k) + " not recorded");
    }
    return it->second;
}

json BatchLedger::to_json() const {
    json rem = json::object();
    for (const auto& [k, n] : remaining_) rem[std::to_string(k)] = n;
    json runs = json::array();
    for (const auto& r : runs_) {
        runs.push_back({{"run_id", r.run_id},
                        {"secure", r.secure},
                        {"iterations", r.iterations},
                        {"termination", r.termination},
                        {"ground_truth_vulnerable", r.ground_truth_vulnerable}});
    }
    return json{{"horizon", horizon_},
                {"baseline", std::string(to_string(mode_))},
                {"total_samples", total_},
                {"initially_vulnerable", initially_vulnerable()},
                {"remaining", rem},
                {"runs", runs}};
}

BatchLedger BatchLedger::from_json(const json& j) {
    try {
        const auto mode = parse_baseline_mode(j.at("baseline").get<std::string>());
        if (!mode) throw Error(ErrorKind::InvalidArgument, "unknown baseline mode");
        const auto& runs = j.at("runs");
        if (!runs.empty() || j.at("total_samples").get<std::size_t>() == 0) {
            BatchLedger l(j.at("horizon").get<int>(), *mode);
            for (const auto& r : runs) {
                l.record({r.at("run_id").get<std::string>(), r.at("secure").get<bool>(),
                          r.at("iterations").get<int>(), r.value("termination", ""),
                          r.value("ground_truth_vulnerable", false)});
            }
            return l;
        }
        std::map<int, std::size_t> rem;
        for (const auto& [k, n] : j.at("remaining").items()) rem[std::stoi(k)] = n.get<std::size_t>();
        return from_counts(j.at("total_samples").get<std::size_t>(),
                           j.at("initially_vulnerable").get<std::size_t>(), std::move(rem), *mode);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::InvalidArgument, std::string("malformed ledger: ") + e.what());
    }
}

double fsr(const BatchLedger& ledger, int k) {
    const std::size_t rem = ledger.remaining(k);
    const std::size_t initial = ledger.initially_vulnerable();
    if (initial == 0) return 1.0;
    return static_cast<double>(initial - rem) / static_cast<double>(initial);
}

double fsr_from_runs(const std::vector<RunResult>& runs, int k, BaselineMode mode) {
    std::size_t initial = 0;
    std::size_t remaining = 0;
    for (const auto& r : runs) {
        if (mode == BaselineMode::GroundTruth && !r.ground_truth_vulnerable) continue;
        const bool fixed_at_zero = r.secure && r.iterations == 0;
        if (mode == BaselineMode::GroundTruth || !fixed_at_zero) ++initial;
        if (!(r.secure && r.iterations <= k)) ++remaining;
    }
    if (initial == 0) return 1.0;
    return static_cast<double>(initial - remaining) / static_cast<double>(initial);
}

std::optional<double> pass_at_1(const std::vector<FunctionalResult>& results) {
    if (results.empty()) return std::nullopt;
    std::size_t passed = 0;
    for (const auto& r : results) passed += r.passed ? 1 : 0;
    return static_cast<double>(passed) / static_cast<double>(results.size());
}

FunctionalResult run_functional_test(const std::string& sample, const std::string& command_template,
                                     const std::filesystem::path& code_path,
                                     std::chrono::milliseconds timeout) {
    std::string cmd = command_template;
    const std::string quoted = shell_quote(std::filesystem::absolute(code_path).string());
    for (std::size_t pos = cmd.find("{path}"); pos != std::string::npos;
         pos = cmd.find("{path}", pos + quoted.size())) {
        cmd.replace(pos, 6, quoted);
    }
    const auto dir = std::filesystem::absolute(code_path).parent_path();
    const auto res = run_shell(cmd, dir, timeout);
    return {sample, !res.timed_out && res.exit_code == 0};
}

std::optional<ReportFormat> parse_report_format(std::string_view text) {
    const std::string t = to_lower(text);
    if (t == "text" || t == "table" || t == "table-text") return ReportFormat::Text;
    if (t == "json") return ReportFormat::Json;
    if (t == "csv") return ReportFormat::Csv;
    return std::nullopt;
}

std::string render_report(const BatchLedger& ledger, ReportFormat format,
                          const ReportOptions& options) {
    std::vector<int> iterations = options.iterations;
    if (iterations.empty() && ledger.total_samples() > 0) {
        for (const auto& [k, n] : ledger.remaining_by_iteration()) {
            if (k >= 1) iterations.push_back(k);
        }
    }
    const std::size_t total = ledger.total_samples();
    const std::size_t initial = ledger.initially_vulnerable();
    const bool zero_denominator = total > 0 && initial == 0;

    if (format == ReportFormat::Json) {
        ordered_json j;
        j["label"] = options.label;
        j["samples"] = total;
        j["baseline"] = std::string(to_string(ledger.mode()));
        j["initially_vulnerable"] = initial;
        j["zero_denominator"] = zero_denominator;
        ordered_json rows = ordered_json::array();
        for (const int k : iterations) {
            ordered_json row;
            row["iteration"] = k;
            row["remaining"] = ledger.remaining(k);
            row["fsr"] = round4(fsr(ledger, k));
            rows.push_back(row);
        }
        j["iterations"] = rows;
        if (options.pass_at_1) j["pass_at_1"] = round4(*options.pass_at_1);
        else j["pass_at_1"] = nullptr;
        return j.dump(2) + "\n";
    }

    if (format == ReportFormat::Csv) {
        std::string out = "iteration,remaining,total,fsr\n";
        for (const int k : iterations) {
            out += std::to_string(k) + ',' + std::to_string(ledger.remaining(k)) + ',' +
                   std::to_string(total) + ',' + fixed4(fsr(ledger, k)) + '\n';
        }
        return out;
    }

    std::ostringstream out;
    out << "Configuration: " << options.label << "\n";
    out << "Samples: " << total << "\n";
    out << "Initially vulnerable: " << initial << "/" << total << " (" << to_string(ledger.mode())
        << ")\n";
    if (zero_denominator) out << "Note: no initially vulnerable samples; FSR is reported as 1.0\n";
    char line[96];
    std::snprintf(line, sizeof line, "%-10s %-12s %s\n", "Iteration", "Vulnerable", "FSR");
    out << line;
    for (const int k : iterations) {
        const std::string vuln = std::to_string(ledger.remaining(k)) + "/" + std::to_string(total);
        std::snprintf(line, sizeof line, "%-10s %-12s %s\n", ("I" + std::to_string(k)).c_str(),
                      vuln.c_str(), fixed4(fsr(ledger, k)).c_str());
        out << line;
    }
    if (options.pass_at_1) out << "pass@1: " << fixed4(*options.pass_at_1) << "\n";
    return out.str();
}

}  // namespace vulnloop
