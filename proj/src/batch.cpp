#include "vulnloop/batch.hpp"

#include <algorithm>
#include <mutex>
#include <set>
#include <thread>

namespace vulnloop {

using nlohmann::json;

std::vector<std::string> assign_run_ids(const std::vector<PromptRecord>& records) {
    std::vector<std::string> out;
    std::set<std::string> used;
    for (const auto& r : records) {
        const std::string base = sanitize_run_id(r.id);
        std::string id = base;
        for (int n = 2; used.contains(id); ++n) id = base + "-" + std::to_string(n);
        used.insert(id);
        out.push_back(id);
    }
    return out;
}

namespace {

void run_one(BatchRun& run, const RunConfig& base, const BatchServices& services,
             const BatchOptions& options) {
    RunConfig config = base;
    config.target_language = run.record.target_language;

    std::unique_ptr<RunLog> log;
    if (options.runs_root.empty()) {
        log = std::make_unique<RunLog>(run.run_id);
    } else {
        log = std::make_unique<RunLog>(options.runs_root, run.run_id, options.durable);
    }

    auto provider = services.providers(run.record);
    Gateway gateway(config.provider, provider, services.sleeper);
    std::shared_ptr<Analyzer> analyzer;
    if (config.crosscheck_enabled) analyzer = services.analyzers(run.record);

    RunServices rs;
    rs.gateway = &gateway;
    rs.analyzer = analyzer.get();
    rs.templates = services.templates;
    rs.adaptive = services.adaptive;
    rs.log = log.get();
    rs.abort = options.abort;

    if (options.fix_mode) {
        if (!run.record.ground_truth_code) {
            throw Error(ErrorKind::InvalidArgument,
                        "record " + run.record.id + " has no ground_truth_code");
        }
        CodeArtifact code;
        code.source = *run.record.ground_truth_code;
        code.language = config.target_language;
        code.lineage = "ground-truth";
        run.outcome = execute_fix_run(code, config, rs);
    } else {
        run.outcome = execute_run(run.record.nl_prompt, config, rs);
    }
    run.outcome->run_id = run.run_id;

    if (options.runs_root.empty()) {
        run.log = log->entries();
        return;
    }
    const auto& out = *run.outcome;
    write_file((log->directory() / ("final." + std::string(file_extension(config.target_language))))
                   .string(),
               out.final_code.source);
    append_manifest(options.runs_root,
                    json{{"run_id", run.run_id},
                         {"record_id", run.record.id},
                         {"termination", std::string(to_string(out.termination.kind))},
                         {"detail", out.termination.detail},
                         {"iterations", out.total_iterations},
                         {"score", out.score},
                         {"analyzer_invocations", out.analyzer_invocations},
                         {"final_code_digest", sha256_hex(out.final_code.source)},
                         {"config", config.to_json()}});
}

}  // namespace

BatchResult run_batch(const std::vector<PromptRecord>& records, const RunConfig& base,
                      const BatchServices& services, const BatchOptions& options) {
    base.validate();
    if (!services.providers || services.templates == nullptr) {
        throw Error(ErrorKind::InvalidArgument, "batch needs a provider factory and templates");
    }
    if (base.crosscheck_enabled && !services.analyzers) {
        throw Error(ErrorKind::InvalidArgument, "cross-check enabled but no analyzer factory");
    }
    if (options.jobs < 1) throw Error(ErrorKind::InvalidArgument, "jobs must be >= 1");

    BatchResult result{{}, BatchLedger(base.max_total_iterations(), options.baseline)};
    const auto ids = assign_run_ids(records);
    result.runs.resize(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        result.runs[i].record = records[i];
        result.runs[i].run_id = ids[i];
    }

    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        for (std::size_t i = next++; i < result.runs.size(); i = next++) {
            BatchRun& run = result.runs[i];
            try {
                run_one(run, base, services, options);
            } catch (const Error& e) {
                run.error = std::string(to_string(e.kind())) + ": " + e.what();
            } catch (const std::exception& e) {
                run.error = e.what();
            }
        }
    };
    const int jobs = std::min<int>(options.jobs, std::max<int>(1, static_cast<int>(records.size())));
    std::vector<std::thread> pool;
    for (int j = 1; j < jobs; ++j) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    for (const auto& run : result.runs) {
        RunResult r;
        r.run_id = run.run_id;
        r.ground_truth_vulnerable =
            run.record.ground_truth_cwes.has_value() && !run.record.ground_truth_cwes->empty();
        if (run.outcome) {
            r.secure = run.outcome->secure();
            r.iterations = run.outcome->total_iterations;
            r.termination = std::string(to_string(run.outcome->termination.kind));
        } else {
            r.termination = "Error";
        }
        result.ledger.record(r);
    }
    return result;
}

}  // namespace vulnloop
