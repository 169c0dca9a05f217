#include "vulnloop/cli.hpp"

#include "vulnloop/batch.hpp"
#include "vulnloop/config.hpp"
#include "vulnloop/corpus.hpp"
#include "vulnloop/metrics.hpp"
#include "vulnloop/orchestrator.hpp"
#include "vulnloop/replay.hpp"

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <cstdio>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace vulnloop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::atomic<bool> g_abort{false};

extern "C" void on_sigint(int) { g_abort.store(true); }

struct Overrides {
    std::string config;
    std::string output_dir;
    std::string provider;
    std::string model;
    std::string endpoint;
    std::string auth_ref;
    std::string scenario;
    std::string templates;
    std::string analyzer;
    std::string codeql;
    std::string strategy;
    std::string language;
    std::optional<double> temperature;
    std::optional<int> max_iterations;
    bool no_ep = false;
    bool no_crosscheck = false;
    bool adaptive = false;
    bool escalate = false;
    bool no_escalation = false;
    bool no_compile = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config, "JSON config file");
    cmd->add_option("--output-dir", o.output_dir, "Where runs, logs and reports go");
    cmd->add_option("--provider", o.provider, "mock | chat-completions");
    cmd->add_option("--model", o.model, "Model id sent to the provider");
    cmd->add_option("--endpoint", o.endpoint, "Chat-completions URL");
    cmd->add_option("--auth-env", o.auth_ref, "Environment variable holding the API key");
    cmd->add_option("--scenario", o.scenario, "Canned replies for the mock provider");
    cmd->add_option("--templates", o.templates, "Prompt template directory");
    cmd->add_option("--analyzer", o.analyzer, "offline | codeql");
    cmd->add_option("--codeql", o.codeql, "Path to the codeql executable");
    cmd->add_option("--strategy", o.strategy, "ep | cot | coc | plain");
    cmd->add_option("--language", o.language, "c | cpp | python");
    cmd->add_option("--temperature", o.temperature, "Initial sampling temperature");
    cmd->add_option("--max-iterations", o.max_iterations, "Iteration budget per escalation level");
    cmd->add_flag("--no-ep", o.no_ep, "Drop the reward/penalty block from fix prompts");
    cmd->add_flag("--no-crosscheck", o.no_crosscheck, "Skip the static-analysis stage");
    cmd->add_flag("--adaptive", o.adaptive, "Inject example fixes from the first round on");
    cmd->add_flag("--escalate", o.escalate, "Raise temperature, then arm examples, on budget exhaustion");
    cmd->add_flag("--no-escalation", o.no_escalation, "Never escalate");
    cmd->add_flag("--no-compile-check", o.no_compile, "Offline analyzer: skip the build step");
}

Language language_arg(const std::string& text) {
    const auto lang = parse_language(text);
    if (!lang) throw Error(ErrorKind::InvalidArgument, "unknown language: " + text);
    return *lang;
}

AppConfig effective_config(const Overrides& o, bool batch_mode, bool needs_model = true) {
    AppConfig app = o.config.empty() ? AppConfig{} : load_app_config(o.config);
    RunConfig& run = app.run;

    if (!o.output_dir.empty()) app.output_dir = o.output_dir;
    if (!o.templates.empty()) app.templates_dir = o.templates;
    if (!o.scenario.empty()) app.scenario_path = o.scenario;
    if (!o.provider.empty()) {
        const auto kind = parse_provider_kind(o.provider);
        if (!kind) throw Error(ErrorKind::InvalidArgument, "unknown provider: " + o.provider);
        run.provider.kind = *kind;
        run.provider.name = o.provider;
    }
    if (!o.model.empty()) run.provider.model_id = o.model;
    if (!o.endpoint.empty()) run.provider.endpoint = o.endpoint;
    if (!o.auth_ref.empty()) run.provider.auth_ref = o.auth_ref;
    if (!o.analyzer.empty()) {
        const std::string a = to_lower(o.analyzer);
        if (a == "codeql") {
            run.analyzer.kind = AnalyzerKind::CodeQL;
        } else if (a == "offline") {
            run.analyzer.kind = AnalyzerKind::OfflinePattern;
        } else {
            throw Error(ErrorKind::InvalidArgument, "unknown analyzer: " + o.analyzer);
        }
    }
    if (!o.codeql.empty()) {
        run.analyzer.kind = AnalyzerKind::CodeQL;
        run.analyzer.executable_path = o.codeql;
    }
    if (o.no_compile) run.analyzer.compile_check = false;
    if (!o.strategy.empty()) {
        const auto s = parse_strategy(o.strategy);
        if (!s) throw Error(ErrorKind::InvalidArgument, "unknown strategy: " + o.strategy);
        run.strategy = *s;
    }
    if (!o.language.empty()) run.target_language = language_arg(o.language);
    if (o.temperature) run.temperature_initial = *o.temperature;
    if (o.max_iterations) run.max_iterations = *o.max_iterations;
    if (o.no_ep) run.ep_enabled = false;
    if (o.no_crosscheck) run.crosscheck_enabled = false;
    if (o.adaptive) run.adaptive_enabled = true;

    if (o.escalate && o.no_escalation) {
        throw Error(ErrorKind::InvalidArgument, "--escalate and --no-escalation conflict");
    }
    if (o.escalate) {
        run.escalation_enabled = true;
    } else if (o.no_escalation) {
        run.escalation_enabled = false;
    } else {
        run.escalation_enabled = app.escalation.value_or(batch_mode);
    }

    if (needs_model && run.provider.kind == ProviderKind::Mock && app.scenario_path.empty()) {
        throw Error(ErrorKind::InvalidConfig, "the mock provider needs a scenario (--scenario)");
    }
    run.validate();
    return app;
}

struct Resources {
    TemplateLibrary templates;
    AdaptiveStore adaptive;
};

Resources load_resources(AppConfig& app) {
    Resources r{app.templates_dir.empty() ? TemplateLibrary::load_default()
                                          : TemplateLibrary::load(app.templates_dir),
                {}};
    r.adaptive = AdaptiveStore::load(r.templates.directory() / "adaptive");
    if (app.run.analyzer.fallback_map.empty()) {
        const fs::path map = r.templates.directory() / "rule_cwe_map.json";
        if (fs::exists(map)) app.run.analyzer.fallback_map = load_rule_map(map);
    }
    return r;
}

void print_warnings(const AppConfig& app, std::ostream& err) {
    for (const auto& w : app.run.provider.warnings()) err << "vulnloop: warning: " << w << "\n";
}

ProviderFactory provider_factory(const AppConfig& app) {
    if (app.run.provider.kind == ProviderKind::Mock) {
        auto scenario = std::make_shared<MockScenario>(load_mock_scenario(app.scenario_path));
        return [scenario](const PromptRecord& rec) -> std::shared_ptr<ModelProvider> {
            return std::make_shared<ScriptedProvider>(scenario->replies_for(rec.id));
        };
    }
    const ProviderProfile profile = app.run.provider;
    return [profile](const PromptRecord&) { return make_provider(profile); };
}

AnalyzerFactory analyzer_factory(const AppConfig& app) {
    const AnalyzerProfile profile = app.run.analyzer;
    return [profile](const PromptRecord&) -> std::shared_ptr<Analyzer> {
        return make_analyzer(profile);
    };
}

int exit_code_for(TerminationKind kind) {
    switch (kind) {
        case TerminationKind::SecureConfirmed: return 0;
        case TerminationKind::BudgetExhausted:
        case TerminationKind::BuildFailureFinal:
        case TerminationKind::ParseFailure: return 2;
        default: return 1;
    }
}

std::string short_digest(const std::string& source) { return sha256_hex(source).substr(0, 12); }

void print_outcome(const RunOutcome& out, const fs::path& code_path, std::ostream& os) {
    os << "run " << out.run_id << ": " << to_string(out.termination.kind);
    if (!out.termination.detail.empty()) os << " (" << out.termination.detail << ")";
    os << "\n"
       << "iterations: " << out.total_iterations << "\n"
       << "score: " << out.score << "\n"
       << "analyzer invocations: " << out.analyzer_invocations << "\n"
       << "final code: " << code_path.string() << " [" << short_digest(out.final_code.source)
       << "]\n";
}

int single_run(AppConfig app, const std::string& run_id, const std::optional<CodeArtifact>& code,
               const std::string& prompt, std::ostream& out, std::ostream& err) {
    Resources res = load_resources(app);
    print_warnings(app, err);

    PromptRecord rec;
    rec.id = run_id;
    rec.nl_prompt = prompt;
    rec.target_language = app.run.target_language;

    const fs::path runs_root = app.output_dir / "runs";
    RunLog log(runs_root, sanitize_run_id(run_id), true);
    Gateway gateway(app.run.provider, provider_factory(app)(rec));
    std::shared_ptr<Analyzer> analyzer;
    if (app.run.crosscheck_enabled) analyzer = analyzer_factory(app)(rec);

    RunServices services;
    services.gateway = &gateway;
    services.analyzer = analyzer.get();
    services.templates = &res.templates;
    services.adaptive = &res.adaptive;
    services.log = &log;
    services.abort = &g_abort;

    RunOutcome outcome =
        code ? execute_fix_run(*code, app.run, services) : execute_run(prompt, app.run, services);
    outcome.run_id = sanitize_run_id(run_id);

    const fs::path code_path =
        log.directory() / ("final." + std::string(file_extension(app.run.target_language)));
    write_file(code_path.string(), outcome.final_code.source);
    append_manifest(runs_root, json{{"run_id", outcome.run_id},
                                    {"termination", std::string(to_string(outcome.termination.kind))},
                                    {"detail", outcome.termination.detail},
                                    {"iterations", outcome.total_iterations},
                                    {"score", outcome.score},
                                    {"analyzer_invocations", outcome.analyzer_invocations},
                                    {"final_code_digest", sha256_hex(outcome.final_code.source)},
                                    {"config", app.run.to_json()}});
    print_outcome(outcome, code_path, out);
    return exit_code_for(outcome.termination.kind);
}

std::optional<Language> language_from_path(const fs::path& path) {
    const std::string ext = path.extension().string();
    if (ext.size() < 2) return std::nullopt;
    return parse_language(ext.substr(1));
}

std::string default_run_id(const std::string& prefix, const std::string& seed) {
    return prefix + "-" + sha256_hex(seed).substr(0, 12);
}

ReportFormat format_arg(const std::string& text) {
    const auto f = parse_report_format(text);
    if (!f) throw Error(ErrorKind::InvalidArgument, "unknown report format: " + text);
    return *f;
}

std::string_view format_ext(ReportFormat f) {
    switch (f) {
        case ReportFormat::Json: return "json";
        case ReportFormat::Csv: return "csv";
        default: return "txt";
    }
}

std::string default_label(const RunConfig& run) {
    std::string label = run.crosscheck_enabled ? "LLM + cross-check" : "LLM/C";
    if (!run.ep_enabled) label += " (no EP)";
    return label;
}

void print_findings(const AnalyzerReport& report, std::ostream& os) {
    for (const auto& f : report.findings) {
        os << f.file << ":" << f.start_line << ": [" << f.rule_id << "]";
        if (!f.cwes.empty()) {
            os << " (";
            for (std::size_t i = 0; i < f.cwes.size(); ++i) os << (i ? ", " : "") << f.cwes[i].str();
            os << ")";
        }
        os << " " << f.message << "\n";
    }
}

}  // namespace

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Iterative LLM code generation with vulnerability self-checks and static analysis"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "vulnloop 0.1.0");

    Overrides o;

    std::string prompt, prompt_file, run_id;
    auto* generate = app.add_subcommand("generate", "Generate code from a prompt and harden it");
    add_common(generate, o);
    auto* prompt_opt = generate->add_option("--prompt", prompt, "Natural-language request");
    generate->add_option("--prompt-file", prompt_file, "File holding the request")
        ->excludes(prompt_opt)
        ->check(CLI::ExistingFile);
    generate->add_option("--run-id", run_id, "Run id (default derived from the prompt)");

    std::string code_file;
    auto* fix = app.add_subcommand("fix", "Harden existing code");
    add_common(fix, o);
    fix->add_option("--code-file", code_file, "Source to fix")->required()->check(CLI::ExistingFile);
    fix->add_option("--run-id", run_id, "Run id (default derived from the code)");

    std::string corpus_path, baseline, format = "text", label, pass_cmd;
    int jobs = 0;
    bool fix_mode = false;
    double pass_timeout_s = 30.0;
    auto* batch = app.add_subcommand("batch", "Run every record of a corpus and report FSR");
    add_common(batch, o);
    batch->add_option("--corpus", corpus_path, "JSONL or CSV corpus")->required();
    batch->add_option("--jobs", jobs, "Concurrent runs")->check(CLI::PositiveNumber);
    batch->add_flag("--fix-mode", fix_mode, "Start from each record's ground_truth_code");
    batch->add_option("--baseline", baseline, "after-generation | ground-truth");
    batch->add_option("--format", format, "text | json | csv");
    batch->add_option("--label", label, "Configuration label in the report");
    batch->add_option("--pass-cmd", pass_cmd, "Functional test command; {path} is the final code");
    batch->add_option("--pass-timeout", pass_timeout_s, "Seconds per functional test");

    auto* analyze = app.add_subcommand("analyze", "Run the static-analysis stage on one file");
    add_common(analyze, o);
    analyze->add_option("--code-file", code_file, "Source to scan")->required()->check(CLI::ExistingFile);

    std::string ledger_path;
    auto* report = app.add_subcommand("report", "Render a saved ledger");
    report->add_option("--ledger", ledger_path, "ledger.json from a batch")->required()->check(CLI::ExistingFile);
    report->add_option("--format", format, "text | json | csv");
    report->add_option("--label", label, "Configuration label");

    std::string runs_dir;
    auto* replay = app.add_subcommand("replay", "Re-drive a recorded run from its log");
    replay->add_option("--run", run_id, "Run id")->required();
    replay->add_option("--runs-dir", runs_dir, "Runs directory (default vulnloop-out/runs)");
    replay->add_option("--templates", o.templates, "Prompt template directory");

    double threshold = 0.9;
    bool no_dedupe = false;
    auto* stats = app.add_subcommand("corpus-stats", "Summarize and dedupe a corpus");
    stats->add_option("--corpus", corpus_path, "JSONL or CSV corpus")->required();
    stats->add_option("--dedupe-threshold", threshold, "Token Jaccard threshold");
    stats->add_flag("--no-dedupe", no_dedupe, "Count only");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 1;
    }

    g_abort.store(false);
    const auto previous = std::signal(SIGINT, on_sigint);
    struct Restore {
        decltype(previous) handler;
        ~Restore() { std::signal(SIGINT, handler); }
    } restore{previous};

    try {
        if (*generate) {
            if (prompt.empty() && prompt_file.empty()) {
                throw Error(ErrorKind::InvalidArgument, "generate needs --prompt or --prompt-file");
            }
            if (!prompt_file.empty()) prompt = trim(read_file(prompt_file));
            if (prompt.empty()) throw Error(ErrorKind::InvalidArgument, "empty prompt");
            AppConfig cfg = effective_config(o, false);
            const std::string id = run_id.empty() ? default_run_id("generate", prompt) : run_id;
            return single_run(std::move(cfg), id, std::nullopt, prompt, out, err);
        }

        if (*fix) {
            AppConfig cfg = effective_config(o, false);
            if (o.language.empty()) {
                if (const auto lang = language_from_path(code_file)) cfg.run.target_language = *lang;
            }
            CodeArtifact code;
            code.source = read_file(code_file);
            code.language = cfg.run.target_language;
            code.lineage = "ground-truth";
            const std::string id = run_id.empty() ? default_run_id("fix", code.source) : run_id;
            return single_run(std::move(cfg), id, code, "", out, err);
        }

        if (*batch) {
            AppConfig cfg = effective_config(o, true);
            const ReportFormat fmt = format_arg(format);
            Resources res = load_resources(cfg);
            print_warnings(cfg, err);

            LoadResult corpus = load_corpus(corpus_path);
            for (const auto& e : corpus.errors) {
                err << "vulnloop: warning: " << corpus_path << " row " << e.row << ": " << e.message
                    << "\n";
            }

            BatchServices services;
            services.providers = provider_factory(cfg);
            if (cfg.run.crosscheck_enabled) services.analyzers = analyzer_factory(cfg);
            services.templates = &res.templates;
            services.adaptive = &res.adaptive;

            BatchOptions options;
            options.jobs = jobs > 0 ? jobs : cfg.jobs;
            options.runs_root = cfg.output_dir / "runs";
            options.fix_mode = fix_mode;
            options.abort = &g_abort;
            if (!baseline.empty()) {
                const auto mode = parse_baseline_mode(baseline);
                if (!mode) throw Error(ErrorKind::InvalidArgument, "unknown baseline: " + baseline);
                options.baseline = *mode;
            } else if (fix_mode) {
                options.baseline = BaselineMode::GroundTruth;
            }

            const BatchResult result = run_batch(corpus.records, cfg.run, services, options);

            std::size_t failed = 0;
            for (const auto& run : result.runs) {
                if (!run.error.empty()) {
                    ++failed;
                    err << "vulnloop: error[run " << run.run_id << "]: " << run.error << "\n";
                }
            }

            ReportOptions ropts;
            ropts.label = label.empty() ? default_label(cfg.run) : label;
            if (!pass_cmd.empty()) {
                std::vector<FunctionalResult> tests;
                const auto timeout =
                    std::chrono::milliseconds(static_cast<std::int64_t>(pass_timeout_s * 1000.0));
                for (const auto& run : result.runs) {
                    if (!run.outcome) continue;
                    const fs::path code_path =
                        options.runs_root / run.run_id /
                        ("final." + std::string(file_extension(run.record.target_language)));
                    tests.push_back(run_functional_test(run.run_id, pass_cmd, code_path, timeout));
                }
                ropts.pass_at_1 = pass_at_1(tests);
            }

            fs::create_directories(cfg.output_dir);
            write_file((cfg.output_dir / "ledger.json").string(), result.ledger.to_json().dump(2) + "\n");
            const std::string text = render_report(result.ledger, fmt, ropts);
            write_file((cfg.output_dir / ("report." + std::string(format_ext(fmt)))).string(), text);
            out << text;
            if (g_abort.load()) {
                err << "vulnloop: interrupted\n";
                return 1;
            }
            return failed == 0 ? 0 : 1;
        }

        if (*analyze) {
            AppConfig cfg = effective_config(o, false, false);
            if (o.language.empty()) {
                if (const auto lang = language_from_path(code_file)) cfg.run.target_language = *lang;
            }
            load_resources(cfg);
            CodeArtifact code;
            code.source = read_file(code_file);
            code.language = cfg.run.target_language;
            const auto analyzer = make_analyzer(cfg.run.analyzer);
            try {
                const AnalyzerReport rep = analyzer->scan(code);
                if (rep.findings.empty()) {
                    out << "clean\n";
                    return 0;
                }
                print_findings(rep, out);
                out << rep.findings.size() << " finding(s)\n";
                return 2;
            } catch (const BuildFailedError& e) {
                out << "build failed\n" << e.compiler_log();
                if (!e.compiler_log().empty() && e.compiler_log().back() != '\n') out << "\n";
                return 2;
            }
        }

        if (*report) {
            const ReportFormat fmt = format_arg(format);
            json j;
            try {
                j = json::parse(read_file(ledger_path));
            } catch (const json::exception& e) {
                throw Error(ErrorKind::InvalidArgument, ledger_path + ": " + e.what());
            }
            ReportOptions ropts;
            if (!label.empty()) ropts.label = label;
            out << render_report(BatchLedger::from_json(j), fmt, ropts);
            return 0;
        }

        if (*replay) {
            const TemplateLibrary templates =
                o.templates.empty() ? TemplateLibrary::load_default() : TemplateLibrary::load(o.templates);
            const AdaptiveStore adaptive = AdaptiveStore::load(templates.directory() / "adaptive");
            const fs::path root = runs_dir.empty() ? fs::path("vulnloop-out") / "runs" : fs::path(runs_dir);
            const RunOutcome outcome = replay_run(root, run_id, templates, adaptive);
            out << "replay " << run_id << ": reproduced " << outcome.transitions.size()
                << " transitions, " << to_string(outcome.termination.kind) << ", final code ["
                << short_digest(outcome.final_code.source) << "]\n";
            return 0;
        }

        if (*stats) {
            const LoadResult corpus = load_corpus(corpus_path);
            for (const auto& e : corpus.errors) {
                err << "vulnloop: warning: " << corpus_path << " row " << e.row << ": " << e.message
                    << "\n";
            }
            if (no_dedupe) {
                out << render_summary(summarize(corpus.records));
                return 0;
            }
            const DedupeResult d = dedupe(corpus.records, threshold);
            out << render_summary(summarize(d.kept, d.removed.size()));
            for (const auto& p : d.pairs) {
                out << "duplicate: " << p.removed_id << " ~ " << p.kept_id << " (" << std::fixed
                    << std::setprecision(3) << p.similarity << ")\n";
            }
            return 0;
        }
    } catch (const Error& e) {
        err << "vulnloop: error[" << to_string(e.kind()) << "]: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "vulnloop: error[Internal]: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace vulnloop
