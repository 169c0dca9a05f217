#pragma once

#include "vulnloop/batch.hpp"
#include "vulnloop/crosschecker.hpp"
#include "vulnloop/model_gateway.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace vulnloop::sim {

// A toy C program made of numbered slots. A slot can carry an unbounded
// scanf (the mock model notices it) and/or a sprintf into a fixed buffer
// (only the analyzer notices it). Both fixes keep the program compiling.
std::string program(int visible, int hidden);
int count_visible(std::string_view code);
int count_hidden(std::string_view code);
std::string fix_first_visible(std::string code);
std::string fix_first_hidden(std::string code);

enum class Purpose { Generate, Identify, IdentifyPrime, Fix, Refix, Recheck, HeaderRepair };

std::string_view to_string(Purpose p);
Purpose classify(const ModelRequest& request);
std::string user_text(const ModelRequest& request);
// Code embedded in the request, or empty for generation prompts.
std::string code_in(const ModelRequest& request);

// Replies in the formats the prompts ask for.
std::string identification_reply(std::string_view code);
std::string fix_reply(const std::string& code, int original_score, std::vector<std::string> cwes);
std::string code_reply(const std::string& code);

struct RunPlan {
    int visible = 0;
    int hidden = 0;
    // Fix/refix request ordinals (0-based) whose reply leaves the code unchanged.
    std::set<int> failed_rounds;
};

// Cumulative iterations the plan needs before it is confirmed secure.
int iterations_needed(const RunPlan& plan, bool crosscheck);

// Deterministic mock model for one run.
std::shared_ptr<ModelProvider> provider_for(const RunPlan& plan);

// Remaining-vulnerable checkpoints (iteration -> count) for `total` runs, with
// `never` of the final count left vulnerable for good.
struct Trajectory {
    std::size_t total = 0;
    std::map<int, std::size_t> remaining;
    std::size_t never = 0;
    int horizon = 10;
};

// Iteration at which each run becomes secure, -1 for never, in shuffled order.
std::vector<int> secure_iterations(const Trajectory& target, std::uint64_t seed);

// Splits each secure-at iteration into a concrete plan for the given mode.
std::vector<RunPlan> compile_plans(const std::vector<int>& secure_at, bool crosscheck,
                                   int max_iterations, std::uint64_t seed);

std::vector<PromptRecord> records(std::size_t n, const std::string& prefix = "run");

// Factory keyed on record id ("<prefix>-<index>").
ProviderFactory provider_factory(std::vector<RunPlan> plans);

// Knobs for the fuzz analyzer; probabilities per scan.
struct FaultRates {
    double build_failure = 0.0;
    double crash = 0.0;
    double timeout = 0.0;
};

// Pattern-matching analyzer without a build step that injects faults from
// its own seeded generator.
std::shared_ptr<Analyzer> fault_analyzer(FaultRates rates, std::uint64_t seed);

// Mock model for fuzzing: like provider_for, but some identifications come
// back as prose and some fixes without code, and some calls fail transiently.
struct ModelFaults {
    double prose_identification = 0.0;
    double missing_code = 0.0;
    double transient = 0.0;
};
std::shared_ptr<ModelProvider> fuzz_provider(const RunPlan& plan, ModelFaults faults,
                                             std::uint64_t seed);

}  // namespace vulnloop::sim
