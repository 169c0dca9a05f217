#pragma once

#include "vulnloop/common.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace vulnloop {

/// One natural-language prompt, optionally with ground truth for fix-only runs.
/// Empty CWE lists and empty code are normalized to absent.
struct PromptRecord {
    std::string id;
    std::string nl_prompt;
    Language target_language = Language::C;
    std::string source;
    std::optional<std::vector<Cwe>> ground_truth_cwes;
    std::optional<std::string> ground_truth_code;

    bool operator==(const PromptRecord&) const = default;
};

enum class CorpusFormat { Jsonl, Csv };

/// Chooses by extension: .csv is CSV, everything else JSONL.
CorpusFormat format_for(const std::filesystem::path& path);

struct RowError {
    /// 1-based line (JSONL) or record (CSV, header excluded) number.
    std::size_t row = 0;
    std::string message;
};

struct LoadResult {
    std::vector<PromptRecord> records;
    std::vector<RowError> errors;
};

/// Throws Error(MissingFile) or, when no row parses, Error(EmptyCorpus).
LoadResult load_corpus(const std::filesystem::path& path, CorpusFormat format);
LoadResult load_corpus(const std::filesystem::path& path);

LoadResult parse_jsonl_corpus(std::string_view text);
LoadResult parse_csv_corpus(std::string_view text);

std::string to_jsonl(const std::vector<PromptRecord>& records);
std::string to_csv(const std::vector<PromptRecord>& records);
void save_corpus(const std::filesystem::path& path, const std::vector<PromptRecord>& records,
                 CorpusFormat format);

/// Lowercased alphanumeric tokens.
std::vector<std::string> prompt_tokens(std::string_view text);
double token_jaccard(std::string_view a, std::string_view b);

struct DuplicatePair {
    std::string removed_id;
    std::string kept_id;
    double similarity = 0.0;
};

struct DedupeResult {
    std::vector<PromptRecord> kept;
    std::vector<PromptRecord> removed;
    std::vector<DuplicatePair> pairs;
};

/// A record is removed when its similarity to an earlier kept record reaches
/// the threshold. Throws Error(InvalidArgument) unless 0 < threshold <= 1.
DedupeResult dedupe(const std::vector<PromptRecord>& records, double threshold = 0.9);

struct CorpusSummary {
    std::size_t total = 0;
    std::map<std::string, std::size_t> by_source;
    std::map<std::string, std::size_t> by_language;
    std::size_t duplicates_removed = 0;
    std::size_t with_ground_truth_code = 0;
};

CorpusSummary summarize(const std::vector<PromptRecord>& records, std::size_t duplicates_removed = 0);
std::string render_summary(const CorpusSummary& summary);

}  // namespace vulnloop
