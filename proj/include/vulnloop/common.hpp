#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vulnloop {

enum class Language { C, Cpp, Python };

std::string_view to_string(Language lang);
/// Accepts "c", "cpp", "c++", "python", "py" (case-insensitive).
std::optional<Language> parse_language(std::string_view text);
/// Source file extension without the dot.
std::string_view file_extension(Language lang);
/// Fence tag used when embedding code in prompts.
std::string_view fence_tag(Language lang);
/// Human-readable name used in "Code Snippet:" lines.
std::string_view display_name(Language lang);
bool is_c_family(Language lang);

enum class ErrorKind {
    InvalidArgument,
    InvalidConfig,
    Io,
    MissingContextField,
    UnknownTemplate,
    NotAnEpTemplate,
    ProviderFailure,
    TokenBudgetExceeded,
    ScriptExhausted,
    Unparseable,
    NoCodeBlock,
    BuildFailed,
    AnalyzerCrashed,
    Timeout,
    MalformedSarif,
    MissingFile,
    EmptyCorpus,
    UnknownIteration,
    StorageFull,
    RunClosed,
    LogCorrupt,
    DivergenceDetected,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// A CWE identifier, always held in canonical "CWE-<digits>" form.
class Cwe {
public:
    /// Normalizes "CWE 120", "cwe-120", "CWE-120:", "CWE120" to "CWE-120".
    /// Returns nullopt when no 1..4 digit identifier follows the prefix.
    static std::optional<Cwe> parse(std::string_view text);
    /// Throws Error(InvalidArgument) on malformed input.
    static Cwe from(std::string_view text);

    Cwe() = default;

    const std::string& str() const noexcept { return id_; }
    int number() const;

    auto operator<=>(const Cwe&) const = default;

private:
    explicit Cwe(std::string id) : id_(std::move(id)) {}
    std::string id_;
};

/// A versioned snapshot of generated or fixed source.
struct CodeArtifact {
    std::string source;
    Language language = Language::C;
    int version = 0;
    /// How this snapshot was obtained, e.g. "generated:tagged-fence", "fix:S2".
    std::string lineage;
};

/// Hex SHA-256 of the given bytes.
std::string sha256_hex(std::string_view bytes);

/// Ceiling of characters / 4; the pre-flight token heuristic.
std::int64_t estimate_tokens(std::string_view text);

std::string to_lower(std::string_view text);
std::string trim(std::string_view text);
std::vector<std::string> split_lines(std::string_view text);

std::string read_file(const std::string& path);
void write_file(const std::string& path, std::string_view contents);

}  // namespace vulnloop
