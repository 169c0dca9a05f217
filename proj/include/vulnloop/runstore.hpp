#pragma once

#include "vulnloop/common.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

namespace vulnloop {

enum class EntryKind {
    RunStart,
    Transition,
    ModelCall,
    ParseResult,
    AnalyzerScan,
    ScoreEvent,
    CodeSnapshot,
    Termination,
};

std::string_view to_string(EntryKind kind);
std::optional<EntryKind> parse_entry_kind(std::string_view text);

struct RunLogEntry {
    std::string run_id;
    std::int64_t sequence = 0;
    std::string timestamp;
    EntryKind kind = EntryKind::Transition;
    nlohmann::json payload;
    std::string payload_digest;

    nlohmann::json to_json() const;
};

/// Compact dump; invalid UTF-8 is replaced rather than rejected.
std::string dump_json(const nlohmann::json& j);

/// sha256 over the compact dump of the payload.
std::string payload_digest(const nlohmann::json& payload);

/// Append-only event log for one run. Entries are kept in memory and, when a
/// directory is attached, written as JSONL to <root>/<run_id>/log.jsonl.
/// Appending after a Termination entry throws Error(RunClosed).
class RunLog {
public:
    /// In-memory only.
    explicit RunLog(std::string run_id);
    /// Creates <root>/<run_id>/ and truncates any previous log there.
    RunLog(const std::filesystem::path& root, std::string run_id, bool durable = true);
    ~RunLog();
    RunLog(const RunLog&) = delete;
    RunLog& operator=(const RunLog&) = delete;

    /// Returns the sequence number assigned. Durable before return when the
    /// log is file-backed and opened durable. Throws Error(StorageFull).
    std::int64_t append(EntryKind kind, nlohmann::json payload);

    /// Appends a CodeSnapshot entry with the full source and, when file-backed,
    /// writes snapshots/<seq>.<ext>.
    std::int64_t snapshot(const CodeArtifact& code, const std::string& label);

    const std::string& run_id() const noexcept { return run_id_; }
    bool closed() const;
    std::vector<RunLogEntry> entries() const;
    /// Empty for in-memory logs.
    const std::filesystem::path& directory() const noexcept { return dir_; }

private:
    void write_line(const std::string& line);

    std::string run_id_;
    std::filesystem::path dir_;
    int fd_ = -1;
    bool durable_ = false;
    bool closed_ = false;
    std::int64_t next_sequence_ = 0;
    std::vector<RunLogEntry> entries_;
    mutable std::mutex mutex_;
};

/// Parses a JSONL log. Throws Error(LogCorrupt) on malformed lines, digest
/// mismatches, or non-increasing sequence numbers.
std::vector<RunLogEntry> parse_run_log(std::string_view jsonl);

/// Reads <root>/<run_id>/log.jsonl. Throws Error(MissingFile) or Error(LogCorrupt).
std::vector<RunLogEntry> read_run_log(const std::filesystem::path& root, const std::string& run_id);

/// Appends one line to <root>/manifest.jsonl; safe across threads.
void append_manifest(const std::filesystem::path& root, const nlohmann::json& line);

/// Run ids become directory names; anything outside [A-Za-z0-9._-] is replaced.
std::string sanitize_run_id(std::string_view id);

}  // namespace vulnloop
