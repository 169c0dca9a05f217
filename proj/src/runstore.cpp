#include "vulnloop/runstore.hpp"

#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fcntl.h>
#include <unistd.h>

namespace vulnloop {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::string_view kKindNames[] = {"RunStart",     "Transition",   "ModelCall",
                                           "ParseResult",  "AnalyzerScan", "ScoreEvent",
                                           "CodeSnapshot", "Termination"};

std::string utc_now() {
    const auto now = std::chrono::system_clock::now();
    const auto secs = std::chrono::system_clock::to_time_t(now);
    const auto ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count() %
        1000;
    std::tm tm{};
    gmtime_r(&secs, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

void write_all(int fd, const std::string& data, const std::string& what) {
    std::size_t done = 0;
    while (done < data.size()) {
        const ssize_t n = ::write(fd, data.data() + done, data.size() - done);
        if (n < 0) {
            if (errno == EINTR) continue;
            if (errno == ENOSPC || errno == EDQUOT) {
                throw Error(ErrorKind::StorageFull, "no space left writing " + what);
            }
            throw Error(ErrorKind::Io, "write " + what + ": " + std::strerror(errno));
        }
        done += static_cast<std::size_t>(n);
    }
}

std::mutex& manifest_mutex() {
    static std::mutex m;
    return m;
}

}  // namespace

std::string_view to_string(EntryKind kind) { return kKindNames[static_cast<int>(kind)]; }

std::optional<EntryKind> parse_entry_kind(std::string_view text) {
    for (std::size_t i = 0; i < std::size(kKindNames); ++i) {
        if (kKindNames[i] == text) return static_cast<EntryKind>(i);
    }
    return std::nullopt;
}

std::string dump_json(const json& j) { return j.dump(-1, ' ', false, json::error_handler_t::replace); }

std::string payload_digest(const json& payload) { return sha256_hex(dump_json(payload)); }

json RunLogEntry::to_json() const {
    return json{{"run_id", run_id},
                {"sequence", sequence},
                {"timestamp", timestamp},
                {"kind", std::string(to_string(kind))},
                {"payload", payload},
                {"payload_digest", payload_digest}};
}

std::string sanitize_run_id(std::string_view id) {
    std::string out;
    for (const char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                        c == '.' || c == '_' || c == '-';
        out.push_back(ok ? c : '_');
    }
    if (out.empty() || out == "." || out == "..") out = "run";
    return out;
}

RunLog::RunLog(std::string run_id) : run_id_(std::move(run_id)) {}

RunLog::RunLog(const fs::path& root, std::string run_id, bool durable)
    : run_id_(std::move(run_id)), durable_(durable) {
    dir_ = root / sanitize_run_id(run_id_);
    std::error_code ec;
    fs::create_directories(dir_ / "snapshots", ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create " + dir_.string() + ": " + ec.message());
    const fs::path file = dir_ / "log.jsonl";
    fd_ = ::open(file.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error(ErrorKind::Io, "open " + file.string() + ": " + std::strerror(errno));
}

RunLog::~RunLog() {
    if (fd_ >= 0) ::close(fd_);
}

void RunLog::write_line(const std::string& line) {
    if (fd_ < 0) return;
    write_all(fd_, line, (dir_ / "log.jsonl").string());
    if (durable_ && ::fsync(fd_) != 0) {
        if (errno == ENOSPC || errno == EDQUOT) throw Error(ErrorKind::StorageFull, "fsync: no space");
        throw Error(ErrorKind::Io, std::string("fsync: ") + std::strerror(errno));
    }
}

std::int64_t RunLog::append(EntryKind kind, json payload) {
    std::lock_guard lock(mutex_);
    if (closed_) throw Error(ErrorKind::RunClosed, "run " + run_id_ + " is closed");
    RunLogEntry e;
    e.run_id = run_id_;
    e.sequence = next_sequence_;
    e.timestamp = utc_now();
    e.kind = kind;
    e.payload = std::move(payload);
    e.payload_digest = payload_digest(e.payload);
    write_line(dump_json(e.to_json()) + "\n");
    ++next_sequence_;
    if (kind == EntryKind::Termination) closed_ = true;
    entries_.push_back(std::move(e));
    return entries_.back().sequence;
}

std::int64_t RunLog::snapshot(const CodeArtifact& code, const std::string& label) {
    std::int64_t seq = 0;
    {
        std::lock_guard lock(mutex_);
        seq = next_sequence_;
    }
    if (!dir_.empty()) {
        const fs::path file =
            dir_ / "snapshots" / (std::to_string(seq) + "." + std::string(file_extension(code.language)));
        write_file(file.string(), code.source);
    }
    return append(EntryKind::CodeSnapshot, json{{"label", label},
                                                {"language", std::string(to_string(code.language))},
                                                {"version", code.version},
                                                {"lineage", code.lineage},
                                                {"source", code.source},
                                                {"digest", sha256_hex(code.source)}});
}

bool RunLog::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

std::vector<RunLogEntry> RunLog::entries() const {
    std::lock_guard lock(mutex_);
    return entries_;
}

std::vector<RunLogEntry> parse_run_log(std::string_view jsonl) {
    std::vector<RunLogEntry> out;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(jsonl)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const std::string where = "log line " + std::to_string(line_no);
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw Error(ErrorKind::LogCorrupt, where + ": " + e.what());
        }
        RunLogEntry e;
        try {
            e.run_id = j.at("run_id").get<std::string>();
            e.sequence = j.at("sequence").get<std::int64_t>();
            e.timestamp = j.value("timestamp", "");
            const auto kind = parse_entry_kind(j.at("kind").get<std::string>());
            if (!kind) throw Error(ErrorKind::LogCorrupt, where + ": unknown entry kind");
            e.kind = *kind;
            e.payload = j.at("payload");
            e.payload_digest = j.at("payload_digest").get<std::string>();
        } catch (const json::exception& ex) {
            throw Error(ErrorKind::LogCorrupt, where + ": " + ex.what());
        }
        if (payload_digest(e.payload) != e.payload_digest) {
            throw Error(ErrorKind::LogCorrupt, where + ": payload digest mismatch");
        }
        if (!out.empty() && e.sequence <= out.back().sequence) {
            throw Error(ErrorKind::LogCorrupt, where + ": sequence not increasing");
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<RunLogEntry> read_run_log(const fs::path& root, const std::string& run_id) {
    const fs::path file = root / sanitize_run_id(run_id) / "log.jsonl";
    return parse_run_log(read_file(file.string()));
}

void append_manifest(const fs::path& root, const json& line) {
    std::lock_guard lock(manifest_mutex());
    fs::create_directories(root);
    const fs::path file = root / "manifest.jsonl";
    const int fd = ::open(file.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) throw Error(ErrorKind::Io, "open " + file.string() + ": " + std::strerror(errno));
    try {
        write_all(fd, dump_json(line) + "\n", file.string());
    } catch (...) {
        ::close(fd);
        throw;
    }
    ::close(fd);
}

}  // namespace vulnloop
