#include "vulnloop/common.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace vulnloop {

std::string_view to_string(Language lang) {
    switch (lang) {
        case Language::C: return "c";
        case Language::Cpp: return "cpp";
        case Language::Python: return "python";
    }
    return "c";
}

std::optional<Language> parse_language(std::string_view text) {
    const std::string lower = to_lower(trim(text));
    if (lower == "c") return Language::C;
    if (lower == "cpp" || lower == "c++" || lower == "cxx") return Language::Cpp;
    if (lower == "python" || lower == "py" || lower == "python3") return Language::Python;
    return std::nullopt;
}

std::string_view file_extension(Language lang) {
    switch (lang) {
        case Language::C: return "c";
        case Language::Cpp: return "cpp";
        case Language::Python: return "py";
    }
    return "c";
}

std::string_view fence_tag(Language lang) {
    switch (lang) {
        case Language::C: return "c";
        case Language::Cpp: return "cpp";
        case Language::Python: return "python";
    }
    return "c";
}

std::string_view display_name(Language lang) {
    switch (lang) {
        case Language::C: return "C";
        case Language::Cpp: return "C++";
        case Language::Python: return "Python";
    }
    return "C";
}

bool is_c_family(Language lang) { return lang == Language::C || lang == Language::Cpp; }

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::InvalidArgument: return "InvalidArgument";
        case ErrorKind::InvalidConfig: return "InvalidConfig";
        case ErrorKind::Io: return "Io";
        case ErrorKind::MissingContextField: return "MissingContextField";
        case ErrorKind::UnknownTemplate: return "UnknownTemplate";
        case ErrorKind::NotAnEpTemplate: return "NotAnEpTemplate";
        case ErrorKind::ProviderFailure: return "ProviderFailure";
        case ErrorKind::TokenBudgetExceeded: return "TokenBudgetExceeded";
        case ErrorKind::ScriptExhausted: return "ScriptExhausted";
        case ErrorKind::Unparseable: return "Unparseable";
        case ErrorKind::NoCodeBlock: return "NoCodeBlock";
        case ErrorKind::BuildFailed: return "BuildFailed";
        case ErrorKind::AnalyzerCrashed: return "AnalyzerCrashed";
        case ErrorKind::Timeout: return "Timeout";
        case ErrorKind::MalformedSarif: return "MalformedSarif";
        case ErrorKind::MissingFile: return "MissingFile";
        case ErrorKind::EmptyCorpus: return "EmptyCorpus";
        case ErrorKind::UnknownIteration: return "UnknownIteration";
        case ErrorKind::StorageFull: return "StorageFull";
        case ErrorKind::RunClosed: return "RunClosed";
        case ErrorKind::LogCorrupt: return "LogCorrupt";
        case ErrorKind::DivergenceDetected: return "DivergenceDetected";
    }
    return "Unknown";
}

std::optional<Cwe> Cwe::parse(std::string_view text) {
    const std::string lower = to_lower(trim(text));
    if (lower.rfind("cwe", 0) != 0) return std::nullopt;
    std::size_t i = 3;
    while (i < lower.size() && (lower[i] == ' ' || lower[i] == '-' || lower[i] == '_' ||
                                lower[i] == ':' || lower[i] == '#')) {
        ++i;
    }
    std::size_t start = i;
    while (i < lower.size() && std::isdigit(static_cast<unsigned char>(lower[i]))) ++i;
    const std::size_t digits = i - start;
    if (digits == 0 || digits > 4) return std::nullopt;
    std::string number = lower.substr(start, digits);
    // strip leading zeros but keep at least one digit
    const auto nz = number.find_first_not_of('0');
    number = nz == std::string::npos ? "0" : number.substr(nz);
    return Cwe("CWE-" + number);
}

Cwe Cwe::from(std::string_view text) {
    auto parsed = parse(text);
    if (!parsed) {
        throw Error(ErrorKind::InvalidArgument, "malformed CWE identifier: " + std::string(text));
    }
    return *parsed;
}

int Cwe::number() const { return std::stoi(id_.substr(4)); }

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::int64_t estimate_tokens(std::string_view text) {
    return static_cast<std::int64_t>((text.size() + 3) / 4);
}

std::string to_lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string trim(std::string_view text) {
    const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    std::size_t b = 0;
    std::size_t e = text.size();
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    return std::string(text.substr(b, e - b));
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (start <= text.size()) {
        const auto nl = text.find('\n', start);
        if (nl == std::string_view::npos) {
            if (start < text.size()) lines.emplace_back(text.substr(start));
            break;
        }
        lines.emplace_back(text.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::MissingFile, "cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, std::string_view contents) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error(ErrorKind::Io, "short write to " + path);
}

}  // namespace vulnloop
