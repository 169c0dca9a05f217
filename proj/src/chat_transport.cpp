#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "vulnloop/model_gateway.hpp"

#include <chrono>
#include <cstdlib>
#include <regex>

namespace vulnloop {

using nlohmann::json;

namespace {

struct ParsedUrl {
    std::string origin;
    std::string path;
};

ParsedUrl split_url(const std::string& url) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)", std::regex::icase);
    std::smatch m;
    if (!std::regex_match(url, m, re)) {
        throw Error(ErrorKind::InvalidConfig, "endpoint is not an http(s) URL: " + url);
    }
    return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

class HttplibTransport : public HttpTransport {
public:
    HttpResponse post_json(const std::string& url,
                           const std::map<std::string, std::string>& headers,
                           const std::string& body, std::chrono::milliseconds timeout) override {
        const ParsedUrl parsed = split_url(url);
        httplib::Client client(parsed.origin);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
        const auto usecs =
            std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());
        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        const auto res = client.Post(parsed.path, h, body, "application/json");
        HttpResponse out;
        if (!res) {
            out.transport_error = httplib::to_string(res.error());
            return out;
        }
        out.status = res->status;
        out.body = res->body;
        return out;
    }
};

}  // namespace

std::unique_ptr<HttpTransport> make_http_transport() { return std::make_unique<HttplibTransport>(); }

ChatCompletionsProvider::ChatCompletionsProvider(ProviderProfile profile,
                                                 std::unique_ptr<HttpTransport> transport)
    : profile_(std::move(profile)), transport_(std::move(transport)) {}

std::string ChatCompletionsProvider::request_body(const ModelRequest& request) const {
    json msgs = json::array();
    for (const auto& m : request.messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    return json{{"model", profile_.model_id},
                {"messages", msgs},
                {"temperature", request.temperature},
                {"max_tokens", request.max_output_tokens},
                {"stream", false}}
        .dump(-1, ' ', false, json::error_handler_t::replace);
}

ModelReply ChatCompletionsProvider::send(const ModelRequest& request) {
    std::map<std::string, std::string> headers;
    if (!profile_.auth_ref.empty()) {
        const char* token = std::getenv(profile_.auth_ref.c_str());
        if (token == nullptr || *token == '\0') {
            throw Error(ErrorKind::ProviderFailure,
                        "environment variable " + profile_.auth_ref + " is not set");
        }
        headers["Authorization"] = std::string("Bearer ") + token;
    }

    const auto started = std::chrono::steady_clock::now();
    const HttpResponse res =
        transport_->post_json(profile_.endpoint, headers, request_body(request), profile_.request_timeout);
    const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - started);

    if (!res.transport_error.empty()) {
        throw TransientProviderError("transport error: " + res.transport_error);
    }
    if (res.status == 429 || res.status >= 500) {
        throw TransientProviderError("HTTP " + std::to_string(res.status));
    }
    if (res.status < 200 || res.status >= 300) {
        throw Error(ErrorKind::ProviderFailure,
                    "HTTP " + std::to_string(res.status) + ": " + res.body.substr(0, 500));
    }

    ModelReply reply;
    reply.latency = latency;
    reply.provider = profile_.name;
    try {
        const json j = json::parse(res.body);
        const auto& choice = j.at("choices").at(0);
        const auto& content = choice.at("message").at("content");
        reply.text = content.is_string() ? content.get<std::string>() : std::string();
        if (auto usage = j.find("usage"); usage != j.end() && usage->is_object()) {
            reply.tokens_in = usage->value("prompt_tokens", std::int64_t{0});
            reply.tokens_out = usage->value("completion_tokens", std::int64_t{0});
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::ProviderFailure, std::string("malformed completion: ") + e.what());
    }
    if (reply.text.empty()) throw Error(ErrorKind::ProviderFailure, "empty completion");
    return reply;
}

}  // namespace vulnloop
