#pragma once

#include "vulnloop/common.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace vulnloop {

struct ChatMessage {
    std::string role;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ModelRequest {
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    int max_output_tokens = 4096;

    /// Canonical form used for request digests.
    nlohmann::json to_json() const;
    std::string digest() const;
};

struct ModelReply {
    std::string text;
    std::int64_t tokens_in = 0;
    std::int64_t tokens_out = 0;
    std::chrono::milliseconds latency{0};
    std::string provider;
    /// Failed attempts before this reply.
    int retries = 0;
};

enum class ProviderKind { Mock, ChatCompletions };

std::string_view to_string(ProviderKind kind);
std::optional<ProviderKind> parse_provider_kind(std::string_view text);

struct ProviderProfile {
    std::string name = "mock";
    ProviderKind kind = ProviderKind::Mock;
    /// Full URL of the chat-completions endpoint.
    std::string endpoint;
    std::string model_id;
    /// Name of the environment variable holding the bearer token.
    std::string auth_ref;
    std::int64_t token_limit = 16000;
    std::chrono::milliseconds request_timeout{std::chrono::seconds(120)};
    int max_retries = 3;
    /// First backoff delay; doubled after every failed attempt.
    std::chrono::milliseconds backoff_base{500};
    double temperature_cap = 2.0;

    /// Throws Error(InvalidConfig).
    void validate() const;
    /// Non-fatal remarks, e.g. a token limit too small for the fix prompts.
    std::vector<std::string> warnings() const;

    nlohmann::json to_json() const;
    static ProviderProfile from_json(const nlohmann::json& j);
};

/// A failure worth retrying (transport error, HTTP 429 or 5xx).
class TransientProviderError : public Error {
public:
    explicit TransientProviderError(const std::string& message)
        : Error(ErrorKind::ProviderFailure, message) {}
};

/// One attempt at one chat completion. Throws TransientProviderError for
/// retryable failures and Error for anything else.
class ModelProvider {
public:
    virtual ~ModelProvider() = default;
    virtual ModelReply send(const ModelRequest& request) = 0;
    virtual std::string name() const = 0;
};

/// Deterministic mock: replies come from a queue, or from a callback.
/// Consumption is serialized per instance.
class ScriptedProvider : public ModelProvider {
public:
    using Responder = std::function<std::string(const ModelRequest&)>;

    explicit ScriptedProvider(std::vector<std::string> replies = {});
    explicit ScriptedProvider(Responder responder);

    /// Replaces the remaining queue. Subsequent sends consume it in order.
    void script(std::vector<std::string> replies);

    /// Throws Error(ScriptExhausted) once the queue is empty.
    ModelReply send(const ModelRequest& request) override;
    std::string name() const override { return "mock"; }

    int calls() const;
    std::vector<ModelRequest> requests() const;

private:
    mutable std::mutex mutex_;
    std::deque<std::string> queue_;
    Responder responder_;
    int calls_ = 0;
    std::vector<ModelRequest> requests_;
};

struct HttpResponse {
    int status = 0;
    std::string body;
    /// Non-empty when no HTTP response was received at all.
    std::string transport_error;
};

class HttpTransport {
public:
    virtual ~HttpTransport() = default;
    virtual HttpResponse post_json(const std::string& url,
                                   const std::map<std::string, std::string>& headers,
                                   const std::string& body, std::chrono::milliseconds timeout) = 0;
};

/// cpp-httplib backed transport (http and https).
std::unique_ptr<HttpTransport> make_http_transport();

/// OpenAI-style chat-completions client with bearer auth read from the
/// environment variable named by the profile's auth_ref.
class ChatCompletionsProvider : public ModelProvider {
public:
    ChatCompletionsProvider(ProviderProfile profile, std::unique_ptr<HttpTransport> transport);
    ModelReply send(const ModelRequest& request) override;
    std::string name() const override { return profile_.name; }

    std::string request_body(const ModelRequest& request) const;

private:
    ProviderProfile profile_;
    std::unique_ptr<HttpTransport> transport_;
};

/// Everything the gateway knows about one complete() call; handed to the
/// observer so it can be persisted.
struct CallRecord {
    ModelRequest request;
    std::string request_digest;
    std::optional<ModelReply> reply;
    std::string reply_digest;
    int retries = 0;
    bool reached_provider = false;
    std::int64_t estimated_tokens = 0;
    std::optional<ErrorKind> error_kind;
    std::string error;
};

class Gateway {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;
    using Observer = std::function<void(const CallRecord&)>;

    Gateway(ProviderProfile profile, std::shared_ptr<ModelProvider> provider,
            Sleeper sleeper = {});

    /// Pre-flight token check, then up to max_retries retries with
    /// exponential backoff. The observer sees every call, failed or not.
    /// Throws Error(TokenBudgetExceeded) before contacting the provider, or
    /// Error(ProviderFailure | ScriptExhausted | ...) after retries.
    ModelReply complete(const ModelRequest& request, const Observer& observer = {}) const;

    const ProviderProfile& profile() const noexcept { return profile_; }

private:
    ProviderProfile profile_;
    std::shared_ptr<ModelProvider> provider_;
    Sleeper sleeper_;
};

/// Builds the provider named by the profile. Mock profiles yield an empty
/// ScriptedProvider.
std::shared_ptr<ModelProvider> make_provider(const ProviderProfile& profile);

}  // namespace vulnloop
