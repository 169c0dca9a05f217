#include "vulnloop/model_gateway.hpp"

#include <thread>

namespace vulnloop {

using nlohmann::json;

json ModelRequest::to_json() const {
    json msgs = json::array();
    for (const auto& m : messages) msgs.push_back({{"role", m.role}, {"content", m.content}});
    return json{{"messages", msgs},
                {"temperature", temperature},
                {"max_output_tokens", max_output_tokens}};
}

std::string ModelRequest::digest() const {
    return sha256_hex(to_json().dump(-1, ' ', false, json::error_handler_t::replace));
}

std::string_view to_string(ProviderKind kind) {
    return kind == ProviderKind::Mock ? "mock" : "chat-completions";
}

std::optional<ProviderKind> parse_provider_kind(std::string_view text) {
    const std::string t = to_lower(text);
    if (t == "mock") return ProviderKind::Mock;
    if (t == "chat-completions" || t == "openai") return ProviderKind::ChatCompletions;
    return std::nullopt;
}

void ProviderProfile::validate() const {
    if (token_limit < 1) throw Error(ErrorKind::InvalidConfig, "token_limit must be positive");
    if (max_retries < 0) throw Error(ErrorKind::InvalidConfig, "max_retries must be >= 0");
    if (request_timeout.count() <= 0) {
        throw Error(ErrorKind::InvalidConfig, "request_timeout must be positive");
    }
    if (temperature_cap < 0.0) throw Error(ErrorKind::InvalidConfig, "temperature_cap must be >= 0");
    if (kind == ProviderKind::ChatCompletions) {
        if (endpoint.empty()) throw Error(ErrorKind::InvalidConfig, "provider endpoint is required");
        if (model_id.empty()) throw Error(ErrorKind::InvalidConfig, "provider model_id is required");
    }
}

std::vector<std::string> ProviderProfile::warnings() const {
    std::vector<std::string> out;
    if (token_limit < 1200) {
        out.push_back("token_limit " + std::to_string(token_limit) +
                      " is below 1200; fix prompts with embedded code will likely not fit");
    }
    return out;
}

json ProviderProfile::to_json() const {
    return json{{"name", name},
                {"kind", std::string(to_string(kind))},
                {"endpoint", endpoint},
                {"model_id", model_id},
                {"auth_ref", auth_ref},
                {"token_limit", token_limit},
                {"request_timeout_ms", request_timeout.count()},
                {"max_retries", max_retries},
                {"backoff_base_ms", backoff_base.count()},
                {"temperature_cap", temperature_cap}};
}

ProviderProfile ProviderProfile::from_json(const json& j) {
    ProviderProfile p;
    p.name = j.value("name", p.name);
    if (j.contains("kind")) {
        const auto kind = parse_provider_kind(j.at("kind").get<std::string>());
        if (!kind) throw Error(ErrorKind::InvalidConfig, "unknown provider kind");
        p.kind = *kind;
    }
    p.endpoint = j.value("endpoint", p.endpoint);
    p.model_id = j.value("model_id", p.model_id);
    p.auth_ref = j.value("auth_ref", p.auth_ref);
    p.token_limit = j.value("token_limit", p.token_limit);
    p.request_timeout = std::chrono::milliseconds(
        j.value("request_timeout_ms", static_cast<std::int64_t>(p.request_timeout.count())));
    p.max_retries = j.value("max_retries", p.max_retries);
    p.backoff_base = std::chrono::milliseconds(
        j.value("backoff_base_ms", static_cast<std::int64_t>(p.backoff_base.count())));
    p.temperature_cap = j.value("temperature_cap", p.temperature_cap);
    return p;
}

ScriptedProvider::ScriptedProvider(std::vector<std::string> replies)
    : queue_(replies.begin(), replies.end()) {}

ScriptedProvider::ScriptedProvider(Responder responder) : responder_(std::move(responder)) {}

void ScriptedProvider::script(std::vector<std::string> replies) {
    std::lock_guard lock(mutex_);
    queue_.assign(replies.begin(), replies.end());
    responder_ = nullptr;
}

ModelReply ScriptedProvider::send(const ModelRequest& request) {
    std::lock_guard lock(mutex_);
    ++calls_;
    requests_.push_back(request);
    ModelReply reply;
    reply.provider = "mock";
    if (responder_) {
        reply.text = responder_(request);
    } else {
        if (queue_.empty()) {
            throw Error(ErrorKind::ScriptExhausted,
                        "mock script exhausted at call " + std::to_string(calls_));
        }
        reply.text = std::move(queue_.front());
        queue_.pop_front();
    }
    std::int64_t in = 0;
    for (const auto& m : request.messages) in += estimate_tokens(m.content);
    reply.tokens_in = in;
    reply.tokens_out = estimate_tokens(reply.text);
    return reply;
}

int ScriptedProvider::calls() const {
    std::lock_guard lock(mutex_);
    return calls_;
}

std::vector<ModelRequest> ScriptedProvider::requests() const {
    std::lock_guard lock(mutex_);
    return requests_;
}

Gateway::Gateway(ProviderProfile profile, std::shared_ptr<ModelProvider> provider, Sleeper sleeper)
    : profile_(std::move(profile)), provider_(std::move(provider)), sleeper_(std::move(sleeper)) {
    if (!provider_) throw Error(ErrorKind::InvalidArgument, "gateway needs a provider");
    if (!sleeper_) sleeper_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
}

ModelReply Gateway::complete(const ModelRequest& request, const Observer& observer) const {
    CallRecord rec;
    rec.request = request;
    rec.request_digest = request.digest();
    for (const auto& m : request.messages) rec.estimated_tokens += estimate_tokens(m.content);

    const auto fail = [&](ErrorKind kind, const std::string& message) -> Error {
        rec.error_kind = kind;
        rec.error = message;
        if (observer) observer(rec);
        return Error(kind, message);
    };

    bool has_user = false;
    for (const auto& m : request.messages) has_user = has_user || m.role == "user";
    if (!has_user) throw fail(ErrorKind::InvalidArgument, "request has no user message");
    if (request.temperature < 0.0 || request.temperature > profile_.temperature_cap) {
        throw fail(ErrorKind::InvalidArgument, "temperature out of range");
    }
    if (request.max_output_tokens < 1) {
        throw fail(ErrorKind::InvalidArgument, "max_output_tokens must be positive");
    }
    if (rec.estimated_tokens > profile_.token_limit) {
        throw fail(ErrorKind::TokenBudgetExceeded,
                   "estimated " + std::to_string(rec.estimated_tokens) +
                       " tokens exceeds limit " + std::to_string(profile_.token_limit));
    }

    std::chrono::milliseconds delay = profile_.backoff_base;
    for (int attempt = 0;; ++attempt) {
        rec.reached_provider = true;
        rec.retries = attempt;
        try {
            ModelReply reply = provider_->send(request);
            reply.retries = attempt;
            rec.reply = reply;
            rec.reply_digest = sha256_hex(reply.text);
            if (observer) observer(rec);
            return reply;
        } catch (const TransientProviderError& e) {
            if (attempt >= profile_.max_retries) {
                throw fail(ErrorKind::ProviderFailure,
                           std::string(e.what()) + " (after " + std::to_string(attempt) +
                               " retries)");
            }
            sleeper_(delay);
            delay *= 2;
        } catch (const Error& e) {
            throw fail(e.kind(), e.what());
        }
    }
}

std::shared_ptr<ModelProvider> make_provider(const ProviderProfile& profile) {
    if (profile.kind == ProviderKind::Mock) return std::make_shared<ScriptedProvider>();
    return std::make_shared<ChatCompletionsProvider>(profile, make_http_transport());
}

}  // namespace vulnloop
