#include "rubriclearn/http_providers.hpp"

#include "rubriclearn/error.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

#include <chrono>
#include <cstdlib>

namespace rubriclearn {

using json = nlohmann::json;

std::string api_key_env(const std::string& kind) {
    if (kind == "openai") return "OPENAI_API_KEY";
    if (kind == "gemini") return "GEMINI_API_KEY";
    throw ConfigError("unknown provider kind '" + kind + "' (expected openai or gemini)");
}

void throw_for_status(int status, const std::string& body) {
    const std::string msg = "HTTP " + std::to_string(status) + ": " + body.substr(0, 500);
    if (status == 401 || status == 403) throw AuthError(msg);
    if (status == 408 || status == 429 || status >= 500) throw TransportError(msg);
    if (body.find("content_policy") != std::string::npos || body.find("content_filter") != std::string::npos ||
        body.find("SAFETY") != std::string::npos) {
        throw PolicyError(msg);
    }
    throw ProviderError(msg);
}

namespace {

struct Endpoint {
    std::string origin; // scheme://host[:port]
    std::string path;   // without trailing slash
};

Endpoint split_url(const std::string& url) {
    const auto scheme = url.find("://");
    if (scheme == std::string::npos) throw ConfigError("base_url must include a scheme: " + url);
    const auto slash = url.find('/', scheme + 3);
    Endpoint e{url.substr(0, slash), slash == std::string::npos ? "" : url.substr(slash)};
    while (!e.path.empty() && e.path.back() == '/') e.path.pop_back();
    return e;
}

class HttpProvider : public Provider {
public:
    explicit HttpProvider(HttpProviderConfig config) : config_(std::move(config)), endpoint_(split_url(config_.base_url)) {}

    std::string id() const override { return config_.kind + ":" + config_.model + "/" + config_.embedding_model; }

protected:
    struct Reply {
        json body;
        long long latency_ms = 0;
    };

    Reply post(const std::string& path, const json& payload, const httplib::Headers& headers) {
        httplib::Client cli(endpoint_.origin);
        cli.set_connection_timeout(30);
        cli.set_read_timeout(config_.timeout_seconds);
        cli.set_write_timeout(60);
        const auto start = std::chrono::steady_clock::now();
        auto res = cli.Post(endpoint_.path + path, headers, payload.dump(), "application/json");
        const auto latency = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start)
                                 .count();
        if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()));
        if (res->status != 200) throw_for_status(res->status, res->body);
        json body = json::parse(res->body, nullptr, false);
        if (body.is_discarded()) throw TransportError("response is not JSON");
        return {std::move(body), latency};
    }

    HttpProviderConfig config_;
    Endpoint endpoint_;
};

class OpenAIProvider : public HttpProvider {
public:
    using HttpProvider::HttpProvider;

    ProviderResponse complete(const ChatRequest& request) override {
        json payload;
        payload["model"] = config_.model;
        payload["messages"] = json::array({{{"role", "system"}, {"content", request.system_text}},
                                           {{"role", "user"}, {"content", request.user_text}}});
        payload["temperature"] = request.temperature;
        payload["max_completion_tokens"] = request.max_output;
        if (request.reasoning_effort != ReasoningEffort::none) {
            payload["reasoning_effort"] = std::string(to_string(request.reasoning_effort));
        }
        const auto reply = post("/chat/completions", payload, headers());
        const json& choices = reply.body.value("choices", json::array());
        if (choices.empty()) throw ProviderError("response has no choices");
        const json& choice = choices.front();
        if (choice.value("finish_reason", "") == "content_filter") throw PolicyError("completion blocked by content filter");
        const json& content = choice.at("message").value("content", json());
        if (!content.is_string()) throw ProviderError("response message has no text content");
        ProviderResponse out;
        out.raw_text = content.get<std::string>();
        out.latency_ms = reply.latency_ms;
        if (auto u = reply.body.find("usage"); u != reply.body.end() && u->is_object()) {
            out.usage.input_tokens = u->value("prompt_tokens", 0LL);
            out.usage.output_tokens = u->value("completion_tokens", 0LL);
        }
        return out;
    }

    std::vector<double> embed(const EmbeddingRequest& request) override {
        json payload;
        payload["model"] = config_.embedding_model;
        payload["input"] = request.text;
        payload["dimensions"] = request.dimensionality;
        const auto reply = post("/embeddings", payload, headers());
        const json& data = reply.body.value("data", json::array());
        if (data.empty()) throw ProviderError("embedding response has no data");
        return data.front().at("embedding").get<std::vector<double>>();
    }

private:
    httplib::Headers headers() const { return {{"Authorization", "Bearer " + config_.api_key}}; }
};

class GeminiProvider : public HttpProvider {
public:
    using HttpProvider::HttpProvider;

    ProviderResponse complete(const ChatRequest& request) override {
        json payload;
        payload["systemInstruction"] = {{"parts", json::array({{{"text", request.system_text}}})}};
        payload["contents"] = json::array({{{"role", "user"}, {"parts", json::array({{{"text", request.user_text}}})}}});
        json gen;
        gen["temperature"] = request.temperature;
        gen["maxOutputTokens"] = request.max_output;
        if (request.reasoning_effort != ReasoningEffort::none) {
            gen["thinkingConfig"] = {{"thinkingLevel", std::string(to_string(request.reasoning_effort))}};
        }
        payload["generationConfig"] = gen;
        const auto reply = post("/models/" + config_.model + ":generateContent", payload, headers());
        if (auto fb = reply.body.find("promptFeedback"); fb != reply.body.end() && fb->contains("blockReason")) {
            throw PolicyError("prompt blocked: " + fb->at("blockReason").dump());
        }
        const json& candidates = reply.body.value("candidates", json::array());
        if (candidates.empty()) throw ProviderError("response has no candidates");
        const json& cand = candidates.front();
        const std::string finish = cand.value("finishReason", "");
        if (finish == "SAFETY" || finish == "PROHIBITED_CONTENT" || finish == "BLOCKLIST") {
            throw PolicyError("candidate blocked: " + finish);
        }
        std::string text;
        if (auto content = cand.find("content"); content != cand.end()) {
            for (const auto& part : content->value("parts", json::array())) {
                if (part.value("thought", false)) continue;
                text += part.value("text", "");
            }
        }
        ProviderResponse out;
        out.raw_text = std::move(text);
        out.latency_ms = reply.latency_ms;
        if (auto u = reply.body.find("usageMetadata"); u != reply.body.end() && u->is_object()) {
            out.usage.input_tokens = u->value("promptTokenCount", 0LL);
            out.usage.output_tokens = u->value("candidatesTokenCount", 0LL) + u->value("thoughtsTokenCount", 0LL);
        }
        return out;
    }

    std::vector<double> embed(const EmbeddingRequest& request) override {
        json payload;
        payload["content"] = {{"parts", json::array({{{"text", request.text}}})}};
        payload["outputDimensionality"] = request.dimensionality;
        const auto reply = post("/models/" + config_.embedding_model + ":embedContent", payload, headers());
        return reply.body.at("embedding").at("values").get<std::vector<double>>();
    }

private:
    httplib::Headers headers() const { return {{"x-goog-api-key", config_.api_key}}; }
};

} // namespace

std::shared_ptr<Provider> make_http_provider(HttpProviderConfig config) {
    const std::string env = api_key_env(config.kind);
    if (config.api_key.empty()) {
        if (const char* key = std::getenv(env.c_str())) config.api_key = key;
    }
    if (config.api_key.empty()) throw ConfigError("no API key: set " + env);
    if (config.model.empty()) throw ConfigError(config.kind + " provider needs a model");
    if (config.kind == "openai") {
        if (config.base_url.empty()) config.base_url = "https://api.openai.com/v1";
        if (config.embedding_model.empty()) config.embedding_model = "text-embedding-3-large";
        return std::make_shared<OpenAIProvider>(std::move(config));
    }
    if (config.base_url.empty()) config.base_url = "https://generativelanguage.googleapis.com/v1beta";
    if (config.embedding_model.empty()) config.embedding_model = "gemini-embedding-001";
    return std::make_shared<GeminiProvider>(std::move(config));
}

} // namespace rubriclearn
