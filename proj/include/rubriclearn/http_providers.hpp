#pragma once

#include "rubriclearn/gateway.hpp"

#include <memory>
#include <string>

namespace rubriclearn {

/// kind "openai" speaks the OpenAI-compatible chat/embeddings API; "gemini"
/// speaks the Gemini generateContent/embedContent API.
struct HttpProviderConfig {
    std::string kind = "openai";
    std::string base_url; // empty: the kind's public endpoint
    std::string model;
    std::string embedding_model;
    std::string api_key; // empty: read from api_key_env(kind)
    int timeout_seconds = 600;
};

/// "OPENAI_API_KEY" or "GEMINI_API_KEY".
std::string api_key_env(const std::string& kind);

/// Throws ConfigError for an unknown kind, a missing model, or a missing key.
std::shared_ptr<Provider> make_http_provider(HttpProviderConfig config);

/// Maps an HTTP status to the gateway error taxonomy and throws it.
/// 401/403 auth, 408/429/5xx transport, everything else provider.
[[noreturn]] void throw_for_status(int status, const std::string& body);

} // namespace rubriclearn
