#include "rubriclearn/gateway.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <thread>

namespace rubriclearn {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(Purpose purpose) {
    switch (purpose) {
    case Purpose::learn: return "learn";
    case Purpose::generate: return "generate";
    case Purpose::judge: return "judge";
    case Purpose::refine: return "refine";
    case Purpose::localize: return "localize";
    case Purpose::agree: return "agree";
    case Purpose::revise: return "revise";
    }
    return "?";
}

Purpose purpose_from_string(std::string_view name) {
    for (auto p : {Purpose::learn, Purpose::generate, Purpose::judge, Purpose::refine, Purpose::localize,
                   Purpose::agree, Purpose::revise}) {
        if (to_string(p) == name) return p;
    }
    throw ConfigError("unknown purpose tag '" + std::string(name) + "'");
}

std::string_view to_string(ReasoningEffort effort) {
    switch (effort) {
    case ReasoningEffort::none: return "none";
    case ReasoningEffort::low: return "low";
    case ReasoningEffort::medium: return "medium";
    case ReasoningEffort::high: return "high";
    }
    return "?";
}

ReasoningEffort reasoning_effort_from_string(std::string_view name) {
    for (auto e : {ReasoningEffort::none, ReasoningEffort::low, ReasoningEffort::medium, ReasoningEffort::high}) {
        if (to_string(e) == name) return e;
    }
    throw ConfigError("unknown reasoning effort '" + std::string(name) + "'");
}

std::chrono::milliseconds RetryPolicy::backoff(int attempt) const {
    const double delay = static_cast<double>(base_delay_ms) * std::pow(2.0, std::max(0, attempt - 1));
    return std::chrono::milliseconds(static_cast<long long>(std::min(delay, static_cast<double>(max_delay_ms))));
}

std::vector<float> l2_normalize(const std::vector<double>& raw) {
    std::vector<float> v(raw.begin(), raw.end());
    double ss = 0.0;
    for (float x : v) ss += static_cast<double>(x) * static_cast<double>(x);
    if (!(ss > 0.0) || !std::isfinite(ss)) throw EmbeddingError("embedding is a zero (or non-finite) vector");
    const double norm = std::sqrt(ss);
    for (auto& x : v) x = static_cast<float>(static_cast<double>(x) / norm);
    return v;
}

namespace {

class SlotGuard {
public:
    explicit SlotGuard(std::counting_semaphore<Gateway::max_parallelism>& sem) : sem_(sem) { sem_.acquire(); }
    ~SlotGuard() { sem_.release(); }
    SlotGuard(const SlotGuard&) = delete;
    SlotGuard& operator=(const SlotGuard&) = delete;

private:
    std::counting_semaphore<Gateway::max_parallelism>& sem_;
};

std::string vector_hash(const std::vector<float>& v) {
    std::string bytes(v.size() * sizeof(float), '\0');
    if (!v.empty()) std::memcpy(bytes.data(), v.data(), bytes.size());
    return text::hex64(text::fnv1a64(bytes));
}

ordered_json terminal_error(const std::string& call, const char* event, const char* kind, const std::string& message,
                            int attempts, const std::vector<std::string>& attempt_errors) {
    ordered_json r;
    r["event"] = event;
    r["call"] = call;
    r["kind"] = kind;
    r["message"] = message;
    r["attempts"] = attempts;
    if (!attempt_errors.empty()) r["attempt_errors"] = attempt_errors;
    return r;
}

} // namespace

Gateway::Gateway(GatewayOptions options, std::shared_ptr<Journal> journal)
    : options_(options),
      journal_(journal ? std::move(journal) : std::make_shared<Journal>()),
      slots_(std::clamp(options.parallelism, 1, max_parallelism)) {
    if (options_.parallelism < 1) throw ConfigError("parallelism must be >= 1");
    if (options_.parallelism > max_parallelism) {
        throw ConfigError("parallelism must be <= " + std::to_string(max_parallelism));
    }
    if (options_.retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
}

void Gateway::set_default_provider(std::shared_ptr<Provider> provider) { default_provider_ = std::move(provider); }

void Gateway::set_provider(Purpose purpose, std::shared_ptr<Provider> provider) {
    by_purpose_[purpose] = std::move(provider);
}

void Gateway::set_embedding_provider(std::shared_ptr<Provider> provider) { embedding_provider_ = std::move(provider); }

Provider& Gateway::provider_for(Purpose purpose) {
    if (auto it = by_purpose_.find(purpose); it != by_purpose_.end() && it->second) return *it->second;
    if (!default_provider_) throw ConfigError("no provider configured for purpose '" + std::string(to_string(purpose)) + "'");
    return *default_provider_;
}

std::string Gateway::embedding_provider_id() {
    return embedding_provider_ ? embedding_provider_->id() : provider_for(Purpose::generate).id();
}

std::string Gateway::next_call_id() {
    char buf[32];
    std::snprintf(buf, sizeof buf, "c%06lld", ++call_counter_);
    return buf;
}

std::uint64_t Gateway::record(const ordered_json& event) { return journal_->append(event); }

void Gateway::reserve_budget(const std::string& call_id, bool embedding) {
    const long long n = ++calls_;
    if (options_.max_calls && n > *options_.max_calls) {
        journal_->append(terminal_error(call_id, embedding ? "embed_error" : "error", "budget",
                                        "call budget of " + std::to_string(*options_.max_calls) + " exceeded", 0, {}));
        throw BudgetExceededError("call budget of " + std::to_string(*options_.max_calls) + " exceeded");
    }
}

ProviderResponse Gateway::chat(const ChatRequest& request) {
    if (request.temperature < 0.0) throw ConfigError("temperature must be >= 0");
    if (request.system_text.empty() || request.user_text.empty()) {
        throw ConfigError("chat request texts must be non-empty");
    }
    Provider& provider = provider_for(request.tag);
    const std::string call_id = next_call_id();
    {
        ordered_json r;
        r["event"] = "request";
        r["call"] = call_id;
        r["tag"] = to_string(request.tag);
        r["lane"] = request.lane;
        r["label"] = request.label;
        r["provider"] = provider.id();
        r["temperature"] = request.temperature;
        r["reasoning_effort"] = to_string(request.reasoning_effort);
        r["max_output"] = request.max_output;
        r["system"] = request.system_text;
        r["user"] = request.user_text;
        journal_->append(r);
    }
    reserve_budget(call_id, false);

    SlotGuard slot(slots_);
    std::vector<std::string> attempt_errors;
    for (int attempt = 1;; ++attempt) {
        try {
            ProviderResponse response = provider.complete(request);
            response.attempts = attempt;
            ordered_json r;
            r["event"] = "response";
            r["call"] = call_id;
            r["attempts"] = attempt;
            r["latency_ms"] = response.latency_ms;
            r["usage"] = {{"input_tokens", response.usage.input_tokens},
                          {"output_tokens", response.usage.output_tokens}};
            if (!attempt_errors.empty()) r["attempt_errors"] = attempt_errors;
            r["raw_text"] = response.raw_text;
            journal_->append(r);
            return response;
        } catch (const TransportError& e) {
            attempt_errors.emplace_back(e.what());
            if (attempt >= options_.retry.max_attempts) {
                journal_->append(terminal_error(call_id, "error", "exhausted_retries", e.what(), attempt, attempt_errors));
                throw ExhaustedRetriesError(attempt, e.what());
            }
            std::this_thread::sleep_for(options_.retry.backoff(attempt));
        } catch (const AuthError& e) {
            journal_->append(terminal_error(call_id, "error", "auth", e.what(), attempt, attempt_errors));
            throw;
        } catch (const PolicyError& e) {
            journal_->append(terminal_error(call_id, "error", "policy", e.what(), attempt, attempt_errors));
            throw;
        } catch (const std::exception& e) {
            journal_->append(terminal_error(call_id, "error", "provider", e.what(), attempt, attempt_errors));
            throw;
        }
    }
}

std::vector<float> Gateway::embed(const EmbeddingRequest& request) {
    if (request.text.empty()) throw ConfigError("embedding text must be non-empty");
    if (request.dimensionality < 1) throw ConfigError("embedding dimensionality must be >= 1");
    Provider& provider = embedding_provider_ ? *embedding_provider_ : provider_for(Purpose::generate);
    const std::string call_id = next_call_id();
    {
        ordered_json r;
        r["event"] = "embed_request";
        r["call"] = call_id;
        r["tag"] = "embed";
        r["lane"] = request.lane;
        r["label"] = request.label;
        r["provider"] = provider.id();
        r["dimensionality"] = request.dimensionality;
        r["text"] = request.text;
        journal_->append(r);
    }
    reserve_budget(call_id, true);

    SlotGuard slot(slots_);
    std::vector<std::string> attempt_errors;
    for (int attempt = 1;; ++attempt) {
        std::vector<double> raw;
        try {
            raw = provider.embed(request);
        } catch (const TransportError& e) {
            attempt_errors.emplace_back(e.what());
            if (attempt >= options_.retry.max_attempts) {
                journal_->append(
                    terminal_error(call_id, "embed_error", "exhausted_retries", e.what(), attempt, attempt_errors));
                throw ExhaustedRetriesError(attempt, e.what());
            }
            std::this_thread::sleep_for(options_.retry.backoff(attempt));
            continue;
        } catch (const AuthError& e) {
            journal_->append(terminal_error(call_id, "embed_error", "auth", e.what(), attempt, attempt_errors));
            throw;
        } catch (const std::exception& e) {
            journal_->append(terminal_error(call_id, "embed_error", "provider", e.what(), attempt, attempt_errors));
            throw;
        }
        if (static_cast<int>(raw.size()) != request.dimensionality) {
            const std::string msg = "dimensionality mismatch: requested " + std::to_string(request.dimensionality) +
                                    ", got " + std::to_string(raw.size());
            journal_->append(terminal_error(call_id, "embed_error", "dimensionality", msg, attempt, attempt_errors));
            throw EmbeddingError(msg);
        }
        std::vector<float> unit;
        try {
            unit = l2_normalize(raw);
        } catch (const EmbeddingError& e) {
            journal_->append(terminal_error(call_id, "embed_error", "zero_vector", e.what(), attempt, attempt_errors));
            throw;
        }
        ordered_json r;
        r["event"] = "embed_response";
        r["call"] = call_id;
        r["attempts"] = attempt;
        r["dimensionality"] = unit.size();
        r["vector_hash"] = vector_hash(unit);
        journal_->append(r);
        return unit;
    }
}

} // namespace rubriclearn
