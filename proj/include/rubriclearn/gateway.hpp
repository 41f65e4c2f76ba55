#pragma once

#include "rubriclearn/journal.hpp"

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <vector>

namespace rubriclearn {

/// What a chat call is for. Each purpose may be routed to its own provider.
enum class Purpose { learn, generate, judge, refine, localize, agree, revise };

std::string_view to_string(Purpose purpose);
Purpose purpose_from_string(std::string_view name);

enum class ReasoningEffort { none, low, medium, high };

std::string_view to_string(ReasoningEffort effort);
ReasoningEffort reasoning_effort_from_string(std::string_view name);

struct ChatRequest {
    std::string system_text;
    std::string user_text;
    double temperature = 1.0;
    ReasoningEffort reasoning_effort = ReasoningEffort::low;
    int max_output = 32768;
    Purpose tag = Purpose::generate;
    // Repeat index; lets scripted providers serve distinct lanes per repeat.
    int lane = 0;
    // Free-form context recorded in the journal, e.g. "round 2 train a17".
    std::string label;
};

struct Usage {
    long long input_tokens = 0;
    long long output_tokens = 0;
};

struct ProviderResponse {
    std::string raw_text;
    Usage usage;
    long long latency_ms = 0;
    int attempts = 1;
};

struct EmbeddingRequest {
    std::string text;
    int dimensionality = 3072;
    int lane = 0;
    std::string label;
};

/// A chat/embedding backend. Implementations signal failures with
/// TransportError (retryable), AuthError, PolicyError, or ProviderError.
class Provider {
public:
    virtual ~Provider() = default;

    virtual std::string id() const = 0;
    virtual ProviderResponse complete(const ChatRequest& request) = 0;
    /// Raw (unnormalized) embedding values.
    virtual std::vector<double> embed(const EmbeddingRequest& request) = 0;
};

struct RetryPolicy {
    int max_attempts = 4;
    int base_delay_ms = 500;
    int max_delay_ms = 20000;

    /// Delay before attempt `attempt + 1`, after `attempt` failures (1-based).
    std::chrono::milliseconds backoff(int attempt) const;
};

struct GatewayOptions {
    int parallelism = 4;
    RetryPolicy retry;
    std::optional<long long> max_calls;
};

/// Uniform access point for all provider traffic. Thread-safe. Every chat and
/// embed call appends exactly one request record and one terminal record to
/// the journal; raw text is journaled before it is returned for parsing.
class Gateway {
public:
    static constexpr int max_parallelism = 256;

    Gateway(GatewayOptions options, std::shared_ptr<Journal> journal);

    void set_default_provider(std::shared_ptr<Provider> provider);
    void set_provider(Purpose purpose, std::shared_ptr<Provider> provider);
    void set_embedding_provider(std::shared_ptr<Provider> provider);

    ProviderResponse chat(const ChatRequest& request);
    /// L2-normalized float32 embedding of the requested dimensionality.
    std::vector<float> embed(const EmbeddingRequest& request);

    /// Appends a non-provider event (checkpoint, warning, rubric...) to the journal.
    std::uint64_t record(const nlohmann::ordered_json& event);

    /// Identifier of the provider that serves embeddings (cache keys).
    std::string embedding_provider_id();

    Journal& journal() { return *journal_; }
    const GatewayOptions& options() const noexcept { return options_; }
    long long calls() const noexcept { return calls_.load(); }
    /// Continues call numbering after a resume.
    void set_call_counter(long long value) { call_counter_.store(value); }

private:
    Provider& provider_for(Purpose purpose);
    std::string next_call_id();
    void reserve_budget(const std::string& call_id, bool embedding);

    GatewayOptions options_;
    std::shared_ptr<Journal> journal_;
    std::shared_ptr<Provider> default_provider_;
    std::shared_ptr<Provider> embedding_provider_;
    std::map<Purpose, std::shared_ptr<Provider>> by_purpose_;
    std::counting_semaphore<max_parallelism> slots_;
    std::atomic<long long> calls_{0};
    std::atomic<long long> call_counter_{0};
};

/// Divides by the L2 norm after casting to float32. Throws on a zero vector.
std::vector<float> l2_normalize(const std::vector<double>& raw);

} // namespace rubriclearn
