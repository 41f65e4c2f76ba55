#pragma once

#include "rubriclearn/gateway.hpp"

#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rubriclearn {

/// Predicate over a request. Unset fields match anything. `tag` is a purpose
/// name or "embed"; `contains` is searched in the system and user text (or the
/// embedding input).
struct MockMatch {
    std::optional<std::string> tag;
    std::optional<int> lane;
    std::optional<std::string> contains;
    std::optional<std::string> label_contains;
};

struct MockError {
    std::string kind; // transport | auth | policy | provider
    std::string message;
};

/// One scripted behaviour. Exactly one of text / responder / error / vector
/// is set. `times` bounds how often the rule fires (unbounded when absent).
struct MockRule {
    MockMatch match;
    std::optional<std::string> text;
    std::optional<std::string> responder;
    nlohmann::json params = nlohmann::json::object();
    std::optional<MockError> error;
    std::optional<std::vector<double>> vector;
    // Zero-pad `vector` up to the requested dimensionality.
    bool pad = false;
    std::optional<int> times;
    int delay_ms = 0;
};

/// Parses one JSON object of a mock script line.
MockRule parse_mock_rule(const nlohmann::json& j);
/// JSON-lines script; blank lines and lines starting with '#' are skipped.
std::vector<MockRule> parse_mock_script(std::string_view contents);
std::vector<MockRule> load_mock_script(const std::filesystem::path& path);

using ChatResponder = std::function<std::string(const ChatRequest&, const nlohmann::json& params)>;
using EmbedResponder = std::function<std::vector<double>(const EmbeddingRequest&, const nlohmann::json& params)>;

/// Deterministic scripted provider. For each request the first rule that
/// matches and has uses left fires; no match is a ProviderError. Tracks the
/// maximum number of concurrently executing calls.
class MockProvider : public Provider {
public:
    explicit MockProvider(std::vector<MockRule> rules, std::string id = "mock");

    std::string id() const override { return id_; }
    ProviderResponse complete(const ChatRequest& request) override;
    std::vector<double> embed(const EmbeddingRequest& request) override;

    void add_rule(MockRule rule);
    void register_responder(const std::string& name, ChatResponder responder);
    void register_embed_responder(const std::string& name, EmbedResponder responder);

    /// Consumes rule uses for requests already answered in an earlier
    /// process, so a resumed run continues the script where it stopped.
    /// Each journal request record consumes `attempts` uses (taken from its
    /// terminal record).
    void fast_forward(const std::vector<nlohmann::json>& journal_records);

    int max_in_flight() const noexcept { return max_in_flight_.load(); }
    long long calls() const noexcept { return calls_.load(); }

private:
    struct Probe {
        std::string tag;
        int lane = 0;
        std::string_view label;
        std::string_view a;
        std::string_view b;
    };

    /// Index of the consumed rule; throws ProviderError when none matches.
    std::size_t consume(const Probe& probe);
    void enter();
    void leave();
    [[noreturn]] static void raise(const MockError& error);

    std::string id_;
    mutable std::mutex mutex_;
    std::vector<MockRule> rules_;
    std::vector<int> used_;
    std::map<std::string, ChatResponder> responders_;
    std::map<std::string, EmbedResponder> embed_responders_;
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
    std::atomic<long long> calls_{0};
};

} // namespace rubriclearn
