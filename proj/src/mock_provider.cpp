#include "rubriclearn/mock_provider.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/text.hpp"

#include <algorithm>
#include <thread>

namespace rubriclearn {

using json = nlohmann::json;

MockRule parse_mock_rule(const json& j) {
    if (!j.is_object()) throw ParseError("mock rule must be a JSON object");
    MockRule rule;
    if (auto m = j.find("match"); m != j.end()) {
        if (!m->is_object()) throw ParseError("mock rule 'match' must be an object");
        if (auto v = m->find("tag"); v != m->end()) rule.match.tag = v->get<std::string>();
        if (auto v = m->find("lane"); v != m->end()) rule.match.lane = v->get<int>();
        if (auto v = m->find("contains"); v != m->end()) rule.match.contains = v->get<std::string>();
        if (auto v = m->find("label_contains"); v != m->end()) rule.match.label_contains = v->get<std::string>();
    }
    int kinds = 0;
    if (auto v = j.find("text"); v != j.end()) {
        rule.text = v->get<std::string>();
        ++kinds;
    }
    if (auto v = j.find("responder"); v != j.end()) {
        rule.responder = v->get<std::string>();
        ++kinds;
    }
    if (auto v = j.find("error"); v != j.end()) {
        MockError e;
        e.kind = v->value("kind", "transport");
        e.message = v->value("message", "scripted " + e.kind + " error");
        if (e.kind != "transport" && e.kind != "auth" && e.kind != "policy" && e.kind != "provider") {
            throw ParseError("unknown mock error kind '" + e.kind + "'");
        }
        rule.error = e;
        ++kinds;
    }
    if (auto v = j.find("vector"); v != j.end()) {
        rule.vector = v->get<std::vector<double>>();
        ++kinds;
    }
    if (kinds != 1) throw ParseError("mock rule needs exactly one of text, responder, error, vector");
    if (auto v = j.find("params"); v != j.end()) rule.params = *v;
    rule.pad = j.value("pad", false);
    if (auto v = j.find("times"); v != j.end() && !v->is_null()) {
        rule.times = v->get<int>();
        if (*rule.times < 0) throw ParseError("mock rule 'times' must be >= 0");
    }
    rule.delay_ms = j.value("delay_ms", 0);
    return rule;
}

std::vector<MockRule> parse_mock_script(std::string_view contents) {
    std::vector<MockRule> rules;
    std::size_t row = 0;
    for (const auto& line : text::split_lines(contents)) {
        ++row;
        const auto t = text::trim(line);
        if (t.empty() || t.front() == '#') continue;
        try {
            rules.push_back(parse_mock_rule(json::parse(t)));
        } catch (const json::exception& e) {
            throw ParseError(row, std::string("mock script: ") + e.what());
        } catch (const ParseError& e) {
            throw ParseError(row, std::string("mock script: ") + e.what());
        }
    }
    return rules;
}

std::vector<MockRule> load_mock_script(const std::filesystem::path& path) {
    return parse_mock_script(text::read_file(path));
}

MockProvider::MockProvider(std::vector<MockRule> rules, std::string id)
    : id_(std::move(id)), rules_(std::move(rules)), used_(rules_.size(), 0) {}

void MockProvider::add_rule(MockRule rule) {
    std::lock_guard lock(mutex_);
    rules_.push_back(std::move(rule));
    used_.push_back(0);
}

void MockProvider::register_responder(const std::string& name, ChatResponder responder) {
    std::lock_guard lock(mutex_);
    responders_[name] = std::move(responder);
}

void MockProvider::register_embed_responder(const std::string& name, EmbedResponder responder) {
    std::lock_guard lock(mutex_);
    embed_responders_[name] = std::move(responder);
}

std::size_t MockProvider::consume(const Probe& p) {
    std::lock_guard lock(mutex_);
    for (std::size_t i = 0; i < rules_.size(); ++i) {
        const auto& r = rules_[i];
        if (r.times && used_[i] >= *r.times) continue;
        const auto& m = r.match;
        if (m.tag && *m.tag != p.tag) continue;
        if (m.lane && *m.lane != p.lane) continue;
        if (m.label_contains && p.label.find(*m.label_contains) == std::string_view::npos) continue;
        if (m.contains && p.a.find(*m.contains) == std::string_view::npos &&
            p.b.find(*m.contains) == std::string_view::npos) {
            continue;
        }
        ++used_[i];
        return i;
    }
    throw ProviderError("mock: no script rule matches " + p.tag + " request (lane " + std::to_string(p.lane) +
                        ", label '" + std::string(p.label) + "')");
}

void MockProvider::enter() {
    ++calls_;
    const int now = ++in_flight_;
    int seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
}

void MockProvider::leave() { --in_flight_; }

void MockProvider::raise(const MockError& e) {
    if (e.kind == "transport") throw TransportError(e.message);
    if (e.kind == "auth") throw AuthError(e.message);
    if (e.kind == "policy") throw PolicyError(e.message);
    throw ProviderError(e.message);
}

namespace {

struct InFlight {
    explicit InFlight(std::function<void()> leave) : leave_(std::move(leave)) {}
    ~InFlight() { leave_(); }
    std::function<void()> leave_;
};

} // namespace

ProviderResponse MockProvider::complete(const ChatRequest& request) {
    enter();
    InFlight guard([this] { leave(); });
    const Probe probe{std::string(to_string(request.tag)), request.lane, request.label, request.system_text,
                      request.user_text};
    const std::size_t index = consume(probe);
    MockRule rule;
    ChatResponder responder;
    {
        std::lock_guard lock(mutex_);
        rule = rules_[index];
        if (rule.responder) {
            auto it = responders_.find(*rule.responder);
            if (it == responders_.end()) throw ProviderError("mock: unknown responder '" + *rule.responder + "'");
            responder = it->second;
        }
    }
    if (rule.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(rule.delay_ms));
    if (rule.error) raise(*rule.error);
    if (rule.vector) throw ProviderError("mock: vector rule matched a chat request");
    ProviderResponse response;
    response.raw_text = rule.text ? *rule.text : responder(request, rule.params);
    response.usage.input_tokens = static_cast<long long>((request.system_text.size() + request.user_text.size()) / 4);
    response.usage.output_tokens = static_cast<long long>(response.raw_text.size() / 4);
    response.latency_ms = 0;
    return response;
}

std::vector<double> MockProvider::embed(const EmbeddingRequest& request) {
    enter();
    InFlight guard([this] { leave(); });
    const Probe probe{"embed", request.lane, request.label, request.text, {}};
    const std::size_t index = consume(probe);
    MockRule rule;
    EmbedResponder responder;
    {
        std::lock_guard lock(mutex_);
        rule = rules_[index];
        if (rule.responder) {
            auto it = embed_responders_.find(*rule.responder);
            if (it == embed_responders_.end()) {
                throw ProviderError("mock: unknown embedding responder '" + *rule.responder + "'");
            }
            responder = it->second;
        }
    }
    if (rule.delay_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(rule.delay_ms));
    if (rule.error) raise(*rule.error);
    if (rule.text) throw ProviderError("mock: text rule matched an embedding request");
    std::vector<double> v = rule.vector ? *rule.vector : responder(request, rule.params);
    if (rule.pad && static_cast<int>(v.size()) < request.dimensionality) {
        v.resize(static_cast<std::size_t>(request.dimensionality), 0.0);
    }
    return v;
}

void MockProvider::fast_forward(const std::vector<json>& records) {
    std::map<std::string, int> attempts;
    for (const auto& r : records) {
        const std::string event = r.value("event", "");
        if (event == "response" || event == "error" || event == "embed_response" || event == "embed_error") {
            attempts[r.value("call", "")] = r.value("attempts", 1);
        }
    }
    for (const auto& r : records) {
        const std::string event = r.value("event", "");
        if (event != "request" && event != "embed_request") continue;
        if (r.value("provider", id_) != id_) continue;
        const auto it = attempts.find(r.value("call", ""));
        const int n = it == attempts.end() ? 1 : it->second;
        const std::string label = r.value("label", "");
        const std::string a = event == "request" ? r.value("system", "") : r.value("text", "");
        const std::string b = event == "request" ? r.value("user", "") : std::string();
        const Probe probe{r.value("tag", ""), r.value("lane", 0), label, a, b};
        for (int k = 0; k < n; ++k) consume(probe);
    }
}

} // namespace rubriclearn
