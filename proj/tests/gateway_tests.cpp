#include <doctest.h>

#include "support.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/structured.hpp"

#include <cmath>
#include <thread>

using namespace rubriclearn;
using namespace testsupport;
using json = nlohmann::json;

namespace {

ChatRequest chat(Purpose tag, std::string label = "l", int lane = 0) {
    ChatRequest r;
    r.system_text = "system";
    r.user_text = "user " + label;
    r.tag = tag;
    r.label = std::move(label);
    r.lane = lane;
    return r;
}

struct Stack {
    std::shared_ptr<MockProvider> mock;
    std::shared_ptr<Journal> journal = std::make_shared<Journal>();
    std::unique_ptr<Gateway> gateway;

    explicit Stack(const std::string& script, GatewayOptions opts = {}) {
        mock = std::make_shared<MockProvider>(parse_mock_script(script));
        opts.retry.base_delay_ms = 0;
        opts.retry.max_delay_ms = 0;
        gateway = std::make_unique<Gateway>(opts, journal);
        gateway->set_default_provider(mock);
        gateway->set_embedding_provider(mock);
    }
    std::vector<json> records() const { return parse_journal_lines(journal->lines()); }
};

} // namespace

TEST_CASE("first matching rule fires and times bounds it") {
    std::string script = "# comment line\n\n";
    script += rule({{"tag", "judge"}}, "text", "one", {{"times", 1}});
    script += rule({{"tag", "judge"}}, "text", "two");
    script += rule({{"lane", 1}}, "text", "lane one");
    script += rule({{"label_contains", "special"}}, "text", "special");
    script += rule({}, "text", "fallback");
    Stack s(script);
    CHECK(s.gateway->chat(chat(Purpose::judge)).raw_text == "one");
    CHECK(s.gateway->chat(chat(Purpose::judge)).raw_text == "two");
    CHECK(s.gateway->chat(chat(Purpose::learn, "x", 1)).raw_text == "lane one");
    CHECK(s.gateway->chat(chat(Purpose::learn, "a special one")).raw_text == "special");
    CHECK(s.gateway->chat(chat(Purpose::learn)).raw_text == "fallback");
}

TEST_CASE("unmatched request is a provider error with a terminal record") {
    Stack s(rule({{"tag", "judge"}}, "text", "x"));
    CHECK_THROWS_AS(s.gateway->chat(chat(Purpose::learn)), ProviderError);
    const auto recs = s.records();
    REQUIRE(recs.size() == 2);
    CHECK(recs[0]["event"] == "request");
    CHECK(recs[1]["event"] == "error");
    CHECK(recs[1]["kind"] == "provider");
    CHECK(audit_journal(recs).complete());
}

TEST_CASE("transport errors retry then succeed") {
    std::string script = rule({}, "error", json{{"kind", "transport"}, {"message", "503"}}, {{"times", 2}});
    script += rule({}, "text", "ok");
    Stack s(script);
    const auto r = s.gateway->chat(chat(Purpose::generate));
    CHECK(r.raw_text == "ok");
    CHECK(r.attempts == 3);
    const auto recs = s.records();
    REQUIRE(recs.size() == 2);
    CHECK(recs[1]["attempts"] == 3);
    CHECK(recs[1]["attempt_errors"].size() == 2);
}

TEST_CASE("retries are exhausted after max_attempts") {
    GatewayOptions opts;
    opts.retry.max_attempts = 2;
    Stack s(rule({}, "error", json{{"kind", "transport"}}), opts);
    try {
        s.gateway->chat(chat(Purpose::generate));
        FAIL("expected ExhaustedRetriesError");
    } catch (const ExhaustedRetriesError& e) {
        CHECK(e.attempts() == 2);
    }
    CHECK(s.records().back()["kind"] == "exhausted_retries");
}

TEST_CASE("auth and policy errors do not retry") {
    Stack a(rule({}, "error", json{{"kind", "auth"}}));
    CHECK_THROWS_AS(a.gateway->chat(chat(Purpose::generate)), AuthError);
    CHECK(a.mock->calls() == 1);
    Stack p(rule({}, "error", json{{"kind", "policy"}}));
    CHECK_THROWS_AS(p.gateway->chat(chat(Purpose::generate)), PolicyError);
    CHECK(p.mock->calls() == 1);
}

TEST_CASE("backoff doubles up to the cap") {
    RetryPolicy p{5, 100, 350};
    CHECK(p.backoff(1).count() == 100);
    CHECK(p.backoff(2).count() == 200);
    CHECK(p.backoff(3).count() == 350);
}

TEST_CASE("call budget") {
    GatewayOptions opts;
    opts.max_calls = 2;
    Stack s(rule({}, "text", "ok"), opts);
    s.gateway->chat(chat(Purpose::judge));
    s.gateway->chat(chat(Purpose::judge));
    CHECK_THROWS_AS(s.gateway->chat(chat(Purpose::judge)), BudgetExceededError);
    CHECK(s.mock->calls() == 2);
}

TEST_CASE("parallelism cap holds under load") {
    GatewayOptions opts;
    opts.parallelism = 3;
    Stack s(rule({}, "text", "ok", {{"delay_ms", 5}}), opts);
    std::vector<std::thread> threads;
    for (int i = 0; i < 12; ++i) {
        threads.emplace_back([&, i] { s.gateway->chat(chat(Purpose::judge, "c" + std::to_string(i))); });
    }
    for (auto& t : threads) t.join();
    CHECK(s.mock->max_in_flight() <= 3);
    CHECK(s.mock->max_in_flight() >= 2);
    const auto audit = audit_journal(s.records());
    CHECK(audit.requests == 12);
    CHECK(audit.complete());
}

TEST_CASE("request validation") {
    Stack s(rule({}, "text", "ok"));
    auto r = chat(Purpose::judge);
    r.user_text.clear();
    CHECK_THROWS_AS(s.gateway->chat(r), ConfigError);
    GatewayOptions bad;
    bad.parallelism = 0;
    CHECK_THROWS_AS(Gateway(bad, std::make_shared<Journal>()), ConfigError);
}

TEST_CASE("embeddings are normalized and checked") {
    std::string script = rule({{"contains", "zero"}}, "vector", json::array({0.0, 0.0}));
    script += rule({{"contains", "short"}}, "vector", json::array({1.0}));
    script += rule({{"contains", "pad"}}, "vector", json::array({3.0}), {{"pad", true}});
    script += rule({}, "vector", json::array({3.0, 4.0}));
    Stack s(script);
    const auto v = s.gateway->embed(EmbeddingRequest{"hello", 2, 0, "e"});
    CHECK(v[0] == doctest::Approx(0.6));
    CHECK(v[1] == doctest::Approx(0.8));
    CHECK_THROWS_AS(s.gateway->embed(EmbeddingRequest{"zero", 2, 0, "e"}), EmbeddingError);
    CHECK_THROWS_AS(s.gateway->embed(EmbeddingRequest{"short", 2, 0, "e"}), EmbeddingError);
    const auto padded = s.gateway->embed(EmbeddingRequest{"pad", 4, 0, "e"});
    CHECK(padded == std::vector<float>{1.0f, 0.0f, 0.0f, 0.0f});
    CHECK(audit_journal(s.records()).complete());
}

TEST_CASE("fast_forward consumes used rule budget") {
    std::string script = rule({}, "text", "first", {{"times", 1}});
    script += rule({}, "text", "second");
    Stack s(script);
    s.gateway->chat(chat(Purpose::judge));
    auto fresh = std::make_shared<MockProvider>(parse_mock_script(script));
    fresh->fast_forward(s.records());
    CHECK(fresh->complete(chat(Purpose::judge)).raw_text == "second");
}

TEST_CASE("mock script parse errors") {
    CHECK_THROWS_AS(parse_mock_script(R"({"text":"a","responder":"b"})"), ParseError);
    CHECK_THROWS_AS(parse_mock_script(R"({"error":{"kind":"weird"}})"), ParseError);
    CHECK_THROWS_AS(parse_mock_script("not json"), ParseError);
}

TEST_CASE("journal file continues and truncates to checkpoint") {
    TempDir dir;
    const auto path = dir / "journal.jsonl";
    {
        Journal j(path);
        j.append({{"event", "run_start"}});
        j.append({{"event", "checkpoint"}, {"stage", "rubric"}});
        j.append({{"event", "request"}, {"call", "c1"}});
    }
    const auto recs = read_journal(path);
    REQUIRE(recs.size() == 3);
    CHECK(recs[0]["seq"] == 1);
    CHECK(recs[2]["seq"] == 3);
    CHECK_FALSE(audit_journal(recs).complete());
    const auto kept = truncate_journal_to_checkpoint(path, dir / "aborted.jsonl");
    CHECK(kept.size() == 2);
    CHECK(read_journal(path).size() == 2);
    CHECK(read_journal(dir / "aborted.jsonl").size() == 1);
    Journal cont(path, 3);
    cont.append({{"event", "run_end"}});
    CHECK(read_journal(path).back()["seq"] == 3);
}

TEST_CASE("json extraction tolerates fences and prose") {
    CHECK(extract_json_object("Sure! ```json\n{\"a\": 1}\n``` done")["a"] == 1);
    CHECK(extract_json_object("prefix {bad} then {\"b\": \"}\"} tail")["b"] == "}");
    CHECK_THROWS_AS(extract_json_object("no json here"), NoJsonFoundError);
    CHECK_THROWS_AS(extract_json_object("[1, 2]"), NoJsonFoundError);
}

TEST_CASE("typed schema validation") {
    CHECK_THROWS_AS(parse_comment_scores(json::parse(R"({"comment_scores":[{"content_score":11,"reasoning":""}]})")),
                    OutOfRangeError);
    const auto v = extract_json(R"({"inferred_rubrics":[{"criterion":"c","points":2}]})", SchemaId::inferred_rubrics);
    CHECK(std::get<std::vector<Criterion>>(v).size() == 1);
    CHECK_THROWS_AS(extract_json(R"({"inferred_rubrics":[]})", SchemaId::inferred_rubrics), SchemaError);
    const auto comments = parse_comments(json::parse(
        R"({"comments":[{"position_index":0,"target_quote":"q","comment":"c","violated_criteria":[1,"R0.2"]}]})"));
    REQUIRE(comments.size() == 1);
    CHECK(comments[0].violated_criteria == std::vector<std::string>{"1", "R0.2"});
}

TEST_CASE("ask_structured re-asks once with a reminder") {
    std::string script = rule({}, "text", "not json at all", {{"times", 1}});
    script += rule({}, "text", R"({"comment_scores":[{"content_score":7,"reasoning":"r"}]})");
    Stack s(script);
    const auto scores = ask_structured<std::vector<CommentScore>>(*s.gateway, chat(Purpose::judge),
                                                                  [](const json& j) { return parse_comment_scores(j); });
    CHECK(scores.at(0).content_score == 7);
    const auto recs = s.records();
    std::size_t retries = 0;
    for (const auto& r : recs) retries += r["event"] == "schema_retry";
    CHECK(retries == 1);
    CHECK(recs.back()["event"] == "response");

    Stack twice(rule({}, "text", "still not json"));
    CHECK_THROWS_AS((ask_structured<std::vector<CommentScore>>(*twice.gateway, chat(Purpose::judge),
                                                               [](const json& j) { return parse_comment_scores(j); })),
                    NoJsonFoundError);
    CHECK(twice.mock->calls() == 2);
}
