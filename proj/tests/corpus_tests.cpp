#include <doctest.h>

#include "support.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/metrics.hpp"
#include "rubriclearn/rubric.hpp"

using namespace rubriclearn;
using namespace testsupport;

TEST_CASE("utf8 offsets count code points") {
    const std::string s = "Caf\xC3\xA9 \xE2\x82\xAC 1";
    CHECK(text::codepoint_length(s) == 8);
    CHECK(text::codepoint_to_byte(s, 4) == 5);
    CHECK(text::byte_to_codepoint(s, 5) == 4);
    CHECK(text::codepoint_to_byte(s, 100) == s.size());
    CHECK(text::codepoint_length("\xFF\xFE") == 2);
}

TEST_CASE("fixed rendering and hashing") {
    CHECK(text::fixed(4.925, 2) == "4.92");
    CHECK(text::fixed(-0.004, 2) == "0.00"); // no negative zero
    CHECK(text::hex64(text::fnv1a64("")) == "cbf29ce484222325");
    CHECK(text::hex64(text::fnv1a64("a")) == "af63dc4c8601ec8c");
}

TEST_CASE("corpus round-trips byte-stably") {
    const Corpus corpus(synthetic_artifacts(4));
    const std::string once = serialize_corpus_jsonl(corpus);
    const Corpus again = parse_corpus_jsonl(once);
    CHECK(serialize_corpus_jsonl(again) == once);
    CHECK(again.artifacts() == corpus.artifacts());
    CHECK(again.hash() == corpus.hash());
    CHECK(corpus.instance_count() == 8);
}

TEST_CASE("corpus parse errors name the row") {
    const std::string good = R"({"artifact_id":"x","artifact":"body text","comments":[]})";
    try {
        parse_corpus_jsonl(good + "\n" + R"({"artifact_id":"y","comments":[]})");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.row() == 2);
        CHECK(std::string(e.what()).find("artifact") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_corpus_jsonl("{not json"), ParseError);
    CHECK_THROWS_AS(parse_corpus_jsonl(good + "\n" + good), InvariantError);
}

TEST_CASE("artifact invariants") {
    Artifact a;
    a.artifact_id = "x";
    a.body = "short";
    a.comments.push_back({"sh", "comment", 0, 2, std::nullopt});
    CHECK_NOTHROW(validate_artifact(a));
    a.comments[0].end = 6;
    CHECK_THROWS_AS(validate_artifact(a), InvariantError);
    a.comments[0].end = std::nullopt;
    CHECK_THROWS_AS(validate_artifact(a), InvariantError);
    a.comments[0].start = std::nullopt;
    CHECK_NOTHROW(validate_artifact(a));
    a.comments[0].reference_comment.clear();
    CHECK_THROWS_AS(validate_artifact(a), InvariantError);
}

TEST_CASE("apportion examples") {
    CHECK(apportion(10, {0.6, 0.2, 0.2}) == std::array<std::size_t, 3>{6, 2, 2});
    CHECK(apportion(7, {0.6, 0.2, 0.2}) == std::array<std::size_t, 3>{4, 1, 2});
    CHECK(apportion(3, {0.8, 0.1, 0.1}) == std::array<std::size_t, 3>{1, 1, 1});
    CHECK(apportion(2, {0.6, 0.2, 0.2}) == std::array<std::size_t, 3>{1, 0, 1});
    CHECK(apportion(5, {1.0, 0.0, 0.0}) == std::array<std::size_t, 3>{5, 0, 0});
    CHECK_THROWS_AS(apportion(5, {0.5, 0.2, 0.2}), InvariantError);
}

TEST_CASE("split file round-trip and partition checks") {
    const Corpus corpus(synthetic_artifacts(9));
    const auto split = split_corpus(corpus, {0.6, 0.2, 0.2}, 42);
    const auto parsed = parse_split_json(serialize_split_json(split), corpus);
    CHECK(parsed.train == split.train);
    CHECK(parsed.hash() == split.hash());
    CHECK(split_corpus(corpus, {0.6, 0.2, 0.2}, 43).hash() != split.hash());
    CHECK_THROWS_AS(parse_split_json(R"({"train":["a00"],"validation":[],"test":[]})", corpus), InvariantError);
    CHECK_THROWS_AS(parse_split_json(R"({"train":"a00"})", corpus), ParseError);
    const auto test = split_artifacts(corpus, split, SplitName::test);
    REQUIRE(test.size() == split.test.size());
    for (std::size_t i = 1; i < test.size(); ++i) CHECK(test[i - 1]->artifact_id < test[i]->artifact_id);
}

TEST_CASE("criterion ids and citations") {
    CHECK(render_criterion_id({3, 12}) == "R3.12");
    CHECK(parse_criterion_id("R3.12") == CriterionRef{3, 12});
    CHECK_FALSE(parse_criterion_id("R3").has_value());
    CHECK_FALSE(parse_criterion_id("r3.1").has_value());
    Rubric r;
    r.round = 2;
    r.criteria = {Criterion{"a", 1, {}, ""}, Criterion{"b", -1, {}, ""}};
    const auto resolved = resolve_cited_ids({"1", "R2.0", "R2.0", "R1.0", "7", "x"}, r);
    CHECK(resolved.valid == std::vector<CriterionRef>{{2, 1}, {2, 0}});
    CHECK(resolved.dropped == std::vector<std::string>{"R1.0", "7", "x"});
}

TEST_CASE("rubric serialization validates fields") {
    Rubric r;
    r.round = 1;
    r.criteria = {Criterion{"Flag unsupported claims. Example: \"x\" -> \"y\"", -3, {"evidence"}, "why"}};
    r.provenance = {"run", 0};
    CHECK(deserialize_rubric(serialize_rubric(r)) == r);
    CHECK(has_example_pair(r.criteria[0].text));
    CHECK_FALSE(has_example_pair("No example here."));
    CHECK_THROWS_AS(validate_criterion(Criterion{"t", 0, {}, ""}, "c"), SchemaError);
    CHECK_THROWS_AS(validate_criterion(Criterion{"t", 11, {}, ""}, "c"), SchemaError);
    CHECK_THROWS_AS(validate_criterion(Criterion{"", 2, {}, ""}, "c"), SchemaError);
    CHECK_THROWS_AS(deserialize_rubric(R"({"round":0,"criteria":[{"criterion":"t","points":"2"}]})"), SchemaError);
}

TEST_CASE("metric formatting") {
    CHECK(format_mean(4.925) == "4.92");
    CHECK(format_mean_std(MeanStd{3.4, 0.28}) == "3.40 \xC2\xB1 0.28");
    CHECK(format_signed_mean_std(MeanStd{4.95, 0.06}) == "+4.95 \xC2\xB1 0.06");
    CHECK(format_signed_mean_std(MeanStd{-1.5, 0.0}) == "-1.50 \xC2\xB1 0.00");
    const std::vector<double> bad{11.0};
    CHECK_THROWS_AS(mean_content_score(bad), InvariantError);
}
