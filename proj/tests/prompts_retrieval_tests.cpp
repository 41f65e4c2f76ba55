#include <doctest.h>

#include "support.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/fixtures.hpp"
#include "rubriclearn/prompts.hpp"
#include "rubriclearn/retrieval.hpp"

#include <set>

using namespace rubriclearn;
using namespace testsupport;

TEST_CASE("history rounds are the newest earlier ones") {
    CHECK(history_rounds(5, {0, 1, 2, 3, 4}, 3) == std::vector<int>{4, 3, 2});
    CHECK(history_rounds(1, {0}, 3) == std::vector<int>{0});
    CHECK(history_rounds(0, {}, 3).empty());
    CHECK(history_rounds(4, {0, 1, 2, 3}, 0).empty());
    CHECK(history_rounds(3, {5, 0, 2}, 3) == std::vector<int>{2, 0});
}

TEST_CASE("criteria list and artifact cap") {
    const std::vector<Criterion> c{{"first", 3, {}, ""}, {"second", -2, {}, ""}};
    CHECK(render_criteria_list(c) == "  0. [3] first\n  1. [-2] second\n");
    PromptOptions opts;
    opts.artifact_char_cap = 4;
    CHECK(render_artifact("Caf\xC3\xA9 latte", opts) == "Caf\xC3\xA9\n[... artifact truncated ...]");
    CHECK(render_artifact("abc", opts) == "abc");
    CHECK(render_artifact("abcdef", {}) == "abcdef");
}

TEST_CASE("generation prompt layouts") {
    const auto f = load_fixture("mini");
    const Artifact& a = f.corpus.at("mini-01");
    const auto with = build_generation_prompt(a, a.comments, &f.round1);
    const auto without = build_generation_prompt(a, a.comments, nullptr);
    CHECK(with.schema == SchemaId::comments);
    CHECK(with.purpose == Purpose::generate);
    CHECK(with.user_text.find("scope, generalization") != std::string::npos);
    CHECK(without.user_text.find("scope, generalization") == std::string::npos);
    CHECK(without.user_text.find("(0 criteria)") != std::string::npos);
    const auto req = to_request(with);
    CHECK(req.system_text == with.system_text);
    CHECK(req.tag == Purpose::generate);
}

TEST_CASE("prompt builders reject empty inputs") {
    CHECK_THROWS_AS(build_satisfaction_prompt("text", {}), InvariantError);
}

TEST_CASE("prompt families are deterministic") {
    const auto f = load_fixture("mini");
    CHECK(render_prompt_families(f) == render_prompt_families(load_fixture("mini")));
    CHECK(render_prompt_families(f).size() == 7);
    CHECK_THROWS_AS(load_fixture("nope"), ConfigError);
}

TEST_CASE("sentence bounds") {
    const std::string body = "First one. Second has target words! Third\nline here";
    const auto t = body.find("target");
    const auto [b, e] = sentence_bounds(body, t, t + 6);
    CHECK(body.substr(b, e - b) == "Second has target words!");
    const auto l = body.find("line");
    const auto [b2, e2] = sentence_bounds(body, l, l + 4);
    CHECK(body.substr(b2, e2 - b2) == "line here");
}

TEST_CASE("query and document texts") {
    Artifact a;
    a.artifact_id = "e1";
    a.body = "Intro. The Caf\xC3\xA9 sold more. End.";
    a.comments = {comment_at(a.body, "sold more", "Compared to what?")};
    CHECK(build_query_text(a, a.comments[0], DatasetKind::standard) ==
          std::string(query_prefix) + "sold more");
    CHECK(build_query_text(a, a.comments[0], DatasetKind::essay) ==
          std::string(query_prefix) + "The Caf\xC3\xA9 <<sold more>>.");
    CHECK(build_document_text(a.comments[0]) == std::string(document_prefix) + "Compared to what?");
    CommentInstance no_offsets = a.comments[0];
    no_offsets.start.reset();
    no_offsets.end.reset();
    CHECK(build_query_text(a, no_offsets, DatasetKind::essay) == build_query_text(a, a.comments[0], DatasetKind::essay));
    no_offsets.target_quote = "absent";
    CHECK_THROWS_AS(build_query_text(a, no_offsets, DatasetKind::essay), InvariantError);
    CHECK(dataset_kind_from_string("essay") == DatasetKind::essay);
}

TEST_CASE("index rejects bad vectors and top_k warns past the size") {
    EmbeddingIndex index(2);
    CHECK_THROWS_AS(index.add(IndexEntry{{"a", 0}, "d", "q", "c", {1.0f, 1.0f}}), InvariantError);
    CHECK_THROWS_AS(index.add(IndexEntry{{"a", 0}, "d", "q", "c", {1.0f}}), InvariantError);
    index.add(IndexEntry{{"a", 0}, "d", "q", "c", {1.0f, 0.0f}});
    index.add(IndexEntry{{"b", 0}, "d", "q", "c2", {0.0f, 1.0f}});
    std::vector<std::string> warnings;
    const std::vector<float> q{0.6f, 0.8f};
    const auto got = top_k(index, q, 5, &warnings);
    REQUIRE(got.size() == 2);
    CHECK(got[0].key.artifact_id == "b");
    CHECK(got[0].retrieved_comment == "c2");
    CHECK(warnings.size() == 1);
    CHECK_THROWS_AS(top_k(index, q, 0), InvariantError);
}

TEST_CASE("index build and cache") {
    const Corpus corpus(synthetic_artifacts(6));
    const auto split = split_corpus(corpus, {0.6, 0.2, 0.2}, 1);
    MockStack stack(corpus, rule({{"tag", "embed"}}, "responder", "hash_embedding"));
    const auto index = build_index(*stack.gateway, *stack.corpus, split, 8);
    CHECK(index.size() == split.train.size() * 2);
    const std::set<std::string> train(split.train.begin(), split.train.end());
    for (const auto& e : index.entries()) CHECK(train.count(e.key.artifact_id) == 1);

    TempDir dir;
    const IndexCacheKey key{corpus.hash(), split.hash(), "mock", 8};
    const auto path = index_cache_path(dir.path, split);
    save_index_cache(path, index, key);
    const auto loaded = load_index_cache(path, key);
    REQUIRE(loaded.has_value());
    REQUIRE(loaded->size() == index.size());
    for (std::size_t i = 0; i < index.size(); ++i) {
        CHECK(loaded->entries()[i].vector == index.entries()[i].vector);
        CHECK(loaded->entries()[i].key == index.entries()[i].key);
    }
    IndexCacheKey other = key;
    other.dimensionality = 16;
    CHECK_FALSE(load_index_cache(path, other).has_value());
    CHECK_FALSE(load_index_cache(dir / "absent.json", key).has_value());

    // A valid cache avoids embedding calls.
    const auto before = stack.mock->calls();
    const auto cached = load_or_build_index(*stack.gateway, *stack.corpus, split, 8, dir.path);
    const auto after_first = stack.mock->calls();
    load_or_build_index(*stack.gateway, *stack.corpus, split, 8, dir.path);
    CHECK(stack.mock->calls() == after_first);
    CHECK(after_first - before <= static_cast<long long>(index.size()));
    CHECK(cached.size() == index.size());
}
