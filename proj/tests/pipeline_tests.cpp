#include <doctest.h>

#include "support.hpp"

#include "rubriclearn/downstream.hpp"
#include "rubriclearn/error.hpp"

#include <atomic>
#include <stdexcept>

using namespace rubriclearn;
using namespace testsupport;
using json = nlohmann::json;

namespace {

std::vector<const Artifact*> all(const Corpus& c) {
    std::vector<const Artifact*> out;
    for (const auto& a : c.artifacts()) out.push_back(&a);
    return out;
}

std::size_t count_events(const std::vector<json>& records, const std::string& event) {
    std::size_t n = 0;
    for (const auto& r : records) n += r.value("event", "") == event;
    return n;
}

RoundResult round_with(int round, std::optional<double> val, bool selectable = true) {
    RoundResult r;
    r.round = round;
    r.validation_mean = val;
    r.selectable = selectable;
    return r;
}

} // namespace

TEST_CASE("mode names round-trip") {
    for (Mode m : {Mode::no_rubric, Mode::initial_only, Mode::fieldwise_refine, Mode::commentwise_refine,
                   Mode::top1_retrieval, Mode::top3_rag}) {
        CHECK(mode_from_string(to_string(m)) == m);
    }
    CHECK_THROWS_AS(mode_from_string("bogus"), ConfigError);
    CHECK(refines(Mode::fieldwise_refine));
    CHECK_FALSE(refines(Mode::initial_only));
    CHECK(uses_rubric(Mode::initial_only));
    CHECK(uses_retrieval(Mode::top3_rag));
}

TEST_CASE("run config validation") {
    RunConfig c;
    CHECK_NOTHROW(c.validate());
    c.history_window = 4;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.history_window = 0;
    c.repeats = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("parallel_for runs everything and rethrows") {
    std::atomic<int> sum{0};
    parallel_for(100, 4, [&](std::size_t i) { sum += static_cast<int>(i); });
    CHECK(sum == 4950);
    std::atomic<int> ran{0};
    CHECK_THROWS_AS(parallel_for(10, 3,
                                 [&](std::size_t i) {
                                     ++ran;
                                     if (i == 4) throw std::runtime_error("boom");
                                 }),
                    std::runtime_error);
    CHECK(ran == 10);
}

TEST_CASE("best round selection prefers the earliest tie and skips unselectable rounds") {
    CHECK(select_best_round({round_with(0, 5.0), round_with(1, 6.0), round_with(2, 6.0)}) == 1);
    CHECK(select_best_round({round_with(0, 5.0), round_with(1, 9.0, false)}) == 0);
    CHECK_FALSE(select_best_round({round_with(0, std::nullopt, false)}).has_value());
}

TEST_CASE("initial rubric learning warns on criteria without examples") {
    nlohmann::ordered_json plain;
    plain["inferred_rubrics"] = {{{"criterion", "Be specific."}, {"points", 2}}};
    MockStack stack(Corpus(synthetic_artifacts(3)), rule({{"tag", "learn"}}, "text", plain.dump()));
    auto ctx = stack.context();
    const auto rubric = learn_initial_rubric(ctx, all(*stack.corpus));
    CHECK(rubric.round == 0);
    CHECK(rubric.criteria.size() == 1);
    CHECK(count_events(stack.records(), "warning") == 1);
    const auto records = stack.records();
    const json* req = nullptr;
    for (const auto& r : records) {
        if (r["event"] == "request") req = &r;
    }
    REQUIRE(req);
    CHECK((*req)["label"] == "learn initial rubric");
}

TEST_CASE("refinement produces the next round with provenance") {
    MockStack stack(Corpus(synthetic_artifacts(4)), echo_script(3));
    RunConfig cfg;
    cfg.rounds = 2;
    auto ctx = stack.context(cfg);
    const auto split = split_corpus(*stack.corpus, {0.5, 0.25, 0.25}, 5);
    std::vector<int> rubric_rounds;
    RefinementHooks hooks;
    hooks.on_rubric = [&](const Rubric& r) { rubric_rounds.push_back(r.round); };
    const auto result = run_refinement(ctx, split, hooks);
    REQUIRE(result.rounds.size() == 3);
    for (int t = 1; t <= 2; ++t) {
        CHECK(result.rounds[t].rubric.round == t);
        CHECK(result.rounds[t].rubric.provenance.parent_round == t - 1);
    }
    CHECK(rubric_rounds == std::vector<int>{0, 1, 2});
    const auto recs = stack.records();
    CHECK(count_events(recs, "scores") == 3);
    CHECK(count_events(recs, "selection") == 1);
    CHECK(audit_journal(recs).complete());
}

TEST_CASE("fieldwise mode uses the fieldwise refinement layout") {
    MockStack stack(Corpus(synthetic_artifacts(4)), echo_script());
    RunConfig cfg;
    cfg.rounds = 1;
    cfg.mode = Mode::fieldwise_refine;
    auto ctx = stack.context(cfg);
    run_refinement(ctx, split_corpus(*stack.corpus, {0.5, 0.25, 0.25}, 5));
    bool found = false;
    for (const auto& r : stack.records()) {
        if (r["event"] == "request" && r["label"] == "refine round 0") {
            found = true;
            const std::string user = r["user"];
            CHECK(user.find("field-wise lists") != std::string::npos);
            CHECK(user.find("grouped by case") == std::string::npos);
        }
    }
    CHECK(found);
}

TEST_CASE("prior rounds are reused from state without new calls") {
    MockStack first(Corpus(synthetic_artifacts(4)), echo_script());
    RunConfig cfg;
    cfg.rounds = 2;
    auto ctx = first.context(cfg);
    const auto split = split_corpus(*first.corpus, {0.5, 0.25, 0.25}, 5);
    RefinementState state;
    RefinementHooks hooks;
    hooks.on_rubric = [&](const Rubric& r) { state.rubrics[r.round] = r; };
    hooks.on_round = [&](int t, const auto& tr, const auto& va) {
        if (t == 0) state.records[t] = {tr, va};
    };
    const auto full = run_refinement(ctx, split, hooks);
    state.rubrics.erase(2);

    MockStack second(Corpus(synthetic_artifacts(4)), echo_script());
    auto ctx2 = second.context(cfg);
    const auto resumed = run_refinement(ctx2, split, {}, state);
    CHECK(resumed.best_val_round == full.best_val_round);
    REQUIRE(resumed.rounds.size() == full.rounds.size());
    for (std::size_t t = 0; t < full.rounds.size(); ++t) {
        CHECK(resumed.rounds[t].rubric == full.rounds[t].rubric);
        CHECK(resumed.rounds[t].train_mean == full.rounds[t].train_mean);
    }
    for (const auto& r : second.records()) {
        if (r["event"] != "request") continue;
        const std::string label = r["label"];
        CHECK(label.rfind("round 0 ", 0) != 0);
        CHECK(label != "learn initial rubric");
        CHECK(label != "refine round 0");
    }
}

TEST_CASE("generation failure marks records missing; auth failure aborts") {
    std::string script = rule({{"tag", "generate"}, {"label_contains", "a01"}}, "error", json{{"kind", "provider"}});
    script += echo_script();
    MockStack stack(Corpus(synthetic_artifacts(3)), script);
    auto ctx = stack.context();
    auto records = predict_round(ctx, all(*stack.corpus), SplitName::train, nullptr, 0);
    judge_round(ctx, records);
    std::size_t missing = 0;
    for (const auto& r : records) {
        if (r.key.artifact_id == "a01") {
            CHECK_FALSE(r.content_score.has_value());
            CHECK_FALSE(r.error.empty());
            ++missing;
        }
    }
    CHECK(missing == 2);
    CHECK(missing_count(records) == 2);

    MockStack auth(Corpus(synthetic_artifacts(3)), rule({}, "error", json{{"kind", "auth"}}));
    auto actx = auth.context();
    CHECK_THROWS_AS(predict_round(actx, all(*auth.corpus), SplitName::train, nullptr, 0), AuthError);
}

TEST_CASE("cited ids resolve against the round's rubric") {
    MockStack stack(Corpus(synthetic_artifacts(1)),
                    rule({{"tag", "generate"}}, "responder", "echo_references", {{"params", {{"cite", {"1", "R0.0", "9"}}}}}));
    auto ctx = stack.context();
    Rubric rubric;
    rubric.criteria = {Criterion{"a", 1, {}, ""}, Criterion{"b", 1, {}, ""}};
    const auto records = predict_round(ctx, all(*stack.corpus), SplitName::train, &rubric, 0);
    REQUIRE(records.size() == 2);
    CHECK(records[0].cited == std::vector<CriterionRef>{{0, 1}, {0, 0}});
    CHECK(records[0].dropped_ids == std::vector<std::string>{"9"});
}

TEST_CASE("retrieval baselines") {
    const Corpus corpus(synthetic_artifacts(6));
    std::string script = rule({{"tag", "embed"}}, "responder", "hash_embedding");
    script += echo_script();
    MockStack stack(corpus, script);
    auto ctx = stack.context();
    const auto split = split_corpus(*stack.corpus, {0.5, 0.25, 0.25}, 2);
    const auto index = build_index(*stack.gateway, *stack.corpus, split, 8);
    const auto test = split_artifacts(*stack.corpus, split, SplitName::test);
    RetrievalContext rc{&index, DatasetKind::standard, 3, 0};
    std::vector<std::vector<Neighbor>> neighbors;
    const auto rag = run_top3_rag_baseline(ctx, test, rc, &neighbors);
    CHECK(rag.size() == test.size() * 2);
    for (const auto& list : neighbors) CHECK(list.size() == 3);
    const auto top1 = run_top1_baseline(ctx, test, rc);
    for (const auto& r : top1) CHECK_FALSE(r.generated_comment.empty());
    std::size_t rag_requests = 0;
    for (const auto& r : stack.records()) {
        if (r["event"] == "request" && r["tag"] == "generate") {
            ++rag_requests;
            CHECK(r["user"].get<std::string>().find("Support claim") != std::string::npos);
        }
    }
    CHECK(rag_requests == test.size());
}

TEST_CASE("test evaluation summarizes repeats") {
    MockStack stack(Corpus(synthetic_artifacts(3)), echo_script());
    RunConfig cfg;
    cfg.mode = Mode::initial_only;
    auto ctx = stack.context(cfg);
    Rubric rubric;
    rubric.criteria = {Criterion{"a", 1, {}, ""}};
    const auto eval = evaluate_test(ctx, all(*stack.corpus), &rubric, nullptr, 3);
    CHECK(eval.records.size() == 3);
    REQUIRE(eval.summary.has_value());
    CHECK(eval.summary->mean == 10.0);
    CHECK(eval.summary->std == 0.0);
    CHECK_FALSE(summarize_repeats({std::nullopt}).has_value());
    const auto s = summarize_repeats({2.0, std::nullopt, 4.0});
    REQUIRE(s.has_value());
    CHECK(s->mean == 3.0);
}

TEST_CASE("agreement, localization and satisfaction") {
    std::string script = rule({{"tag", "agree"}}, "text", R"({"recall_score":6,"precision_score":3,"reasoning":"r"})");
    script += rule({{"tag", "localize"}}, "text",
                   R"({"items":[{"source_index":0,"criterion":"x","points":2},{"source_index":9,"criterion":"y","points":1}]})");
    script += rule({{"tag", "judge"}, {"label_contains", "bad"}}, "text",
                   R"({"verdicts":[{"item_index":0,"satisfied":true}]})", {{"times", 1}});
    script += rule({{"tag", "judge"}}, "responder", "satisfy_count", {{"params", {{"count", 1}}}});
    MockStack stack(Corpus(synthetic_artifacts(1)), script);
    auto ctx = stack.context();
    const std::vector<Criterion> items{{"i0", 1, {}, ""}, {"i1", 1, {}, ""}};
    const auto a = score_rubric_agreement(ctx, items, items);
    CHECK(a.recall == 6);
    CHECK(a.h_mean == doctest::Approx(4.0));
    const auto local = localize_rubric(ctx, items, "task prompt");
    REQUIRE(local.size() == 1);
    CHECK(local[0].source_index == 0);
    CHECK(count_satisfied_items(ctx, "text", items, 0, "bad first") == 1);
    CHECK(count_events(stack.records(), "schema_retry") == 1);
    CHECK(count_events(stack.records(), "verdicts") == 1);
}

TEST_CASE("reference rubric formats") {
    CHECK(parse_reference_rubric(R"(["a","b"])").size() == 2);
    CHECK(parse_reference_rubric(R"(["a"])")[0].points == 1);
    CHECK(parse_reference_rubric(R"({"inferred_rubrics":[{"criterion":"a","points":3}]})")[0].points == 3);
    CHECK_THROWS_AS(parse_reference_rubric("[]"), SchemaError);
    CHECK_THROWS_AS(parse_reference_rubric(R"([""])"), SchemaError);
    CHECK_THROWS_AS(parse_reference_rubric("{oops"), ParseError);
}

TEST_CASE("revision failures are recorded per trace") {
    std::string script = rule({{"tag", "revise"}, {"label_contains", "a00"}}, "text", "   ");
    script += rule({{"tag", "revise"}}, "responder", "identity_revision");
    script += rule({{"tag", "judge"}}, "responder", "satisfy_count", {{"params", {{"count", 2}}}});
    MockStack stack(Corpus(synthetic_artifacts(2)), script);
    auto ctx = stack.context();
    const std::vector<Criterion> reference{{"r0", 1, {}, ""}, {"r1", 1, {}, ""}, {"r2", 1, {}, ""}};
    const auto exp = run_revision_experiment(ctx, all(*stack.corpus), reference,
                                             {{RevisionCondition::no_rubric, std::nullopt}}, 2, 1);
    REQUIRE(exp.traces.size() == 2);
    CHECK(exp.traces[0].failed);
    CHECK_FALSE(exp.traces[0].delta().has_value());
    CHECK_FALSE(exp.traces[1].failed);
    CHECK(exp.traces[1].delta() == 0);
    CHECK(exp.summaries[0].failed == 1);
    const std::string csv = revision_csv("t", exp.traces);
    CHECK(csv.rfind("task,condition,repeat,artifact_id,before,after,delta,failed\n", 0) == 0);
    CHECK_THROWS_AS(run_revision_experiment(ctx, all(*stack.corpus), reference,
                                            {{RevisionCondition::initial, std::nullopt}}, 2, 1),
                    InvariantError);
    CHECK(revision_condition_from_string("best_val") == RevisionCondition::best_val);
}

TEST_CASE("agreement csv") {
    const std::string csv = agreement_csv({AgreementRow{"t", "initial", 0, AgreementResult{6, 3, 4.0, ""}}});
    CHECK(csv == "task,rubric_kind,repeat,recall,precision,h_mean\nt,initial,0,6,3,4.0000\n");
}
