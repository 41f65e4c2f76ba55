#include "rubriclearn/fixtures.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/prompts.hpp"
#include "rubriclearn/retrieval.hpp"
#include "rubriclearn/text.hpp"

namespace rubriclearn {

namespace fs = std::filesystem;

namespace {

CommentInstance at_quote(const std::string& body, const std::string& quote, const std::string& comment,
                         std::optional<std::string> issue_type) {
    const auto byte = body.find(quote);
    if (byte == std::string::npos) throw InvariantError("fixture", "quote not in body: " + quote);
    CommentInstance c;
    c.target_quote = quote;
    c.reference_comment = comment;
    c.start = text::byte_to_codepoint(body, byte);
    c.end = *c.start + text::codepoint_length(quote);
    c.issue_type = std::move(issue_type);
    return c;
}

Criterion criterion(std::string text, int points) { return Criterion{std::move(text), points, {}, ""}; }

PromptFixture mini() {
    Artifact a1;
    a1.artifact_id = "mini-01";
    a1.body = "The study enrolled 40 participants. Results were significant (p < 0.05). "
              "We conclude the drug works for everyone!\nLimitations are not discussed.";
    a1.comments = {
        at_quote(a1.body, "40 participants", "The sample is small; add a power analysis.", "harmful_present"),
        at_quote(a1.body, "works for everyone", "This overgeneralizes beyond the enrolled population.",
                 "harmful_present"),
    };

    Artifact a2;
    a2.artifact_id = "mini-02";
    a2.prompt = "Draft a short proposal for a feedback tool.";
    a2.body = "Our tool suggests inline comments.\nIt retrieves similar past comments to ground each suggestion. "
              "The budget section is left for later.";
    a2.comments = {
        at_quote(a2.body, "retrieves similar past comments", "Name the embedding model and the similarity measure.",
                 std::nullopt),
    };

    Artifact a3;
    a3.artifact_id = "mini-03";
    a3.body = "Caf\xC3\xA9 owners reported higher sales after the change. No control group was used.";
    a3.comments = {
        at_quote(a3.body, "No control group", "Without a comparison condition the effect is not attributable.",
                 "helpful_missing"),
    };

    PromptFixture f;
    f.corpus = Corpus({a1, a2, a3});
    f.round0.round = 0;
    f.round0.provenance.run_id = "mini";
    f.round0.criteria = {
        criterion("evidence, sample-size: when a claim rests on a small cohort, ask for a power justification. "
                  "Example: \"enrolled 40 participants\" -> \"Justify the sample size.\"",
                  3),
        criterion("praise, tone: avoid generic praise that names no concrete strength. "
                  "Example: \"Great work!\" -> (no comment)",
                  -1),
    };
    f.round1 = f.round0;
    f.round1.round = 1;
    f.round1.provenance.parent_round = 0;
    f.round1.criteria.push_back(
        criterion("scope, generalization: flag conclusions that extend past the studied population. "
                  "Example: \"works for everyone\" -> \"Limit the claim to the enrolled group.\"",
                  2));
    f.reference = {
        criterion("States the sample size and justifies it.", 1),
        criterion("Limits conclusions to the studied population.", 1),
        criterion("Discusses limitations.", 1),
    };
    return f;
}

std::string section(const std::string& variant, const PromptBundle& b) {
    std::string out = "#### variant: " + variant + "\n";
    out += "#### schema: " + (b.schema ? std::string(to_string(*b.schema)) : std::string("none")) + "\n";
    out += "#### system\n" + b.system_text + "\n";
    out += "#### user\n" + b.user_text + "\n";
    return out;
}

PredictionRecord record(const Artifact& a, std::size_t j, int round, std::string generated, int score,
                        std::string reasoning, std::vector<CriterionRef> cited) {
    PredictionRecord r;
    r.key = {a.artifact_id, j};
    r.round = round;
    r.split = SplitName::train;
    r.target_quote = a.comments[j].target_quote;
    r.reference_comment = a.comments[j].reference_comment;
    r.reference_issue_type = a.comments[j].issue_type;
    r.generated_comment = std::move(generated);
    r.content_score = score;
    r.judge_reasoning = std::move(reasoning);
    r.cited = std::move(cited);
    return r;
}

RefinementInput refinement_input(const PromptFixture& f) {
    const Artifact& a1 = f.corpus.at("mini-01");
    const Artifact& a2 = f.corpus.at("mini-02");
    RefinementInput in;
    in.current = f.round1;
    in.prior_rubrics = {f.round0};
    in.score_history = {RoundScore{0, 5.0, 4.0, 0, 0}, RoundScore{1, 6.5, 5.0, 0, 1}};
    in.artifacts = {&a1, &a2};
    std::vector<PredictionRecord> r0{
        record(a1, 0, 0, "Consider a larger sample.", 6, "Same concern, no power analysis.", {{0, 0}}),
        record(a1, 1, 0, "Nice conclusion.", 1, "Misses the overgeneralization.", {{0, 1}}),
        record(a2, 0, 0, "Explain the retrieval step.", 4, "Vaguer than the reference.", {}),
    };
    std::vector<PredictionRecord> r1{
        record(a1, 0, 1, "The sample is small; justify it with a power analysis.", 9, "Nearly identical.", {{1, 0}}),
        record(a1, 1, 1, "The claim extends past the enrolled group.", 8, "Same issue.", {{1, 2}, {1, 0}}),
        record(a2, 0, 1, "Explain the retrieval step.", 4, "Still vague.", {}),
    };
    accumulate_signals(in.signals, r0);
    accumulate_signals(in.signals, r1);
    in.history_window = 3;
    return in;
}

} // namespace

std::vector<std::string> fixture_ids() { return {"mini"}; }

PromptFixture load_fixture(const std::string& id) {
    if (id == "mini") return mini();
    throw ConfigError("unknown fixture '" + id + "' (available: mini)");
}

std::map<std::string, std::string> render_prompt_families(const PromptFixture& f) {
    const Artifact& a1 = f.corpus.at("mini-01");
    const Artifact& a2 = f.corpus.at("mini-02");
    const Artifact& a3 = f.corpus.at("mini-03");
    std::map<std::string, std::string> out;

    out["learn.txt"] = section("initial", build_rubric_learning_prompt({&a1, &a2}));

    std::string gen = section("rubric", build_generation_prompt(a1, a1.comments, &f.round1));
    gen += "\n" + section("no_rubric", build_generation_prompt(a1, a1.comments, nullptr));
    const std::vector<std::vector<Neighbor>> neighbors{
        {Neighbor{{a3.artifact_id, 0}, 0.8125, a3.comments[0].reference_comment, a3.comments[0].target_quote},
         Neighbor{{a2.artifact_id, 0}, 0.4567, a2.comments[0].reference_comment, a2.comments[0].target_quote}},
        {Neighbor{{a2.artifact_id, 0}, 0.5, a2.comments[0].reference_comment, a2.comments[0].target_quote},
         Neighbor{{a3.artifact_id, 0}, 0.125, a3.comments[0].reference_comment, a3.comments[0].target_quote}},
    };
    gen += "\n" + section("rag", build_rag_prompt(a1, a1.comments, neighbors));
    gen += "\n#### variant: retrieval_texts\n";
    for (const Artifact* a : {&a1, &a3}) {
        for (std::size_t j = 0; j < a->comments.size(); ++j) {
            const std::string key = InstanceKey{a->artifact_id, j}.str();
            gen += "query standard " + key + ": " + build_query_text(*a, a->comments[j], DatasetKind::standard) + "\n";
            gen += "query essay " + key + ": " + build_query_text(*a, a->comments[j], DatasetKind::essay) + "\n";
            gen += "document " + key + ": " + build_document_text(a->comments[j]) + "\n";
        }
    }
    out["generate.txt"] = gen;

    const std::vector<JudgePair> pairs{
        {a1.comments[0], "The sample is small; justify it with a power analysis.", std::string("harmful_present")},
        {a1.comments[1], "Nice conclusion.", std::nullopt},
    };
    std::string judge = section("pairs", build_judge_prompt(a1, pairs));
    judge += "\n" + section("satisfaction", build_satisfaction_prompt(a1.body, f.reference));
    out["judge.txt"] = judge;

    const RefinementInput in = refinement_input(f);
    out["refine.txt"] = section("commentwise", build_refinement_prompt(in)) + "\n" +
                        section("fieldwise", build_fieldwise_refinement_prompt(in));

    out["localize.txt"] = section("localize", build_localization_prompt(f.round1.criteria, *a2.prompt));
    out["agree.txt"] = section("agree", build_agreement_prompt(f.reference, f.round1.criteria));
    out["revise.txt"] = section("rubric", build_revision_prompt(a2.body, a2.prompt, &f.round1.criteria, 1, 3)) + "\n" +
                        section("no_rubric", build_revision_prompt(a1.body, std::nullopt, nullptr, 3, 3));
    return out;
}

std::vector<fs::path> dump_prompts(const std::string& fixture_id, const fs::path& out_dir) {
    const auto families = render_prompt_families(load_fixture(fixture_id));
    fs::create_directories(out_dir);
    std::vector<fs::path> written;
    for (const auto& [name, contents] : families) {
        text::write_file_atomic(out_dir / name, contents);
        written.push_back(out_dir / name);
    }
    return written;
}

} // namespace rubriclearn
