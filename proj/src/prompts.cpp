#include "rubriclearn/prompts.hpp"

#include "prompt_assets.hpp"
#include "rubriclearn/error.hpp"
#include "rubriclearn/text.hpp"

#include <algorithm>
#include <map>
#include <set>

namespace rubriclearn {

const std::string_view revision_artifact_marker = "## Current Artifact:\n";
const std::string_view fallback_comment = "No comment was generated for this position.";

namespace {

constexpr std::size_t context_snippet_chars = 200;

std::string fill(std::string_view tmpl, std::string_view key, const std::string& value) {
    std::string out(tmpl);
    for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size())) {
        out.replace(pos, key.size(), value);
    }
    return out;
}

std::string asset(std::string_view name) { return std::string(assets::prompt(name)); }

std::string indent_lines(const std::string& s, const std::string& indent) {
    std::string out;
    std::size_t start = 0;
    while (start <= s.size()) {
        const auto nl = s.find('\n', start);
        const auto line = s.substr(start, nl == std::string::npos ? std::string::npos : nl - start);
        if (!line.empty()) out += indent + line;
        if (nl == std::string::npos) break;
        out += '\n';
        start = nl + 1;
    }
    return out;
}

std::string quoted(const std::string& s) { return "\"" + s + "\""; }

std::string score_text(const std::optional<double>& mean) { return mean ? text::fixed(*mean, 2) + "/10" : "n/a"; }

std::string render_positions(const std::vector<CommentInstance>& positions) {
    std::string out = "## Positions Requiring Comments (" + std::to_string(positions.size()) + " positions):\n";
    for (std::size_t i = 0; i < positions.size(); ++i) {
        const auto& p = positions[i];
        out += "  " + std::to_string(i) + ". target_quote: " + quoted(p.target_quote);
        if (p.start) out += ", start=" + std::to_string(*p.start);
        if (p.end) out += ", end=" + std::to_string(*p.end);
        out += "\n";
    }
    return out;
}

std::string render_conversation(const Artifact& artifact) {
    if (!artifact.prompt) return {};
    return "## Conversation:\n" + *artifact.prompt + "\n\n";
}

// Shared head of the generation-style user message, up to the positions.
std::string generation_head(const Artifact& artifact, const std::vector<CommentInstance>& positions,
                            const Rubric* rubric, const PromptOptions& options) {
    std::string user = render_conversation(artifact);
    user += "## Artifact Being Reviewed:\n" + render_artifact(artifact.body, options) + "\n\n";
    if (rubric) {
        user += "## Evaluation Criteria (" + std::to_string(rubric->criteria.size()) + " criteria):\n";
        user += render_criteria_list(rubric->criteria);
    } else {
        user += "## Evaluation Criteria (0 criteria):\n  (no criteria provided)\n";
    }
    user += "\n" + render_positions(positions);
    return user;
}

void require_positions(const std::vector<CommentInstance>& positions) {
    if (positions.empty()) throw InvariantError("generation prompt", "at least one position is required");
}

std::string rubric_lines(const Rubric& rubric, const std::string& indent) {
    std::string out;
    for (std::size_t k = 0; k < rubric.criteria.size(); ++k) {
        const auto& c = rubric.criteria[k];
        out += indent + render_criterion_id({rubric.round, static_cast<int>(k)}) + ". [" + std::to_string(c.points) +
               "] " + c.text + "\n";
    }
    return out;
}

std::string cited_list(const std::vector<CriterionRef>& cited) {
    if (cited.empty()) return "(none)";
    std::string out;
    for (const auto& c : cited) {
        if (!out.empty()) out += ", ";
        out += render_criterion_id(c);
    }
    return out;
}

std::string score_of(const std::optional<int>& s) { return s ? std::to_string(*s) + "/10" : "missing"; }

struct RefinementContext {
    std::vector<int> history;           // prior rounds shown, newest first
    std::map<int, const Rubric*> rubrics;
    std::map<InstanceKey, const RefinementSignal*> by_key;
};

RefinementContext refinement_context(const RefinementInput& in) {
    if (in.history_window < 0 || in.history_window > 3) {
        throw InvariantError("refinement prompt", "history window must be between 0 and 3 rounds");
    }
    if (in.artifacts.empty()) throw InvariantError("refinement prompt", "no training artifacts");
    RefinementContext ctx;
    std::vector<int> available;
    for (const auto& r : in.prior_rubrics) {
        if (r.round < in.current.round) {
            ctx.rubrics[r.round] = &r;
            available.push_back(r.round);
        }
    }
    for (const auto& s : in.signals) {
        ctx.by_key[s.key] = &s;
        for (const auto& [round, entry] : s.rounds) {
            if (round > in.current.round) {
                throw InvariantError("refinement prompt", "signal for " + s.key.str() + " has future round " +
                                                             std::to_string(round));
            }
        }
    }
    ctx.history = history_rounds(in.current.round, available, in.history_window);
    return ctx;
}

// Sections shared by the comment-wise and field-wise refinement prompts.
std::string refinement_summary(const RefinementInput& in, const RefinementContext& ctx) {
    const Rubric& cur = in.current;
    std::string out = "**Current Round Rubrics (Round " + std::to_string(cur.round) + ", " +
                      std::to_string(cur.criteria.size()) + " criteria):**\n";
    out += rubric_lines(cur, "  ");

    out += "\n**Score History:**\n";
    std::set<int> shown(ctx.history.begin(), ctx.history.end());
    shown.insert(cur.round);
    bool any_score = false;
    for (const auto& s : in.score_history) {
        if (!shown.count(s.round)) continue;
        any_score = true;
        out += "  Round " + std::to_string(s.round) + ": train " + score_text(s.train_mean) + " (" +
               std::to_string(s.train_missing) + " missing), validation " + score_text(s.validation_mean) + " (" +
               std::to_string(s.validation_missing) + " missing)\n";
    }
    if (!any_score) out += "  (none)\n";

    out += "\n**Prior Round Rubric Snapshots:**\n";
    if (ctx.history.empty()) out += "  (none)\n";
    for (int round : ctx.history) {
        const Rubric& r = *ctx.rubrics.at(round);
        out += "  Round " + std::to_string(round) + " Rubrics (" + std::to_string(r.criteria.size()) + " criteria):\n";
        out += rubric_lines(r, "    ");
    }

    // Current-round scores per case.
    std::vector<std::optional<double>> case_means;
    std::size_t evaluations = 0;
    double total = 0.0;
    for (const Artifact* a : in.artifacts) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t j = 0; j < a->comments.size(); ++j) {
            auto it = ctx.by_key.find(InstanceKey{a->artifact_id, j});
            if (it == ctx.by_key.end()) continue;
            auto e = it->second->rounds.find(cur.round);
            if (e == it->second->rounds.end() || !e->second.content_score) continue;
            sum += *e->second.content_score;
            ++n;
        }
        evaluations += n;
        total += sum;
        case_means.push_back(n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt);
    }
    out += "\n**Aggregate Score Summary (across " + std::to_string(evaluations) + " evaluations, " +
           std::to_string(in.artifacts.size()) + " cases):**\n";
    out += "  Mean Content Score:  " +
           score_text(evaluations ? std::optional<double>(total / static_cast<double>(evaluations)) : std::nullopt) +
           "\n";
    out += "\n**Per-Case Score Breakdown:**\n";
    for (std::size_t i = 0; i < case_means.size(); ++i) {
        out += "  Case " + std::to_string(i + 1) + ": Content " + score_text(case_means[i]) + " (1 artifacts)\n";
    }
    return out;
}

std::string context_snippet(const Artifact& a) {
    if (!a.prompt) return {};
    const std::string& p = *a.prompt;
    if (text::codepoint_length(p) <= context_snippet_chars) return "Context snippet: " + p + "\n";
    return "Context snippet: " + p.substr(0, text::codepoint_to_byte(p, context_snippet_chars)) + "...\n";
}

PromptBundle refinement_bundle(std::string user) {
    PromptBundle b;
    b.system_text = asset("refine_system");
    b.user_text = std::move(user);
    b.schema = SchemaId::inferred_rubrics;
    b.purpose = Purpose::refine;
    return b;
}

std::string bullet_list(const std::string& title, std::vector<std::string> items, const std::string& indent) {
    std::string out = indent + title + " (" + std::to_string(items.size()) + "):\n";
    for (const auto& item : items) out += indent + "  - " + item + "\n";
    return out;
}

} // namespace

std::string render_artifact(const std::string& body, const PromptOptions& options) {
    if (!options.artifact_char_cap || text::codepoint_length(body) <= *options.artifact_char_cap) return body;
    return body.substr(0, text::codepoint_to_byte(body, *options.artifact_char_cap)) + "\n[... artifact truncated ...]";
}

std::string render_criteria_list(const std::vector<Criterion>& criteria, const std::string& indent) {
    std::string out;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        out += indent + std::to_string(k) + ". [" + std::to_string(criteria[k].points) + "] " + criteria[k].text + "\n";
    }
    return out;
}

PromptBundle build_rubric_learning_prompt(const std::vector<const Artifact*>& cases, const PromptOptions& options) {
    std::size_t comments = 0;
    for (const Artifact* a : cases) comments += a->comments.size();
    if (cases.empty() || comments == 0) {
        throw InvariantError("rubric learning prompt", "training set has no comments");
    }
    std::string user = fill(fill(asset("learn_user_intro"), "{N}", std::to_string(cases.size())), "{M}",
                            std::to_string(comments));
    user += "\n\n";
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const Artifact& a = *cases[i];
        user += "=== Case " + std::to_string(i + 1) + " (artifact_id: " + a.artifact_id + ") ===\n";
        if (a.prompt) user += "Question:\n" + *a.prompt + "\n";
        user += "\n  --- Artifact 1 ---\n";
        user += indent_lines(render_artifact(a.body, options), "  ") + "\n\n";
        user += "  Comments (" + std::to_string(a.comments.size()) + " issues):\n";
        for (std::size_t j = 0; j < a.comments.size(); ++j) {
            user += "      " + std::to_string(j + 1) + ". Target: " + quoted(a.comments[j].target_quote) + "\n";
            user += "         Comment: " + a.comments[j].reference_comment + "\n";
        }
        user += "\n";
    }
    user += asset("learn_user_outro");
    PromptBundle b;
    b.system_text = asset("learn_system");
    b.user_text = std::move(user);
    b.schema = SchemaId::inferred_rubrics;
    b.purpose = Purpose::learn;
    return b;
}

PromptBundle build_generation_prompt(const Artifact& artifact, const std::vector<CommentInstance>& positions,
                                     const Rubric* rubric, const PromptOptions& options) {
    require_positions(positions);
    if (rubric && rubric->empty()) throw InvariantError("generation prompt", "rubric has no criteria");
    std::string user = generation_head(artifact, positions, rubric, options);
    user += "\n" + fill(asset(rubric ? "generate_user_closing" : "generate_no_rubric_user_closing"), "{M}",
                        std::to_string(positions.size()));
    PromptBundle b;
    b.system_text = asset(rubric ? "generate_system" : "generate_no_rubric_system");
    b.user_text = std::move(user);
    b.schema = SchemaId::comments;
    b.purpose = Purpose::generate;
    return b;
}

PromptBundle build_judge_prompt(const Artifact& artifact, const std::vector<JudgePair>& pairs,
                                const PromptOptions& options) {
    if (pairs.empty()) throw InvariantError("judge prompt", "at least one pair is required");
    std::string user = "## Artifact:\n" + render_artifact(artifact.body, options) + "\n\n";
    user += "## Comment Pairs (" + std::to_string(pairs.size()) + " pairs):\n";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        const auto& p = pairs[i];
        user += "--- Pair " + std::to_string(i + 1) + " ---\n";
        user += "  Location: " + quoted(p.reference.target_quote) + "\n";
        user += "  Original comment: " + quoted(p.reference.reference_comment) + "\n";
        if (p.reference.issue_type) user += "    issue_type: " + *p.reference.issue_type + "\n";
        user += "  Regenerated comment: " + quoted(p.generated_comment) + "\n";
        if (p.generated_issue_type) user += "    issue_type: " + *p.generated_issue_type + "\n";
        user += "\n";
    }
    user += "Evaluate each pair on content similarity.";
    PromptBundle b;
    b.system_text = asset("judge_system");
    b.user_text = std::move(user);
    b.schema = SchemaId::comment_scores;
    b.purpose = Purpose::judge;
    return b;
}

std::vector<int> history_rounds(int current_round, const std::vector<int>& available, int window) {
    std::set<int, std::greater<>> prior;
    for (int r : available) {
        if (r < current_round && r >= 0) prior.insert(r);
    }
    std::vector<int> out;
    for (int r : prior) {
        if (static_cast<int>(out.size()) >= window) break;
        out.push_back(r);
    }
    return out;
}

PromptBundle build_refinement_prompt(const RefinementInput& in, const PromptOptions& options) {
    const auto ctx = refinement_context(in);
    std::vector<int> rounds{in.current.round};
    rounds.insert(rounds.end(), ctx.history.begin(), ctx.history.end());

    std::string user = "Refine the GLOBAL evaluation rubrics based on fixed-position feedback from " +
                       std::to_string(in.artifacts.size()) + " artifacts.\n\n";
    user += refinement_summary(in, ctx);
    user += "\n**Evaluation Feedback (all artifacts, grouped by case):**\n";
    for (std::size_t i = 0; i < in.artifacts.size(); ++i) {
        const Artifact& a = *in.artifacts[i];
        user += "=== Case " + std::to_string(i + 1) + " (artifact_id: " + a.artifact_id + ") ===\n";
        user += context_snippet(a);
        user += "  --- Artifact 1 (artifact_id: " + a.artifact_id + ") ---\n";
        user += "  Artifact:\n" + render_artifact(a.body, options) + "\n\n";
        user += "  Comment Bundles (" + std::to_string(a.comments.size()) + "):\n";
        for (std::size_t j = 0; j < a.comments.size(); ++j) {
            const auto& c = a.comments[j];
            user += "    Comment Slot C" + std::to_string(j) + ":\n";
            user += "      Target Quote: " + quoted(c.target_quote) + "\n";
            user += "      GT Comment: " + quoted(c.reference_comment) + "\n";
            auto it = ctx.by_key.find(InstanceKey{a.artifact_id, j});
            if (it == ctx.by_key.end()) continue;
            for (int round : rounds) {
                auto e = it->second->rounds.find(round);
                if (e == it->second->rounds.end()) continue;
                const SignalEntry& s = e->second;
                user += "      Round " + std::to_string(round) + ":\n";
                user += "        Generated Comment: " + quoted(s.generated_comment) + "\n";
                user += "        Selected Rubrics: " + cited_list(s.cited) + "\n";
                user += "        Content Score: " + score_of(s.content_score) + "\n";
                user += "        Judge Reasoning: " + s.judge_reasoning + "\n";
            }
        }
        user += "\n";
    }
    user += asset("refine_user_closing");
    return refinement_bundle(std::move(user));
}

PromptBundle build_fieldwise_refinement_prompt(const RefinementInput& in, const PromptOptions& options) {
    (void)options;
    const auto ctx = refinement_context(in);
    std::vector<int> rounds{in.current.round};
    rounds.insert(rounds.end(), ctx.history.begin(), ctx.history.end());

    std::string user = "Refine the GLOBAL evaluation rubrics based on field-wise feedback from " +
                       std::to_string(in.artifacts.size()) + " artifacts.\n\n";
    user += refinement_summary(in, ctx);
    user += "\n**Evaluation Feedback (field-wise lists, each sorted independently):**\n";
    for (int round : rounds) {
        std::vector<std::string> quotes, refs, gens, reasons;
        std::vector<std::pair<int, int>> scores; // (missing flag, score) for ordering
        std::map<CriterionRef, int> cited;
        for (const Artifact* a : in.artifacts) {
            for (std::size_t j = 0; j < a->comments.size(); ++j) {
                auto it = ctx.by_key.find(InstanceKey{a->artifact_id, j});
                if (it == ctx.by_key.end()) continue;
                auto e = it->second->rounds.find(round);
                if (e == it->second->rounds.end()) continue;
                const SignalEntry& s = e->second;
                quotes.push_back(quoted(s.target_quote));
                refs.push_back(quoted(s.reference_comment));
                gens.push_back(quoted(s.generated_comment));
                reasons.push_back(s.judge_reasoning);
                scores.emplace_back(s.content_score ? 0 : 1, s.content_score.value_or(0));
                for (const auto& c : s.cited) ++cited[c];
            }
        }
        std::sort(quotes.begin(), quotes.end());
        std::sort(refs.begin(), refs.end());
        std::sort(gens.begin(), gens.end());
        std::sort(reasons.begin(), reasons.end());
        std::sort(scores.begin(), scores.end());
        std::vector<std::string> score_items;
        for (const auto& [missing, s] : scores) score_items.push_back(missing ? "missing" : std::to_string(s) + "/10");
        std::vector<std::string> cited_items;
        for (const auto& [ref, n] : cited) cited_items.push_back(render_criterion_id(ref) + " x" + std::to_string(n));

        user += "  Round " + std::to_string(round) + ":\n";
        user += bullet_list("Target Quotes", quotes, "    ");
        user += bullet_list("GT Comments", refs, "    ");
        user += bullet_list("Generated Comments", gens, "    ");
        user += bullet_list("Content Scores", score_items, "    ");
        user += bullet_list("Judge Reasonings", reasons, "    ");
        user += bullet_list("Selected Rubric Counts", cited_items, "    ");
    }
    user += "\n" + asset("refine_fieldwise_user_closing");
    return refinement_bundle(std::move(user));
}

PromptBundle build_rag_prompt(const Artifact& artifact, const std::vector<CommentInstance>& positions,
                              const std::vector<std::vector<Neighbor>>& retrieved, const PromptOptions& options) {
    require_positions(positions);
    if (retrieved.size() != positions.size()) {
        throw InvariantError("rag prompt", std::to_string(positions.size()) + " positions but " +
                                               std::to_string(retrieved.size()) + " neighbor lists");
    }
    std::string user = generation_head(artifact, positions, nullptr, options);
    user += "\n## Retrieved Comments from Reference Data:\n";
    for (std::size_t i = 0; i < positions.size(); ++i) {
        if (retrieved[i].empty()) throw InvariantError("rag prompt", "position " + std::to_string(i) + " has no neighbors");
        if (i > 0) user += "\n";
        user += "### Position " + std::to_string(i) + "\n";
        user += "  target_quote: " + quoted(positions[i].target_quote) + "\n";
        for (std::size_t n = 0; n < retrieved[i].size(); ++n) {
            const auto& nb = retrieved[i][n];
            user += "    " + std::to_string(n + 1) + ". retrieved comment: " + quoted(nb.retrieved_comment) +
                    ", target_quote: " + quoted(nb.retrieved_quote) + ", similarity=" + text::fixed(nb.similarity, 4) +
                    "\n";
        }
    }
    user += "\n" + fill(asset("rag_user_closing"), "{M}", std::to_string(positions.size()));
    PromptBundle b;
    b.system_text = asset("generate_no_rubric_system") + "\n\n" + asset("rag_system_note");
    b.user_text = std::move(user);
    b.schema = SchemaId::comments;
    b.purpose = Purpose::generate;
    return b;
}

PromptBundle build_localization_prompt(const std::vector<Criterion>& global_rubric, const std::string& prompt_text) {
    if (global_rubric.empty()) throw InvariantError("localization prompt", "global rubric is empty");
    std::string user = "## GLOBAL rubric (" + std::to_string(global_rubric.size()) + " items):\n";
    user += render_criteria_list(global_rubric);
    user += "\n## PROMPT:\n" + prompt_text;
    PromptBundle b;
    b.system_text = asset("localize_system");
    b.user_text = std::move(user);
    b.schema = SchemaId::localized_items;
    b.purpose = Purpose::localize;
    return b;
}

PromptBundle build_agreement_prompt(const std::vector<Criterion>& original, const std::vector<Criterion>& current) {
    if (original.empty() || current.empty()) throw InvariantError("agreement prompt", "both rubrics must be non-empty");
    std::string user = "## ORIGINAL rubric (" + std::to_string(original.size()) + " items):\n";
    user += render_criteria_list(original);
    user += "\n## CURRENT rubric (" + std::to_string(current.size()) + " items):\n";
    user += render_criteria_list(current);
    PromptBundle b;
    b.system_text = asset("agree_system");
    b.user_text = std::move(user);
    b.schema = SchemaId::agreement;
    b.purpose = Purpose::agree;
    return b;
}

PromptBundle build_satisfaction_prompt(const std::string& artifact_text, const std::vector<Criterion>& items,
                                       const PromptOptions& options) {
    if (items.empty()) throw InvariantError("satisfaction prompt", "reference rubric is empty");
    std::string user = "## Artifact:\n" + render_artifact(artifact_text, options) + "\n\n";
    user += "## Reference Rubric Items (" + std::to_string(items.size()) + " items):\n";
    for (std::size_t k = 0; k < items.size(); ++k) user += "  " + std::to_string(k) + ". " + items[k].text + "\n";
    user += "\nReturn exactly " + std::to_string(items.size()) + " verdicts, one per item, in item order.";
    PromptBundle b;
    b.system_text = asset("satisfaction_system");
    b.user_text = std::move(user);
    b.schema = SchemaId::verdicts;
    b.purpose = Purpose::judge;
    return b;
}

PromptBundle build_revision_prompt(const std::string& artifact_text, const std::optional<std::string>& task_prompt,
                                   const std::vector<Criterion>* rubric, int round, int total_rounds,
                                   const PromptOptions& options) {
    if (round < 1 || round > total_rounds) {
        throw InvariantError("revision prompt", "round " + std::to_string(round) + " outside 1.." +
                                                    std::to_string(total_rounds));
    }
    if (rubric && rubric->empty()) throw InvariantError("revision prompt", "rubric has no criteria");
    std::string user;
    if (task_prompt) user += "## Conversation:\n" + *task_prompt + "\n\n";
    if (rubric) {
        user += "## Evaluation Criteria (" + std::to_string(rubric->size()) + " criteria):\n";
        user += render_criteria_list(*rubric) + "\n";
    }
    user += "Revision round " + std::to_string(round) + " of " + std::to_string(total_rounds) + ".";
    if (round == total_rounds) user += " This is the final revision round.";
    user += "\n\n";
    user += std::string(revision_artifact_marker) + render_artifact(artifact_text, options);
    PromptBundle b;
    b.system_text = asset(rubric ? "revise_system" : "revise_no_rubric_system");
    b.user_text = std::move(user);
    b.purpose = Purpose::revise;
    return b;
}

ChatRequest to_request(const PromptBundle& bundle) {
    ChatRequest r;
    r.system_text = bundle.system_text;
    r.user_text = bundle.user_text;
    r.tag = bundle.purpose;
    return r;
}

} // namespace rubriclearn
