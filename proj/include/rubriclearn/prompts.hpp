#pragma once

#include "rubriclearn/corpus.hpp"
#include "rubriclearn/gateway.hpp"
#include "rubriclearn/records.hpp"
#include "rubriclearn/rubric.hpp"
#include "rubriclearn/structured.hpp"

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace rubriclearn {

/// A fully assembled chat prompt. `schema` is empty for free-text responses.
struct PromptBundle {
    std::string system_text;
    std::string user_text;
    std::optional<SchemaId> schema;
    Purpose purpose = Purpose::generate;

    bool operator==(const PromptBundle&) const = default;
};

struct PromptOptions {
    // Artifact bodies longer than this many code points are cut and marked.
    std::optional<std::size_t> artifact_char_cap;
};

/// Artifact body after applying the optional cap.
std::string render_artifact(const std::string& body, const PromptOptions& options);

/// "  {k}. [{points}] {text}" per criterion, 0-based.
std::string render_criteria_list(const std::vector<Criterion>& criteria, const std::string& indent = "  ");

PromptBundle build_rubric_learning_prompt(const std::vector<const Artifact*>& train_cases,
                                          const PromptOptions& options = {});

/// `rubric == nullptr` is the no-rubric ablation layout.
PromptBundle build_generation_prompt(const Artifact& artifact, const std::vector<CommentInstance>& positions,
                                     const Rubric* rubric, const PromptOptions& options = {});

struct JudgePair {
    CommentInstance reference;
    std::string generated_comment;
    std::optional<std::string> generated_issue_type;
};

PromptBundle build_judge_prompt(const Artifact& artifact, const std::vector<JudgePair>& pairs,
                                const PromptOptions& options = {});

struct RefinementInput {
    Rubric current;
    // Earlier rubrics in any order; only the newest `history_window` below
    // the current round are shown.
    std::vector<Rubric> prior_rubrics;
    std::vector<RoundScore> score_history;
    // Training artifacts the signals refer to, in case order.
    std::vector<const Artifact*> artifacts;
    std::vector<RefinementSignal> signals;
    int history_window = 3;
};

/// Rounds shown alongside `current_round`: the newest `window` earlier rounds
/// among `available`, newest first.
std::vector<int> history_rounds(int current_round, const std::vector<int>& available, int window);

PromptBundle build_refinement_prompt(const RefinementInput& input, const PromptOptions& options = {});
/// Ablation: same system text, per-field lists with no slot pairing.
PromptBundle build_fieldwise_refinement_prompt(const RefinementInput& input, const PromptOptions& options = {});

/// `retrieved[i]` holds the neighbors of `positions[i]`, best first.
PromptBundle build_rag_prompt(const Artifact& artifact, const std::vector<CommentInstance>& positions,
                              const std::vector<std::vector<Neighbor>>& retrieved,
                              const PromptOptions& options = {});

PromptBundle build_localization_prompt(const std::vector<Criterion>& global_rubric, const std::string& prompt_text);
PromptBundle build_agreement_prompt(const std::vector<Criterion>& original_rubric,
                                    const std::vector<Criterion>& current_rubric);

/// Per-item yes/no satisfaction verdicts for one artifact text.
PromptBundle build_satisfaction_prompt(const std::string& artifact_text, const std::vector<Criterion>& items,
                                       const PromptOptions& options = {});

/// `rubric == nullptr` is the no-rubric revision condition.
PromptBundle build_revision_prompt(const std::string& artifact_text, const std::optional<std::string>& task_prompt,
                                   const std::vector<Criterion>* rubric, int round, int total_rounds,
                                   const PromptOptions& options = {});

/// Marker preceding the artifact in revision prompts; everything after it is
/// the artifact text.
extern const std::string_view revision_artifact_marker;

/// Text used when the generator omits a requested position.
extern const std::string_view fallback_comment;

/// Fills a ChatRequest from a bundle.
ChatRequest to_request(const PromptBundle& bundle);

} // namespace rubriclearn
