#pragma once

#include "rubriclearn/metrics.hpp"
#include "rubriclearn/pipeline.hpp"
#include "rubriclearn/rubric.hpp"
#include "rubriclearn/structured.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace rubriclearn {

/// 2rp/(r+p); 0 when r + p == 0.
double h_mean(double recall, double precision);

struct AgreementResult {
    int recall = 0;
    int precision = 0;
    double h_mean = 0.0;
    std::string reasoning;
};

/// One agreement call comparing `learned` against `reference`.
AgreementResult score_rubric_agreement(PipelineContext& ctx, const std::vector<Criterion>& learned,
                                       const std::vector<Criterion>& reference, int lane = 0,
                                       const std::string& label = "agreement");

/// Items with a source_index outside the global rubric are dropped with a
/// warning; InvariantError when none survive.
std::vector<LocalizedItem> localize_rubric(PipelineContext& ctx, const std::vector<Criterion>& global,
                                           const std::string& prompt_text, int lane = 0);

/// Number of reference items the judge marks satisfied. A verdict list that
/// does not cover the items exactly once in order is re-asked once, then
/// raises SchemaError.
int count_satisfied_items(PipelineContext& ctx, const std::string& artifact_text, const std::vector<Criterion>& items,
                          int lane = 0, const std::string& label = "satisfaction");

/// Reference rubric file: a rubric JSON object, or an array of item strings
/// (each worth 1 point).
std::vector<Criterion> parse_reference_rubric(std::string_view json_text);
std::vector<Criterion> load_reference_rubric(const std::filesystem::path& path);

enum class RevisionCondition { no_rubric, initial, best_val };

std::string_view to_string(RevisionCondition condition);
RevisionCondition revision_condition_from_string(std::string_view name);

struct RevisionArm {
    RevisionCondition condition = RevisionCondition::no_rubric;
    std::optional<std::vector<Criterion>> rubric; // required except for no_rubric
};

struct RevisionTrace {
    std::string artifact_id;
    RevisionCondition condition = RevisionCondition::no_rubric;
    int repeat = 0;
    std::vector<std::string> revisions; // rounds 1..N
    std::optional<int> before;
    std::optional<int> after;
    bool failed = false;
    std::string error;

    std::optional<int> delta() const;
};

struct RevisionSummary {
    RevisionCondition condition = RevisionCondition::no_rubric;
    std::optional<MeanStd> delta; // over per-repeat mean deltas
    std::size_t failed = 0;
};

struct RevisionExperiment {
    std::vector<RevisionTrace> traces;
    std::vector<RevisionSummary> summaries; // one per arm, arm order
};

/// The "before" count is scored once per artifact per repeat and shared by
/// all arms of that repeat.
RevisionExperiment run_revision_experiment(PipelineContext& ctx, const std::vector<const Artifact*>& artifacts,
                                           const std::vector<Criterion>& reference,
                                           const std::vector<RevisionArm>& arms, int rounds = 3, int repeats = 1);

struct AgreementRow {
    std::string task;
    std::string rubric_kind;
    int repeat = 0;
    AgreementResult result;
};

/// task,rubric_kind,repeat,recall,precision,h_mean
std::string agreement_csv(const std::vector<AgreementRow>& rows);
/// task,condition,repeat,artifact_id,before,after,delta,failed
std::string revision_csv(const std::string& task, const std::vector<RevisionTrace>& traces);

} // namespace rubriclearn
