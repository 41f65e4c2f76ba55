#pragma once

#include "rubriclearn/corpus.hpp"
#include "rubriclearn/gateway.hpp"
#include "rubriclearn/metrics.hpp"
#include "rubriclearn/prompts.hpp"
#include "rubriclearn/records.hpp"
#include "rubriclearn/retrieval.hpp"
#include "rubriclearn/rubric.hpp"

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rubriclearn {

enum class Mode { no_rubric, initial_only, fieldwise_refine, commentwise_refine, top1_retrieval, top3_rag };

std::string_view to_string(Mode mode);
Mode mode_from_string(std::string_view name);
/// Modes that learn a rubric.
bool uses_rubric(Mode mode);
/// Modes that run refinement rounds.
bool refines(Mode mode);
bool uses_retrieval(Mode mode);

struct RunConfig {
    Mode mode = Mode::commentwise_refine;
    int rounds = 10;
    int history_window = 3;
    int repeats = 5;
    bool relearn_per_repeat = false;
    double temperature = 1.0;
    ReasoningEffort reasoning_effort = ReasoningEffort::low;
    int max_output_tokens = 32768;
    PromptOptions prompt_options;
    std::string run_id = "run";
    DatasetKind corpus_kind = DatasetKind::standard;
    int retrieval_k = 3;
    int embedding_dimensionality = 3072;
    // A round with a larger missing fraction on validation is not selectable.
    double max_missing_fraction = 0.2;

    /// Throws ConfigError.
    void validate() const;
};

/// Everything a pipeline step needs. The gateway enforces the parallelism cap;
/// `parallelism` sets how many artifact-level tasks are dispatched at once.
struct PipelineContext {
    Gateway& gateway;
    const Corpus& corpus;
    RunConfig config;
};

/// Records a {"event":"warning"} journal entry.
void warn(PipelineContext& ctx, const std::string& message);

/// Runs fn(0..n-1) on up to `workers` threads; rethrows the first failure
/// after all tasks finish.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

ChatRequest make_request(const PipelineContext& ctx, const PromptBundle& bundle, int lane, std::string label);

Rubric learn_initial_rubric(PipelineContext& ctx, const std::vector<const Artifact*>& train, int lane = 0);

/// Turns a parsed generation response into exactly one record per position:
/// omitted positions get a flagged fallback, cited ids are resolved against
/// `rubric` (round `round`). `repeat`/`split` are copied into the records.
std::vector<PredictionRecord> align_generated(PipelineContext& ctx, const Artifact& artifact,
                                              const std::vector<GeneratedComment>& comments, const Rubric* rubric,
                                              int round, SplitName split, int repeat);

/// Records marked missing because generation failed for the artifact.
std::vector<PredictionRecord> failed_records(const Artifact& artifact, int round, SplitName split, int repeat,
                                             const std::string& error);

/// One generation call per artifact. `rubric == nullptr` is the no-rubric
/// layout; `round` labels the records (and resolves cited ids).
std::vector<PredictionRecord> predict_round(PipelineContext& ctx, const std::vector<const Artifact*>& artifacts,
                                            SplitName split, const Rubric* rubric, int round, int repeat = 0);

/// One judge call per artifact; scores aligned by order. A short or long
/// score list marks that artifact's records missing.
void judge_round(PipelineContext& ctx, std::vector<PredictionRecord>& records, int lane = 0);

Rubric refine_rubric(PipelineContext& ctx, const RefinementInput& input, bool fieldwise, int lane = 0);

struct CaseScore {
    std::string artifact_id;
    std::optional<double> mean;
    std::size_t missing = 0;
};

struct RoundResult {
    int round = 0;
    Rubric rubric;
    std::optional<double> train_mean;
    std::optional<double> validation_mean;
    std::size_t train_count = 0;
    std::size_t validation_count = 0;
    std::size_t train_missing = 0;
    std::size_t validation_missing = 0;
    bool selectable = false;
    std::vector<CaseScore> per_case; // train split
};

RoundResult summarize_round(const PipelineContext& ctx, const Rubric& rubric,
                            const std::vector<PredictionRecord>& train, const std::vector<PredictionRecord>& validation);

/// Argmax validation mean over selectable rounds, earliest on ties;
/// std::nullopt when no round is selectable.
std::optional<int> select_best_round(const std::vector<RoundResult>& rounds);

/// Completed work restored from a run directory.
struct RefinementState {
    std::map<int, Rubric> rubrics;
    std::map<int, std::pair<std::vector<PredictionRecord>, std::vector<PredictionRecord>>> records;
};

struct RefinementHooks {
    std::function<void(const Rubric&)> on_rubric;
    /// Called once a round's records are judged and the next rubric (if any)
    /// exists; the natural checkpoint.
    std::function<void(int round, const std::vector<PredictionRecord>& train,
                       const std::vector<PredictionRecord>& validation)>
        on_round;
};

struct RefinementResult {
    std::vector<RoundResult> rounds;
    int best_val_round = 0;
    Rubric best;
    std::vector<RefinementSignal> signals;
};

/// Rounds 0..config.rounds with validation-based selection. Work present in
/// `state` is reused instead of re-issued.
RefinementResult run_refinement(PipelineContext& ctx, const CorpusSplit& split, const RefinementHooks& hooks = {},
                                const RefinementState& state = {}, int lane = 0);

/// Instances whose signal entry differs from its stored record, rendered as
/// "round t key: field"; empty when the signals are faithful.
std::vector<std::string> check_signal_fidelity(const std::vector<RefinementSignal>& signals,
                                               const std::map<int, std::vector<PredictionRecord>>& records_by_round);

/// Top-1 copy baseline: no chat generation calls.
std::vector<PredictionRecord> run_top1_baseline(PipelineContext& ctx, const std::vector<const Artifact*>& artifacts,
                                                const RetrievalContext& retrieval,
                                                std::vector<std::vector<Neighbor>>* neighbors = nullptr);

/// Top-k RAG baseline: one generation call per artifact with neighbors in
/// the prompt.
std::vector<PredictionRecord> run_top3_rag_baseline(PipelineContext& ctx, const std::vector<const Artifact*>& artifacts,
                                                    const RetrievalContext& retrieval,
                                                    std::vector<std::vector<Neighbor>>* neighbors = nullptr);

struct TestEvaluation {
    std::vector<std::vector<PredictionRecord>> records; // per repeat
    std::vector<std::optional<double>> repeat_means;
    std::vector<std::size_t> repeat_missing;
    std::optional<MeanStd> summary;
};

/// Predicts and judges the test split once (repeat `repeat`) for `mode`.
/// `rubric` is required for rubric modes, `retrieval` for retrieval modes.
std::vector<PredictionRecord> evaluate_test_repeat(PipelineContext& ctx, const std::vector<const Artifact*>& test,
                                                   const Rubric* rubric, const RetrievalContext* retrieval,
                                                   int repeat);

/// Summary over per-repeat means (population std).
std::optional<MeanStd> summarize_repeats(const std::vector<std::optional<double>>& repeat_means);

/// All repeats in sequence.
TestEvaluation evaluate_test(PipelineContext& ctx, const std::vector<const Artifact*>& test, const Rubric* rubric,
                             const RetrievalContext* retrieval, int repeats);

} // namespace rubriclearn
