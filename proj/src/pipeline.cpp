#include "rubriclearn/pipeline.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/structured.hpp"
#include "rubriclearn/text.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace rubriclearn {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string_view to_string(Mode mode) {
    switch (mode) {
    case Mode::no_rubric: return "no_rubric";
    case Mode::initial_only: return "initial_only";
    case Mode::fieldwise_refine: return "fieldwise_refine";
    case Mode::commentwise_refine: return "commentwise_refine";
    case Mode::top1_retrieval: return "top1_retrieval";
    case Mode::top3_rag: return "top3_rag";
    }
    return "?";
}

Mode mode_from_string(std::string_view name) {
    for (auto m : {Mode::no_rubric, Mode::initial_only, Mode::fieldwise_refine, Mode::commentwise_refine,
                   Mode::top1_retrieval, Mode::top3_rag}) {
        if (to_string(m) == name) return m;
    }
    throw ConfigError("unknown mode '" + std::string(name) + "'");
}

bool uses_rubric(Mode mode) {
    return mode == Mode::initial_only || mode == Mode::fieldwise_refine || mode == Mode::commentwise_refine;
}

bool refines(Mode mode) { return mode == Mode::fieldwise_refine || mode == Mode::commentwise_refine; }

bool uses_retrieval(Mode mode) { return mode == Mode::top1_retrieval || mode == Mode::top3_rag; }

void RunConfig::validate() const {
    if (rounds < 0) throw ConfigError("rounds must be >= 0");
    if (history_window < 0 || history_window > 3) throw ConfigError("history_window must be between 0 and 3");
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    if (temperature < 0.0) throw ConfigError("temperature must be >= 0");
    if (max_output_tokens < 1) throw ConfigError("max_output_tokens must be >= 1");
    if (retrieval_k < 1) throw ConfigError("retrieval.k must be >= 1");
    if (embedding_dimensionality < 1) throw ConfigError("retrieval.dimensionality must be >= 1");
    if (max_missing_fraction < 0.0 || max_missing_fraction > 1.0) {
        throw ConfigError("max_missing_fraction must be within [0, 1]");
    }
    if (prompt_options.artifact_char_cap && *prompt_options.artifact_char_cap == 0) {
        throw ConfigError("artifact_char_cap must be positive");
    }
}

void warn(PipelineContext& ctx, const std::string& message) {
    ordered_json e;
    e["event"] = "warning";
    e["message"] = message;
    ctx.gateway.record(e);
}

void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn) {
    if (n == 0) return;
    const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (std::size_t i = next++; i < n; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(mu);
                    if (!first) first = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (first) std::rethrow_exception(first);
}

ChatRequest make_request(const PipelineContext& ctx, const PromptBundle& bundle, int lane, std::string label) {
    ChatRequest r = to_request(bundle);
    r.temperature = ctx.config.temperature;
    r.reasoning_effort = ctx.config.reasoning_effort;
    r.max_output = ctx.config.max_output_tokens;
    r.lane = lane;
    r.label = std::move(label);
    return r;
}

namespace {

// Errors that end the run rather than one artifact's records.
bool is_fatal(const std::exception& e) {
    return dynamic_cast<const AuthError*>(&e) || dynamic_cast<const BudgetExceededError*>(&e) ||
           dynamic_cast<const ConfigError*>(&e);
}

void check_examples(PipelineContext& ctx, const Rubric& rubric) {
    for (std::size_t k = 0; k < rubric.criteria.size(); ++k) {
        if (!has_example_pair(rubric.criteria[k].text)) {
            warn(ctx, render_criterion_id({rubric.round, static_cast<int>(k)}) + " has no recognizable example pair");
        }
    }
}

void record_rubric(PipelineContext& ctx, const Rubric& rubric) {
    ordered_json e;
    e["event"] = "rubric";
    e["round"] = rubric.round;
    e["criteria"] = rubric.criteria.size();
    ctx.gateway.record(e);
}

std::string split_label(SplitName split, int round, int repeat) {
    if (split == SplitName::test) return "test repeat " + std::to_string(repeat);
    return "round " + std::to_string(round) + " " + std::string(to_string(split));
}

PredictionRecord base_record(const Artifact& a, std::size_t j, int round, SplitName split, int repeat) {
    PredictionRecord r;
    r.key = {a.artifact_id, j};
    r.round = round;
    r.split = split;
    r.repeat = repeat;
    r.target_quote = a.comments[j].target_quote;
    r.reference_comment = a.comments[j].reference_comment;
    r.reference_issue_type = a.comments[j].issue_type;
    return r;
}

std::vector<PredictionRecord> flatten(std::vector<std::vector<PredictionRecord>> parts) {
    std::vector<PredictionRecord> out;
    for (auto& p : parts) {
        for (auto& r : p) out.push_back(std::move(r));
    }
    return out;
}

} // namespace

Rubric learn_initial_rubric(PipelineContext& ctx, const std::vector<const Artifact*>& train, int lane) {
    std::vector<const Artifact*> cases;
    for (const Artifact* a : train) {
        if (!a->comments.empty()) cases.push_back(a);
    }
    if (cases.empty()) throw InvariantError("train split", "no artifacts with comments to learn from");
    const auto bundle = build_rubric_learning_prompt(cases, ctx.config.prompt_options);
    Rubric rubric;
    rubric.round = 0;
    rubric.criteria = ask_structured<std::vector<Criterion>>(
        ctx.gateway, make_request(ctx, bundle, lane, "learn initial rubric"), parse_inferred_rubrics);
    rubric.provenance.run_id = ctx.config.run_id;
    check_examples(ctx, rubric);
    record_rubric(ctx, rubric);
    return rubric;
}

std::vector<PredictionRecord> align_generated(PipelineContext& ctx, const Artifact& artifact,
                                              const std::vector<GeneratedComment>& comments, const Rubric* rubric,
                                              int round, SplitName split, int repeat) {
    const std::size_t n = artifact.comments.size();
    std::vector<const GeneratedComment*> slot(n, nullptr);
    for (const auto& c : comments) {
        const auto p = static_cast<std::size_t>(c.position_index);
        if (p >= n) {
            warn(ctx, artifact.artifact_id + ": ignored comment for unknown position " + std::to_string(p));
        } else if (slot[p]) {
            warn(ctx, artifact.artifact_id + ": ignored duplicate comment for position " + std::to_string(p));
        } else {
            slot[p] = &c;
        }
    }
    Rubric empty;
    empty.round = round;
    const Rubric& against = rubric ? *rubric : empty;
    std::vector<PredictionRecord> out;
    for (std::size_t j = 0; j < n; ++j) {
        PredictionRecord r = base_record(artifact, j, round, split, repeat);
        if (slot[j]) {
            r.generated_comment = slot[j]->comment;
            r.generated_issue_type = slot[j]->issue_type;
            auto resolved = resolve_cited_ids(slot[j]->violated_criteria, against);
            r.cited = std::move(resolved.valid);
            r.dropped_ids = std::move(resolved.dropped);
            if (!r.dropped_ids.empty()) {
                std::string ids;
                for (const auto& d : r.dropped_ids) ids += (ids.empty() ? "" : ", ") + d;
                warn(ctx, r.key.str() + ": dropped cited ids [" + ids + "]");
            }
        } else {
            r.generated_comment = std::string(fallback_comment);
            r.fallback = true;
            warn(ctx, r.key.str() + ": generator omitted the position; fallback comment inserted");
        }
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<PredictionRecord> failed_records(const Artifact& artifact, int round, SplitName split, int repeat,
                                             const std::string& error) {
    std::vector<PredictionRecord> out;
    for (std::size_t j = 0; j < artifact.comments.size(); ++j) {
        PredictionRecord r = base_record(artifact, j, round, split, repeat);
        r.error = "generation failed: " + error;
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<PredictionRecord> predict_round(PipelineContext& ctx, const std::vector<const Artifact*>& artifacts,
                                            SplitName split, const Rubric* rubric, int round, int repeat) {
    std::vector<std::vector<PredictionRecord>> parts(artifacts.size());
    parallel_for(artifacts.size(), ctx.gateway.options().parallelism, [&](std::size_t i) {
        const Artifact& a = *artifacts[i];
        if (a.comments.empty()) return;
        const auto bundle = build_generation_prompt(a, a.comments, rubric, ctx.config.prompt_options);
        const auto label = split_label(split, round, repeat) + " generate " + a.artifact_id;
        try {
            const auto comments = ask_structured<std::vector<GeneratedComment>>(
                ctx.gateway, make_request(ctx, bundle, repeat, label), parse_comments);
            parts[i] = align_generated(ctx, a, comments, rubric, round, split, repeat);
        } catch (const std::exception& e) {
            if (is_fatal(e)) throw;
            warn(ctx, a.artifact_id + ": generation failed: " + e.what());
            parts[i] = failed_records(a, round, split, repeat, e.what());
        }
    });
    return flatten(std::move(parts));
}

void judge_round(PipelineContext& ctx, std::vector<PredictionRecord>& records, int lane) {
    std::vector<std::string> order;
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < records.size(); ++i) {
        auto& g = groups[records[i].key.artifact_id];
        if (g.empty()) order.push_back(records[i].key.artifact_id);
        if (records[i].error.empty()) g.push_back(i);
    }
    parallel_for(order.size(), ctx.gateway.options().parallelism, [&](std::size_t gi) {
        const auto& id = order[gi];
        const auto& idx = groups.at(id);
        if (idx.empty()) return;
        const Artifact& a = ctx.corpus.at(id);
        std::vector<JudgePair> pairs;
        for (std::size_t i : idx) {
            const auto& r = records[i];
            pairs.push_back(JudgePair{a.comments.at(r.key.index), r.generated_comment, r.generated_issue_type});
        }
        const auto& first = records[idx.front()];
        const auto label = split_label(first.split, first.round, first.repeat) + " judge " + id;
        auto mark_missing = [&](const std::string& why) {
            for (std::size_t i : idx) {
                records[i].content_score.reset();
                records[i].error = why;
            }
            warn(ctx, id + ": " + why + "; " + std::to_string(idx.size()) + " scores marked missing");
        };
        try {
            const auto bundle = build_judge_prompt(a, pairs, ctx.config.prompt_options);
            const auto scores = ask_structured<std::vector<CommentScore>>(
                ctx.gateway, make_request(ctx, bundle, lane, label), parse_comment_scores);
            if (scores.size() != idx.size()) {
                mark_missing("judge alignment error: " + std::to_string(scores.size()) + " scores for " +
                             std::to_string(idx.size()) + " pairs");
                return;
            }
            for (std::size_t k = 0; k < idx.size(); ++k) {
                records[idx[k]].content_score = scores[k].content_score;
                records[idx[k]].judge_reasoning = scores[k].reasoning;
            }
        } catch (const std::exception& e) {
            if (is_fatal(e)) throw;
            mark_missing(std::string("judge failed: ") + e.what());
        }
    });
}

Rubric refine_rubric(PipelineContext& ctx, const RefinementInput& input, bool fieldwise, int lane) {
    const auto bundle = fieldwise ? build_fieldwise_refinement_prompt(input, ctx.config.prompt_options)
                                  : build_refinement_prompt(input, ctx.config.prompt_options);
    Rubric next;
    next.round = input.current.round + 1;
    next.criteria = ask_structured<std::vector<Criterion>>(
        ctx.gateway, make_request(ctx, bundle, lane, "refine round " + std::to_string(input.current.round)),
        parse_inferred_rubrics);
    next.provenance.run_id = ctx.config.run_id;
    next.provenance.parent_round = input.current.round;
    check_examples(ctx, next);
    record_rubric(ctx, next);
    return next;
}

RoundResult summarize_round(const PipelineContext& ctx, const Rubric& rubric,
                            const std::vector<PredictionRecord>& train, const std::vector<PredictionRecord>& validation) {
    RoundResult rr;
    rr.round = rubric.round;
    rr.rubric = rubric;
    const auto ts = present_scores(train);
    const auto vs = present_scores(validation);
    if (!ts.empty()) rr.train_mean = mean_content_score(ts);
    if (!vs.empty()) rr.validation_mean = mean_content_score(vs);
    rr.train_count = train.size();
    rr.validation_count = validation.size();
    rr.train_missing = missing_count(train);
    rr.validation_missing = missing_count(validation);
    rr.selectable = rr.validation_mean.has_value() &&
                    static_cast<double>(rr.validation_missing) <=
                        ctx.config.max_missing_fraction * static_cast<double>(rr.validation_count);
    std::vector<std::string> ids;
    std::map<std::string, std::vector<const PredictionRecord*>> by_artifact;
    for (const auto& r : train) {
        auto& v = by_artifact[r.key.artifact_id];
        if (v.empty()) ids.push_back(r.key.artifact_id);
        v.push_back(&r);
    }
    for (const auto& id : ids) {
        CaseScore cs;
        cs.artifact_id = id;
        std::vector<double> s;
        for (const auto* r : by_artifact[id]) {
            if (r->content_score) {
                s.push_back(*r->content_score);
            } else {
                ++cs.missing;
            }
        }
        if (!s.empty()) cs.mean = mean_content_score(s);
        rr.per_case.push_back(std::move(cs));
    }
    return rr;
}

std::optional<int> select_best_round(const std::vector<RoundResult>& rounds) {
    std::optional<int> best;
    double best_mean = 0.0;
    for (const auto& r : rounds) {
        if (!r.selectable) continue;
        if (!best || *r.validation_mean > best_mean) {
            best = r.round;
            best_mean = *r.validation_mean;
        }
    }
    return best;
}

RefinementResult run_refinement(PipelineContext& ctx, const CorpusSplit& split, const RefinementHooks& hooks,
                                const RefinementState& state, int lane) {
    const auto train = split_artifacts(ctx.corpus, split, SplitName::train);
    const auto validation = split_artifacts(ctx.corpus, split, SplitName::validation);
    if (train.empty()) throw InvariantError("train split", "is empty");
    const int last = refines(ctx.config.mode) ? ctx.config.rounds : 0;
    const bool fieldwise = ctx.config.mode == Mode::fieldwise_refine;

    std::map<int, Rubric> rubrics = state.rubrics;
    if (!rubrics.count(0)) {
        rubrics[0] = learn_initial_rubric(ctx, train, lane);
        if (hooks.on_rubric) hooks.on_rubric(rubrics[0]);
    }

    RefinementResult result;
    for (int t = 0; t <= last; ++t) {
        const Rubric& rt = rubrics.at(t);
        std::vector<PredictionRecord> tr;
        std::vector<PredictionRecord> va;
        const auto restored = state.records.find(t);
        const bool have_records = restored != state.records.end();
        if (have_records) {
            tr = restored->second.first;
            va = restored->second.second;
        } else {
            tr = predict_round(ctx, train, SplitName::train, &rt, t, lane);
            va = predict_round(ctx, validation, SplitName::validation, &rt, t, lane);
            judge_round(ctx, tr, lane);
            judge_round(ctx, va, lane);
        }
        RoundResult rr = summarize_round(ctx, rt, tr, va);
        accumulate_signals(result.signals, tr);
        if (!have_records) {
            ordered_json e;
            e["event"] = "scores";
            e["round"] = t;
            e["train_mean"] = rr.train_mean ? ordered_json(*rr.train_mean) : ordered_json(nullptr);
            e["validation_mean"] = rr.validation_mean ? ordered_json(*rr.validation_mean) : ordered_json(nullptr);
            e["train_missing"] = rr.train_missing;
            e["validation_missing"] = rr.validation_missing;
            ctx.gateway.record(e);
        }
        result.rounds.push_back(rr);

        const bool have_next = t == last || rubrics.count(t + 1);
        if (!have_next) {
            RefinementInput in;
            in.current = rt;
            for (const auto& [round, r] : rubrics) {
                if (round < t) in.prior_rubrics.push_back(r);
            }
            for (const auto& r : result.rounds) {
                in.score_history.push_back(
                    RoundScore{r.round, r.train_mean, r.validation_mean, r.train_missing, r.validation_missing});
            }
            in.artifacts = train;
            in.signals = result.signals;
            in.history_window = ctx.config.history_window;
            rubrics[t + 1] = refine_rubric(ctx, in, fieldwise, lane);
            if (hooks.on_rubric) hooks.on_rubric(rubrics[t + 1]);
        }
        if (!(have_records && have_next) && hooks.on_round) hooks.on_round(t, tr, va);
    }

    auto best = select_best_round(result.rounds);
    if (!best) {
        warn(ctx, "no round has a usable validation score; selecting round 0");
        best = 0;
    }
    result.best_val_round = *best;
    result.best = rubrics.at(*best);
    ordered_json e;
    e["event"] = "selection";
    e["best_val_round"] = *best;
    ctx.gateway.record(e);
    return result;
}

std::vector<std::string> check_signal_fidelity(const std::vector<RefinementSignal>& signals,
                                               const std::map<int, std::vector<PredictionRecord>>& records_by_round) {
    std::vector<std::string> mismatches;
    std::map<std::pair<int, InstanceKey>, const PredictionRecord*> records;
    for (const auto& [round, list] : records_by_round) {
        for (const auto& r : list) records[{round, r.key}] = &r;
    }
    std::size_t seen = 0;
    for (const auto& s : signals) {
        for (const auto& [round, entry] : s.rounds) {
            const std::string where = "round " + std::to_string(round) + " " + s.key.str();
            auto it = records.find({round, s.key});
            if (it == records.end()) {
                mismatches.push_back(where + ": no stored record");
                continue;
            }
            ++seen;
            const SignalEntry expected = signal_entry(*it->second);
            if (entry.target_quote != expected.target_quote) mismatches.push_back(where + ": target_quote");
            if (entry.reference_comment != expected.reference_comment) mismatches.push_back(where + ": reference_comment");
            if (entry.generated_comment != expected.generated_comment) mismatches.push_back(where + ": generated_comment");
            if (entry.content_score != expected.content_score) mismatches.push_back(where + ": content_score");
            if (entry.judge_reasoning != expected.judge_reasoning) mismatches.push_back(where + ": judge_reasoning");
            if (entry.cited != expected.cited) mismatches.push_back(where + ": cited");
        }
    }
    if (seen != records.size()) {
        mismatches.push_back(std::to_string(records.size() - std::min(seen, records.size())) +
                             " stored records have no signal entry");
    }
    return mismatches;
}

std::vector<PredictionRecord> run_top1_baseline(PipelineContext& ctx, const std::vector<const Artifact*>& artifacts,
                                                const RetrievalContext& retrieval,
                                                std::vector<std::vector<Neighbor>>* neighbors) {
    std::vector<std::vector<PredictionRecord>> parts(artifacts.size());
    std::vector<std::vector<std::vector<Neighbor>>> found(artifacts.size());
    parallel_for(artifacts.size(), ctx.gateway.options().parallelism, [&](std::size_t i) {
        const Artifact& a = *artifacts[i];
        try {
            found[i] = retrieve_for_artifact(ctx.gateway, a, retrieval, 1);
        } catch (const std::exception& e) {
            if (is_fatal(e)) throw;
            warn(ctx, a.artifact_id + ": retrieval failed: " + e.what());
            parts[i] = failed_records(a, 0, SplitName::test, retrieval.repeat, e.what());
            found[i].assign(a.comments.size(), {});
            return;
        }
        for (std::size_t j = 0; j < a.comments.size(); ++j) {
            PredictionRecord r = base_record(a, j, 0, SplitName::test, retrieval.repeat);
            r.generated_comment = found[i][j].front().retrieved_comment;
            parts[i].push_back(std::move(r));
        }
    });
    if (neighbors) {
        for (auto& f : found) {
            for (auto& n : f) neighbors->push_back(std::move(n));
        }
    }
    return flatten(std::move(parts));
}

std::vector<PredictionRecord> run_top3_rag_baseline(PipelineContext& ctx, const std::vector<const Artifact*>& artifacts,
                                                    const RetrievalContext& retrieval,
                                                    std::vector<std::vector<Neighbor>>* neighbors) {
    std::vector<std::vector<PredictionRecord>> parts(artifacts.size());
    std::vector<std::vector<std::vector<Neighbor>>> found(artifacts.size());
    parallel_for(artifacts.size(), ctx.gateway.options().parallelism, [&](std::size_t i) {
        const Artifact& a = *artifacts[i];
        if (a.comments.empty()) return;
        const auto label = "test repeat " + std::to_string(retrieval.repeat) + " generate " + a.artifact_id;
        try {
            std::vector<std::string> warnings;
            found[i] = retrieve_for_artifact(ctx.gateway, a, retrieval, retrieval.k, &warnings);
            for (const auto& w : warnings) warn(ctx, a.artifact_id + ": " + w);
            const auto bundle = build_rag_prompt(a, a.comments, found[i], ctx.config.prompt_options);
            const auto comments = ask_structured<std::vector<GeneratedComment>>(
                ctx.gateway, make_request(ctx, bundle, retrieval.repeat, label), parse_comments);
            parts[i] = align_generated(ctx, a, comments, nullptr, 0, SplitName::test, retrieval.repeat);
        } catch (const std::exception& e) {
            if (is_fatal(e)) throw;
            warn(ctx, a.artifact_id + ": generation failed: " + e.what());
            parts[i] = failed_records(a, 0, SplitName::test, retrieval.repeat, e.what());
            found[i].resize(a.comments.size());
        }
    });
    if (neighbors) {
        for (auto& f : found) {
            for (auto& n : f) neighbors->push_back(std::move(n));
        }
    }
    return flatten(std::move(parts));
}

std::vector<PredictionRecord> evaluate_test_repeat(PipelineContext& ctx, const std::vector<const Artifact*>& test,
                                                   const Rubric* rubric, const RetrievalContext* retrieval,
                                                   int repeat) {
    const Mode mode = ctx.config.mode;
    std::vector<PredictionRecord> records;
    if (uses_retrieval(mode)) {
        if (!retrieval || !retrieval->index) throw InvariantError("test evaluation", "retrieval mode without an index");
        RetrievalContext rc = *retrieval;
        rc.repeat = repeat;
        records = mode == Mode::top1_retrieval ? run_top1_baseline(ctx, test, rc) : run_top3_rag_baseline(ctx, test, rc);
    } else if (uses_rubric(mode)) {
        if (!rubric) throw InvariantError("test evaluation", "rubric mode without a rubric");
        records = predict_round(ctx, test, SplitName::test, rubric, rubric->round, repeat);
    } else {
        records = predict_round(ctx, test, SplitName::test, nullptr, 0, repeat);
    }
    judge_round(ctx, records, repeat);
    return records;
}

std::optional<MeanStd> summarize_repeats(const std::vector<std::optional<double>>& repeat_means) {
    std::vector<double> present;
    for (const auto& m : repeat_means) {
        if (m) present.push_back(*m);
    }
    if (present.empty()) return std::nullopt;
    return mean_and_std(present);
}

TestEvaluation evaluate_test(PipelineContext& ctx, const std::vector<const Artifact*>& test, const Rubric* rubric,
                             const RetrievalContext* retrieval, int repeats) {
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    TestEvaluation out;
    for (int r = 0; r < repeats; ++r) {
        auto records = evaluate_test_repeat(ctx, test, rubric, retrieval, r);
        const auto scores = present_scores(records);
        out.repeat_means.push_back(scores.empty() ? std::nullopt : std::optional<double>(mean_content_score(scores)));
        out.repeat_missing.push_back(missing_count(records));
        out.records.push_back(std::move(records));
    }
    out.summary = summarize_repeats(out.repeat_means);
    return out;
}

} // namespace rubriclearn
