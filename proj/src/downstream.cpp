#include "rubriclearn/downstream.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/text.hpp"

#include <json.hpp>

namespace rubriclearn {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

double h_mean(double recall, double precision) {
    const double sum = recall + precision;
    return sum > 0.0 ? 2.0 * recall * precision / sum : 0.0;
}

AgreementResult score_rubric_agreement(PipelineContext& ctx, const std::vector<Criterion>& learned,
                                       const std::vector<Criterion>& reference, int lane, const std::string& label) {
    const auto bundle = build_agreement_prompt(reference, learned);
    const auto scores = ask_structured<AgreementScores>(ctx.gateway, make_request(ctx, bundle, lane, label),
                                                        parse_agreement);
    AgreementResult out;
    out.recall = scores.recall;
    out.precision = scores.precision;
    out.h_mean = h_mean(scores.recall, scores.precision);
    out.reasoning = scores.reasoning;
    return out;
}

std::vector<LocalizedItem> localize_rubric(PipelineContext& ctx, const std::vector<Criterion>& global,
                                           const std::string& prompt_text, int lane) {
    const auto bundle = build_localization_prompt(global, prompt_text);
    const auto items = ask_structured<std::vector<LocalizedItem>>(
        ctx.gateway, make_request(ctx, bundle, lane, "localize"), parse_localized_items);
    std::vector<LocalizedItem> kept;
    for (const auto& item : items) {
        if (item.source_index < 0 || static_cast<std::size_t>(item.source_index) >= global.size()) {
            warn(ctx, "localized item dropped: source_index " + std::to_string(item.source_index) +
                          " outside the global rubric (" + std::to_string(global.size()) + " items)");
            continue;
        }
        kept.push_back(item);
    }
    if (kept.empty()) throw InvariantError("localization", "no localized item has a valid source_index");
    return kept;
}

int count_satisfied_items(PipelineContext& ctx, const std::string& artifact_text, const std::vector<Criterion>& items,
                          int lane, const std::string& label) {
    const auto bundle = build_satisfaction_prompt(artifact_text, items, ctx.config.prompt_options);
    const std::function<std::vector<Verdict>(const json&)> parse = [&](const json& j) {
        auto verdicts = parse_verdicts(j);
        if (verdicts.size() != items.size()) {
            throw SchemaError("verdicts", "expected " + std::to_string(items.size()) + " verdicts, got " +
                                              std::to_string(verdicts.size()));
        }
        for (std::size_t k = 0; k < verdicts.size(); ++k) {
            if (verdicts[k].item_index != static_cast<int>(k)) {
                throw SchemaError("verdicts[" + std::to_string(k) + "].item_index",
                                  "expected " + std::to_string(k) + ", got " + std::to_string(verdicts[k].item_index));
            }
        }
        return verdicts;
    };
    const auto verdicts = ask_structured(ctx.gateway, make_request(ctx, bundle, lane, label), parse);
    int count = 0;
    ordered_json e;
    e["event"] = "verdicts";
    e["label"] = label;
    e["satisfied"] = ordered_json::array();
    for (const auto& v : verdicts) {
        count += v.satisfied ? 1 : 0;
        e["satisfied"].push_back(v.satisfied);
    }
    e["count"] = count;
    ctx.gateway.record(e);
    return count;
}

std::vector<Criterion> parse_reference_rubric(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("reference rubric: ") + e.what());
    }
    std::vector<Criterion> out;
    if (j.is_array()) {
        for (std::size_t k = 0; k < j.size(); ++k) {
            if (!j[k].is_string() || j[k].get<std::string>().empty()) {
                throw SchemaError("[" + std::to_string(k) + "]", "reference items must be non-empty strings");
            }
            out.push_back(Criterion{j[k].get<std::string>(), 1, {}, ""});
        }
    } else if (j.is_object() && j.contains("inferred_rubrics")) {
        out = parse_inferred_rubrics(j);
    } else {
        out = deserialize_rubric(json_text).criteria;
    }
    if (out.empty()) throw SchemaError("", "reference rubric is empty");
    return out;
}

std::vector<Criterion> load_reference_rubric(const std::filesystem::path& path) {
    return parse_reference_rubric(text::read_file(path));
}

std::string_view to_string(RevisionCondition condition) {
    switch (condition) {
    case RevisionCondition::no_rubric: return "no_rubric";
    case RevisionCondition::initial: return "initial";
    case RevisionCondition::best_val: return "best_val";
    }
    return "?";
}

RevisionCondition revision_condition_from_string(std::string_view name) {
    for (auto c : {RevisionCondition::no_rubric, RevisionCondition::initial, RevisionCondition::best_val}) {
        if (to_string(c) == name) return c;
    }
    throw ConfigError("unknown revision condition '" + std::string(name) + "'");
}

std::optional<int> RevisionTrace::delta() const {
    if (failed || !before || !after) return std::nullopt;
    return *after - *before;
}

namespace {

bool is_fatal(const std::exception& e) {
    return dynamic_cast<const AuthError*>(&e) || dynamic_cast<const BudgetExceededError*>(&e) ||
           dynamic_cast<const ConfigError*>(&e);
}

std::string revise_once(PipelineContext& ctx, const Artifact& artifact, const std::string& current,
                        const RevisionArm& arm, int round, int rounds, int repeat) {
    const std::vector<Criterion>* rubric = arm.rubric ? &*arm.rubric : nullptr;
    const auto bundle = build_revision_prompt(current, artifact.prompt, rubric, round, rounds, ctx.config.prompt_options);
    const std::string label = "revise " + std::string(to_string(arm.condition)) + " round " + std::to_string(round) +
                              " " + artifact.artifact_id;
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto text = ctx.gateway.chat(make_request(ctx, bundle, repeat, label)).raw_text;
        if (!text::trim(text).empty()) return text;
        warn(ctx, label + ": empty revision");
    }
    throw SchemaError("revision", "empty revision after one retry");
}

} // namespace

RevisionExperiment run_revision_experiment(PipelineContext& ctx, const std::vector<const Artifact*>& artifacts,
                                           const std::vector<Criterion>& reference,
                                           const std::vector<RevisionArm>& arms, int rounds, int repeats) {
    if (reference.empty()) throw InvariantError("revision experiment", "reference rubric is empty");
    if (rounds < 1) throw ConfigError("revision rounds must be >= 1");
    if (repeats < 1) throw ConfigError("repeats must be >= 1");
    for (const auto& arm : arms) {
        if (arm.condition != RevisionCondition::no_rubric && (!arm.rubric || arm.rubric->empty())) {
            throw InvariantError("revision experiment",
                                 std::string(to_string(arm.condition)) + " condition needs a rubric");
        }
    }

    const std::size_t cells = artifacts.size() * arms.size();
    std::vector<RevisionTrace> traces(static_cast<std::size_t>(repeats) * cells);
    for (int r = 0; r < repeats; ++r) {
        std::vector<std::optional<int>> before(artifacts.size());
        std::vector<std::string> before_error(artifacts.size());
        parallel_for(artifacts.size(), ctx.gateway.options().parallelism, [&](std::size_t i) {
            try {
                before[i] = count_satisfied_items(ctx, artifacts[i]->body, reference, r,
                                                  "satisfaction before " + artifacts[i]->artifact_id);
            } catch (const std::exception& e) {
                if (is_fatal(e)) throw;
                before_error[i] = e.what();
                warn(ctx, artifacts[i]->artifact_id + ": before score failed: " + e.what());
            }
        });
        parallel_for(cells, ctx.gateway.options().parallelism, [&](std::size_t c) {
            const std::size_t i = c / arms.size();
            const RevisionArm& arm = arms[c % arms.size()];
            const Artifact& a = *artifacts[i];
            RevisionTrace& t = traces[static_cast<std::size_t>(r) * cells + c];
            t.artifact_id = a.artifact_id;
            t.condition = arm.condition;
            t.repeat = r;
            t.before = before[i];
            if (!before[i]) {
                t.failed = true;
                t.error = "before score failed: " + before_error[i];
                return;
            }
            try {
                std::string current = a.body;
                for (int round = 1; round <= rounds; ++round) {
                    current = revise_once(ctx, a, current, arm, round, rounds, r);
                    t.revisions.push_back(current);
                }
                t.after = count_satisfied_items(ctx, current, reference, r,
                                                "satisfaction after " + std::string(to_string(arm.condition)) + " " +
                                                    a.artifact_id);
            } catch (const std::exception& e) {
                if (is_fatal(e)) throw;
                t.failed = true;
                t.error = e.what();
                warn(ctx, a.artifact_id + ": " + std::string(to_string(arm.condition)) + " revision failed: " + e.what());
            }
        });
    }

    RevisionExperiment out;
    out.traces = std::move(traces);
    for (std::size_t k = 0; k < arms.size(); ++k) {
        RevisionSummary s;
        s.condition = arms[k].condition;
        std::vector<std::optional<double>> per_repeat;
        for (int r = 0; r < repeats; ++r) {
            double sum = 0.0;
            std::size_t n = 0;
            for (std::size_t i = 0; i < artifacts.size(); ++i) {
                const auto& t = out.traces[static_cast<std::size_t>(r) * cells + i * arms.size() + k];
                if (auto d = t.delta()) {
                    sum += *d;
                    ++n;
                } else {
                    ++s.failed;
                }
            }
            per_repeat.push_back(n ? std::optional<double>(sum / static_cast<double>(n)) : std::nullopt);
        }
        s.delta = summarize_repeats(per_repeat);
        out.summaries.push_back(s);
    }
    return out;
}

std::string agreement_csv(const std::vector<AgreementRow>& rows) {
    std::string out = "task,rubric_kind,repeat,recall,precision,h_mean\n";
    for (const auto& r : rows) {
        out += r.task + "," + r.rubric_kind + "," + std::to_string(r.repeat) + "," + std::to_string(r.result.recall) +
               "," + std::to_string(r.result.precision) + "," + text::fixed(r.result.h_mean, 4) + "\n";
    }
    return out;
}

std::string revision_csv(const std::string& task, const std::vector<RevisionTrace>& traces) {
    std::string out = "task,condition,repeat,artifact_id,before,after,delta,failed\n";
    auto opt = [](const std::optional<int>& v) { return v ? std::to_string(*v) : std::string(); };
    for (const auto& t : traces) {
        out += task + "," + std::string(to_string(t.condition)) + "," + std::to_string(t.repeat) + "," + t.artifact_id +
               "," + opt(t.before) + "," + opt(t.after) + "," + opt(t.delta()) + "," + (t.failed ? "1" : "0") + "\n";
    }
    return out;
}

} // namespace rubriclearn
