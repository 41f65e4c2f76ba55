#include "rubriclearn/run.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/mock_responders.hpp"
#include "rubriclearn/text.hpp"

#include <iostream>
#include <set>

namespace rubriclearn {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ParseError*>(&e)) return exit_code::config;
    if (dynamic_cast<const SchemaError*>(&e)) return exit_code::schema;
    if (dynamic_cast<const ExhaustedRetriesError*>(&e) || dynamic_cast<const AuthError*>(&e) ||
        dynamic_cast<const PolicyError*>(&e) || dynamic_cast<const ProviderError*>(&e) ||
        dynamic_cast<const BudgetExceededError*>(&e) || dynamic_cast<const TransportError*>(&e) ||
        dynamic_cast<const EmbeddingError*>(&e)) {
        return exit_code::provider;
    }
    return exit_code::other;
}

ProviderSet make_providers(const CliConfig& config, std::shared_ptr<const Corpus> corpus) {
    ProviderSet set;
    std::map<fs::path, std::shared_ptr<MockProvider>> mocks;
    auto build = [&](const ProviderConfig& p) -> std::shared_ptr<Provider> {
        if (p.kind != "mock") return make_http_provider(p.http);
        if (auto it = mocks.find(p.script); it != mocks.end()) return it->second;
        std::vector<MockRule> rules;
        try {
            rules = load_mock_script(p.script);
        } catch (const ParseError& e) {
            throw ConfigError("mock script " + p.script.string() + ": " + e.what());
        } catch (const std::exception& e) {
            throw ConfigError("cannot load mock script " + p.script.string() + ": " + e.what());
        }
        auto mock = std::make_shared<MockProvider>(std::move(rules));
        register_builtin_responders(*mock, corpus);
        mocks[p.script] = mock;
        set.mocks.push_back(mock);
        return mock;
    };
    set.default_provider = build(config.provider);
    for (const auto& [purpose, p] : config.purpose_providers) set.by_purpose[purpose] = build(p);
    set.embedding_provider = config.embedding_provider ? build(*config.embedding_provider) : set.default_provider;
    return set;
}

void install_providers(Gateway& gateway, const ProviderSet& providers) {
    gateway.set_default_provider(providers.default_provider);
    for (const auto& [purpose, p] : providers.by_purpose) gateway.set_provider(purpose, p);
    gateway.set_embedding_provider(providers.embedding_provider);
}

CorpusSplit resolve_split(const CliConfig& config, const Corpus& corpus) {
    if (config.split_file) return load_split_file(*config.split_file, corpus);
    return split_corpus(corpus, config.ratios, config.seed);
}

namespace {

ordered_json opt_json(const std::optional<double>& v) { return v ? ordered_json(*v) : ordered_json(nullptr); }

ordered_json round_to_json(const RoundResult& r) {
    ordered_json j;
    j["round"] = r.round;
    j["criteria"] = r.rubric.criteria.size();
    j["train_mean"] = opt_json(r.train_mean);
    j["validation_mean"] = opt_json(r.validation_mean);
    j["train_count"] = r.train_count;
    j["validation_count"] = r.validation_count;
    j["train_missing"] = r.train_missing;
    j["validation_missing"] = r.validation_missing;
    j["selectable"] = r.selectable;
    j["per_case"] = ordered_json::array();
    for (const auto& c : r.per_case) {
        j["per_case"].push_back({{"artifact_id", c.artifact_id}, {"mean", opt_json(c.mean)}, {"missing", c.missing}});
    }
    return j;
}

ordered_json mean_std_json(const std::optional<MeanStd>& m, bool signed_format = false) {
    if (!m) return nullptr;
    ordered_json j;
    j["mean"] = m->mean;
    j["std"] = m->std;
    j["formatted"] = signed_format ? format_signed_mean_std(*m) : format_mean_std(*m);
    return j;
}

struct Checkpoints {
    std::set<int> rubric0; // lanes
    std::set<std::pair<int, int>> rounds; // (lane, round)
    bool index = false;
    std::set<int> tests;
    bool agreement = false;
    bool revision = false;
};

Checkpoints read_checkpoints(const std::vector<json>& records) {
    Checkpoints c;
    for (const auto& r : records) {
        if (r.value("event", "") != "checkpoint") continue;
        const std::string stage = r.value("stage", "");
        if (stage == "rubric") c.rubric0.insert(r.value("lane", 0));
        if (stage == "round") c.rounds.insert({r.value("lane", 0), r.value("round", 0)});
        if (stage == "index") c.index = true;
        if (stage == "test") c.tests.insert(r.value("repeat", 0));
        if (stage == "agreement") c.agreement = true;
        if (stage == "revision") c.revision = true;
    }
    return c;
}

long long max_call_number(const std::vector<json>& records) {
    long long n = 0;
    for (const auto& r : records) {
        auto it = r.find("call");
        if (it == r.end() || !it->is_string()) continue;
        const auto id = it->get<std::string>();
        if (id.size() > 1 && id[0] == 'c') n = std::max(n, std::stoll(id.substr(1)));
    }
    return n;
}

class RunDriver {
public:
    RunDriver(CliConfig config, fs::path dir) : config_(std::move(config)), dir_(std::move(dir)) {}

    RunOutcome start() {
        prepare();
        if (fs::exists(dir_) && !fs::is_empty(dir_)) {
            throw ConfigError("output directory " + dir_.string() + " is not empty; use --resume to continue a run");
        }
        fs::create_directories(dir_);
        ordered_json run;
        run["config"] = config_to_json(config_);
        run["corpus_hash"] = corpus_->hash();
        run["split_hash"] = split_.hash();
        text::write_file_atomic(dir_ / "run.json", run.dump(2) + "\n");
        text::write_file_atomic(dir_ / "split.json", serialize_split_json(split_));
        return execute({});
    }

    RunOutcome resume(const json& run_json) {
        prepare();
        if (run_json.value("corpus_hash", "") != corpus_->hash()) {
            throw ConfigError("corpus changed since the run started");
        }
        if (run_json.value("split_hash", "") != split_.hash()) throw ConfigError("split changed since the run started");
        auto kept = truncate_journal_to_checkpoint(dir_ / "journal.jsonl", dir_ / "journal.aborted.jsonl");
        return execute(std::move(kept));
    }

private:
    void prepare() {
        config_.validate();
        corpus_ = std::make_shared<const Corpus>(load_corpus(config_.corpus));
        split_ = resolve_split(config_, *corpus_);
        providers_ = make_providers(config_, corpus_);
        if (config_.agreement) reference_agreement_ = load_reference_rubric(config_.agreement->reference_rubric);
        if (config_.revision) reference_revision_ = load_reference_rubric(config_.revision->reference_rubric);
    }

    fs::path lane_dir(const std::string& kind, int lane) const {
        return lane == 0 ? dir_ / kind : dir_ / kind / ("repeat_" + std::to_string(lane));
    }
    fs::path rubric_path(int lane, int round) const {
        return lane_dir("rubrics", lane) / ("round_" + std::to_string(round) + ".json");
    }
    fs::path records_path(int lane, int round, SplitName split) const {
        return lane_dir("records", lane) /
               ("round_" + std::to_string(round) + "_" + std::string(to_string(split)) + ".jsonl");
    }
    fs::path test_path(int repeat) const { return dir_ / "records" / ("test_" + std::to_string(repeat) + ".jsonl"); }

    void write(const fs::path& path, const std::string& contents) {
        fs::create_directories(path.parent_path());
        text::write_file_atomic(path, contents);
    }

    void checkpoint(Gateway& gateway, ordered_json fields) {
        ordered_json e;
        e["event"] = "checkpoint";
        for (auto it = fields.begin(); it != fields.end(); ++it) e[it.key()] = it.value();
        gateway.record(e);
    }

    RefinementState restore_lane(const Checkpoints& cps, int lane, int last) {
        RefinementState state;
        auto load_rubric = [&](int t) {
            state.rubrics[t] = deserialize_rubric(text::read_file(rubric_path(lane, t)));
        };
        if (cps.rubric0.count(lane)) load_rubric(0);
        for (const auto& [l, t] : cps.rounds) {
            if (l != lane) continue;
            if (!state.rubrics.count(t)) load_rubric(t);
            if (t < last) load_rubric(t + 1);
            state.records[t] = {load_records(records_path(lane, t, SplitName::train)),
                                load_records(records_path(lane, t, SplitName::validation))};
        }
        return state;
    }

    RunOutcome execute(std::vector<json> kept) {
        const std::uint64_t next_seq = kept.empty() ? 1 : kept.back().value("seq", std::uint64_t{0}) + 1;
        auto journal = std::make_shared<Journal>(dir_ / "journal.jsonl", next_seq);
        Gateway gateway(config_.gateway, journal);
        install_providers(gateway, providers_);
        gateway.set_call_counter(max_call_number(kept));
        for (const auto& mock : providers_.mocks) mock->fast_forward(kept);
        PipelineContext ctx{gateway, *corpus_, config_.run};
        try {
            body(ctx, gateway, read_checkpoints(kept), kept.empty());
        } catch (const std::exception& e) {
            const int code = exit_code_for(e);
            ordered_json end;
            end["event"] = "run_end";
            end["status"] = "error";
            end["exit_code"] = code;
            end["error"] = e.what();
            gateway.record(end);
            return {code, e.what(), false};
        }
        return {exit_code::ok, "run complete: " + dir_.string(), false};
    }

    void body(PipelineContext& ctx, Gateway& gateway, const Checkpoints& cps, bool fresh) {
        const RunConfig& rc = config_.run;
        if (fresh) {
            ordered_json e;
            e["event"] = "run_start";
            e["run_id"] = rc.run_id;
            e["mode"] = std::string(to_string(rc.mode));
            e["task"] = config_.task;
            e["corpus_hash"] = corpus_->hash();
            e["split_hash"] = split_.hash();
            gateway.record(e);
        }

        ordered_json results;
        results["complete"] = false;
        results["run_id"] = rc.run_id;
        results["task"] = config_.task;
        results["mode"] = std::string(to_string(rc.mode));
        results["corpus_hash"] = corpus_->hash();
        results["split_hash"] = split_.hash();

        std::vector<RefinementResult> lanes;
        if (uses_rubric(rc.mode)) {
            const int count = rc.relearn_per_repeat ? rc.repeats : 1;
            const int last = refines(rc.mode) ? rc.rounds : 0;
            for (int lane = 0; lane < count; ++lane) {
                RefinementHooks hooks;
                hooks.on_rubric = [&, lane](const Rubric& r) {
                    write(rubric_path(lane, r.round), serialize_rubric(r));
                    if (r.round == 0) checkpoint(gateway, {{"stage", "rubric"}, {"lane", lane}, {"round", 0}});
                };
                hooks.on_round = [&, lane](int t, const std::vector<PredictionRecord>& tr,
                                           const std::vector<PredictionRecord>& va) {
                    write(records_path(lane, t, SplitName::train), serialize_records(tr));
                    write(records_path(lane, t, SplitName::validation), serialize_records(va));
                    checkpoint(gateway, {{"stage", "round"}, {"lane", lane}, {"round", t}});
                };
                lanes.push_back(run_refinement(ctx, split_, hooks, restore_lane(cps, lane, last), lane));
            }
            results["rounds"] = ordered_json::array();
            for (const auto& r : lanes.front().rounds) results["rounds"].push_back(round_to_json(r));
            results["best_val_round"] = lanes.front().best_val_round;
            if (lanes.size() > 1) {
                results["lanes"] = ordered_json::array();
                for (std::size_t l = 0; l < lanes.size(); ++l) {
                    ordered_json lj;
                    lj["repeat"] = l;
                    lj["best_val_round"] = lanes[l].best_val_round;
                    lj["rounds"] = ordered_json::array();
                    for (const auto& r : lanes[l].rounds) lj["rounds"].push_back(round_to_json(r));
                    results["lanes"].push_back(lj);
                }
            }
        } else {
            results["rounds"] = ordered_json::array();
            results["best_val_round"] = nullptr;
        }

        std::optional<EmbeddingIndex> index;
        RetrievalContext retrieval;
        if (uses_retrieval(rc.mode)) {
            const fs::path cache = config_.cache_dir.value_or(dir_ / "cache");
            fs::create_directories(cache);
            index = load_or_build_index(gateway, *corpus_, split_, rc.embedding_dimensionality, cache);
            if (!cps.index) checkpoint(gateway, {{"stage", "index"}});
            retrieval.index = &*index;
            retrieval.kind = rc.corpus_kind;
            retrieval.k = rc.retrieval_k;
        }

        const auto test = split_artifacts(*corpus_, split_, SplitName::test);
        TestEvaluation eval;
        for (int r = 0; r < rc.repeats; ++r) {
            std::vector<PredictionRecord> records;
            if (cps.tests.count(r)) {
                records = load_records(test_path(r));
            } else {
                const Rubric* rubric = lanes.empty() ? nullptr : &lanes[rc.relearn_per_repeat ? r : 0].best;
                records = evaluate_test_repeat(ctx, test, rubric, index ? &retrieval : nullptr, r);
                write(test_path(r), serialize_records(records));
                checkpoint(gateway, {{"stage", "test"}, {"repeat", r}});
            }
            const auto scores = present_scores(records);
            eval.repeat_means.push_back(scores.empty() ? std::nullopt
                                                       : std::optional<double>(mean_content_score(scores)));
            eval.repeat_missing.push_back(missing_count(records));
        }
        eval.summary = summarize_repeats(eval.repeat_means);
        ordered_json tj;
        tj["repeat_means"] = ordered_json::array();
        for (const auto& m : eval.repeat_means) tj["repeat_means"].push_back(opt_json(m));
        tj["repeat_missing"] = eval.repeat_missing;
        tj["summary"] = mean_std_json(eval.summary);
        results["test"] = tj;

        if (config_.agreement) results["agreement"] = agreement(ctx, gateway, cps, lanes);
        if (config_.revision) results["revision"] = revision(ctx, gateway, cps, lanes, test);

        write(dir_ / "report" / "scores.csv", scores_csv(results));
        ordered_json end;
        end["event"] = "run_end";
        end["status"] = "ok";
        gateway.record(end);
        results["complete"] = true;
        write(dir_ / "results.json", results.dump(2) + "\n");
    }

    ordered_json agreement(PipelineContext& ctx, Gateway& gateway, const Checkpoints& cps,
                           const std::vector<RefinementResult>& lanes) {
        const fs::path store = dir_ / "agreement.json";
        std::vector<AgreementRow> rows;
        if (cps.agreement) {
            for (const auto& j : json::parse(text::read_file(store))) {
                AgreementRow row;
                row.task = config_.task;
                row.rubric_kind = j.at("rubric_kind").get<std::string>();
                row.repeat = j.at("repeat").get<int>();
                row.result.recall = j.at("recall").get<int>();
                row.result.precision = j.at("precision").get<int>();
                row.result.h_mean = j.at("h_mean").get<double>();
                row.result.reasoning = j.value("reasoning", "");
                rows.push_back(std::move(row));
            }
        } else {
            for (int r = 0; r < config_.run.repeats; ++r) {
                const auto& lane = lanes.at(config_.run.relearn_per_repeat ? r : 0);
                const std::vector<std::pair<std::string, const Rubric*>> kinds{{"initial", &lane.rounds.front().rubric},
                                                                               {"best_val", &lane.best}};
                for (const auto& [kind, rubric] : kinds) {
                    const auto label = "agreement " + kind + " repeat " + std::to_string(r);
                    rows.push_back({config_.task, kind, r,
                                    score_rubric_agreement(ctx, rubric->criteria, reference_agreement_, r, label)});
                }
            }
            ordered_json stored = ordered_json::array();
            for (const auto& row : rows) {
                stored.push_back({{"rubric_kind", row.rubric_kind},
                                  {"repeat", row.repeat},
                                  {"recall", row.result.recall},
                                  {"precision", row.result.precision},
                                  {"h_mean", row.result.h_mean},
                                  {"reasoning", row.result.reasoning}});
            }
            write(store, stored.dump(2) + "\n");
            checkpoint(gateway, {{"stage", "agreement"}});
        }
        write(dir_ / "report" / "agreement.csv", agreement_csv(rows));
        ordered_json out;
        for (const std::string kind : {"initial", "best_val"}) {
            std::vector<double> h;
            for (const auto& row : rows) {
                if (row.rubric_kind == kind) h.push_back(row.result.h_mean);
            }
            out[kind] = h.empty() ? ordered_json(nullptr) : mean_std_json(mean_and_std(h));
        }
        return out;
    }

    ordered_json revision(PipelineContext& ctx, Gateway& gateway, const Checkpoints& cps,
                          const std::vector<RefinementResult>& lanes, const std::vector<const Artifact*>& test) {
        const fs::path store = dir_ / "revision.json";
        ordered_json stored;
        if (cps.revision) {
            stored = ordered_json::parse(text::read_file(store));
        } else {
            std::vector<RevisionArm> arms;
            for (auto c : config_.revision->conditions) {
                RevisionArm arm{c, std::nullopt};
                if (c == RevisionCondition::initial) arm.rubric = lanes.front().rounds.front().rubric.criteria;
                if (c == RevisionCondition::best_val) arm.rubric = lanes.front().best.criteria;
                arms.push_back(std::move(arm));
            }
            const auto exp = run_revision_experiment(ctx, test, reference_revision_, arms, config_.revision->rounds,
                                                     config_.run.repeats);
            stored["csv"] = revision_csv(config_.task, exp.traces);
            stored["summaries"] = ordered_json::array();
            for (const auto& s : exp.summaries) {
                ordered_json sj;
                sj["condition"] = std::string(to_string(s.condition));
                sj["delta"] = mean_std_json(s.delta, true);
                sj["failed"] = s.failed;
                stored["summaries"].push_back(sj);
            }
            write(store, stored.dump(2) + "\n");
            checkpoint(gateway, {{"stage", "revision"}});
        }
        write(dir_ / "report" / "revision.csv", stored.at("csv").get<std::string>());
        return stored.at("summaries");
    }

    CliConfig config_;
    fs::path dir_;
    std::shared_ptr<const Corpus> corpus_;
    CorpusSplit split_;
    ProviderSet providers_;
    std::vector<Criterion> reference_agreement_;
    std::vector<Criterion> reference_revision_;
};

} // namespace

RunOutcome run_experiment(const CliConfig& config) {
    try {
        RunDriver driver(config, config.output);
        return driver.start();
    } catch (const std::exception& e) {
        return {exit_code_for(e), e.what(), false};
    }
}

RunOutcome resume_experiment(const fs::path& run_dir, const ResumeOptions& options) {
    try {
        const fs::path run_file = run_dir / "run.json";
        if (!fs::exists(run_file)) throw ConfigError(run_dir.string() + " has no run.json");
        const fs::path results = run_dir / "results.json";
        if (fs::exists(results)) {
            const json r = json::parse(text::read_file(results), nullptr, false);
            if (!r.is_discarded() && r.value("complete", false)) {
                return {exit_code::ok, "run already complete: " + run_dir.string(), true};
            }
        }
        const json run = json::parse(text::read_file(run_file), nullptr, false);
        if (run.is_discarded() || !run.contains("config")) throw ConfigError("run.json is malformed");
        CliConfig config = parse_config(run.at("config"), run_dir);
        config.output = run_dir;
        if (options.max_calls) config.gateway.max_calls = *options.max_calls;
        RunDriver driver(std::move(config), run_dir);
        return driver.resume(run);
    } catch (const std::exception& e) {
        return {exit_code_for(e), e.what(), false};
    }
}

std::string scores_csv(const json& results) {
    std::string out = "round,split,mean,missing_count\n";
    for (const auto& r : results.value("rounds", json::array())) {
        for (const char* split : {"train", "validation"}) {
            const auto& mean = r.at(std::string(split) + "_mean");
            out += std::to_string(r.at("round").get<int>()) + "," + split + "," +
                   (mean.is_null() ? std::string() : text::fixed(mean.get<double>(), 4)) + "," +
                   std::to_string(r.at(std::string(split) + "_missing").get<std::size_t>()) + "\n";
        }
    }
    return out;
}

} // namespace rubriclearn
