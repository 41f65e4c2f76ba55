#include "rubriclearn/config.hpp"
#include "rubriclearn/error.hpp"
#include "rubriclearn/fixtures.hpp"
#include "rubriclearn/report.hpp"
#include "rubriclearn/run.hpp"
#include "rubriclearn/text.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace fs = std::filesystem;
using namespace rubriclearn;

namespace {

struct RunArgs {
    std::string config;
    std::string resume;
    std::string mode;
    std::string output;
    std::string provider;
    int rounds = -1;
    int parallelism = 0;
    long long max_calls = -1;
    bool relearn_per_repeat = false;
};

int fail(const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
}

int cmd_run(const RunArgs& a) {
    RunOutcome outcome;
    if (!a.resume.empty()) {
        ResumeOptions opts;
        if (a.max_calls >= 0) opts.max_calls = std::optional<long long>(a.max_calls);
        outcome = resume_experiment(a.resume, opts);
    } else {
        if (a.config.empty()) throw ConfigError("run needs --config (or --resume <run-dir>)");
        CliConfig config = load_config(a.config);
        apply_env_overrides(config);
        if (!a.mode.empty()) config.run.mode = mode_from_string(a.mode);
        if (a.rounds >= 0) config.run.rounds = a.rounds;
        if (!a.output.empty()) config.output = fs::absolute(a.output);
        if (!a.provider.empty()) {
            config.provider.kind = a.provider;
            config.provider.http.kind = a.provider;
        }
        if (a.parallelism > 0) config.gateway.parallelism = a.parallelism;
        if (a.max_calls >= 0) config.gateway.max_calls = a.max_calls;
        if (a.relearn_per_repeat) config.run.relearn_per_repeat = true;
        outcome = run_experiment(config);
    }
    (outcome.exit_code == exit_code::ok ? std::cout : std::cerr)
        << (outcome.exit_code == exit_code::ok ? "" : "error: ") << outcome.message << "\n";
    return outcome.exit_code;
}

int cmd_index_build(const std::string& config_path) {
    CliConfig config = load_config(config_path);
    apply_env_overrides(config);
    config.validate();
    auto corpus = std::make_shared<const Corpus>(load_corpus(config.corpus));
    const CorpusSplit split = resolve_split(config, *corpus);
    const fs::path cache = config.cache_dir.value_or(config.output / "cache");
    fs::create_directories(cache);
    auto providers = make_providers(config, corpus);
    Gateway gateway(config.gateway, std::make_shared<Journal>(cache / "index_journal.jsonl"));
    install_providers(gateway, providers);
    const auto index = load_or_build_index(gateway, *corpus, split, config.run.embedding_dimensionality, cache);
    std::cout << "index: " << index.size() << " entries, " << index_cache_path(cache, split).string() << "\n";
    return exit_code::ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"rubriclearn: learn and refine review rubrics from inline comments"};
    app.require_subcommand(1);

    RunArgs run_args;
    auto* run = app.add_subcommand("run", "Run an experiment (learn, refine, select, test)");
    run->add_option("--config", run_args.config, "Config JSON file");
    run->add_option("--resume", run_args.resume, "Continue the run in this directory from its last checkpoint");
    run->add_option("--mode", run_args.mode,
                    "no_rubric | initial_only | fieldwise_refine | commentwise_refine | top1_retrieval | top3_rag");
    run->add_option("--rounds", run_args.rounds, "Refinement rounds (rounds 0..N are executed)");
    run->add_option("--output", run_args.output, "Run directory");
    run->add_option("--provider", run_args.provider, "mock | openai | gemini (overrides RL_PROVIDER)");
    run->add_option("--parallelism", run_args.parallelism, "Concurrent provider requests");
    run->add_option("--max-calls", run_args.max_calls, "Stop after this many provider calls");
    run->add_flag("--relearn-per-repeat", run_args.relearn_per_repeat, "Learn a fresh rubric for every test repeat");

    std::vector<std::string> report_dirs;
    std::string report_out = "report";
    auto* report = app.add_subcommand("report", "Aggregate completed runs into CSV tables");
    report->add_option("runs", report_dirs, "Run directories")->required();
    report->add_option("--out", report_out, "Output directory");

    auto* prompts = app.add_subcommand("prompts", "Prompt utilities");
    prompts->require_subcommand(1);
    std::string fixture = "mini";
    std::string prompts_out = "prompts_dump";
    auto* dump = prompts->add_subcommand("dump", "Write every assembled prompt family for a built-in fixture");
    dump->add_option("--fixture", fixture, "Fixture id (mini)");
    dump->add_option("--out", prompts_out, "Output directory");

    std::string split_corpus_path;
    std::string split_out;
    std::vector<double> ratios{0.6, 0.2, 0.2};
    std::uint64_t seed = 0;
    auto* split = app.add_subcommand("split", "Materialize a train/validation/test split file");
    split->add_option("--corpus", split_corpus_path, "Corpus JSONL")->required();
    split->add_option("--ratios", ratios, "Three ratios")->expected(3)->delimiter(',');
    split->add_option("--seed", seed, "Shuffle seed");
    split->add_option("--out", split_out, "Output file (default: stdout)");

    std::string index_config;
    auto* index = app.add_subcommand("index", "Retrieval index utilities");
    index->require_subcommand(1);
    auto* build = index->add_subcommand("build", "Embed the train split and write the index cache");
    build->add_option("--config", index_config, "Config JSON file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(run_args);
        if (*report) {
            std::vector<fs::path> dirs(report_dirs.begin(), report_dirs.end());
            for (const auto& p : write_report(build_report(dirs), report_out)) std::cout << p.string() << "\n";
            return exit_code::ok;
        }
        if (*dump) {
            for (const auto& p : dump_prompts(fixture, prompts_out)) std::cout << p.string() << "\n";
            return exit_code::ok;
        }
        if (*split) {
            const Corpus corpus = load_corpus(split_corpus_path);
            const auto s = split_corpus(corpus, {ratios.at(0), ratios.at(1), ratios.at(2)}, seed);
            const std::string json = serialize_split_json(s);
            if (split_out.empty()) {
                std::cout << json;
            } else {
                text::write_file_atomic(split_out, json);
            }
            return exit_code::ok;
        }
        if (*build) return cmd_index_build(index_config);
    } catch (const std::exception& e) {
        return fail(e);
    }
    return exit_code::other;
}
