#include <doctest.h>

#include "support.hpp"

#include "rubriclearn/config.hpp"
#include "rubriclearn/error.hpp"
#include "rubriclearn/http_providers.hpp"
#include "rubriclearn/report.hpp"
#include "rubriclearn/run.hpp"

#include <httplib.h>

#include <cstdlib>
#include <thread>

using namespace rubriclearn;
using namespace testsupport;
using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

struct Workspace {
    TempDir dir;
    fs::path corpus;
    fs::path script;

    explicit Workspace(int n = 8, const std::string& script_text = echo_script()) {
        corpus = dir / "corpus.jsonl";
        write_text(corpus, serialize_corpus_jsonl(Corpus(synthetic_artifacts(n))));
        script = dir / "script.jsonl";
        write_text(script, script_text);
    }

    ordered_json config(const std::string& out, const std::string& mode = "commentwise_refine") const {
        ordered_json c;
        c["corpus"] = corpus.string();
        c["task"] = "synthetic";
        c["mode"] = mode;
        c["rounds"] = 2;
        c["repeats"] = 2;
        c["parallelism"] = 1;
        c["split"] = {{"ratios", {0.5, 0.25, 0.25}}, {"seed", 11}};
        c["provider"] = {{"kind", "mock"}, {"script", script.string()}};
        c["output"] = (dir / out).string();
        return c;
    }

    CliConfig load(const ordered_json& c) const {
        const fs::path p = dir / "config.json";
        write_text(p, c.dump(2));
        return load_config(p);
    }
};

std::string run_file(const fs::path& run, const std::string& name) { return text::read_file(run / name); }

} // namespace

TEST_CASE("config parsing") {
    Workspace ws;
    const auto cfg = ws.load(ws.config("run"));
    CHECK(cfg.run.rounds == 2);
    CHECK(cfg.task == "synthetic");
    CHECK(cfg.provider.kind == "mock");
    CHECK(cfg.ratios[0] == 0.5);

    auto bad = ws.config("run");
    bad["roundz"] = 3;
    CHECK_THROWS_WITH_AS(ws.load(bad), doctest::Contains("roundz"), ConfigError);
    bad = ws.config("run");
    bad["split"]["ratios"] = {0.5, 0.5, 0.5};
    CHECK_THROWS_AS(ws.load(bad).validate(), ConfigError);
    bad = ws.config("run");
    bad["history_window"] = 5;
    CHECK_THROWS_AS(ws.load(bad).validate(), ConfigError);
    bad = ws.config("run");
    bad["provider"] = {{"kind", "openai"}};
    CHECK_THROWS_AS(ws.load(bad).validate(), ConfigError);

    // Relative paths resolve against the config's directory.
    json rel = ws.config("run");
    rel["corpus"] = "corpus.jsonl";
    const auto r = parse_config(rel, ws.dir.path);
    CHECK(r.corpus == ws.corpus);

    const auto again = parse_config(json::parse(config_to_json(cfg).dump()), ws.dir.path);
    CHECK(config_to_json(again) == config_to_json(cfg));
}

TEST_CASE("environment overrides") {
    Workspace ws;
    auto cfg = ws.load(ws.config("run"));
    ::setenv("RL_PARALLELISM", "3", 1);
    apply_env_overrides(cfg);
    ::unsetenv("RL_PARALLELISM");
    CHECK(cfg.gateway.parallelism == 3);
    ::setenv("RL_PARALLELISM", "zero", 1);
    CHECK_THROWS_AS(apply_env_overrides(cfg), ConfigError);
    ::unsetenv("RL_PARALLELISM");
}

TEST_CASE("exit codes") {
    CHECK(exit_code_for(ConfigError("x")) == 2);
    CHECK(exit_code_for(ParseError(3, "x")) == 2);
    CHECK(exit_code_for(SchemaError("p", "x")) == 4);
    CHECK(exit_code_for(NoJsonFoundError("x")) == 4);
    CHECK(exit_code_for(ExhaustedRetriesError(4, "x")) == 3);
    CHECK(exit_code_for(AuthError("x")) == 3);
    CHECK(exit_code_for(BudgetExceededError("x")) == 3);
    CHECK(exit_code_for(InvariantError("s", "x")) == 1);
    CHECK(exit_code_for(std::runtime_error("x")) == 1);
}

TEST_CASE("run directory layout and refusal to overwrite") {
    Workspace ws;
    const auto cfg = ws.load(ws.config("run"));
    const auto outcome = run_experiment(cfg);
    REQUIRE_MESSAGE(outcome.exit_code == 0, outcome.message);
    const fs::path run = ws.dir / "run";
    for (const char* f : {"run.json", "split.json", "journal.jsonl", "results.json", "report/scores.csv",
                          "rubrics/round_0.json", "rubrics/round_2.json", "records/round_1_train.jsonl",
                          "records/round_1_validation.jsonl", "records/test_0.jsonl", "records/test_1.jsonl"}) {
        CHECK_MESSAGE(fs::exists(run / f), f);
    }
    const auto journal = read_journal(run / "journal.jsonl");
    CHECK(journal.front()["event"] == "run_start");
    CHECK(journal.back()["event"] == "run_end");
    CHECK(journal.back()["status"] == "ok");
    const std::string scores = run_file(run, "report/scores.csv");
    CHECK(scores.rfind("round,split,mean,missing_count\n", 0) == 0);
    CHECK(scores.find("0,train,10.0000,0") != std::string::npos);
    CHECK(run_file(run, "run.json").find("api_key") == std::string::npos);

    const auto again = run_experiment(cfg);
    CHECK(again.exit_code == exit_code::config);
}

TEST_CASE("budget stop then resume matches an uninterrupted run") {
    Workspace ws;
    const auto full = run_experiment(ws.load(ws.config("full")));
    REQUIRE(full.exit_code == 0);

    auto limited = ws.config("partial");
    limited["max_calls"] = 13;
    const auto stopped = run_experiment(ws.load(limited));
    CHECK(stopped.exit_code == exit_code::provider);
    const fs::path partial = ws.dir / "partial";
    CHECK(read_journal(partial / "journal.jsonl").back()["event"] == "run_end");
    CHECK_FALSE(fs::exists(partial / "results.json"));

    ResumeOptions opts;
    opts.max_calls = std::optional<long long>{};
    const auto resumed = resume_experiment(partial, opts);
    REQUIRE_MESSAGE(resumed.exit_code == 0, resumed.message);

    const fs::path fullp = ws.dir / "full";
    CHECK(run_file(partial, "results.json") == run_file(fullp, "results.json"));
    CHECK(run_file(partial, "report/scores.csv") == run_file(fullp, "report/scores.csv"));
    for (const char* f : {"rubrics/round_0.json", "rubrics/round_1.json", "rubrics/round_2.json",
                          "records/test_0.jsonl", "records/test_1.jsonl", "records/round_2_validation.jsonl"}) {
        CHECK_MESSAGE(run_file(partial, f) == run_file(fullp, f), f);
    }
    CHECK(audit_journal(read_journal(partial / "journal.jsonl")).complete());

    const auto noop = resume_experiment(partial);
    CHECK(noop.exit_code == 0);
    CHECK(noop.noop);
}

TEST_CASE("resume refuses a changed corpus") {
    Workspace ws;
    auto limited = ws.config("partial");
    limited["max_calls"] = 5;
    CHECK(run_experiment(ws.load(limited)).exit_code == exit_code::provider);
    write_text(ws.corpus, serialize_corpus_jsonl(Corpus(synthetic_artifacts(9))));
    CHECK(resume_experiment(ws.dir / "partial").exit_code != 0);
}

TEST_CASE("schema failures surface as exit code 4") {
    std::string script = rule({{"tag", "learn"}}, "text", "no json in this reply");
    Workspace ws(6, script);
    const auto outcome = run_experiment(ws.load(ws.config("run")));
    CHECK(outcome.exit_code == exit_code::schema);
    const auto journal = read_journal(ws.dir / "run" / "journal.jsonl");
    CHECK(journal.back()["event"] == "run_end");
    CHECK(journal.back()["exit_code"] == 4);
}

TEST_CASE("report aggregates runs and rejects conflicts") {
    Workspace ws;
    REQUIRE(run_experiment(ws.load(ws.config("refine"))).exit_code == 0);
    REQUIRE(run_experiment(ws.load(ws.config("norubric", "no_rubric"))).exit_code == 0);
    const auto files = build_report({ws.dir / "refine", ws.dir / "norubric"});
    REQUIRE(files.count("ablation.csv") == 1);
    REQUIRE(files.count("curve.csv") == 1);
    const std::string ablation = files.at("ablation.csv");
    CHECK(ablation.rfind("mode,synthetic\n", 0) == 0);
    CHECK(ablation.find("no_rubric,10.00 \xC2\xB1 0.00") != std::string::npos);
    CHECK(ablation.find("commentwise_refine,10.00 \xC2\xB1 0.00") != std::string::npos);
    CHECK(files.at("curve.csv").find("synthetic,commentwise_refine,2,validation,10.0000,0") != std::string::npos);

    CHECK_THROWS_AS(build_report({ws.dir / "refine", ws.dir / "refine"}), ConfigError);
    CHECK_THROWS_AS(build_report({ws.dir / "missing"}), ConfigError);

    const auto written = write_report(files, ws.dir / "report");
    CHECK(written.size() == files.size());
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
}

TEST_CASE("agreement and revision stages write their tables") {
    // Satisfaction requests are judge-tagged, so their rule must precede the
    // pairwise judge rule.
    std::string script = rule({{"tag", "judge"}, {"label_contains", "satisfaction"}}, "responder", "satisfy_count",
                              {{"params", {{"count", 1}}}});
    script += echo_script();
    script += rule({{"tag", "agree"}}, "text", R"({"recall_score":4,"precision_score":4,"reasoning":""})");
    script += rule({{"tag", "revise"}}, "responder", "identity_revision");
    Workspace ws(8, script);
    write_text(ws.dir / "reference.json", R"(["Item one", "Item two"])");
    auto c = ws.config("run");
    c["agreement"] = {{"reference_rubric", (ws.dir / "reference.json").string()}};
    c["revision"] = {{"reference_rubric", (ws.dir / "reference.json").string()}, {"rounds", 1}};
    const auto outcome = run_experiment(ws.load(c));
    REQUIRE_MESSAGE(outcome.exit_code == 0, outcome.message);
    const std::string agreement = run_file(ws.dir / "run", "report/agreement.csv");
    CHECK(agreement.find("synthetic,initial,0,4,4,4.0000") != std::string::npos);
    const std::string revision = run_file(ws.dir / "run", "report/revision.csv");
    CHECK(revision.find("synthetic,no_rubric,0,") != std::string::npos);
    CHECK(revision.find(",1,1,0,0\n") != std::string::npos);
    const auto files = build_report({ws.dir / "run"});
    CHECK(files.count("agreement.csv") == 1);
    CHECK(files.count("revision.csv") == 1);
}

TEST_CASE("http providers speak the OpenAI and Gemini wire formats") {
    httplib::Server server;
    json last_chat;
    server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        last_chat = json::parse(req.body);
        if (req.get_header_value("Authorization") != "Bearer k1") {
            res.status = 401;
            return;
        }
        if (last_chat["messages"][1]["content"] == "busy") {
            res.status = 429;
            return;
        }
        res.set_content(R"({"choices":[{"message":{"content":"hello"},"finish_reason":"stop"}],)"
                        R"("usage":{"prompt_tokens":3,"completion_tokens":2}})",
                        "application/json");
    });
    server.Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(R"({"data":[{"embedding":[0.5,0.25]}]})", "application/json");
    });
    server.Post(R"(/gem/models/(.+))", [&](const httplib::Request& req, httplib::Response& res) {
        if (req.get_header_value("x-goog-api-key") != "k2") {
            res.status = 403;
            return;
        }
        if (req.path.find(":embedContent") != std::string::npos) {
            res.set_content(R"({"embedding":{"values":[1,2,3]}})", "application/json");
        } else {
            res.set_content(R"({"candidates":[{"content":{"parts":[{"text":"gem"}]}}]})", "application/json");
        }
    });
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    const std::string base = "http://127.0.0.1:" + std::to_string(port);

    ChatRequest req;
    req.system_text = "sys";
    req.user_text = "hi";

    HttpProviderConfig oc;
    oc.kind = "openai";
    oc.base_url = base + "/v1";
    oc.model = "m";
    oc.api_key = "k1";
    oc.timeout_seconds = 5;
    auto openai = make_http_provider(oc);
    const auto reply = openai->complete(req);
    CHECK(reply.raw_text == "hello");
    CHECK(reply.usage.input_tokens == 3);
    CHECK(last_chat["model"] == "m");
    CHECK(last_chat["messages"][0]["role"] == "system");
    CHECK(openai->embed(EmbeddingRequest{"x", 2, 0, ""}) == std::vector<double>{0.5, 0.25});
    req.user_text = "busy";
    CHECK_THROWS_AS(openai->complete(req), TransportError);
    oc.api_key = "wrong";
    CHECK_THROWS_AS(make_http_provider(oc)->complete(req), AuthError);

    HttpProviderConfig gc;
    gc.kind = "gemini";
    gc.base_url = base + "/gem";
    gc.model = "g";
    gc.api_key = "k2";
    gc.timeout_seconds = 5;
    auto gemini = make_http_provider(gc);
    req.user_text = "hi";
    CHECK(gemini->complete(req).raw_text == "gem");
    CHECK(gemini->embed(EmbeddingRequest{"x", 3, 0, ""}).size() == 3);

    CHECK_THROWS_AS(throw_for_status(500, ""), TransportError);
    CHECK_THROWS_AS(throw_for_status(400, "content_policy violation"), PolicyError);
    CHECK_THROWS_AS(throw_for_status(404, ""), ProviderError);
    HttpProviderConfig nokey = oc;
    nokey.api_key.clear();
    ::unsetenv("OPENAI_API_KEY");
    CHECK_THROWS_AS(make_http_provider(nokey), ConfigError);

    server.stop();
    t.join();
}

TEST_CASE("cli subcommands") {
    Workspace ws;
    const std::string bin = RL_CLI_PATH;
    const std::string out = (ws.dir / "prompts").string();
    CHECK(std::system((bin + " prompts dump --fixture mini --out " + out + " > /dev/null").c_str()) == 0);
    CHECK(fs::exists(ws.dir / "prompts" / "generate.txt"));
    CHECK(WEXITSTATUS(std::system((bin + " prompts dump --fixture nope --out " + out + " 2> /dev/null").c_str())) == 2);

    const std::string split = (ws.dir / "split.json").string();
    CHECK(std::system((bin + " split --corpus " + ws.corpus.string() + " --ratios 0.5,0.25,0.25 --seed 11 --out " +
                       split)
                          .c_str()) == 0);
    const Corpus corpus = load_corpus(ws.corpus);
    CHECK(load_split_file(split, corpus).train == split_corpus(corpus, {0.5, 0.25, 0.25}, 11).train);

    const auto cfg_path = ws.dir / "cli.json";
    write_text(cfg_path, ws.config("clirun").dump(2));
    CHECK(std::system((bin + " run --config " + cfg_path.string() + " --rounds 1 --mode initial_only > /dev/null")
                          .c_str()) == 0);
    const json results = json::parse(run_file(ws.dir / "clirun", "results.json"));
    CHECK(results["rounds"].size() == 1);
    CHECK(std::system((bin + " run --resume " + (ws.dir / "clirun").string() + " > /dev/null").c_str()) == 0);
    CHECK(WEXITSTATUS(std::system((bin + " run 2> /dev/null").c_str())) == 2);
}
