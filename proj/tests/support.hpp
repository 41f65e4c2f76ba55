#pragma once

#include "rubriclearn/corpus.hpp"
#include "rubriclearn/gateway.hpp"
#include "rubriclearn/journal.hpp"
#include "rubriclearn/mock_provider.hpp"
#include "rubriclearn/mock_responders.hpp"
#include "rubriclearn/pipeline.hpp"
#include "rubriclearn/text.hpp"

#include <json.hpp>

#include <atomic>
#include <filesystem>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

namespace testsupport {

namespace fs = std::filesystem;
using namespace rubriclearn;

struct TempDir {
    fs::path path;

    TempDir() {
        static std::atomic<int> counter{0};
        path = fs::temp_directory_path() /
               ("rubriclearn_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    fs::path operator/(const std::string& name) const { return path / name; }
};

inline void write_text(const fs::path& p, const std::string& s) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    text::write_file_atomic(p, s);
}

inline CommentInstance comment_at(const std::string& body, const std::string& quote, const std::string& comment) {
    const auto byte = body.find(quote);
    CommentInstance c;
    c.target_quote = quote;
    c.reference_comment = comment;
    c.start = text::byte_to_codepoint(body, byte);
    c.end = *c.start + text::codepoint_length(quote);
    return c;
}

/// `n` artifacts "a00".. with `per` comments each; every quote and comment
/// is unique across the corpus.
inline std::vector<Artifact> synthetic_artifacts(int n, int per = 2) {
    std::vector<Artifact> out;
    for (int i = 0; i < n; ++i) {
        Artifact a;
        a.artifact_id = (i < 10 ? "a0" : "a") + std::to_string(i);
        std::vector<std::string> quotes;
        for (int j = 0; j < per; ++j) {
            const std::string q = "claim " + std::to_string(i) + "-" + std::to_string(j);
            quotes.push_back(q);
            a.body += "Sentence " + std::to_string(j) + " states " + q + " without support. ";
        }
        a.body += "End of artifact " + std::to_string(i) + ".";
        for (int j = 0; j < per; ++j) {
            a.comments.push_back(comment_at(a.body, quotes[j],
                                            "Support " + quotes[j] + " with evidence (artifact " + std::to_string(i) + ")."));
        }
        out.push_back(std::move(a));
    }
    return out;
}

inline std::string rubric_response(int criteria = 2) {
    nlohmann::ordered_json j;
    j["inferred_rubrics"] = nlohmann::ordered_json::array();
    for (int k = 0; k < criteria; ++k) {
        j["inferred_rubrics"].push_back({{"criterion", "Unsupported claim type " + std::to_string(k) +
                                                           ". Example: \"claim\" -> \"Support the claim.\""},
                                         {"points", -2},
                                         {"tags", {"evidence"}},
                                         {"reasoning", ""}});
    }
    return j.dump();
}

/// One script line.
inline std::string rule(const nlohmann::ordered_json& match, const std::string& key, const nlohmann::ordered_json& value,
                        const nlohmann::ordered_json& extra = nlohmann::ordered_json::object()) {
    nlohmann::ordered_json j;
    if (!match.empty()) j["match"] = match;
    j[key] = value;
    for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
    return j.dump() + "\n";
}

/// learn/refine return fixed rubrics, generation echoes references, the
/// judge scores exact matches 10.
inline std::string echo_script(int criteria = 2) {
    std::string s;
    s += rule({{"tag", "learn"}}, "text", rubric_response(criteria));
    s += rule({{"tag", "refine"}}, "text", rubric_response(criteria));
    s += rule({{"tag", "generate"}}, "responder", "echo_references");
    s += rule({{"tag", "judge"}}, "responder", "judge_exact");
    return s;
}

/// In-memory mock stack for driving pipeline functions directly.
struct MockStack {
    std::shared_ptr<const Corpus> corpus;
    std::shared_ptr<MockProvider> mock;
    std::shared_ptr<Journal> journal;
    std::unique_ptr<Gateway> gateway;

    MockStack(Corpus c, const std::string& script, int parallelism = 1) {
        corpus = std::make_shared<const Corpus>(std::move(c));
        mock = std::make_shared<MockProvider>(parse_mock_script(script));
        register_builtin_responders(*mock, corpus);
        journal = std::make_shared<Journal>();
        GatewayOptions opts;
        opts.parallelism = parallelism;
        opts.retry.base_delay_ms = 0;
        opts.retry.max_delay_ms = 0;
        gateway = std::make_unique<Gateway>(opts, journal);
        gateway->set_default_provider(mock);
        gateway->set_embedding_provider(mock);
    }

    PipelineContext context(RunConfig config = {}) { return PipelineContext{*gateway, *corpus, config}; }

    std::vector<nlohmann::json> records() const { return parse_journal_lines(journal->lines()); }
};

} // namespace testsupport
