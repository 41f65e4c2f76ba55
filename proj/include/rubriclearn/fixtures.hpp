#pragma once

#include "rubriclearn/corpus.hpp"
#include "rubriclearn/rubric.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace rubriclearn {

/// Small hand-written corpus with rubrics for two rounds; drives the
/// prompt snapshot dump.
struct PromptFixture {
    Corpus corpus;
    Rubric round0;
    Rubric round1;
    std::vector<Criterion> reference;
};

std::vector<std::string> fixture_ids();
/// Throws ConfigError for an unknown id.
PromptFixture load_fixture(const std::string& id);

/// One text per prompt family, keyed by file name ("learn.txt", ...).
std::map<std::string, std::string> render_prompt_families(const PromptFixture& fixture);

/// Writes render_prompt_families into `out_dir`; returns the written paths.
std::vector<std::filesystem::path> dump_prompts(const std::string& fixture_id, const std::filesystem::path& out_dir);

} // namespace rubriclearn
