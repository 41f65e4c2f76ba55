#pragma once

#include "rubriclearn/config.hpp"
#include "rubriclearn/mock_provider.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace rubriclearn {

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int other = 1;
inline constexpr int config = 2;
inline constexpr int provider = 3;
inline constexpr int schema = 4;
} // namespace exit_code

/// Exit status for an error escaping a run.
int exit_code_for(const std::exception& e);

struct ProviderSet {
    std::shared_ptr<Provider> default_provider;
    std::shared_ptr<Provider> embedding_provider;
    std::map<Purpose, std::shared_ptr<Provider>> by_purpose;
    // Distinct mock instances (one per script file), for resume fast-forward.
    std::vector<std::shared_ptr<MockProvider>> mocks;
};

/// Builds every configured provider. Mock providers sharing a script share one
/// instance. Throws ConfigError (missing key, unreadable script).
ProviderSet make_providers(const CliConfig& config, std::shared_ptr<const Corpus> corpus);
void install_providers(Gateway& gateway, const ProviderSet& providers);

/// Loads the corpus and its split (split file or seeded ratios).
CorpusSplit resolve_split(const CliConfig& config, const Corpus& corpus);

struct RunOutcome {
    int exit_code = exit_code::ok;
    std::string message;
    bool noop = false;
};

struct ResumeOptions {
    // Replaces the stored call budget; std::nullopt keeps it.
    std::optional<std::optional<long long>> max_calls;
};

/// Starts a run in config.output (which must not hold a run already).
/// Errors are reported through the outcome and a terminal journal record.
RunOutcome run_experiment(const CliConfig& config);

/// Continues the run in `run_dir` from its last checkpoint; a completed run
/// is a no-op.
RunOutcome resume_experiment(const std::filesystem::path& run_dir, const ResumeOptions& options = {});

/// round,split,mean,missing_count for train and validation of each round.
std::string scores_csv(const nlohmann::json& results);

} // namespace rubriclearn
