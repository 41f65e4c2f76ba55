#pragma once

#include "rubriclearn/downstream.hpp"
#include "rubriclearn/gateway.hpp"
#include "rubriclearn/http_providers.hpp"
#include "rubriclearn/pipeline.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rubriclearn {

/// "mock" reads rules from `script`; other kinds are HTTP providers.
struct ProviderConfig {
    std::string kind = "mock";
    std::filesystem::path script;
    HttpProviderConfig http;
};

struct AgreementConfig {
    std::filesystem::path reference_rubric;
};

struct RevisionConfig {
    std::filesystem::path reference_rubric;
    int rounds = 3;
    std::vector<RevisionCondition> conditions{RevisionCondition::no_rubric, RevisionCondition::initial,
                                              RevisionCondition::best_val};
};

struct CliConfig {
    std::filesystem::path corpus;
    std::string task; // report column; defaults to the corpus file stem
    std::optional<std::filesystem::path> split_file;
    std::array<double, 3> ratios{0.6, 0.2, 0.2};
    std::uint64_t seed = 0;
    RunConfig run;
    GatewayOptions gateway;
    ProviderConfig provider;
    std::map<Purpose, ProviderConfig> purpose_providers;
    std::optional<ProviderConfig> embedding_provider;
    std::optional<std::filesystem::path> cache_dir; // default: <output>/cache
    std::optional<AgreementConfig> agreement;
    std::optional<RevisionConfig> revision;
    std::filesystem::path output;

    /// Throws ConfigError.
    void validate() const;
};

/// Parses a config document. Relative paths resolve against `base_dir`.
/// Throws ConfigError naming the offending key.
CliConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
CliConfig load_config(const std::filesystem::path& path);

/// RL_PROVIDER and RL_PARALLELISM.
void apply_env_overrides(CliConfig& config);

/// Canonical JSON with absolute paths (run.json). parse_config round-trips it.
nlohmann::ordered_json config_to_json(const CliConfig& config);

} // namespace rubriclearn
