#include "rubriclearn/config.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/text.hpp"

#include <cmath>
#include <cstdlib>
#include <set>

namespace rubriclearn {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

void check_keys(const json& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError(where + " must be an object");
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw ConfigError("unknown config key '" + (where.empty() ? key : where + "." + key) + "'");
    }
}

template <typename T>
T get(const json& j, const std::string& key, const std::string& where, T fallback) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return fallback;
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError("config key '" + (where.empty() ? key : where + "." + key) + "' has the wrong type");
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    if (p.empty()) return {};
    fs::path path(p);
    return (path.is_absolute() ? path : base / path).lexically_normal();
}

ProviderConfig parse_provider(const json& j, const std::string& where, const fs::path& base) {
    check_keys(j, where, {"kind", "script", "model", "embedding_model", "base_url", "timeout_seconds"});
    ProviderConfig p;
    p.kind = get<std::string>(j, "kind", where, "mock");
    p.script = resolve(base, get<std::string>(j, "script", where, ""));
    p.http.kind = p.kind;
    p.http.model = get<std::string>(j, "model", where, "");
    p.http.embedding_model = get<std::string>(j, "embedding_model", where, "");
    p.http.base_url = get<std::string>(j, "base_url", where, "");
    p.http.timeout_seconds = get<int>(j, "timeout_seconds", where, 600);
    return p;
}

ordered_json provider_to_json(const ProviderConfig& p) {
    ordered_json j;
    j["kind"] = p.kind;
    if (p.kind == "mock") {
        j["script"] = p.script.string();
    } else {
        j["model"] = p.http.model;
        if (!p.http.embedding_model.empty()) j["embedding_model"] = p.http.embedding_model;
        if (!p.http.base_url.empty()) j["base_url"] = p.http.base_url;
        j["timeout_seconds"] = p.http.timeout_seconds;
    }
    return j;
}

void validate_provider(const ProviderConfig& p, const std::string& where) {
    if (p.kind == "mock") {
        if (p.script.empty()) throw ConfigError(where + ": mock provider needs a script");
        return;
    }
    if (p.kind != "openai" && p.kind != "gemini") {
        throw ConfigError(where + ": unknown provider kind '" + p.kind + "' (expected mock, openai or gemini)");
    }
    if (p.http.model.empty()) throw ConfigError(where + ": " + p.kind + " provider needs a model");
    if (p.http.timeout_seconds < 1) throw ConfigError(where + ": timeout_seconds must be >= 1");
}

fs::path required_path(const json& j, const std::string& key, const std::string& where, const fs::path& base) {
    const auto p = get<std::string>(j, key, where, "");
    if (p.empty()) throw ConfigError(where + "." + key + " is required");
    return resolve(base, p);
}

} // namespace

void CliConfig::validate() const {
    if (corpus.empty()) throw ConfigError("corpus is required");
    if (output.empty()) throw ConfigError("output is required");
    run.validate();
    if (gateway.parallelism < 1 || gateway.parallelism > Gateway::max_parallelism) {
        throw ConfigError("parallelism must be between 1 and " + std::to_string(Gateway::max_parallelism));
    }
    if (gateway.retry.max_attempts < 1) throw ConfigError("retry.max_attempts must be >= 1");
    if (gateway.retry.base_delay_ms < 0 || gateway.retry.max_delay_ms < 0) throw ConfigError("retry delays must be >= 0");
    if (gateway.max_calls && *gateway.max_calls < 0) throw ConfigError("max_calls must be >= 0");
    if (!split_file) {
        double sum = 0.0;
        for (double r : ratios) {
            if (r < 0.0) throw ConfigError("split ratios must be non-negative");
            sum += r;
        }
        if (std::fabs(sum - 1.0) > 1e-9) throw ConfigError("split ratios must sum to 1");
    }
    validate_provider(provider, "provider");
    for (const auto& [purpose, p] : purpose_providers) validate_provider(p, "providers." + std::string(to_string(purpose)));
    if (embedding_provider) validate_provider(*embedding_provider, "embedding_provider");
    if (agreement) {
        if (!uses_rubric(run.mode)) throw ConfigError("agreement needs a rubric-learning mode");
        if (agreement->reference_rubric.empty()) throw ConfigError("agreement.reference_rubric is required");
    }
    if (revision) {
        if (revision->reference_rubric.empty()) throw ConfigError("revision.reference_rubric is required");
        if (revision->rounds < 1) throw ConfigError("revision.rounds must be >= 1");
        if (revision->conditions.empty()) throw ConfigError("revision.conditions must not be empty");
        for (auto c : revision->conditions) {
            if (c != RevisionCondition::no_rubric && !uses_rubric(run.mode)) {
                throw ConfigError(std::string("revision condition ") + std::string(to_string(c)) +
                                  " needs a rubric-learning mode");
            }
        }
    }
}

CliConfig parse_config(const json& j, const fs::path& base_dir) {
    check_keys(j, "",
               {"corpus", "corpus_kind", "task", "split_file", "split", "mode", "rounds", "history_window", "repeats",
                "relearn_per_repeat", "temperature", "reasoning_effort", "max_output_tokens", "artifact_char_cap",
                "run_id", "output", "parallelism", "max_calls", "retry", "provider", "providers",
                "embedding_provider", "retrieval", "max_missing_fraction", "agreement", "revision"});
    CliConfig c;
    c.corpus = resolve(base_dir, get<std::string>(j, "corpus", "", ""));
    c.task = get<std::string>(j, "task", "", c.corpus.stem().string());
    if (j.contains("split_file") && j.contains("split")) {
        throw ConfigError("split_file and split (ratios/seed) are mutually exclusive");
    }
    if (j.contains("split_file")) c.split_file = resolve(base_dir, get<std::string>(j, "split_file", "", ""));
    if (auto s = j.find("split"); s != j.end()) {
        check_keys(*s, "split", {"ratios", "seed"});
        auto ratios = get<std::vector<double>>(*s, "ratios", "split", {0.6, 0.2, 0.2});
        if (ratios.size() != 3) throw ConfigError("split.ratios must have three entries");
        c.ratios = {ratios[0], ratios[1], ratios[2]};
        c.seed = get<std::uint64_t>(*s, "seed", "split", 0);
    }
    try {
        c.run.mode = mode_from_string(get<std::string>(j, "mode", "", "commentwise_refine"));
        c.run.reasoning_effort = reasoning_effort_from_string(get<std::string>(j, "reasoning_effort", "", "low"));
        c.run.corpus_kind = dataset_kind_from_string(get<std::string>(j, "corpus_kind", "", "standard"));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(e.what());
    }
    c.run.rounds = get<int>(j, "rounds", "", 10);
    c.run.history_window = get<int>(j, "history_window", "", 3);
    c.run.repeats = get<int>(j, "repeats", "", 5);
    c.run.relearn_per_repeat = get<bool>(j, "relearn_per_repeat", "", false);
    c.run.temperature = get<double>(j, "temperature", "", 1.0);
    c.run.max_output_tokens = get<int>(j, "max_output_tokens", "", 32768);
    if (j.contains("artifact_char_cap") && !j["artifact_char_cap"].is_null()) {
        const auto cap = get<long long>(j, "artifact_char_cap", "", 0);
        if (cap < 1) throw ConfigError("artifact_char_cap must be positive");
        c.run.prompt_options.artifact_char_cap = static_cast<std::size_t>(cap);
    }
    c.run.run_id = get<std::string>(j, "run_id", "", "run");
    c.run.max_missing_fraction = get<double>(j, "max_missing_fraction", "", 0.2);
    c.output = resolve(base_dir, get<std::string>(j, "output", "", ""));
    c.gateway.parallelism = get<int>(j, "parallelism", "", 4);
    if (j.contains("max_calls") && !j["max_calls"].is_null()) c.gateway.max_calls = get<long long>(j, "max_calls", "", 0);
    if (auto r = j.find("retry"); r != j.end()) {
        check_keys(*r, "retry", {"max_attempts", "base_delay_ms", "max_delay_ms"});
        c.gateway.retry.max_attempts = get<int>(*r, "max_attempts", "retry", 4);
        c.gateway.retry.base_delay_ms = get<int>(*r, "base_delay_ms", "retry", 500);
        c.gateway.retry.max_delay_ms = get<int>(*r, "max_delay_ms", "retry", 20000);
    }
    if (auto p = j.find("provider"); p != j.end()) c.provider = parse_provider(*p, "provider", base_dir);
    if (auto ps = j.find("providers"); ps != j.end()) {
        if (!ps->is_object()) throw ConfigError("providers must be an object keyed by purpose");
        for (const auto& [name, pj] : ps->items()) {
            Purpose purpose;
            try {
                purpose = purpose_from_string(name);
            } catch (const std::exception&) {
                throw ConfigError("providers: unknown purpose '" + name + "'");
            }
            c.purpose_providers[purpose] = parse_provider(pj, "providers." + name, base_dir);
        }
    }
    if (auto e = j.find("embedding_provider"); e != j.end()) {
        c.embedding_provider = parse_provider(*e, "embedding_provider", base_dir);
    }
    if (auto r = j.find("retrieval"); r != j.end()) {
        check_keys(*r, "retrieval", {"k", "dimensionality", "cache_dir"});
        c.run.retrieval_k = get<int>(*r, "k", "retrieval", 3);
        c.run.embedding_dimensionality = get<int>(*r, "dimensionality", "retrieval", 3072);
        const auto dir = get<std::string>(*r, "cache_dir", "retrieval", "");
        if (!dir.empty()) c.cache_dir = resolve(base_dir, dir);
    }
    if (auto a = j.find("agreement"); a != j.end()) {
        check_keys(*a, "agreement", {"reference_rubric"});
        c.agreement = AgreementConfig{required_path(*a, "reference_rubric", "agreement", base_dir)};
    }
    if (auto r = j.find("revision"); r != j.end()) {
        check_keys(*r, "revision", {"reference_rubric", "rounds", "conditions"});
        RevisionConfig rc;
        rc.reference_rubric = required_path(*r, "reference_rubric", "revision", base_dir);
        rc.rounds = get<int>(*r, "rounds", "revision", 3);
        if (r->contains("conditions")) {
            rc.conditions.clear();
            for (const auto& name : get<std::vector<std::string>>(*r, "conditions", "revision", {})) {
                rc.conditions.push_back(revision_condition_from_string(name));
            }
        }
        c.revision = rc;
    }
    return c;
}

CliConfig load_config(const fs::path& path) {
    std::string contents;
    try {
        contents = text::read_file(path);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("cannot read config: ") + e.what());
    }
    json j = json::parse(contents, nullptr, false);
    if (j.is_discarded()) throw ConfigError("config " + path.string() + " is not valid JSON");
    return parse_config(j, fs::absolute(path).parent_path());
}

void apply_env_overrides(CliConfig& config) {
    if (const char* p = std::getenv("RL_PROVIDER"); p && *p) {
        config.provider.kind = p;
        config.provider.http.kind = p;
    }
    if (const char* p = std::getenv("RL_PARALLELISM"); p && *p) {
        try {
            std::size_t used = 0;
            const int n = std::stoi(p, &used);
            if (used != std::string(p).size()) throw std::invalid_argument("trailing characters");
            config.gateway.parallelism = n;
        } catch (const std::exception&) {
            throw ConfigError(std::string("RL_PARALLELISM must be an integer, got '") + p + "'");
        }
    }
}

ordered_json config_to_json(const CliConfig& c) {
    ordered_json j;
    j["corpus"] = c.corpus.string();
    j["corpus_kind"] = std::string(to_string(c.run.corpus_kind));
    j["task"] = c.task;
    if (c.split_file) {
        j["split_file"] = c.split_file->string();
    } else {
        j["split"] = {{"ratios", c.ratios}, {"seed", c.seed}};
    }
    j["mode"] = std::string(to_string(c.run.mode));
    j["rounds"] = c.run.rounds;
    j["history_window"] = c.run.history_window;
    j["repeats"] = c.run.repeats;
    j["relearn_per_repeat"] = c.run.relearn_per_repeat;
    j["temperature"] = c.run.temperature;
    j["reasoning_effort"] = std::string(to_string(c.run.reasoning_effort));
    j["max_output_tokens"] = c.run.max_output_tokens;
    j["artifact_char_cap"] = c.run.prompt_options.artifact_char_cap
                                 ? ordered_json(*c.run.prompt_options.artifact_char_cap)
                                 : ordered_json(nullptr);
    j["run_id"] = c.run.run_id;
    j["max_missing_fraction"] = c.run.max_missing_fraction;
    j["output"] = c.output.string();
    j["parallelism"] = c.gateway.parallelism;
    j["max_calls"] = c.gateway.max_calls ? ordered_json(*c.gateway.max_calls) : ordered_json(nullptr);
    j["retry"] = {{"max_attempts", c.gateway.retry.max_attempts},
                  {"base_delay_ms", c.gateway.retry.base_delay_ms},
                  {"max_delay_ms", c.gateway.retry.max_delay_ms}};
    j["provider"] = provider_to_json(c.provider);
    if (!c.purpose_providers.empty()) {
        ordered_json ps = ordered_json::object();
        for (const auto& [purpose, p] : c.purpose_providers) ps[std::string(to_string(purpose))] = provider_to_json(p);
        j["providers"] = ps;
    }
    if (c.embedding_provider) j["embedding_provider"] = provider_to_json(*c.embedding_provider);
    ordered_json r;
    r["k"] = c.run.retrieval_k;
    r["dimensionality"] = c.run.embedding_dimensionality;
    if (c.cache_dir) r["cache_dir"] = c.cache_dir->string();
    j["retrieval"] = r;
    if (c.agreement) j["agreement"] = {{"reference_rubric", c.agreement->reference_rubric.string()}};
    if (c.revision) {
        ordered_json rv;
        rv["reference_rubric"] = c.revision->reference_rubric.string();
        rv["rounds"] = c.revision->rounds;
        rv["conditions"] = ordered_json::array();
        for (auto cond : c.revision->conditions) rv["conditions"].push_back(std::string(to_string(cond)));
        j["revision"] = rv;
    }
    return j;
}

} // namespace rubriclearn
