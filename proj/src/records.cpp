#include "rubriclearn/records.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/text.hpp"

#include <algorithm>

namespace rubriclearn {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

SignalEntry signal_entry(const PredictionRecord& r) {
    return SignalEntry{r.target_quote, r.reference_comment, r.generated_comment,
                       r.content_score, r.judge_reasoning,  r.cited};
}

void accumulate_signals(std::vector<RefinementSignal>& signals, const std::vector<PredictionRecord>& records) {
    for (const auto& r : records) {
        auto it = std::lower_bound(signals.begin(), signals.end(), r.key,
                                   [](const RefinementSignal& s, const InstanceKey& k) { return s.key < k; });
        if (it == signals.end() || it->key != r.key) it = signals.insert(it, RefinementSignal{r.key, {}});
        it->rounds[r.round] = signal_entry(r);
    }
}

namespace {

ordered_json optional_string(const std::optional<std::string>& s) { return s ? ordered_json(*s) : ordered_json(nullptr); }

std::optional<std::string> read_optional_string(const json& j, const char* key) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) return std::nullopt;
    return it->get<std::string>();
}

} // namespace

ordered_json record_to_json(const PredictionRecord& r) {
    ordered_json j;
    j["artifact_id"] = r.key.artifact_id;
    j["index"] = r.key.index;
    j["round"] = r.round;
    j["split"] = to_string(r.split);
    j["repeat"] = r.repeat;
    j["target_quote"] = r.target_quote;
    j["reference_comment"] = r.reference_comment;
    j["reference_issue_type"] = optional_string(r.reference_issue_type);
    j["generated_comment"] = r.generated_comment;
    j["generated_issue_type"] = optional_string(r.generated_issue_type);
    auto cited = ordered_json::array();
    for (const auto& c : r.cited) cited.push_back(render_criterion_id(c));
    j["cited"] = std::move(cited);
    j["dropped_ids"] = r.dropped_ids;
    j["fallback"] = r.fallback;
    j["content_score"] = r.content_score ? ordered_json(*r.content_score) : ordered_json(nullptr);
    j["judge_reasoning"] = r.judge_reasoning;
    j["error"] = r.error;
    return j;
}

PredictionRecord record_from_json(const json& j) {
    try {
        PredictionRecord r;
        r.key.artifact_id = j.at("artifact_id").get<std::string>();
        r.key.index = j.at("index").get<std::size_t>();
        r.round = j.at("round").get<int>();
        r.split = split_from_string(j.at("split").get<std::string>());
        r.repeat = j.value("repeat", 0);
        r.target_quote = j.at("target_quote").get<std::string>();
        r.reference_comment = j.at("reference_comment").get<std::string>();
        r.reference_issue_type = read_optional_string(j, "reference_issue_type");
        r.generated_comment = j.at("generated_comment").get<std::string>();
        r.generated_issue_type = read_optional_string(j, "generated_issue_type");
        for (const auto& id : j.at("cited")) {
            auto ref = parse_criterion_id(id.get<std::string>());
            if (!ref) throw SchemaError("cited", "invalid criterion id " + id.dump());
            r.cited.push_back(*ref);
        }
        r.dropped_ids = j.value("dropped_ids", std::vector<std::string>{});
        r.fallback = j.value("fallback", false);
        if (auto it = j.find("content_score"); it != j.end() && !it->is_null()) r.content_score = it->get<int>();
        r.judge_reasoning = j.value("judge_reasoning", "");
        r.error = j.value("error", "");
        return r;
    } catch (const json::exception& e) {
        throw SchemaError("record", e.what());
    }
}

std::string serialize_records(const std::vector<PredictionRecord>& records) {
    std::string out;
    for (const auto& r : records) out += record_to_json(r).dump(-1, ' ', false, json::error_handler_t::replace) + "\n";
    return out;
}

std::vector<PredictionRecord> load_records(const std::filesystem::path& path) {
    std::vector<PredictionRecord> out;
    std::size_t row = 0;
    for (const auto& line : text::split_lines(text::read_file(path))) {
        ++row;
        if (text::trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError(row, "records: invalid JSON in " + path.string());
        out.push_back(record_from_json(j));
    }
    return out;
}

std::vector<double> present_scores(const std::vector<PredictionRecord>& records) {
    std::vector<double> out;
    for (const auto& r : records) {
        if (r.content_score) out.push_back(*r.content_score);
    }
    return out;
}

std::size_t missing_count(const std::vector<PredictionRecord>& records) {
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [](const PredictionRecord& r) { return !r.content_score; }));
}

} // namespace rubriclearn
