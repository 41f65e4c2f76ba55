#include "rubriclearn/rubric.hpp"

#include "rubriclearn/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <regex>

namespace rubriclearn {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

std::string render_criterion_id(const CriterionRef& ref) {
    return "R" + std::to_string(ref.round) + "." + std::to_string(ref.index);
}

namespace {

std::optional<int> parse_uint(std::string_view s) {
    if (s.empty() || s.size() > 9) return std::nullopt;
    int value = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc() || ptr != s.data() + s.size() || value < 0) return std::nullopt;
    if (s.size() > 1 && s.front() == '0') return std::nullopt;
    return value;
}

} // namespace

std::optional<CriterionRef> parse_criterion_id(std::string_view id) {
    if (id.size() < 4 || id.front() != 'R') return std::nullopt;
    const auto dot = id.find('.');
    if (dot == std::string_view::npos) return std::nullopt;
    auto round = parse_uint(id.substr(1, dot - 1));
    auto index = parse_uint(id.substr(dot + 1));
    if (!round || !index) return std::nullopt;
    return CriterionRef{*round, *index};
}

void validate_criterion(const Criterion& c, const std::string& path) {
    if (c.text.empty()) throw SchemaError(path + ".criterion", "criterion text is empty");
    if (c.points == 0) throw SchemaError(path + ".points", "points must be non-zero");
    if (c.points < -10 || c.points > 10) {
        throw OutOfRangeError(path + ".points", "points " + std::to_string(c.points) + " outside [-10, 10]");
    }
}

bool has_example_pair(std::string_view criterion_text) {
    std::string lower(criterion_text);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char ch) { return static_cast<char>(std::tolower(ch)); });
    if (lower.find("example pair") != std::string::npos) return true;
    if (lower.find("example") != std::string::npos &&
        (lower.find("target") != std::string::npos || lower.find("quote") != std::string::npos)) {
        return true;
    }
    if (lower.find("target:") != std::string::npos && lower.find("comment:") != std::string::npos) return true;
    // "quoted text" -> comment
    static const std::regex arrow(R"re((?:"|“)[^"]+(?:"|”)\s*(?:->|=>|→))re");
    return std::regex_search(lower, arrow);
}

ResolvedCitations resolve_cited_ids(const std::vector<std::string>& raw_ids, const Rubric& rubric) {
    ResolvedCitations out;
    const int size = static_cast<int>(rubric.criteria.size());
    for (const auto& raw : raw_ids) {
        std::optional<int> index;
        std::string_view s = raw;
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
        if (auto ref = parse_criterion_id(s)) {
            if (ref->round == rubric.round) index = ref->index;
        } else {
            index = parse_uint(s);
        }
        if (!index || *index >= size) {
            out.dropped.push_back(raw);
            continue;
        }
        const CriterionRef ref{rubric.round, *index};
        if (std::find(out.valid.begin(), out.valid.end(), ref) == out.valid.end()) out.valid.push_back(ref);
    }
    return out;
}

std::string serialize_rubric(const Rubric& rubric) {
    ordered_json j;
    j["round"] = rubric.round;
    auto criteria = ordered_json::array();
    for (const auto& c : rubric.criteria) {
        ordered_json cj;
        cj["criterion"] = c.text;
        cj["points"] = c.points;
        cj["tags"] = c.tags;
        cj["reasoning"] = c.reasoning;
        criteria.push_back(std::move(cj));
    }
    j["criteria"] = std::move(criteria);
    ordered_json prov;
    prov["run_id"] = rubric.provenance.run_id;
    prov["parent_round"] = rubric.provenance.parent_round ? ordered_json(*rubric.provenance.parent_round)
                                                          : ordered_json(nullptr);
    j["provenance"] = std::move(prov);
    return j.dump(2) + "\n";
}

Rubric deserialize_rubric(std::string_view json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw SchemaError("", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError("", "rubric must be a JSON object");
    Rubric r;
    auto round = j.find("round");
    if (round == j.end() || !round->is_number_integer() || round->get<long long>() < 0) {
        throw SchemaError("round", "must be a non-negative integer");
    }
    r.round = round->get<int>();
    auto criteria = j.find("criteria");
    if (criteria == j.end() || !criteria->is_array()) throw SchemaError("criteria", "must be an array");
    for (std::size_t k = 0; k < criteria->size(); ++k) {
        const auto& cj = (*criteria)[k];
        const std::string path = "criteria[" + std::to_string(k) + "]";
        if (!cj.is_object()) throw SchemaError(path, "must be an object");
        Criterion c;
        auto text = cj.find("criterion");
        if (text == cj.end() || !text->is_string()) throw SchemaError(path + ".criterion", "must be a string");
        c.text = text->get<std::string>();
        auto points = cj.find("points");
        if (points == cj.end() || !points->is_number_integer()) throw SchemaError(path + ".points", "must be an integer");
        const auto p = points->get<long long>();
        c.points = static_cast<int>(std::clamp<long long>(p, -1000, 1000));
        if (auto tags = cj.find("tags"); tags != cj.end()) {
            if (!tags->is_array()) throw SchemaError(path + ".tags", "must be an array of strings");
            for (std::size_t t = 0; t < tags->size(); ++t) {
                if (!(*tags)[t].is_string()) {
                    throw SchemaError(path + ".tags[" + std::to_string(t) + "]", "must be a string");
                }
                c.tags.push_back((*tags)[t].get<std::string>());
            }
        }
        if (auto reasoning = cj.find("reasoning"); reasoning != cj.end() && !reasoning->is_null()) {
            if (!reasoning->is_string()) throw SchemaError(path + ".reasoning", "must be a string");
            c.reasoning = reasoning->get<std::string>();
        }
        validate_criterion(c, path);
        r.criteria.push_back(std::move(c));
    }
    if (auto prov = j.find("provenance"); prov != j.end() && prov->is_object()) {
        if (auto run = prov->find("run_id"); run != prov->end() && run->is_string()) {
            r.provenance.run_id = run->get<std::string>();
        }
        if (auto parent = prov->find("parent_round"); parent != prov->end() && parent->is_number_integer()) {
            r.provenance.parent_round = parent->get<int>();
        }
    }
    return r;
}

} // namespace rubriclearn
