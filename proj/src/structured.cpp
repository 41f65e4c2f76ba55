#include "rubriclearn/structured.hpp"

#include <algorithm>
#include <cmath>

namespace rubriclearn {

using json = nlohmann::json;

const std::string_view json_reminder =
    "\n\nRespond ONLY with a JSON object in the requested format. Do not add any text before or after it.";

std::string_view to_string(SchemaId schema) {
    switch (schema) {
    case SchemaId::inferred_rubrics: return "inferred_rubrics";
    case SchemaId::comments: return "comments";
    case SchemaId::comment_scores: return "comment_scores";
    case SchemaId::localized_items: return "localized_items";
    case SchemaId::agreement: return "agreement";
    case SchemaId::verdicts: return "verdicts";
    }
    return "?";
}

namespace {

// End of the balanced object starting at `open` (a '{'), honouring JSON
// string literals; npos when unbalanced.
std::size_t match_brace(std::string_view s, std::size_t open) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = open; i < s.size(); ++i) {
        const char c = s[i];
        if (in_string) {
            if (c == '\\') {
                ++i;
            } else if (c == '"') {
                in_string = false;
            }
            continue;
        }
        if (c == '"') {
            in_string = true;
        } else if (c == '{') {
            ++depth;
        } else if (c == '}') {
            if (--depth == 0) return i;
        }
    }
    return std::string_view::npos;
}

std::optional<json> first_object(std::string_view s) {
    for (std::size_t pos = s.find('{'); pos != std::string_view::npos; pos = s.find('{', pos + 1)) {
        const auto close = match_brace(s, pos);
        if (close == std::string_view::npos) continue;
        json j = json::parse(s.substr(pos, close - pos + 1), nullptr, false);
        if (!j.is_discarded() && j.is_object()) return j;
    }
    return std::nullopt;
}

// Contents of the first ``` fenced block, without the language tag.
std::optional<std::string_view> fenced_block(std::string_view s) {
    const auto open = s.find("```");
    if (open == std::string_view::npos) return std::nullopt;
    auto body = s.find('\n', open);
    if (body == std::string_view::npos) return std::nullopt;
    ++body;
    const auto close = s.find("```", body);
    if (close == std::string_view::npos) return s.substr(body);
    return s.substr(body, close - body);
}

const json& require(const json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end()) throw SchemaError(path.empty() ? key : path + "." + key, "missing required key");
    return *it;
}

std::string join(const std::string& path, const char* key) { return path.empty() ? key : path + "." + key; }

std::string item_path(const char* key, std::size_t i) { return std::string(key) + "[" + std::to_string(i) + "]"; }

const json& require_array(const json& obj, const char* key) {
    if (!obj.is_object()) throw SchemaError("", "response must be a JSON object");
    const json& arr = require(obj, key, "");
    if (!arr.is_array()) throw SchemaError(key, "must be an array");
    return arr;
}

std::string get_string(const json& obj, const char* key, const std::string& path) {
    const json& v = require(obj, key, path);
    if (!v.is_string()) throw SchemaError(join(path, key), "must be a string");
    return v.get<std::string>();
}

std::string get_optional_string(const json& obj, const char* key, const std::string& path) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return {};
    if (!it->is_string()) throw SchemaError(join(path, key), "must be a string");
    return it->get<std::string>();
}

// Integers, or floats with an integral value ("7.0").
long long get_integer(const json& obj, const char* key, const std::string& path) {
    const json& v = require(obj, key, path);
    if (v.is_number_integer()) return v.get<long long>();
    if (v.is_number_float()) {
        const double d = v.get<double>();
        if (std::isfinite(d) && d == std::floor(d) && std::fabs(d) < 1e15) return static_cast<long long>(d);
    }
    throw SchemaError(join(path, key), "must be an integer");
}

long long get_ranged(const json& obj, const char* key, const std::string& path, long long lo, long long hi) {
    const long long v = get_integer(obj, key, path);
    if (v < lo || v > hi) {
        throw OutOfRangeError(join(path, key), "value " + std::to_string(v) + " outside [" + std::to_string(lo) +
                                                   ", " + std::to_string(hi) + "]");
    }
    return v;
}

std::vector<std::string> get_tags(const json& obj, const std::string& path) {
    std::vector<std::string> tags;
    auto it = obj.find("tags");
    if (it == obj.end() || it->is_null()) return tags;
    if (!it->is_array()) throw SchemaError(join(path, "tags"), "must be an array of strings");
    for (std::size_t t = 0; t < it->size(); ++t) {
        if (!(*it)[t].is_string()) throw SchemaError(join(path, "tags") + "[" + std::to_string(t) + "]", "must be a string");
        tags.push_back((*it)[t].get<std::string>());
    }
    return tags;
}

Criterion get_criterion(const json& item, const std::string& path) {
    Criterion c;
    c.text = get_string(item, "criterion", path);
    const long long p = get_integer(item, "points", path);
    c.points = static_cast<int>(std::clamp<long long>(p, -1000, 1000));
    c.tags = get_tags(item, path);
    c.reasoning = get_optional_string(item, "reasoning", path);
    validate_criterion(c, path);
    return c;
}

} // namespace

json extract_json_object(std::string_view raw_text) {
    if (auto fenced = fenced_block(raw_text)) {
        if (auto j = first_object(*fenced)) return *j;
    }
    if (auto j = first_object(raw_text)) return *j;
    throw NoJsonFoundError("no JSON object found in response");
}

std::vector<Criterion> parse_inferred_rubrics(const json& j) {
    const json& arr = require_array(j, "inferred_rubrics");
    if (arr.empty()) throw SchemaError("inferred_rubrics", "must contain at least one criterion");
    std::vector<Criterion> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = item_path("inferred_rubrics", i);
        if (!arr[i].is_object()) throw SchemaError(path, "must be an object");
        out.push_back(get_criterion(arr[i], path));
    }
    return out;
}

std::vector<GeneratedComment> parse_comments(const json& j) {
    const json& arr = require_array(j, "comments");
    std::vector<GeneratedComment> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = item_path("comments", i);
        const json& item = arr[i];
        if (!item.is_object()) throw SchemaError(path, "must be an object");
        GeneratedComment c;
        c.position_index = static_cast<int>(get_ranged(item, "position_index", path, 0, 1'000'000));
        c.comment = get_string(item, "comment", path);
        c.target_quote = get_optional_string(item, "target_quote", path);
        if (auto it = item.find("issue_type"); it != item.end() && it->is_string()) c.issue_type = it->get<std::string>();
        if (auto it = item.find("violated_criteria"); it != item.end() && !it->is_null()) {
            if (!it->is_array()) throw SchemaError(path + ".violated_criteria", "must be an array");
            for (const auto& id : *it) {
                if (id.is_string()) {
                    c.violated_criteria.push_back(id.get<std::string>());
                } else if (id.is_number_integer()) {
                    c.violated_criteria.push_back(std::to_string(id.get<long long>()));
                } else {
                    // Kept so resolve_cited_ids reports it as dropped.
                    c.violated_criteria.push_back(id.dump());
                }
            }
        }
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<CommentScore> parse_comment_scores(const json& j) {
    const json& arr = require_array(j, "comment_scores");
    std::vector<CommentScore> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = item_path("comment_scores", i);
        if (!arr[i].is_object()) throw SchemaError(path, "must be an object");
        CommentScore s;
        s.content_score = static_cast<int>(get_ranged(arr[i], "content_score", path, 0, 10));
        s.reasoning = get_optional_string(arr[i], "reasoning", path);
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<LocalizedItem> parse_localized_items(const json& j) {
    const json& arr = require_array(j, "items");
    std::vector<LocalizedItem> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = item_path("items", i);
        if (!arr[i].is_object()) throw SchemaError(path, "must be an object");
        LocalizedItem item;
        item.source_index = static_cast<int>(std::clamp<long long>(get_integer(arr[i], "source_index", path), -1, 1'000'000));
        item.criterion = get_criterion(arr[i], path);
        out.push_back(std::move(item));
    }
    return out;
}

AgreementScores parse_agreement(const json& j) {
    if (!j.is_object()) throw SchemaError("", "response must be a JSON object");
    AgreementScores a;
    a.recall = static_cast<int>(get_ranged(j, "recall_score", "", 0, 10));
    a.precision = static_cast<int>(get_ranged(j, "precision_score", "", 0, 10));
    a.reasoning = get_optional_string(j, "reasoning", "");
    return a;
}

std::vector<Verdict> parse_verdicts(const json& j) {
    const json& arr = require_array(j, "verdicts");
    std::vector<Verdict> out;
    for (std::size_t i = 0; i < arr.size(); ++i) {
        const std::string path = item_path("verdicts", i);
        if (!arr[i].is_object()) throw SchemaError(path, "must be an object");
        Verdict v;
        v.item_index = static_cast<int>(get_ranged(arr[i], "item_index", path, 0, 1'000'000));
        const json& sat = require(arr[i], "satisfied", path);
        if (!sat.is_boolean()) throw SchemaError(path + ".satisfied", "must be a boolean");
        v.satisfied = sat.get<bool>();
        v.justification = get_optional_string(arr[i], "justification", path);
        out.push_back(std::move(v));
    }
    return out;
}

StructuredValue extract_json(std::string_view raw_text, SchemaId schema) {
    const json j = extract_json_object(raw_text);
    switch (schema) {
    case SchemaId::inferred_rubrics: return parse_inferred_rubrics(j);
    case SchemaId::comments: return parse_comments(j);
    case SchemaId::comment_scores: return parse_comment_scores(j);
    case SchemaId::localized_items: return parse_localized_items(j);
    case SchemaId::agreement: return parse_agreement(j);
    case SchemaId::verdicts: return parse_verdicts(j);
    }
    throw SchemaError("", "unknown schema");
}

} // namespace rubriclearn
