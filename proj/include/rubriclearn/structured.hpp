#pragma once

#include "rubriclearn/error.hpp"
#include "rubriclearn/gateway.hpp"
#include "rubriclearn/rubric.hpp"

#include <json.hpp>

#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rubriclearn {

enum class SchemaId { inferred_rubrics, comments, comment_scores, localized_items, agreement, verdicts };

std::string_view to_string(SchemaId schema);

/// Strips code fences and surrounding prose, then returns the first balanced
/// `{...}` block that parses as a JSON object. Throws NoJsonFoundError.
nlohmann::json extract_json_object(std::string_view raw_text);

struct GeneratedComment {
    int position_index = 0;
    std::string target_quote;
    std::string comment;
    std::optional<std::string> issue_type;
    // Raw cited ids as the model wrote them (numbers rendered as decimal text).
    std::vector<std::string> violated_criteria;
};

struct CommentScore {
    int content_score = 0;
    std::string reasoning;
};

struct LocalizedItem {
    int source_index = 0;
    Criterion criterion;
};

struct AgreementScores {
    int recall = 0;
    int precision = 0;
    std::string reasoning;
};

struct Verdict {
    int item_index = 0;
    bool satisfied = false;
    std::string justification;
};

/// Non-empty criteria list; each criterion validated (points range, text).
std::vector<Criterion> parse_inferred_rubrics(const nlohmann::json& j);
std::vector<GeneratedComment> parse_comments(const nlohmann::json& j);
/// Scores must be integers in [0, 10]; OutOfRangeError otherwise.
std::vector<CommentScore> parse_comment_scores(const nlohmann::json& j);
/// Structural validation only; source_index range is checked against the
/// global rubric by the caller.
std::vector<LocalizedItem> parse_localized_items(const nlohmann::json& j);
AgreementScores parse_agreement(const nlohmann::json& j);
std::vector<Verdict> parse_verdicts(const nlohmann::json& j);

using StructuredValue = std::variant<std::vector<Criterion>, std::vector<GeneratedComment>, std::vector<CommentScore>,
                                     std::vector<LocalizedItem>, AgreementScores, std::vector<Verdict>>;

/// extract_json_object followed by the schema's typed validation.
StructuredValue extract_json(std::string_view raw_text, SchemaId schema);

/// Appended to the user message when a response fails schema validation.
extern const std::string_view json_reminder;

/// Sends `request`; on SchemaError re-asks once with json_reminder appended.
/// The second failure propagates.
template <typename T>
T ask_structured(Gateway& gateway, ChatRequest request, const std::function<T(const nlohmann::json&)>& parse) {
    auto attempt = [&](const ChatRequest& r) { return parse(extract_json_object(gateway.chat(r).raw_text)); };
    try {
        return attempt(request);
    } catch (const SchemaError& e) {
        nlohmann::ordered_json event;
        event["event"] = "schema_retry";
        event["tag"] = to_string(request.tag);
        event["label"] = request.label;
        event["reason"] = e.what();
        gateway.record(event);
        request.user_text += json_reminder;
        return attempt(request);
    }
}

} // namespace rubriclearn
