#include "rubriclearn/mock_responders.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/prompts.hpp"
#include "rubriclearn/retrieval.hpp"
#include "rubriclearn/text.hpp"

#include <json.hpp>

#include <random>
#include <set>

namespace rubriclearn {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

namespace {

std::string_view between(std::string_view s, std::string_view open, std::string_view close) {
    const auto a = s.find(open);
    if (a == std::string_view::npos) return {};
    const auto start = a + open.size();
    const auto b = s.find(close, start);
    return s.substr(start, b == std::string_view::npos ? std::string_view::npos : b - start);
}

std::size_t leading_count(std::string_view s, std::string_view open) {
    const auto digits = between(s, open, " ");
    if (digits.empty()) throw ProviderError("mock: cannot find '" + std::string(open) + "' in prompt");
    return static_cast<std::size_t>(std::stoul(std::string(digits)));
}

const Artifact& find_artifact(const Corpus& corpus, std::string_view body) {
    for (const auto& a : corpus.artifacts()) {
        if (a.body == body) return a;
    }
    // A capped artifact ends with the truncation marker; match on the kept prefix.
    const auto cut = body.rfind("\n[... artifact truncated ...]");
    if (cut != std::string_view::npos) {
        for (const auto& a : corpus.artifacts()) {
            if (text::starts_with(a.body, body.substr(0, cut))) return a;
        }
    }
    throw ProviderError("mock: prompt artifact not found in corpus");
}

std::set<long long> int_set(const json& params, const char* key) {
    std::set<long long> out;
    if (auto it = params.find(key); it != params.end()) {
        for (const auto& v : *it) out.insert(v.get<long long>());
    }
    return out;
}

std::string echo_references(const Corpus& corpus, const ChatRequest& request, const json& params) {
    const std::string_view user = request.user_text;
    const auto body = between(user, "## Artifact Being Reviewed:\n", "\n\n## Evaluation Criteria");
    const Artifact& artifact = find_artifact(corpus, body);
    const std::size_t positions = leading_count(user, "## Positions Requiring Comments (");
    const bool no_rubric = user.find("## Evaluation Criteria (0 criteria):") != std::string_view::npos;
    const auto omit = int_set(params, "omit");
    json cite = params.value("cite", json::array({0}));
    const std::string prefix = params.value("prefix", "");
    ordered_json out;
    out["comments"] = ordered_json::array();
    for (std::size_t i = 0; i < positions && i < artifact.comments.size(); ++i) {
        if (omit.count(static_cast<long long>(i))) continue;
        const auto& c = artifact.comments[i];
        ordered_json item;
        item["position_index"] = i;
        item["target_quote"] = c.target_quote;
        item["comment"] = prefix + c.reference_comment;
        item["issue_type"] = c.issue_type.value_or("harmful_present");
        item["violated_criteria"] = no_rubric ? json::array() : cite;
        out["comments"].push_back(std::move(item));
    }
    return out.dump(2);
}

// Strips the closing quote and optional issue_type line from a rendered
// `"comment"` field.
std::string quoted_field(std::string_view seg) {
    const auto issue = seg.rfind("\"\n    issue_type: ");
    if (issue != std::string_view::npos) return std::string(seg.substr(0, issue));
    while (!seg.empty() && (seg.back() == '\n' || seg.back() == ' ')) seg.remove_suffix(1);
    if (!seg.empty() && seg.back() == '"') seg.remove_suffix(1);
    return std::string(seg);
}

std::string judge_exact(const ChatRequest& request, const json& params) {
    std::string_view user = request.user_text;
    if (auto end = user.rfind("\n\nEvaluate each pair"); end != std::string_view::npos) user = user.substr(0, end);
    const int match = params.value("match_score", 10);
    const int mismatch = params.value("mismatch_score", 0);
    const int drop = params.value("drop", 0);
    constexpr std::string_view orig_key = "  Original comment: \"";
    constexpr std::string_view regen_key = "\n  Regenerated comment: \"";
    std::vector<int> scores;
    for (auto pos = user.find("--- Pair "); pos != std::string_view::npos;) {
        const auto next = user.find("\n--- Pair ", pos + 1);
        const auto block = user.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
        const auto o = block.find(orig_key);
        const auto r = block.find(regen_key);
        if (o == std::string_view::npos || r == std::string_view::npos) throw ProviderError("mock: malformed judge pair");
        const auto original = quoted_field(block.substr(o + orig_key.size(), r - o - orig_key.size()));
        const auto regenerated = quoted_field(block.substr(r + regen_key.size()));
        scores.push_back(original == regenerated ? match : mismatch);
        pos = next == std::string_view::npos ? next : next + 1;
    }
    ordered_json out;
    out["comment_scores"] = ordered_json::array();
    const auto keep = scores.size() > static_cast<std::size_t>(std::max(drop, 0)) ? scores.size() - drop : 0;
    for (std::size_t i = 0; i < keep; ++i) {
        ordered_json s;
        s["content_score"] = scores[i];
        s["reasoning"] = scores[i] == match ? "identical content" : "different content";
        out["comment_scores"].push_back(std::move(s));
    }
    return out.dump(2);
}

std::string echo_rubric(const ChatRequest& request, const json&) {
    const std::string_view user = request.user_text;
    const auto header = user.find("**Current Round Rubrics (Round ");
    if (header == std::string_view::npos) throw ProviderError("mock: no current rubric in refinement prompt");
    const auto first = user.find('\n', header) + 1;
    ordered_json out;
    out["inferred_rubrics"] = ordered_json::array();
    std::size_t pos = first;
    while (pos < user.size()) {
        const auto nl = user.find('\n', pos);
        const auto line = user.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        if (line.empty()) break;
        pos = nl == std::string_view::npos ? user.size() : nl + 1;
        if (text::starts_with(line, "  R")) {
            const auto open = line.find(". [");
            const auto close = line.find("] ", open);
            if (open == std::string_view::npos || close == std::string_view::npos) {
                throw ProviderError("mock: malformed rubric line");
            }
            ordered_json c;
            c["criterion"] = std::string(line.substr(close + 2));
            c["points"] = std::stoi(std::string(line.substr(open + 3, close - open - 3)));
            c["tags"] = json::array();
            c["reasoning"] = "";
            out["inferred_rubrics"].push_back(std::move(c));
        } else if (!out["inferred_rubrics"].empty()) {
            // Continuation line of a multi-line criterion.
            auto& last = out["inferred_rubrics"].back()["criterion"];
            last = last.get<std::string>() + "\n" + std::string(line);
        }
    }
    return out.dump(2);
}

std::string identity_revision(const ChatRequest& request, const json& params) {
    const auto at = request.user_text.find(revision_artifact_marker);
    if (at == std::string::npos) throw ProviderError("mock: no artifact marker in revision prompt");
    return request.user_text.substr(at + revision_artifact_marker.size()) + params.value("append", "");
}

std::string satisfy(const ChatRequest& request, std::optional<long long> count) {
    const std::size_t items = leading_count(request.user_text, "## Reference Rubric Items (");
    ordered_json out;
    out["verdicts"] = ordered_json::array();
    for (std::size_t k = 0; k < items; ++k) {
        const bool yes = !count || static_cast<long long>(k) < *count;
        ordered_json v;
        v["item_index"] = k;
        v["satisfied"] = yes;
        v["justification"] = yes ? "The artifact covers this item." : "The artifact does not cover this item.";
        out["verdicts"].push_back(std::move(v));
    }
    return out.dump(2);
}

std::string quote_key(const Corpus* corpus, std::string_view input) {
    if (text::starts_with(input, query_prefix)) return std::string(input.substr(query_prefix.size()));
    if (text::starts_with(input, document_prefix)) {
        const auto comment = input.substr(document_prefix.size());
        if (corpus) {
            for (const auto& a : corpus->artifacts()) {
                for (const auto& c : a.comments) {
                    if (c.reference_comment == comment) return c.target_quote;
                }
            }
        }
        return std::string(comment);
    }
    return std::string(input);
}

} // namespace

std::vector<double> hash_embedding(std::string_view key, int dims) {
    std::mt19937_64 rng(text::fnv1a64(key));
    std::vector<double> v(static_cast<std::size_t>(std::max(dims, 0)));
    for (auto& x : v) x = static_cast<double>(rng() >> 11) / static_cast<double>(1ULL << 53) * 2.0 - 1.0;
    return v;
}

void register_builtin_responders(MockProvider& mock, std::shared_ptr<const Corpus> corpus) {
    mock.register_responder("echo_references", [corpus](const ChatRequest& r, const json& p) {
        if (!corpus) throw ProviderError("mock: echo_references needs a corpus");
        return echo_references(*corpus, r, p);
    });
    mock.register_responder("judge_exact", judge_exact);
    mock.register_responder("echo_rubric", echo_rubric);
    mock.register_responder("identity_revision", identity_revision);
    mock.register_responder("satisfy_all", [](const ChatRequest& r, const json&) { return satisfy(r, std::nullopt); });
    mock.register_responder("satisfy_none", [](const ChatRequest& r, const json&) { return satisfy(r, 0); });
    mock.register_responder("satisfy_count", [](const ChatRequest& r, const json& p) {
        return satisfy(r, p.value("count", 0LL));
    });
    mock.register_embed_responder("hash_embedding", [](const EmbeddingRequest& r, const json&) {
        return hash_embedding(r.text, r.dimensionality);
    });
    mock.register_embed_responder("quote_keyed_embedding", [corpus](const EmbeddingRequest& r, const json&) {
        return hash_embedding(quote_key(corpus.get(), r.text), r.dimensionality);
    });
}

} // namespace rubriclearn
