#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rubriclearn {

struct Criterion {
    std::string text;
    int points = -1;
    std::vector<std::string> tags;
    std::string reasoning;

    bool operator==(const Criterion&) const = default;
};

struct Provenance {
    std::string run_id;
    std::optional<int> parent_round;

    bool operator==(const Provenance&) const = default;
};

/// One immutable rubric snapshot. Refinement produces a new value.
struct Rubric {
    int round = 0;
    std::vector<Criterion> criteria;
    Provenance provenance;

    bool operator==(const Rubric&) const = default;
    bool empty() const noexcept { return criteria.empty(); }
};

/// Round-scoped criterion address, rendered "R{round}.{index}".
struct CriterionRef {
    int round = 0;
    int index = 0;

    auto operator<=>(const CriterionRef&) const = default;
};

std::string render_criterion_id(const CriterionRef& ref);
/// Inverse of render_criterion_id; std::nullopt for anything else.
std::optional<CriterionRef> parse_criterion_id(std::string_view id);

/// Throws SchemaError for points == 0, |points| > 10, or empty text.
void validate_criterion(const Criterion& c, const std::string& path);

/// Heuristic check for at least one embedded example pair. Callers warn
/// rather than reject when it fails.
bool has_example_pair(std::string_view criterion_text);

struct ResolvedCitations {
    std::vector<CriterionRef> valid;
    std::vector<std::string> dropped;
};

/// Maps raw cited ids (decimal indices, or "R{t}.{k}" ids of the rubric's own
/// round) onto the rubric. Out-of-range and unparseable entries land in
/// `dropped`; duplicates are collapsed. Never throws.
ResolvedCitations resolve_cited_ids(const std::vector<std::string>& raw_ids, const Rubric& rubric);

/// Canonical JSON: {"round","criteria":[{"criterion","points","tags","reasoning"}],"provenance"}.
std::string serialize_rubric(const Rubric& rubric);
/// Throws SchemaError naming the offending field path.
Rubric deserialize_rubric(std::string_view json_text);

} // namespace rubriclearn
