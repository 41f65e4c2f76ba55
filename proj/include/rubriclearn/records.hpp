#pragma once

#include "rubriclearn/corpus.hpp"
#include "rubriclearn/rubric.hpp"

#include <json.hpp>

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace rubriclearn {

/// One prediction for one instance in one round (or test repeat).
struct PredictionRecord {
    InstanceKey key;
    int round = 0;
    SplitName split = SplitName::train;
    int repeat = 0;
    std::string target_quote;
    std::string reference_comment;
    std::optional<std::string> reference_issue_type;
    std::string generated_comment;
    std::optional<std::string> generated_issue_type;
    std::vector<CriterionRef> cited;
    std::vector<std::string> dropped_ids;
    bool fallback = false;
    std::optional<int> content_score; // absent = missing
    std::string judge_reasoning;
    // Why the score (or generation) is missing, when it is.
    std::string error;

    bool operator==(const PredictionRecord&) const = default;
};

/// The (q, y, y-hat, s, e, C) tuple kept for one instance and round.
struct SignalEntry {
    std::string target_quote;
    std::string reference_comment;
    std::string generated_comment;
    std::optional<int> content_score;
    std::string judge_reasoning;
    std::vector<CriterionRef> cited;

    bool operator==(const SignalEntry&) const = default;
};

SignalEntry signal_entry(const PredictionRecord& record);

/// Comment-wise refinement signal: per-round entries for one instance.
struct RefinementSignal {
    InstanceKey key;
    std::map<int, SignalEntry> rounds;
};

/// Appends a round's records to the per-instance signals (creating entries
/// as needed). Signals stay ordered by instance key.
void accumulate_signals(std::vector<RefinementSignal>& signals, const std::vector<PredictionRecord>& records);

/// Aggregate scores of one executed round.
struct RoundScore {
    int round = 0;
    std::optional<double> train_mean;
    std::optional<double> validation_mean;
    std::size_t train_missing = 0;
    std::size_t validation_missing = 0;
};

/// A retrieved training comment.
struct Neighbor {
    InstanceKey key;
    double similarity = 0.0;
    std::string retrieved_comment;
    std::string retrieved_quote;
};

nlohmann::ordered_json record_to_json(const PredictionRecord& record);
PredictionRecord record_from_json(const nlohmann::json& j);

/// One JSON object per line, in the given order.
std::string serialize_records(const std::vector<PredictionRecord>& records);
std::vector<PredictionRecord> load_records(const std::filesystem::path& path);

/// Scores of non-missing records.
std::vector<double> present_scores(const std::vector<PredictionRecord>& records);
std::size_t missing_count(const std::vector<PredictionRecord>& records);

} // namespace rubriclearn
