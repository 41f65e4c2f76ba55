#include "rubriclearn/corpus.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <set>

namespace rubriclearn {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

void validate_artifact(const Artifact& artifact) {
    if (artifact.artifact_id.empty()) throw InvariantError("(unnamed artifact)", "artifact_id is empty");
    const auto& id = artifact.artifact_id;
    if (artifact.body.empty()) throw InvariantError(id, "artifact body is empty");
    const std::size_t length = text::codepoint_length(artifact.body);
    for (std::size_t j = 0; j < artifact.comments.size(); ++j) {
        const auto& c = artifact.comments[j];
        const std::string where = "comment " + std::to_string(j) + ": ";
        if (c.target_quote.empty()) throw InvariantError(id, where + "target_quote is empty");
        if (c.reference_comment.empty()) throw InvariantError(id, where + "comment text is empty");
        if (c.start.has_value() != c.end.has_value()) {
            throw InvariantError(id, where + "start and end must be given together");
        }
        if (c.start && !(*c.start < *c.end && *c.end <= length)) {
            throw InvariantError(id, where + "offsets violate 0 <= start < end <= length(body) (start=" +
                                         std::to_string(*c.start) + ", end=" + std::to_string(*c.end) +
                                         ", length=" + std::to_string(length) + ")");
        }
    }
}

Corpus::Corpus(std::vector<Artifact> artifacts) : artifacts_(std::move(artifacts)) {
    for (std::size_t i = 0; i < artifacts_.size(); ++i) {
        validate_artifact(artifacts_[i]);
        if (!by_id_.emplace(artifacts_[i].artifact_id, i).second) {
            throw InvariantError(artifacts_[i].artifact_id, "duplicate artifact_id");
        }
    }
}

std::size_t Corpus::instance_count() const noexcept {
    std::size_t n = 0;
    for (const auto& a : artifacts_) n += a.comments.size();
    return n;
}

const Artifact* Corpus::find(std::string_view artifact_id) const {
    auto it = by_id_.find(artifact_id);
    return it == by_id_.end() ? nullptr : &artifacts_[it->second];
}

const Artifact& Corpus::at(std::string_view artifact_id) const {
    if (const auto* a = find(artifact_id)) return *a;
    throw InvariantError(std::string(artifact_id), "unknown artifact_id");
}

const CommentInstance& Corpus::instance(const InstanceKey& key) const {
    const auto& a = at(key.artifact_id);
    if (key.index >= a.comments.size()) throw InvariantError(key.str(), "instance index out of range");
    return a.comments[key.index];
}

std::string Corpus::hash() const { return text::hex64(text::fnv1a64(serialize_corpus_jsonl(*this))); }

namespace {

std::string require_string(const json& obj, const char* key, std::size_t row, const std::string& prefix) {
    auto it = obj.find(key);
    if (it == obj.end()) throw ParseError(row, "missing field '" + prefix + key + "'");
    if (!it->is_string()) throw ParseError(row, "field '" + prefix + key + "' must be a string");
    return it->get<std::string>();
}

std::optional<std::string> optional_string(const json& obj, const char* key, std::size_t row,
                                           const std::string& prefix) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_string()) throw ParseError(row, "field '" + prefix + key + "' must be a string or null");
    return it->get<std::string>();
}

std::optional<std::size_t> optional_offset(const json& obj, const char* key, std::size_t row,
                                           const std::string& prefix) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return std::nullopt;
    if (!it->is_number_integer() || it->get<long long>() < 0) {
        throw ParseError(row, "field '" + prefix + key + "' must be a non-negative integer");
    }
    return it->get<std::size_t>();
}

Artifact parse_artifact_row(const json& row_json, std::size_t row) {
    if (!row_json.is_object()) throw ParseError(row, "expected a JSON object");
    Artifact a;
    a.artifact_id = require_string(row_json, "artifact_id", row, "");
    a.prompt = optional_string(row_json, "prompt", row, "");
    a.body = require_string(row_json, "artifact", row, "");
    auto it = row_json.find("comments");
    if (it == row_json.end()) throw ParseError(row, "missing field 'comments'");
    if (!it->is_array()) throw ParseError(row, "field 'comments' must be an array");
    for (std::size_t j = 0; j < it->size(); ++j) {
        const auto& cj = (*it)[j];
        const std::string prefix = "comments[" + std::to_string(j) + "].";
        if (!cj.is_object()) throw ParseError(row, "'" + prefix + "' must be an object");
        CommentInstance c;
        c.target_quote = require_string(cj, "target_quote", row, prefix);
        c.reference_comment = require_string(cj, "comment", row, prefix);
        c.start = optional_offset(cj, "start", row, prefix);
        c.end = optional_offset(cj, "end", row, prefix);
        c.issue_type = optional_string(cj, "issue_type", row, prefix);
        a.comments.push_back(std::move(c));
    }
    return a;
}

} // namespace

Corpus parse_corpus_jsonl(std::string_view contents) {
    std::vector<Artifact> artifacts;
    std::set<std::string, std::less<>> seen;
    std::size_t row = 0;
    for (const auto& line : text::split_lines(contents)) {
        ++row;
        if (text::trim(line).empty()) continue;
        json parsed;
        try {
            parsed = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(row, std::string("invalid JSON: ") + e.what());
        }
        auto artifact = parse_artifact_row(parsed, row);
        validate_artifact(artifact);
        if (!seen.insert(artifact.artifact_id).second) {
            throw InvariantError(artifact.artifact_id, "duplicate artifact_id (row " + std::to_string(row) + ")");
        }
        artifacts.push_back(std::move(artifact));
    }
    return Corpus(std::move(artifacts));
}

Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format) {
    switch (format) {
    case CorpusFormat::jsonl:
        return parse_corpus_jsonl(text::read_file(path));
    }
    throw ConfigError("unknown corpus format");
}

std::string serialize_corpus_jsonl(const Corpus& corpus) {
    std::string out;
    for (const auto& a : corpus.artifacts()) {
        ordered_json row;
        row["artifact_id"] = a.artifact_id;
        row["prompt"] = a.prompt ? ordered_json(*a.prompt) : ordered_json(nullptr);
        row["artifact"] = a.body;
        auto comments = ordered_json::array();
        for (const auto& c : a.comments) {
            ordered_json cj;
            cj["target_quote"] = c.target_quote;
            cj["comment"] = c.reference_comment;
            if (c.start) cj["start"] = *c.start;
            if (c.end) cj["end"] = *c.end;
            if (c.issue_type) cj["issue_type"] = *c.issue_type;
            comments.push_back(std::move(cj));
        }
        row["comments"] = std::move(comments);
        out += row.dump();
        out += '\n';
    }
    return out;
}

std::string_view to_string(SplitName split) {
    switch (split) {
    case SplitName::train: return "train";
    case SplitName::validation: return "validation";
    case SplitName::test: return "test";
    }
    return "?";
}

SplitName split_from_string(std::string_view name) {
    if (name == "train") return SplitName::train;
    if (name == "validation" || name == "val") return SplitName::validation;
    if (name == "test") return SplitName::test;
    throw ParseError("unknown split name '" + std::string(name) + "'");
}

const std::vector<std::string>& CorpusSplit::ids(SplitName split) const {
    switch (split) {
    case SplitName::train: return train;
    case SplitName::validation: return validation;
    case SplitName::test: return test;
    }
    return test;
}

std::string CorpusSplit::hash() const {
    std::string material;
    for (auto name : {SplitName::train, SplitName::validation, SplitName::test}) {
        material += to_string(name);
        material += ':';
        for (const auto& id : ids(name)) {
            material += id;
            material += '\x1f';
        }
        material += '\n';
    }
    return text::hex64(text::fnv1a64(material));
}

std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& ratios) {
    double sum = 0.0;
    for (double r : ratios) {
        if (!(r >= 0.0)) throw InvariantError("ratios", "ratios must be non-negative");
        sum += r;
    }
    if (std::fabs(sum - 1.0) > 1e-9) throw InvariantError("ratios", "ratios must sum to 1 (got " + text::fixed(sum, 12) + ")");

    std::array<std::size_t, 3> seats{};
    std::array<double, 3> remainder{};
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        const double quota = ratios[i] * static_cast<double>(total);
        // Absorb representation error such as 0.6 * 10 = 5.999...
        const double floor_q = std::floor(quota + 1e-9);
        seats[i] = static_cast<std::size_t>(floor_q);
        remainder[i] = std::max(0.0, quota - floor_q);
        assigned += seats[i];
    }
    std::array<std::size_t, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        // Remainders equal up to representation error count as tied.
        if (std::fabs(remainder[a] - remainder[b]) > 1e-9) return remainder[a] > remainder[b];
        return a > b;
    });
    while (assigned > total) {
        --*std::max_element(seats.begin(), seats.end());
        --assigned;
    }
    for (std::size_t k = 0; assigned < total; k = (k + 1) % 3) {
        ++seats[order[k]];
        ++assigned;
    }
    if (total >= 3) {
        for (std::size_t i = 0; i < 3; ++i) {
            if (ratios[i] > 0.0 && seats[i] == 0) {
                const auto donor = static_cast<std::size_t>(
                    std::max_element(seats.begin(), seats.end()) - seats.begin());
                --seats[donor];
                ++seats[i];
            }
        }
    }
    return seats;
}

namespace {

// Unbiased draw in [0, bound) from the standardized mt19937_64 stream.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x;
    do {
        x = rng();
    } while (x >= limit);
    return x % bound;
}

} // namespace

CorpusSplit split_corpus(const Corpus& corpus, const std::array<double, 3>& ratios, std::uint64_t seed) {
    if (corpus.size() == 0) throw InvariantError("corpus", "cannot split an empty corpus");
    const auto sizes = apportion(corpus.size(), ratios);

    std::vector<std::string> ids;
    ids.reserve(corpus.size());
    for (const auto& a : corpus.artifacts()) ids.push_back(a.artifact_id);
    std::sort(ids.begin(), ids.end());

    std::mt19937_64 rng(seed);
    for (std::size_t i = ids.size(); i > 1; --i) {
        const auto j = static_cast<std::size_t>(bounded(rng, i));
        std::swap(ids[i - 1], ids[j]);
    }

    CorpusSplit split;
    split.seed = seed;
    split.ratios = ratios;
    auto it = ids.begin();
    split.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
    it += static_cast<std::ptrdiff_t>(sizes[0]);
    split.validation.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
    it += static_cast<std::ptrdiff_t>(sizes[1]);
    split.test.assign(it, ids.end());
    return split;
}

void check_partition(const CorpusSplit& split, const Corpus& corpus) {
    std::set<std::string, std::less<>> seen;
    for (auto name : {SplitName::train, SplitName::validation, SplitName::test}) {
        for (const auto& id : split.ids(name)) {
            if (!corpus.find(id)) throw InvariantError(id, "split references unknown artifact_id");
            if (!seen.insert(id).second) throw InvariantError(id, "artifact appears in more than one split");
        }
    }
    if (seen.size() != corpus.size()) {
        for (const auto& a : corpus.artifacts()) {
            if (!seen.count(a.artifact_id)) throw InvariantError(a.artifact_id, "artifact missing from split");
        }
    }
}

CorpusSplit parse_split_json(std::string_view contents, const Corpus& corpus) {
    json j;
    try {
        j = json::parse(contents);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("split file: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError("split file: expected an object");
    CorpusSplit split;
    for (auto name : {SplitName::train, SplitName::validation, SplitName::test}) {
        const std::string key(to_string(name));
        auto it = j.find(key);
        if (it == j.end() || !it->is_array()) throw ParseError("split file: '" + key + "' must be an array");
        auto& target = name == SplitName::train ? split.train
                       : name == SplitName::validation ? split.validation
                                                       : split.test;
        for (const auto& id : *it) {
            if (!id.is_string()) throw ParseError("split file: '" + key + "' entries must be strings");
            target.push_back(id.get<std::string>());
        }
    }
    const double n = static_cast<double>(corpus.size());
    if (n > 0) {
        split.ratios = {split.train.size() / n, split.validation.size() / n, split.test.size() / n};
    }
    check_partition(split, corpus);
    return split;
}

CorpusSplit load_split_file(const std::filesystem::path& path, const Corpus& corpus) {
    return parse_split_json(text::read_file(path), corpus);
}

std::string serialize_split_json(const CorpusSplit& split) {
    ordered_json j;
    j["train"] = split.train;
    j["validation"] = split.validation;
    j["test"] = split.test;
    return j.dump(2) + "\n";
}

std::vector<const Artifact*> split_artifacts(const Corpus& corpus, const CorpusSplit& split, SplitName name) {
    std::set<std::string, std::less<>> wanted(split.ids(name).begin(), split.ids(name).end());
    std::vector<const Artifact*> out;
    for (const auto& a : corpus.artifacts()) {
        if (wanted.count(a.artifact_id)) out.push_back(&a);
    }
    return out;
}

} // namespace rubriclearn
