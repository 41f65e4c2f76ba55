#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rubriclearn {

/// Identifies one (quote, comment) pair: artifact plus its position in the
/// artifact's on-disk comment list.
struct InstanceKey {
    std::string artifact_id;
    std::size_t index = 0;

    auto operator<=>(const InstanceKey&) const = default;
    std::string str() const { return artifact_id + "#" + std::to_string(index); }
};

struct CommentInstance {
    std::string target_quote;
    std::string reference_comment;
    // Code point offsets into the artifact body; both present or both absent.
    std::optional<std::size_t> start;
    std::optional<std::size_t> end;
    std::optional<std::string> issue_type;

    bool operator==(const CommentInstance&) const = default;
};

struct Artifact {
    std::string artifact_id;
    std::optional<std::string> prompt;
    std::string body;
    std::vector<CommentInstance> comments;

    bool operator==(const Artifact&) const = default;
};

/// Throws InvariantError naming the artifact and the violated invariant.
void validate_artifact(const Artifact& artifact);

/// Immutable, validated collection of artifacts in on-disk order.
class Corpus {
public:
    Corpus() = default;
    /// Validates every artifact and id uniqueness.
    explicit Corpus(std::vector<Artifact> artifacts);

    const std::vector<Artifact>& artifacts() const noexcept { return artifacts_; }
    std::size_t size() const noexcept { return artifacts_.size(); }
    std::size_t instance_count() const noexcept;

    /// nullptr when absent.
    const Artifact* find(std::string_view artifact_id) const;
    const Artifact& at(std::string_view artifact_id) const;
    const CommentInstance& instance(const InstanceKey& key) const;

    /// Hash of the canonical serialization.
    std::string hash() const;

private:
    std::vector<Artifact> artifacts_;
    std::map<std::string, std::size_t, std::less<>> by_id_;
};

/// Only the canonical JSON-lines format is defined.
enum class CorpusFormat { jsonl };

Corpus parse_corpus_jsonl(std::string_view contents);
Corpus load_corpus(const std::filesystem::path& path, CorpusFormat format = CorpusFormat::jsonl);

/// Canonical JSON-lines; load-then-serialize is byte-stable on this output.
std::string serialize_corpus_jsonl(const Corpus& corpus);

enum class SplitName { train, validation, test };

std::string_view to_string(SplitName split);
SplitName split_from_string(std::string_view name);

struct CorpusSplit {
    std::vector<std::string> train;
    std::vector<std::string> validation;
    std::vector<std::string> test;
    std::uint64_t seed = 0;
    std::array<double, 3> ratios{0.6, 0.2, 0.2};

    const std::vector<std::string>& ids(SplitName split) const;
    /// Hash over the id assignment, used to key retrieval caches.
    std::string hash() const;
};

/// Largest-remainder seat allocation of `ratios` over `total` items. Remainder
/// ties go to the later split. When `total >= 3`, every split with a positive
/// ratio receives at least one item (taken from the largest split).
std::array<std::size_t, 3> apportion(std::size_t total, const std::array<double, 3>& ratios);

/// Sorts ids, applies a seeded Fisher-Yates permutation, then apportions.
CorpusSplit split_corpus(const Corpus& corpus, const std::array<double, 3>& ratios,
                         std::uint64_t seed);

/// Reads `{"train":[...],"validation":[...],"test":[...]}` and checks it
/// partitions the corpus.
CorpusSplit load_split_file(const std::filesystem::path& path, const Corpus& corpus);
CorpusSplit parse_split_json(std::string_view contents, const Corpus& corpus);
std::string serialize_split_json(const CorpusSplit& split);

/// Throws InvariantError unless the split partitions the corpus ids exactly.
void check_partition(const CorpusSplit& split, const Corpus& corpus);

/// Artifacts of one split in corpus order.
std::vector<const Artifact*> split_artifacts(const Corpus& corpus, const CorpusSplit& split,
                                             SplitName name);

} // namespace rubriclearn
