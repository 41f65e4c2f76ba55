#pragma once

#include "rubriclearn/corpus.hpp"
#include "rubriclearn/gateway.hpp"
#include "rubriclearn/records.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace rubriclearn {

extern const std::string_view query_prefix;    // "task: feedback comment retrieval | query: "
extern const std::string_view document_prefix; // "title: none | text: "

/// `essay` wraps the span in its sentence with << >> markup.
enum class DatasetKind { standard, essay };

std::string_view to_string(DatasetKind kind);
DatasetKind dataset_kind_from_string(std::string_view name);

/// Byte range [begin, end) of the sentence containing [span_begin, span_end):
/// extends to the nearest . ! ? (kept) or newline (dropped) on each side.
std::pair<std::size_t, std::size_t> sentence_bounds(std::string_view body, std::size_t span_begin,
                                                    std::size_t span_end);

/// Throws InvariantError for an empty quote, or an essay span that cannot be
/// located by offsets or by searching for the quote.
std::string build_query_text(const Artifact& artifact, const CommentInstance& instance, DatasetKind kind);
std::string build_document_text(const CommentInstance& instance);

struct IndexEntry {
    InstanceKey key;
    std::string document_text;
    std::string target_quote;
    std::string comment;
    std::vector<float> vector;
};

/// Immutable-after-build list of unit vectors from training comments.
class EmbeddingIndex {
public:
    explicit EmbeddingIndex(int dimensionality) : dimensionality_(dimensionality) {}

    /// Checks dimensionality and unit norm.
    void add(IndexEntry entry);

    int dimensionality() const noexcept { return dimensionality_; }
    const std::vector<IndexEntry>& entries() const noexcept { return entries_; }
    std::size_t size() const noexcept { return entries_.size(); }
    bool empty() const noexcept { return entries_.empty(); }

private:
    int dimensionality_;
    std::vector<IndexEntry> entries_;
};

/// Exact k nearest by dot product: similarity descending, then insertion
/// order. k larger than the index returns everything and adds a warning.
std::vector<Neighbor> top_k(const EmbeddingIndex& index, std::span<const float> query, int k,
                            std::vector<std::string>* warnings = nullptr);

/// Embeds every training comment through the gateway.
EmbeddingIndex build_index(Gateway& gateway, const Corpus& corpus, const CorpusSplit& split, int dimensionality);

struct IndexCacheKey {
    std::string corpus_hash;
    std::string split_hash;
    std::string embedder;
    int dimensionality = 0;
};

std::filesystem::path index_cache_path(const std::filesystem::path& dir, const CorpusSplit& split);
void save_index_cache(const std::filesystem::path& path, const EmbeddingIndex& index, const IndexCacheKey& key);
/// std::nullopt when the file is absent or was built for a different key.
std::optional<EmbeddingIndex> load_index_cache(const std::filesystem::path& path, const IndexCacheKey& key);

/// Uses the cache in `cache_dir` when valid, otherwise builds and saves it.
EmbeddingIndex load_or_build_index(Gateway& gateway, const Corpus& corpus, const CorpusSplit& split,
                                   int dimensionality, const std::filesystem::path& cache_dir);

struct RetrievalContext {
    const EmbeddingIndex* index = nullptr;
    DatasetKind kind = DatasetKind::standard;
    int k = 3;
    int repeat = 0;
};

/// Query vector for one test position.
std::vector<float> embed_query(Gateway& gateway, const Artifact& artifact, const CommentInstance& instance,
                               const RetrievalContext& ctx);

/// Neighbors of every position of `artifact`, in position order.
std::vector<std::vector<Neighbor>> retrieve_for_artifact(Gateway& gateway, const Artifact& artifact,
                                                         const RetrievalContext& ctx, int k,
                                                         std::vector<std::string>* warnings = nullptr);

} // namespace rubriclearn
