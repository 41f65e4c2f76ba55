#include "rubriclearn/retrieval.hpp"

#include "rubriclearn/error.hpp"
#include "rubriclearn/text.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rubriclearn {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const std::string_view query_prefix = "task: feedback comment retrieval | query: ";
const std::string_view document_prefix = "title: none | text: ";

std::string_view to_string(DatasetKind kind) { return kind == DatasetKind::essay ? "essay" : "standard"; }

DatasetKind dataset_kind_from_string(std::string_view name) {
    if (name == "essay") return DatasetKind::essay;
    if (name == "standard" || name == "default") return DatasetKind::standard;
    throw ConfigError("unknown corpus kind '" + std::string(name) + "' (expected standard or essay)");
}

namespace {

bool is_sentence_end(char c) { return c == '.' || c == '!' || c == '?'; }

} // namespace

std::pair<std::size_t, std::size_t> sentence_bounds(std::string_view body, std::size_t span_begin,
                                                    std::size_t span_end) {
    std::size_t begin = span_begin;
    while (begin > 0 && !is_sentence_end(body[begin - 1]) && body[begin - 1] != '\n') --begin;
    while (begin < span_begin && (body[begin] == ' ' || body[begin] == '\t')) ++begin;
    std::size_t end = span_end;
    while (end < body.size() && body[end] != '\n') {
        if (is_sentence_end(body[end])) {
            ++end;
            break;
        }
        ++end;
    }
    return {begin, end};
}

std::string build_query_text(const Artifact& artifact, const CommentInstance& instance, DatasetKind kind) {
    if (instance.target_quote.empty()) throw InvariantError(artifact.artifact_id, "retrieval query needs a target quote");
    if (kind == DatasetKind::standard) return std::string(query_prefix) + instance.target_quote;

    const std::string& body = artifact.body;
    std::size_t span_begin = 0;
    std::size_t span_end = 0;
    if (instance.start && instance.end) {
        span_begin = text::codepoint_to_byte(body, *instance.start);
        span_end = text::codepoint_to_byte(body, *instance.end);
    } else {
        span_begin = body.find(instance.target_quote);
        if (span_begin == std::string::npos) {
            throw InvariantError(artifact.artifact_id,
                                 "target quote \"" + instance.target_quote + "\" not found in the artifact");
        }
        span_end = span_begin + instance.target_quote.size();
    }
    if (span_begin >= span_end || span_end > body.size()) {
        throw InvariantError(artifact.artifact_id, "target span cannot be located");
    }
    const auto [begin, end] = sentence_bounds(body, span_begin, span_end);
    return std::string(query_prefix) + body.substr(begin, span_begin - begin) + "<<" +
           body.substr(span_begin, span_end - span_begin) + ">>" + body.substr(span_end, end - span_end);
}

std::string build_document_text(const CommentInstance& instance) {
    return std::string(document_prefix) + instance.reference_comment;
}

void EmbeddingIndex::add(IndexEntry entry) {
    if (static_cast<int>(entry.vector.size()) != dimensionality_) {
        throw InvariantError(entry.key.str(), "embedding has " + std::to_string(entry.vector.size()) +
                                                  " dimensions, index expects " + std::to_string(dimensionality_));
    }
    double ss = 0.0;
    for (float x : entry.vector) ss += static_cast<double>(x) * x;
    if (std::fabs(std::sqrt(ss) - 1.0) > 1e-6) throw InvariantError(entry.key.str(), "embedding is not unit length");
    entries_.push_back(std::move(entry));
}

std::vector<Neighbor> top_k(const EmbeddingIndex& index, std::span<const float> query, int k,
                            std::vector<std::string>* warnings) {
    if (k < 1) throw InvariantError("top_k", "k must be >= 1");
    if (index.empty()) throw InvariantError("top_k", "index is empty");
    if (static_cast<int>(query.size()) != index.dimensionality()) {
        throw InvariantError("top_k", "query dimensionality does not match the index");
    }
    const auto& entries = index.entries();
    std::vector<double> sims(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        double dot = 0.0;
        for (std::size_t d = 0; d < query.size(); ++d) dot += static_cast<double>(entries[i].vector[d]) * query[d];
        sims[i] = dot;
    }
    std::vector<std::size_t> order(entries.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t take = static_cast<std::size_t>(k);
    if (take > entries.size()) {
        if (warnings) {
            warnings->push_back("top_k: k=" + std::to_string(k) + " exceeds index size " +
                                std::to_string(entries.size()) + "; returning all entries");
        }
        take = entries.size();
    }
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(take), order.end(),
                      [&](std::size_t a, std::size_t b) { return sims[a] != sims[b] ? sims[a] > sims[b] : a < b; });
    std::vector<Neighbor> out;
    for (std::size_t i = 0; i < take; ++i) {
        const auto& e = entries[order[i]];
        out.push_back(Neighbor{e.key, sims[order[i]], e.comment, e.target_quote});
    }
    return out;
}

EmbeddingIndex build_index(Gateway& gateway, const Corpus& corpus, const CorpusSplit& split, int dimensionality) {
    EmbeddingIndex index(dimensionality);
    for (const Artifact* a : split_artifacts(corpus, split, SplitName::train)) {
        for (std::size_t j = 0; j < a->comments.size(); ++j) {
            const auto& c = a->comments[j];
            EmbeddingRequest req;
            req.text = build_document_text(c);
            req.dimensionality = dimensionality;
            req.label = "index " + InstanceKey{a->artifact_id, j}.str();
            index.add(IndexEntry{{a->artifact_id, j}, req.text, c.target_quote, c.reference_comment, gateway.embed(req)});
        }
    }
    if (index.empty()) throw InvariantError("retrieval index", "train split has no comments to index");
    return index;
}

std::filesystem::path index_cache_path(const std::filesystem::path& dir, const CorpusSplit& split) {
    return dir / ("index_" + split.hash() + ".json");
}

void save_index_cache(const std::filesystem::path& path, const EmbeddingIndex& index, const IndexCacheKey& key) {
    ordered_json j;
    j["corpus_hash"] = key.corpus_hash;
    j["split_hash"] = key.split_hash;
    j["embedder"] = key.embedder;
    j["dimensionality"] = index.dimensionality();
    j["entries"] = ordered_json::array();
    for (const auto& e : index.entries()) {
        ordered_json ej;
        ej["artifact_id"] = e.key.artifact_id;
        ej["index"] = e.key.index;
        ej["document_text"] = e.document_text;
        ej["target_quote"] = e.target_quote;
        ej["comment"] = e.comment;
        ej["vector"] = e.vector;
        j["entries"].push_back(std::move(ej));
    }
    text::write_file_atomic(path, j.dump() + "\n");
}

std::optional<EmbeddingIndex> load_index_cache(const std::filesystem::path& path, const IndexCacheKey& key) {
    if (!std::filesystem::exists(path)) return std::nullopt;
    json j = json::parse(text::read_file(path), nullptr, false);
    if (j.is_discarded() || !j.is_object()) return std::nullopt;
    if (j.value("corpus_hash", "") != key.corpus_hash || j.value("split_hash", "") != key.split_hash ||
        j.value("embedder", "") != key.embedder || j.value("dimensionality", 0) != key.dimensionality) {
        return std::nullopt;
    }
    try {
        EmbeddingIndex index(key.dimensionality);
        for (const auto& e : j.at("entries")) {
            index.add(IndexEntry{{e.at("artifact_id").get<std::string>(), e.at("index").get<std::size_t>()},
                                 e.at("document_text").get<std::string>(),
                                 e.at("target_quote").get<std::string>(),
                                 e.at("comment").get<std::string>(),
                                 e.at("vector").get<std::vector<float>>()});
        }
        if (index.empty()) return std::nullopt;
        return index;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

EmbeddingIndex load_or_build_index(Gateway& gateway, const Corpus& corpus, const CorpusSplit& split,
                                   int dimensionality, const std::filesystem::path& cache_dir) {
    const IndexCacheKey key{corpus.hash(), split.hash(), gateway.embedding_provider_id(), dimensionality};
    const auto path = index_cache_path(cache_dir, split);
    if (auto cached = load_index_cache(path, key)) return std::move(*cached);
    EmbeddingIndex index = build_index(gateway, corpus, split, dimensionality);
    save_index_cache(path, index, key);
    return index;
}

std::vector<float> embed_query(Gateway& gateway, const Artifact& artifact, const CommentInstance& instance,
                               const RetrievalContext& ctx) {
    EmbeddingRequest req;
    req.text = build_query_text(artifact, instance, ctx.kind);
    req.dimensionality = ctx.index->dimensionality();
    req.lane = ctx.repeat;
    req.label = "query " + artifact.artifact_id;
    return gateway.embed(req);
}

std::vector<std::vector<Neighbor>> retrieve_for_artifact(Gateway& gateway, const Artifact& artifact,
                                                         const RetrievalContext& ctx, int k,
                                                         std::vector<std::string>* warnings) {
    if (!ctx.index) throw InvariantError("retrieval", "no index");
    std::vector<std::vector<Neighbor>> out;
    for (const auto& c : artifact.comments) {
        const auto q = embed_query(gateway, artifact, c, ctx);
        out.push_back(top_k(*ctx.index, q, k, warnings));
    }
    return out;
}

} // namespace rubriclearn
