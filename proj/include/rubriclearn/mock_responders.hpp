#pragma once

#include "rubriclearn/corpus.hpp"
#include "rubriclearn/mock_provider.hpp"

#include <memory>
#include <string_view>
#include <vector>

namespace rubriclearn {

/// Registers the built-in scripted behaviours on `mock`:
///   echo_references     generation: return each position's reference comment
///                       (params: cite [ids], omit [positions], prefix "")
///   judge_exact         judging: match_score (10) for identical pairs, else
///                       mismatch_score (0); drop N trailing scores
///   echo_rubric         refinement: return the current round's criteria
///   identity_revision   revision: return the artifact unchanged (append "")
///   satisfy_count       satisfaction: first `count` items satisfied
///   satisfy_all / satisfy_none
///   hash_embedding      embedding seeded by the full input text
///   quote_keyed_embedding
///                       embedding keyed by the target quote, so a comment
///                       document embeds like the quote it was written for
/// `corpus` is needed by echo_references and quote_keyed_embedding.
void register_builtin_responders(MockProvider& mock, std::shared_ptr<const Corpus> corpus);

/// Deterministic pseudo-random vector in [-1, 1]^dims keyed by `key`.
std::vector<double> hash_embedding(std::string_view key, int dims);

} // namespace rubriclearn
