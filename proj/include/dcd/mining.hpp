#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dcd/data.hpp"
#include "dcd/model.hpp"
#include "dcd/rng.hpp"

namespace dcd {

/// One matched (image, text) pair inside a training batch.
struct BatchPair {
    const FeatureRecord* image;
    const FeatureRecord* text;
};

using Batch = std::vector<BatchPair>;

struct MiningConfig {
    size_t m = 63;        // negatives scored by the teacher per query
    size_t m_prime = 7;   // negatives kept for the student
    uint64_t seed = 0;

    void validate() const;
};

/// One query's selected candidates and the teacher's view of them.
/// Position 0 of both logit vectors is the positive pair by construction;
/// the adjusted vector is a permutation of the raw one with argmax at 0.
struct CandidateList {
    int64_t query_id = 0;
    int64_t positive_key_id = 0;
    std::vector<int64_t> negative_key_ids;     // length m_prime, distinct, never the positive
    LogitVector teacher_logits_raw;            // length m_prime + 1
    LogitVector teacher_logits_adjusted;       // length m_prime + 1
    std::vector<size_t> selection_provenance;  // indices into the original m-negative pool
};

/// Throws if any CandidateList invariant is violated.
void validate_candidate_list(const CandidateList& cl);

/// m distinct non-matching key ids for the query at `query_index`, uniform
/// without replacement from the batch texts whose group differs from the
/// query's. Deterministic per rng state.
std::vector<int64_t> sample_negatives(const Batch& batch, size_t query_index, size_t m, Rng& rng);

/// Same sample as sample_negatives but as batch positions (identical rng
/// consumption, so both views of one draw agree).
std::vector<size_t> sample_negative_positions(const Batch& batch, size_t query_index, size_t m,
                                              Rng& rng);

/// Indices of the m_prime largest scores, descending, ties broken by smaller
/// original index. Equivalent to a full descending sort truncated to m_prime.
std::vector<size_t> select_hard_negatives(const LogitVector& teacher_scores, size_t m_prime);

/// Moves the maximum score to the positive position while preserving the
/// score multiset: position 0 receives max(raw); the remaining values are
/// assigned in descending order to the negatives ordered by their own raw
/// scores (stable by index).
LogitVector knowledge_adjust(const LogitVector& raw);

/// sample m negatives -> teacher scores positive + pool -> keep top m_prime
/// -> knowledge adjustment. The positive is always position 0 regardless of
/// its teacher rank. Per-query rng is split from config.seed, so concurrent
/// per-query construction cannot change outputs.
CandidateList build_candidate_list(const ScorerParams& teacher, const Batch& batch,
                                   size_t query_index, const MiningConfig& config);

/// Line-delimited debug dump (query id, key ids, raw/adjusted logits).
void dump_candidate_lists(std::ostream& out, const std::vector<CandidateList>& lists);

}  // namespace dcd
