#include "dcd/mining.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

namespace dcd {

void MiningConfig::validate() const {
    if (m_prime == 0 || m_prime > m) {
        throw ConfigError("mining requires 1 <= m_prime <= m, got m=" + std::to_string(m) +
                          " m_prime=" + std::to_string(m_prime));
    }
}

void validate_candidate_list(const CandidateList& cl) {
    const size_t n = cl.teacher_logits_raw.size();
    if (n == 0 || cl.teacher_logits_adjusted.size() != n ||
        cl.negative_key_ids.size() + 1 != n) {
        throw ShapeError("candidate list: inconsistent lengths");
    }
    auto raw = cl.teacher_logits_raw;
    auto adj = cl.teacher_logits_adjusted;
    std::sort(raw.begin(), raw.end());
    std::sort(adj.begin(), adj.end());
    if (raw != adj) throw NumericError("candidate list: adjusted logits are not a permutation");
    const auto mx = std::max_element(cl.teacher_logits_adjusted.begin(),
                                     cl.teacher_logits_adjusted.end());
    if (mx != cl.teacher_logits_adjusted.begin()) {
        throw NumericError("candidate list: adjusted argmax is not the positive");
    }
    std::set<int64_t> ids(cl.negative_key_ids.begin(), cl.negative_key_ids.end());
    if (ids.size() != cl.negative_key_ids.size() || ids.count(cl.positive_key_id) != 0) {
        throw UsageError("candidate list: negatives must be distinct and exclude the positive");
    }
}

namespace {

std::vector<size_t> negative_pool(const Batch& batch, size_t query_index) {
    const int64_t group = batch[query_index].image->group_id;
    std::vector<size_t> pool;
    pool.reserve(batch.size());
    for (size_t i = 0; i < batch.size(); ++i) {
        if (batch[i].text->group_id != group) pool.push_back(i);
    }
    return pool;
}

}  // namespace

std::vector<size_t> sample_negative_positions(const Batch& batch, size_t query_index, size_t m,
                                              Rng& rng) {
    std::vector<size_t> pool = negative_pool(batch, query_index);
    if (pool.size() < m) {
        throw ConfigError("negative pool too small: need " + std::to_string(m) + ", have " +
                          std::to_string(pool.size()));
    }
    // Partial Fisher-Yates: the first m slots become the sample.
    for (size_t i = 0; i < m; ++i) {
        const size_t j = i + static_cast<size_t>(rng.below(pool.size() - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(m);
    return pool;
}

std::vector<int64_t> sample_negatives(const Batch& batch, size_t query_index, size_t m, Rng& rng) {
    std::vector<int64_t> ids;
    ids.reserve(m);
    for (size_t pos : sample_negative_positions(batch, query_index, m, rng)) {
        ids.push_back(batch[pos].text->id);
    }
    return ids;
}

std::vector<size_t> select_hard_negatives(const LogitVector& teacher_scores, size_t m_prime) {
    if (m_prime > teacher_scores.size()) {
        throw ConfigError("select_hard_negatives: m_prime " + std::to_string(m_prime) +
                          " exceeds pool " + std::to_string(teacher_scores.size()));
    }
    std::vector<size_t> order(teacher_scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return teacher_scores[a] > teacher_scores[b];
    });
    order.resize(m_prime);
    return order;
}

LogitVector knowledge_adjust(const LogitVector& raw) {
    if (raw.empty()) throw UsageError("knowledge_adjust: empty logit vector");
    if (raw.size() == 1) return raw;

    LogitVector sorted_vals = raw;
    std::sort(sorted_vals.begin(), sorted_vals.end(), std::greater<>());

    // Negatives ranked by their own raw scores, stable by index.
    std::vector<size_t> neg_order(raw.size() - 1);
    std::iota(neg_order.begin(), neg_order.end(), 1);
    std::stable_sort(neg_order.begin(), neg_order.end(),
                     [&](size_t a, size_t b) { return raw[a] > raw[b]; });

    LogitVector out(raw.size());
    out[0] = sorted_vals[0];
    for (size_t r = 0; r < neg_order.size(); ++r) out[neg_order[r]] = sorted_vals[r + 1];
    return out;
}

CandidateList build_candidate_list(const ScorerParams& teacher, const Batch& batch,
                                   size_t query_index, const MiningConfig& config) {
    config.validate();
    Rng rng = Rng(config.seed).split(query_index);
    const std::vector<size_t> pool = sample_negative_positions(batch, query_index, config.m, rng);

    // One batched teacher pass over [positive; pool], position 0 positive.
    const BatchPair& query = batch[query_index];
    std::vector<const Matrix*> keys;
    keys.reserve(pool.size() + 1);
    keys.push_back(&query.text->vector);
    for (size_t pos : pool) keys.push_back(&batch[pos].text->vector);
    const LogitVector scores = score_candidates(teacher, query.image->vector, keys);

    LogitVector pool_scores(scores.begin() + 1, scores.end());
    const std::vector<size_t> kept = select_hard_negatives(pool_scores, config.m_prime);

    CandidateList cl;
    cl.query_id = query.image->id;
    cl.positive_key_id = query.text->id;
    cl.selection_provenance = kept;
    cl.teacher_logits_raw.push_back(scores[0]);
    for (size_t k : kept) {
        cl.negative_key_ids.push_back(batch[pool[k]].text->id);
        cl.teacher_logits_raw.push_back(pool_scores[k]);
    }
    cl.teacher_logits_adjusted = knowledge_adjust(cl.teacher_logits_raw);
    return cl;
}

void dump_candidate_lists(std::ostream& out, const std::vector<CandidateList>& lists) {
    auto join_i = [](const auto& v) {
        std::string s;
        for (size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        return s;
    };
    auto join_d = [](const LogitVector& v) {
        std::string s;
        char buf[32];
        for (size_t i = 0; i < v.size(); ++i) {
            snprintf(buf, sizeof buf, "%.17g", v[i]);
            s += (i ? "," : "") + std::string(buf);
        }
        return s;
    };
    for (const auto& cl : lists) {
        out << "query=" << cl.query_id << " pos=" << cl.positive_key_id << " negs="
            << join_i(cl.negative_key_ids) << " raw=" << join_d(cl.teacher_logits_raw)
            << " adjusted=" << join_d(cl.teacher_logits_adjusted) << " provenance="
            << join_i(cl.selection_provenance) << "\n";
    }
}

}  // namespace dcd
