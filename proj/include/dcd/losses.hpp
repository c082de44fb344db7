#pragma once

#include <vector>

#include "dcd/mining.hpp"
#include "dcd/numeric.hpp"

namespace dcd {

/// A scalar loss plus the per-query terms it reduces over (sum over queries).
struct LossValue {
    double value = 0.0;
    std::vector<double> per_query;
};

enum class WeightKind { kHard, kSoft };

/// Per-query batch weights: w (hard labels) or c (soft labels), summing to 1.
struct WeightVector {
    std::vector<double> values;
    WeightKind kind = WeightKind::kHard;

    void validate() const;  // sum 1 +- 1e-9, all entries > 0
};

WeightVector uniform_weights(size_t k, WeightKind kind);

/// Student and (adjusted) teacher logits over one query's candidates;
/// position 0 is the positive in both.
struct DistillPair {
    LogitVector student;
    LogitVector teacher;
};

// --- contrastive task losses ------------------------------------------------
// Every score vector carries the positive at position 0.

/// Σ_i -log softmax(scores_i)[0].
LossValue nce_loss(const std::vector<LogitVector>& scores);
std::vector<LogitVector> nce_loss_grad(const std::vector<LogitVector>& scores);

/// nce_loss restricted to one negative per query (length-2 vectors).
LossValue itm_loss(const std::vector<LogitVector>& scores);

/// Multi-negative matching loss over m_prime+1 candidates per query:
/// Σ_i -log( e^{s+} / (e^{s+} + Σ_j e^{s-_ij}) ).
LossValue itm_hard_loss(const std::vector<LogitVector>& scores);
std::vector<LogitVector> itm_hard_loss_grad(const std::vector<LogitVector>& scores);

/// itm_hard_loss with the student logits validated against the candidate
/// lists they were scored from.
LossValue itm_hard_loss(const std::vector<CandidateList>& candidates,
                        const std::vector<LogitVector>& student_scores);

// --- distillation losses ----------------------------------------------------

/// tau^2 * Σ_j p_t^j(tau) log(p_t^j(tau) / p_s^j(tau)) for one pair.
double kl_distill_term(const LogitVector& student, const LogitVector& teacher, double tau);
LossValue kl_distill_loss(const std::vector<DistillPair>& pairs, double tau);
std::vector<LogitVector> kl_distill_loss_grad(const std::vector<DistillPair>& pairs, double tau);

/// ||z_s - z_t||^2 per query, summed over the batch.
double mse_distill_term(const DistillPair& pair);
LossValue mse_distill_loss(const std::vector<DistillPair>& pairs);
std::vector<LogitVector> mse_distill_loss_grad(const std::vector<DistillPair>& pairs);

/// alpha * distill + (1 - alpha) * task.
LossValue vanilla_kd_objective(const LossValue& mse, const LossValue& task, double alpha);

// --- uncertainty weighting ----------------------------------------------------

/// Shannon entropy of softmax(adjusted logits, tau=1); in [0, ln n].
double teacher_uncertainty(const LogitVector& adjusted_teacher_logits);

/// w_i = u_i / Σ_j u_j; all-zero input falls back to uniform.
WeightVector hard_label_weights(const std::vector<double>& uncertainties);

/// c_i = exp((1 - w_i)^2) / Σ_j exp((1 - w_j)^2): monotone reversal of w.
WeightVector soft_label_weights(const WeightVector& hard);

/// -Σ_i w_i log( e^{s+_i} / (e^{s+_i} + Σ_j e^{s-_ij}) ).
LossValue witm_loss(const std::vector<LogitVector>& scores, const WeightVector& w);
std::vector<LogitVector> witm_loss_grad(const std::vector<LogitVector>& scores,
                                        const WeightVector& w);

/// Σ_i c_i ||z_i(student) - z_i(teacher)||^2.
LossValue wds_loss(const std::vector<DistillPair>& pairs, const WeightVector& c);
std::vector<LogitVector> wds_loss_grad(const std::vector<DistillPair>& pairs,
                                       const WeightVector& c);

/// alpha * wds + (1 - alpha) * witm.
LossValue dcd_objective(const LossValue& wds, const LossValue& witm, double alpha);

}  // namespace dcd
