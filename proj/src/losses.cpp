#include "dcd/losses.hpp"

#include <algorithm>
#include <cmath>

namespace dcd {

void WeightVector::validate() const {
    if (values.empty()) throw UsageError("weight vector: empty");
    double sum = 0.0;
    for (double v : values) {
        if (!(v > 0.0)) throw NumericError("weight vector: non-positive weight");
        sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-9) {
        throw NumericError("weight vector: sum " + std::to_string(sum) + " != 1");
    }
}

WeightVector uniform_weights(size_t k, WeightKind kind) {
    if (k == 0) throw UsageError("uniform_weights: empty batch");
    return WeightVector{std::vector<double>(k, 1.0 / static_cast<double>(k)), kind};
}

namespace {

double log_sum_exp(const LogitVector& v) {
    double mx = *std::max_element(v.begin(), v.end());
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - mx);
    return mx + std::log(acc);
}

// -log softmax(scores)[0], stable.
double positive_nll(const LogitVector& scores) {
    if (scores.empty()) throw UsageError("contrastive term: empty score vector");
    for (double v : scores) {
        if (!std::isfinite(v)) throw NumericError("contrastive term: non-finite logit");
    }
    return log_sum_exp(scores) - scores[0];
}

LogitVector positive_nll_grad(const LogitVector& scores) {
    LogitVector g = stable_softmax(scores);
    g[0] -= 1.0;
    return g;
}

void check_batch(const std::vector<LogitVector>& scores, const char* op) {
    if (scores.empty()) throw UsageError(std::string(op) + ": empty batch");
}

void check_pair(const DistillPair& p, const char* op) {
    if (p.student.size() != p.teacher.size() || p.student.empty()) {
        throw ShapeError(std::string(op) + ": student " + std::to_string(p.student.size()) +
                         " vs teacher " + std::to_string(p.teacher.size()) + " logits");
    }
}

void check_weights(size_t n, const WeightVector& w, const char* op) {
    if (w.values.size() != n) {
        throw ShapeError(std::string(op) + ": " + std::to_string(w.values.size()) +
                         " weights for batch of " + std::to_string(n));
    }
}

void check_alpha(double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
}

LossValue reduce(std::vector<double> terms) {
    LossValue out;
    out.per_query = std::move(terms);
    for (double t : out.per_query) out.value += t;
    return out;
}

}  // namespace

LossValue nce_loss(const std::vector<LogitVector>& scores) {
    check_batch(scores, "nce_loss");
    std::vector<double> terms;
    terms.reserve(scores.size());
    for (const auto& s : scores) terms.push_back(positive_nll(s));
    return reduce(std::move(terms));
}

std::vector<LogitVector> nce_loss_grad(const std::vector<LogitVector>& scores) {
    check_batch(scores, "nce_loss");
    std::vector<LogitVector> g;
    g.reserve(scores.size());
    for (const auto& s : scores) g.push_back(positive_nll_grad(s));
    return g;
}

LossValue itm_loss(const std::vector<LogitVector>& scores) {
    check_batch(scores, "itm_loss");
    for (const auto& s : scores) {
        if (s.size() != 2) {
            throw UsageError("itm_loss expects exactly one negative per query, got vector of " +
                             std::to_string(s.size()));
        }
    }
    return nce_loss(scores);
}

LossValue itm_hard_loss(const std::vector<LogitVector>& scores) { return nce_loss(scores); }

std::vector<LogitVector> itm_hard_loss_grad(const std::vector<LogitVector>& scores) {
    return nce_loss_grad(scores);
}

LossValue itm_hard_loss(const std::vector<CandidateList>& candidates,
                        const std::vector<LogitVector>& student_scores) {
    if (candidates.size() != student_scores.size()) {
        throw ShapeError("itm_hard_loss: " + std::to_string(candidates.size()) +
                         " candidate lists vs " + std::to_string(student_scores.size()) +
                         " score vectors");
    }
    for (size_t i = 0; i < candidates.size(); ++i) {
        if (student_scores[i].size() != candidates[i].teacher_logits_raw.size()) {
            throw ShapeError("itm_hard_loss: query " + std::to_string(i) + " has " +
                             std::to_string(student_scores[i].size()) + " student logits vs " +
                             std::to_string(candidates[i].teacher_logits_raw.size()) +
                             " candidates");
        }
    }
    return itm_hard_loss(student_scores);
}

double kl_distill_term(const LogitVector& student, const LogitVector& teacher, double tau) {
    if (tau <= 0.0) throw ConfigError("kl_distill: tau must be > 0");
    if (student.size() != teacher.size() || student.empty()) {
        throw ShapeError("kl_distill: student " + std::to_string(student.size()) + " vs teacher " +
                         std::to_string(teacher.size()) + " logits");
    }
    for (size_t i = 0; i < student.size(); ++i) {
        if (!std::isfinite(student[i]) || !std::isfinite(teacher[i])) {
            throw NumericError("kl_distill: non-finite logit");
        }
    }
    // Log-probs computed directly so underflowing probabilities stay finite.
    const size_t n = student.size();
    LogitVector ls(n), lt(n);
    double lses = 0.0, lset = 0.0;
    {
        LogitVector ss(n), tt(n);
        for (size_t i = 0; i < n; ++i) {
            ss[i] = student[i] / tau;
            tt[i] = teacher[i] / tau;
        }
        lses = log_sum_exp(ss);
        lset = log_sum_exp(tt);
        for (size_t i = 0; i < n; ++i) {
            ls[i] = ss[i] - lses;
            lt[i] = tt[i] - lset;
        }
    }
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double pt = std::exp(lt[i]);
        if (pt > 0.0) acc += pt * (lt[i] - ls[i]);
    }
    return tau * tau * acc;
}

LossValue kl_distill_loss(const std::vector<DistillPair>& pairs, double tau) {
    if (pairs.empty()) throw UsageError("kl_distill_loss: empty batch");
    std::vector<double> terms;
    terms.reserve(pairs.size());
    for (const auto& p : pairs) terms.push_back(kl_distill_term(p.student, p.teacher, tau));
    return reduce(std::move(terms));
}

std::vector<LogitVector> kl_distill_loss_grad(const std::vector<DistillPair>& pairs, double tau) {
    if (pairs.empty()) throw UsageError("kl_distill_loss: empty batch");
    std::vector<LogitVector> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        check_pair(p, "kl_distill_loss");
        LogitVector ps = stable_softmax(p.student, tau);
        LogitVector pt = stable_softmax(p.teacher, tau);
        LogitVector g(ps.size());
        for (size_t i = 0; i < g.size(); ++i) g[i] = tau * (ps[i] - pt[i]);
        out.push_back(std::move(g));
    }
    return out;
}

double mse_distill_term(const DistillPair& pair) {
    check_pair(pair, "mse_distill");
    double acc = 0.0;
    for (size_t i = 0; i < pair.student.size(); ++i) {
        const double d = pair.student[i] - pair.teacher[i];
        acc += d * d;
    }
    return acc;
}

LossValue mse_distill_loss(const std::vector<DistillPair>& pairs) {
    if (pairs.empty()) throw UsageError("mse_distill_loss: empty batch");
    std::vector<double> terms;
    terms.reserve(pairs.size());
    for (const auto& p : pairs) terms.push_back(mse_distill_term(p));
    return reduce(std::move(terms));
}

std::vector<LogitVector> mse_distill_loss_grad(const std::vector<DistillPair>& pairs) {
    if (pairs.empty()) throw UsageError("mse_distill_loss: empty batch");
    std::vector<LogitVector> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        check_pair(p, "mse_distill_loss");
        LogitVector g(p.student.size());
        for (size_t i = 0; i < g.size(); ++i) g[i] = 2.0 * (p.student[i] - p.teacher[i]);
        out.push_back(std::move(g));
    }
    return out;
}

LossValue vanilla_kd_objective(const LossValue& mse, const LossValue& task, double alpha) {
    check_alpha(alpha);
    if (mse.per_query.size() != task.per_query.size()) {
        throw ShapeError("vanilla_kd_objective: " + std::to_string(mse.per_query.size()) +
                         " distill terms vs " + std::to_string(task.per_query.size()) +
                         " task terms");
    }
    LossValue out;
    out.per_query.resize(task.per_query.size());
    for (size_t i = 0; i < out.per_query.size(); ++i) {
        out.per_query[i] = alpha * mse.per_query[i] + (1.0 - alpha) * task.per_query[i];
    }
    out.value = alpha * mse.value + (1.0 - alpha) * task.value;
    return out;
}

double teacher_uncertainty(const LogitVector& adjusted_teacher_logits) {
    LogitVector p = stable_softmax(adjusted_teacher_logits);
    double u = 0.0;
    for (double pi : p) {
        if (pi > 0.0) u -= pi * std::log(pi);
    }
    return u;
}

WeightVector hard_label_weights(const std::vector<double>& uncertainties) {
    if (uncertainties.empty()) throw UsageError("hard_label_weights: empty batch");
    double sum = 0.0;
    for (double u : uncertainties) {
        if (!(u >= 0.0) || !std::isfinite(u)) {
            throw UsageError("hard_label_weights: uncertainties must be finite and >= 0");
        }
        sum += u;
    }
    WeightVector w;
    w.kind = WeightKind::kHard;
    if (sum == 0.0) {
        // Degenerate all-zero entropies: fall back to uniform.
        w.values.assign(uncertainties.size(), 1.0 / static_cast<double>(uncertainties.size()));
    } else {
        w.values.reserve(uncertainties.size());
        for (double u : uncertainties) w.values.push_back(u / sum);
    }
    return w;
}

WeightVector soft_label_weights(const WeightVector& hard) {
    if (hard.kind != WeightKind::kHard) throw UsageError("soft_label_weights: expects hard weights");
    if (hard.values.empty()) throw UsageError("soft_label_weights: empty weights");
    WeightVector c;
    c.kind = WeightKind::kSoft;
    c.values.reserve(hard.values.size());
    double sum = 0.0;
    for (double w : hard.values) {
        const double e = std::exp((1.0 - w) * (1.0 - w));
        c.values.push_back(e);
        sum += e;
    }
    for (double& v : c.values) v /= sum;
    return c;
}

LossValue witm_loss(const std::vector<LogitVector>& scores, const WeightVector& w) {
    check_batch(scores, "witm_loss");
    check_weights(scores.size(), w, "witm_loss");
    std::vector<double> terms;
    terms.reserve(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) terms.push_back(w.values[i] * positive_nll(scores[i]));
    return reduce(std::move(terms));
}

std::vector<LogitVector> witm_loss_grad(const std::vector<LogitVector>& scores,
                                        const WeightVector& w) {
    check_batch(scores, "witm_loss");
    check_weights(scores.size(), w, "witm_loss");
    std::vector<LogitVector> out;
    out.reserve(scores.size());
    for (size_t i = 0; i < scores.size(); ++i) {
        LogitVector g = positive_nll_grad(scores[i]);
        for (double& v : g) v *= w.values[i];
        out.push_back(std::move(g));
    }
    return out;
}

LossValue wds_loss(const std::vector<DistillPair>& pairs, const WeightVector& c) {
    if (pairs.empty()) throw UsageError("wds_loss: empty batch");
    check_weights(pairs.size(), c, "wds_loss");
    std::vector<double> terms;
    terms.reserve(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) terms.push_back(c.values[i] * mse_distill_term(pairs[i]));
    return reduce(std::move(terms));
}

std::vector<LogitVector> wds_loss_grad(const std::vector<DistillPair>& pairs,
                                       const WeightVector& c) {
    if (pairs.empty()) throw UsageError("wds_loss: empty batch");
    check_weights(pairs.size(), c, "wds_loss");
    std::vector<LogitVector> out;
    out.reserve(pairs.size());
    for (size_t i = 0; i < pairs.size(); ++i) {
        check_pair(pairs[i], "wds_loss");
        LogitVector g(pairs[i].student.size());
        for (size_t j = 0; j < g.size(); ++j) {
            g[j] = 2.0 * c.values[i] * (pairs[i].student[j] - pairs[i].teacher[j]);
        }
        out.push_back(std::move(g));
    }
    return out;
}

LossValue dcd_objective(const LossValue& wds, const LossValue& witm, double alpha) {
    check_alpha(alpha);
    if (wds.per_query.size() != witm.per_query.size()) {
        throw ShapeError("dcd_objective: " + std::to_string(wds.per_query.size()) +
                         " distill terms vs " + std::to_string(witm.per_query.size()) +
                         " task terms");
    }
    LossValue out;
    out.per_query.resize(witm.per_query.size());
    for (size_t i = 0; i < out.per_query.size(); ++i) {
        out.per_query[i] = alpha * wds.per_query[i] + (1.0 - alpha) * witm.per_query[i];
    }
    out.value = alpha * wds.value + (1.0 - alpha) * witm.value;
    return out;
}

}  // namespace dcd
