#include "dcd/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "dcd/losses.hpp"
#include "dcd/model.hpp"
#include "dcd/rng.hpp"

namespace dcd {

namespace {

constexpr double kPassThreshold = 1e-4;
constexpr double kAbsFloor = 1e-8;

double elem_error(double analytic, double fd) {
    const double mag = std::max(std::fabs(analytic), std::fabs(fd));
    if (mag < kAbsFloor) return std::fabs(analytic - fd);
    return std::fabs(analytic - fd) / mag;
}

// Random batch of score vectors flattened into one parameter matrix so the
// finite-difference oracle can probe every logit.
struct LogitBatch {
    std::vector<size_t> lengths;
    Matrix flat;  // 1 x total

    std::vector<LogitVector> unpack(const Matrix& m) const {
        std::vector<LogitVector> out;
        size_t o = 0;
        for (size_t len : lengths) {
            out.emplace_back(m.data().begin() + static_cast<ptrdiff_t>(o),
                             m.data().begin() + static_cast<ptrdiff_t>(o + len));
            o += len;
        }
        return out;
    }
};

LogitBatch random_batch(Rng& rng, size_t k, size_t min_len, size_t max_len, bool equal_lengths) {
    LogitBatch b;
    const size_t fixed = min_len + static_cast<size_t>(rng.below(max_len - min_len + 1));
    size_t total = 0;
    for (size_t i = 0; i < k; ++i) {
        const size_t len =
            equal_lengths ? fixed : min_len + static_cast<size_t>(rng.below(max_len - min_len + 1));
        b.lengths.push_back(len);
        total += len;
    }
    b.flat = Matrix(1, total);
    for (double& v : b.flat.data()) v = rng.uniform(-2.0, 2.0);
    return b;
}

Matrix pack_grads(const std::vector<LogitVector>& grads) {
    size_t total = 0;
    for (const auto& g : grads) total += g.size();
    Matrix out(1, total);
    size_t o = 0;
    for (const auto& g : grads) {
        for (double v : g) out.data()[o++] = v;
    }
    return out;
}

double worst_err(const Matrix& analytic, const Matrix& fd) {
    double worst = 0.0;
    for (size_t i = 0; i < analytic.size(); ++i) {
        worst = std::max(worst, elem_error(analytic.data()[i], fd.data()[i]));
    }
    return worst;
}

using LossFn = std::function<double(const std::vector<LogitVector>&)>;
using GradFn = std::function<std::vector<LogitVector>(const std::vector<LogitVector>&)>;

// One check instance over the flattened logit batch.
double check_instance(const LogitBatch& batch, const LossFn& f, const GradFn& g, double step) {
    Matrix analytic = pack_grads(g(batch.unpack(batch.flat)));
    Matrix fd = finite_diff_grad([&](const Matrix& m) { return f(batch.unpack(m)); }, batch.flat,
                                 step);
    return worst_err(analytic, fd);
}

WeightVector random_weights(Rng& rng, size_t k, WeightKind kind) {
    std::vector<double> u(k);
    for (double& v : u) v = rng.uniform(0.1, 2.0);
    WeightVector w = hard_label_weights(u);
    w.kind = kind;
    return w;
}

std::vector<DistillPair> to_pairs(const std::vector<LogitVector>& student,
                                  const std::vector<LogitVector>& teacher) {
    std::vector<DistillPair> out(student.size());
    for (size_t i = 0; i < student.size(); ++i) out[i] = DistillPair{student[i], teacher[i]};
    return out;
}

}  // namespace

std::vector<GradCheckResult> run_gradient_checks(size_t instances, double step,
                                                 const std::string& corrupt) {
    std::vector<GradCheckResult> results;
    Rng rng(0xdcdc0deULL);

    auto run = [&](const std::string& name, const std::function<double(Rng&)>& one_instance) {
        GradCheckResult r;
        r.name = name;
        for (size_t i = 0; i < instances; ++i) {
            Rng case_rng = rng.split(i);
            double err = one_instance(case_rng);
            if (corrupt == name) err += 1.0;  // test hook: force a visible failure
            r.worst_rel_err = std::max(r.worst_rel_err, err);
        }
        r.pass = r.worst_rel_err < kPassThreshold;
        results.push_back(r);
    };

    run("nce", [&](Rng& r) {
        LogitBatch b = random_batch(r, 3, 2, 8, false);
        return check_instance(
            b, [](const auto& s) { return nce_loss(s).value; },
            [](const auto& s) { return nce_loss_grad(s); }, step);
    });

    run("itm", [&](Rng& r) {
        LogitBatch b = random_batch(r, 4, 2, 2, true);
        return check_instance(
            b, [](const auto& s) { return itm_loss(s).value; },
            [](const auto& s) { return nce_loss_grad(s); }, step);
    });

    run("itm_hard", [&](Rng& r) {
        LogitBatch b = random_batch(r, 3, 4, 8, true);
        return check_instance(
            b, [](const auto& s) { return itm_hard_loss(s).value; },
            [](const auto& s) { return itm_hard_loss_grad(s); }, step);
    });

    run("kl_distill", [&](Rng& r) {
        LogitBatch b = random_batch(r, 3, 3, 6, true);
        const double tau = r.uniform(0.5, 2.0);
        LogitBatch teacher = random_batch(r, 3, b.lengths[0], b.lengths[0], true);
        auto t = teacher.unpack(teacher.flat);
        return check_instance(
            b, [&](const auto& s) { return kl_distill_loss(to_pairs(s, t), tau).value; },
            [&](const auto& s) { return kl_distill_loss_grad(to_pairs(s, t), tau); }, step);
    });

    run("mse_distill", [&](Rng& r) {
        LogitBatch b = random_batch(r, 3, 3, 6, true);
        LogitBatch teacher = random_batch(r, 3, b.lengths[0], b.lengths[0], true);
        auto t = teacher.unpack(teacher.flat);
        return check_instance(
            b, [&](const auto& s) { return mse_distill_loss(to_pairs(s, t)).value; },
            [&](const auto& s) { return mse_distill_loss_grad(to_pairs(s, t)); }, step);
    });

    run("vanilla_kd_objective", [&](Rng& r) {
        LogitBatch b = random_batch(r, 3, 3, 6, true);
        LogitBatch teacher = random_batch(r, 3, b.lengths[0], b.lengths[0], true);
        auto t = teacher.unpack(teacher.flat);
        const double alpha = r.next_double();
        return check_instance(
            b,
            [&](const auto& s) {
                return vanilla_kd_objective(mse_distill_loss(to_pairs(s, t)), itm_hard_loss(s),
                                            alpha)
                    .value;
            },
            [&](const auto& s) {
                auto gm = mse_distill_loss_grad(to_pairs(s, t));
                auto gt = itm_hard_loss_grad(s);
                for (size_t i = 0; i < gm.size(); ++i) {
                    for (size_t j = 0; j < gm[i].size(); ++j) {
                        gm[i][j] = alpha * gm[i][j] + (1.0 - alpha) * gt[i][j];
                    }
                }
                return gm;
            },
            step);
    });

    run("witm", [&](Rng& r) {
        LogitBatch b = random_batch(r, 4, 3, 6, true);
        WeightVector w = random_weights(r, 4, WeightKind::kHard);
        return check_instance(
            b, [&](const auto& s) { return witm_loss(s, w).value; },
            [&](const auto& s) { return witm_loss_grad(s, w); }, step);
    });

    run("wds", [&](Rng& r) {
        LogitBatch b = random_batch(r, 4, 3, 6, true);
        LogitBatch teacher = random_batch(r, 4, b.lengths[0], b.lengths[0], true);
        auto t = teacher.unpack(teacher.flat);
        WeightVector c = random_weights(r, 4, WeightKind::kSoft);
        return check_instance(
            b, [&](const auto& s) { return wds_loss(to_pairs(s, t), c).value; },
            [&](const auto& s) { return wds_loss_grad(to_pairs(s, t), c); }, step);
    });

    run("dcd_objective", [&](Rng& r) {
        LogitBatch b = random_batch(r, 4, 3, 6, true);
        LogitBatch teacher = random_batch(r, 4, b.lengths[0], b.lengths[0], true);
        auto t = teacher.unpack(teacher.flat);
        WeightVector w = random_weights(r, 4, WeightKind::kHard);
        WeightVector c = soft_label_weights(w);
        const double alpha = r.next_double();
        return check_instance(
            b,
            [&](const auto& s) {
                return dcd_objective(wds_loss(to_pairs(s, t), c), witm_loss(s, w), alpha).value;
            },
            [&](const auto& s) {
                auto gd = wds_loss_grad(to_pairs(s, t), c);
                auto gt = witm_loss_grad(s, w);
                for (size_t i = 0; i < gd.size(); ++i) {
                    for (size_t j = 0; j < gd[i].size(); ++j) {
                        gd[i][j] = alpha * gd[i][j] + (1.0 - alpha) * gt[i][j];
                    }
                }
                return gd;
            },
            step);
    });

    // End-to-end: objective as a function of the student parameters, analytic
    // gradient through the tape vs finite differences over the flat params.
    run("student_end_to_end", [&](Rng& r) {
        const size_t k = 3, cand = 3, img_d = 3, txt_d = 3;
        ScorerConfig sc{img_d, txt_d, {5}, r.next_u64(), Role::kStudent};
        ScorerParams student = init_scorer(sc);

        Matrix input(k * cand, img_d + txt_d);
        for (double& v : input.data()) v = r.uniform(-1.0, 1.0);
        std::vector<LogitVector> teacher_logits(k, LogitVector(cand));
        for (auto& tl : teacher_logits) {
            for (double& v : tl) v = r.uniform(-1.0, 1.0);
        }
        WeightVector w = random_weights(r, k, WeightKind::kHard);
        WeightVector c = soft_label_weights(w);
        const double alpha = r.next_double();

        auto objective = [&](const ScorerParams& p, GradTape* tape,
                             std::vector<LogitVector>* out_scores) {
            Matrix logits = tape != nullptr ? forward(p, input, *tape) : forward(p, input);
            std::vector<LogitVector> scores(k, LogitVector(cand));
            for (size_t q = 0; q < k; ++q) {
                for (size_t ci = 0; ci < cand; ++ci) scores[q][ci] = logits.at(q * cand + ci, 0);
            }
            if (out_scores != nullptr) *out_scores = scores;
            auto pairs = to_pairs(scores, teacher_logits);
            return dcd_objective(wds_loss(pairs, c), witm_loss(scores, w), alpha).value;
        };

        GradTape tape;
        std::vector<LogitVector> scores;
        objective(student, &tape, &scores);
        auto pairs = to_pairs(scores, teacher_logits);
        auto gd = wds_loss_grad(pairs, c);
        auto gt = witm_loss_grad(scores, w);
        Matrix upstream(k * cand, 1);
        for (size_t q = 0; q < k; ++q) {
            for (size_t ci = 0; ci < cand; ++ci) {
                upstream.at(q * cand + ci, 0) = alpha * gd[q][ci] + (1.0 - alpha) * gt[q][ci];
            }
        }
        ParamGrads grads = zero_grads(student);
        backward(tape, student.weights, upstream, grads);

        Matrix analytic(1, student.param_count());
        {
            ScorerParams shape = student;
            shape.weights = grads.weights;
            shape.bias = grads.bias;
            analytic = flatten_params(shape);
        }
        ScorerParams probe = student;
        Matrix fd = finite_diff_grad(
            [&](const Matrix& flat) {
                unflatten_params(flat, probe);
                return objective(probe, nullptr, nullptr);
            },
            flatten_params(student), step);
        return worst_err(analytic, fd);
    });

    run("task_end_to_end", [&](Rng& r) {
        const size_t k = 2, cand = 4, img_d = 2, txt_d = 3;
        ScorerConfig sc{img_d, txt_d, {4, 4}, r.next_u64(), Role::kTeacher};
        ScorerParams net = init_scorer(sc);
        Matrix input(k * cand, img_d + txt_d);
        for (double& v : input.data()) v = r.uniform(-1.0, 1.0);

        auto task = [&](const ScorerParams& p, GradTape* tape,
                        std::vector<LogitVector>* out_scores) {
            Matrix logits = tape != nullptr ? forward(p, input, *tape) : forward(p, input);
            std::vector<LogitVector> scores(k, LogitVector(cand));
            for (size_t q = 0; q < k; ++q) {
                for (size_t ci = 0; ci < cand; ++ci) scores[q][ci] = logits.at(q * cand + ci, 0);
            }
            if (out_scores != nullptr) *out_scores = scores;
            return itm_hard_loss(scores).value;
        };

        GradTape tape;
        std::vector<LogitVector> scores;
        task(net, &tape, &scores);
        auto g = itm_hard_loss_grad(scores);
        Matrix upstream(k * cand, 1);
        for (size_t q = 0; q < k; ++q) {
            for (size_t ci = 0; ci < cand; ++ci) upstream.at(q * cand + ci, 0) = g[q][ci];
        }
        ParamGrads grads = zero_grads(net);
        backward(tape, net.weights, upstream, grads);
        ScorerParams shape = net;
        shape.weights = grads.weights;
        shape.bias = grads.bias;
        Matrix analytic = flatten_params(shape);

        ScorerParams probe = net;
        Matrix fd = finite_diff_grad(
            [&](const Matrix& flat) {
                unflatten_params(flat, probe);
                return task(probe, nullptr, nullptr);
            },
            flatten_params(net), step);
        return worst_err(analytic, fd);
    });

    return results;
}

bool all_pass(const std::vector<GradCheckResult>& results) {
    return std::all_of(results.begin(), results.end(), [](const auto& r) { return r.pass; });
}

}  // namespace dcd
