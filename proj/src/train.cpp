#include "dcd/train.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <unordered_map>

#include "dcd/eval.hpp"
#include "dcd/kernels.hpp"
#include "dcd/mining.hpp"
#include "dcd/rng.hpp"

namespace dcd {

std::string regime_name(Regime r) {
    switch (r) {
        case Regime::kFinetune: return "finetune";
        case Regime::kVanillaKd: return "vanilla_kd";
        case Regime::kDcd: return "dcd";
        case Regime::kAblation: return "ablation";
        case Regime::kStudentUncertainty: return "student_uncertainty";
    }
    return "?";
}

Regime regime_from_name(const std::string& s) {
    if (s == "finetune") return Regime::kFinetune;
    if (s == "vanilla_kd" || s == "vanilla") return Regime::kVanillaKd;
    if (s == "dcd") return Regime::kDcd;
    if (s == "ablation") return Regime::kAblation;
    if (s == "student_uncertainty") return Regime::kStudentUncertainty;
    throw ConfigError("unknown regime '" + s + "'");
}

void TrainConfig::validate() const {
    if (m_prime == 0 || m_prime > m) {
        throw ConfigError("train config: need 1 <= m_prime <= m, got " + std::to_string(m_prime) +
                          "/" + std::to_string(m));
    }
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("train config: alpha outside [0, 1]");
    if (!(tau > 0.0)) throw ConfigError("train config: tau must be > 0");
    if (!(opt.lr > 0.0)) throw ConfigError("train config: learning rate must be > 0");
    if (batch == 0 || epochs == 0) throw ConfigError("train config: batch and epochs must be > 0");
    if (regime == Regime::kAblation && (hw || sw) && !ds_ka) {
        throw ConfigError("train config: hw/sw weighting requires ds_ka");
    }
    if (student_hidden.empty() || teacher_hidden.empty()) {
        throw ConfigError("train config: hidden widths must be non-empty");
    }
}

bool TrainConfig::use_selection() const {
    return regime == Regime::kDcd || regime == Regime::kStudentUncertainty ||
           (regime == Regime::kAblation && ds_ka);
}

bool TrainConfig::use_hw() const {
    return regime == Regime::kDcd || regime == Regime::kStudentUncertainty ||
           (regime == Regime::kAblation && hw);
}

bool TrainConfig::use_sw() const {
    return regime == Regime::kDcd || regime == Regime::kStudentUncertainty ||
           (regime == Regime::kAblation && sw);
}

AdamState init_adam(const ScorerParams& params) {
    AdamState s;
    for (size_t i = 0; i < params.num_layers(); ++i) {
        s.m_w.emplace_back(params.weights[i].rows(), params.weights[i].cols());
        s.v_w.emplace_back(params.weights[i].rows(), params.weights[i].cols());
        s.m_b.emplace_back(1, params.bias[i].cols());
        s.v_b.emplace_back(1, params.bias[i].cols());
    }
    return s;
}

namespace {

void adam_update(Matrix& theta, const Matrix& g, Matrix& m, Matrix& v, size_t step,
                 const OptimizerConfig& o) {
    if (!theta.same_shape(g)) {
        throw ShapeError("optimizer_step: params " + theta.shape_str() + " vs grads " +
                         g.shape_str());
    }
    const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(step));
    for (size_t i = 0; i < theta.size(); ++i) {
        const double gi = g.data()[i];
        m.data()[i] = o.beta1 * m.data()[i] + (1.0 - o.beta1) * gi;
        v.data()[i] = o.beta2 * v.data()[i] + (1.0 - o.beta2) * gi * gi;
        const double mhat = m.data()[i] / bc1;
        const double vhat = v.data()[i] / bc2;
        theta.data()[i] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
    }
}

}  // namespace

void optimizer_step(ScorerParams& params, const ParamGrads& grads, AdamState& state,
                    const OptimizerConfig& opt) {
    if (grads.weights.size() != params.num_layers()) {
        throw ShapeError("optimizer_step: " + std::to_string(grads.weights.size()) +
                         " gradient slots vs " + std::to_string(params.num_layers()) + " layers");
    }
    ++state.step;
    for (size_t i = 0; i < params.num_layers(); ++i) {
        adam_update(params.weights[i], grads.weights[i], state.m_w[i], state.v_w[i], state.step,
                    opt);
        adam_update(params.bias[i], grads.bias[i], state.m_b[i], state.v_b[i], state.step, opt);
    }
}

namespace {

struct QueryCandidates {
    std::vector<size_t> key_positions;  // batch positions, [0] = the query's own text
    LogitVector teacher_targets;        // empty without a teacher
    double teacher_entropy = 0.0;
    CandidateList list;                 // filled only on the selection path
    bool has_list = false;
};

Batch assemble_batch(const Split& split, const std::vector<size_t>& pair_indices) {
    Batch batch;
    batch.reserve(pair_indices.size());
    for (size_t pi : pair_indices) {
        const auto& [img, txt] = split.pairs[pi];
        batch.push_back(BatchPair{&split.images[img], &split.texts[txt]});
    }
    return batch;
}

// One query's candidates: the forced positive plus either teacher-selected
// hard negatives (with knowledge adjustment) or plain random negatives.
QueryCandidates build_query_candidates(const Batch& batch, size_t q, const ScorerParams* teacher,
                                       const TrainConfig& cfg, uint64_t step_seed) {
    QueryCandidates out;
    if (cfg.use_selection()) {
        MiningConfig mc{cfg.m, cfg.m_prime, step_seed};
        out.list = build_candidate_list(*teacher, batch, q, mc);
        out.has_list = true;
        out.teacher_targets = out.list.teacher_logits_adjusted;
        out.teacher_entropy = teacher_uncertainty(out.list.teacher_logits_adjusted);
        // Recover batch positions from the kept key ids.
        std::unordered_map<int64_t, size_t> pos_by_id;
        pos_by_id.reserve(batch.size());
        for (size_t i = 0; i < batch.size(); ++i) pos_by_id[batch[i].text->id] = i;
        out.key_positions.push_back(q);
        for (int64_t id : out.list.negative_key_ids) out.key_positions.push_back(pos_by_id.at(id));
    } else {
        Rng rng = Rng(step_seed).split(q);
        std::vector<size_t> negs = sample_negative_positions(batch, q, cfg.m_prime, rng);
        out.key_positions.push_back(q);
        out.key_positions.insert(out.key_positions.end(), negs.begin(), negs.end());
        if (teacher != nullptr) {
            std::vector<const Matrix*> keys;
            keys.reserve(out.key_positions.size());
            for (size_t pos : out.key_positions) keys.push_back(&batch[pos].text->vector);
            out.teacher_targets = score_candidates(*teacher, batch[q].image->vector, keys);
            out.teacher_entropy = teacher_uncertainty(out.teacher_targets);
        }
    }
    return out;
}

uint64_t step_seed_for(uint64_t seed, size_t epoch, size_t step) {
    return Rng(seed).split(0x73746570ULL + epoch).split(step).next_u64();
}

struct StepOutcome {
    double task = 0, distill = 0, total = 0;
};

// Forward, loss, backward, update for one batch of queries.
StepOutcome run_step(ScorerParams& student, const ScorerParams* teacher, const TrainConfig& cfg,
                     const Batch& batch, uint64_t step_seed, AdamState& adam,
                     std::ofstream* dump) {
    const size_t k = batch.size();
    const size_t cand = cfg.m_prime + 1;

    std::vector<QueryCandidates> queries(k);
    for (size_t q = 0; q < k; ++q) {
        queries[q] = build_query_candidates(batch, q, teacher, cfg, step_seed);
    }

    // One batched student pass over all candidates of all queries.
    Matrix input(k * cand, student.input_dim());
    const size_t img_d = student.image_dim;
    for (size_t q = 0; q < k; ++q) {
        const double* img = batch[q].image->vector.row_ptr(0);
        for (size_t c = 0; c < cand; ++c) {
            double* row = input.row_ptr(q * cand + c);
            std::memcpy(row, img, img_d * sizeof(double));
            const Matrix& txt = batch[queries[q].key_positions[c]].text->vector;
            std::memcpy(row + img_d, txt.row_ptr(0), txt.cols() * sizeof(double));
        }
    }
    GradTape tape;
    Matrix logits = forward(student, input, tape);

    std::vector<LogitVector> student_scores(k, LogitVector(cand));
    for (size_t q = 0; q < k; ++q) {
        for (size_t c = 0; c < cand; ++c) student_scores[q][c] = logits.at(q * cand + c, 0);
    }

    // Per-query batch weights (uniform unless the regime weights them).
    std::vector<double> uncertainties(k);
    for (size_t q = 0; q < k; ++q) {
        uncertainties[q] = cfg.uncertainty == UncertaintySource::kStudent
                               ? teacher_uncertainty(student_scores[q])
                               : queries[q].teacher_entropy;
    }
    const WeightVector w =
        cfg.use_hw() ? hard_label_weights(uncertainties) : uniform_weights(k, WeightKind::kHard);
    const WeightVector c = cfg.use_sw() ? soft_label_weights(hard_label_weights(uncertainties))
                                        : uniform_weights(k, WeightKind::kSoft);

    const LossValue task = witm_loss(student_scores, w);
    std::vector<LogitVector> dtask = witm_loss_grad(student_scores, w);

    StepOutcome out;
    out.task = task.value;
    std::vector<LogitVector> ddistill;
    if (teacher != nullptr) {
        std::vector<DistillPair> pairs(k);
        for (size_t q = 0; q < k; ++q) {
            pairs[q] = DistillPair{student_scores[q], queries[q].teacher_targets};
        }
        if (cfg.distill == DistillKind::kMse) {
            out.distill = wds_loss(pairs, c).value;
            ddistill = wds_loss_grad(pairs, c);
        } else {
            LossValue kl = kl_distill_loss(pairs, cfg.tau);
            double acc = 0.0;
            ddistill = kl_distill_loss_grad(pairs, cfg.tau);
            for (size_t q = 0; q < k; ++q) {
                acc += c.values[q] * kl.per_query[q];
                for (double& g : ddistill[q]) g *= c.values[q];
            }
            out.distill = acc;
        }
        out.total = cfg.alpha * out.distill + (1.0 - cfg.alpha) * task.value;
    } else {
        out.total = task.value;
    }

    // Assemble d(total)/d(logits) and replay the tape.
    Matrix upstream(k * cand, 1);
    const double task_scale = teacher != nullptr ? (1.0 - cfg.alpha) : 1.0;
    for (size_t q = 0; q < k; ++q) {
        for (size_t ci = 0; ci < cand; ++ci) {
            double g = task_scale * dtask[q][ci];
            if (teacher != nullptr) g += cfg.alpha * ddistill[q][ci];
            upstream.at(q * cand + ci, 0) = g;
        }
    }
    ParamGrads grads = zero_grads(student);
    backward(tape, student.weights, upstream, grads);
    optimizer_step(student, grads, adam, cfg.opt);

    if (dump != nullptr) {
        std::vector<CandidateList> lists;
        for (auto& qc : queries) {
            if (qc.has_list) lists.push_back(qc.list);
        }
        dump_candidate_lists(*dump, lists);
    }
    return out;
}

TrainResult run_training(const Dataset& data, ScorerParams params, const ScorerParams* teacher,
                         const TrainConfig& cfg, const EpochCallback& cb) {
    const auto t_run0 = std::chrono::steady_clock::now();
    TrainResult result;
    result.record.status = RunStatus::kCompleted;

    AdamState adam = init_adam(params);
    std::ofstream dump;
    if (!cfg.dump_candidates.empty()) {
        dump.open(cfg.dump_candidates, std::ios::binary);
        if (!dump) throw IoError("cannot open candidate dump " + cfg.dump_candidates);
    }

    result.best = params;
    for (size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const auto batches = make_batches(data.train, cfg.batch, cfg.seed, epoch);
        double task_acc = 0, distill_acc = 0, total_acc = 0;
        bool diverged = false;
        for (size_t step = 0; step < batches.size(); ++step) {
            Batch batch = assemble_batch(data.train, batches[step]);
            StepOutcome s;
            try {
                s = run_step(params, teacher, cfg, batch, step_seed_for(cfg.seed, epoch, step),
                             adam, dump.is_open() ? &dump : nullptr);
            } catch (const NumericError& e) {
                result.record.status = RunStatus::kDiverged;
                result.record.divergence_note = "epoch " + std::to_string(epoch) + " step " +
                                                std::to_string(step) + ": " + e.what();
                diverged = true;
                break;
            }
            if (!std::isfinite(s.total) || s.total > cfg.divergence_threshold) {
                result.record.status = RunStatus::kDiverged;
                result.record.divergence_note =
                    "epoch " + std::to_string(epoch) + " step " + std::to_string(step) +
                    ": loss " + std::to_string(s.total);
                diverged = true;
                break;
            }
            task_acc += s.task;
            distill_acc += s.distill;
            total_acc += s.total;
        }
        if (diverged) break;

        EpochStats es;
        es.epoch = epoch;
        const double nb = static_cast<double>(batches.size());
        es.task_loss = task_acc / nb;
        es.distill_loss = distill_acc / nb;
        es.total_loss = total_acc / nb;
        const RetrievalMetrics vm = evaluate_retrieval(params, data.val);
        es.val_text_r1 = vm.text_r1;
        es.val_image_r1 = vm.image_r1;
        es.wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        result.record.epochs.push_back(es);

        const double mean_r1 = 0.5 * (vm.text_r1 + vm.image_r1);
        if (mean_r1 > result.record.best_val_mean_r1) {
            result.record.best_val_mean_r1 = mean_r1;
            result.record.best_epoch = static_cast<long>(epoch);
            result.best = params;
        }
        if (cb) cb(es, params);
        if (cfg.early_stop_text_r1 >= 0.0 && vm.text_r1 >= cfg.early_stop_text_r1) break;
    }
    result.final = std::move(params);
    result.record.total_wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_run0).count();
    return result;
}

}  // namespace

TrainResult train_teacher(const Dataset& data, const TrainConfig& cfg, const EpochCallback& cb) {
    cfg.validate();
    ScorerConfig sc;
    sc.image_dim = data.manifest.image_dim;
    sc.text_dim = data.manifest.text_dim;
    sc.hidden = cfg.teacher_hidden;
    sc.seed = Rng(cfg.seed).split(0x696e6974ULL).next_u64();
    sc.role = Role::kTeacher;

    TrainConfig teacher_cfg = cfg;
    teacher_cfg.regime = Regime::kFinetune;  // random negatives, task loss only
    return run_training(data, init_scorer(sc), nullptr, teacher_cfg, cb);
}

TrainResult train_student(const Dataset& data, const ScorerParams* teacher, const TrainConfig& cfg,
                          const EpochCallback& cb) {
    cfg.validate();
    if (cfg.uses_teacher() && teacher == nullptr) {
        throw ConfigError("regime " + regime_name(cfg.regime) + " requires a teacher checkpoint");
    }
    if (teacher != nullptr) {
        if (teacher->image_dim != data.manifest.image_dim ||
            teacher->text_dim != data.manifest.text_dim) {
            throw ShapeError("teacher dims " + std::to_string(teacher->image_dim) + "+" +
                             std::to_string(teacher->text_dim) + " vs dataset " +
                             std::to_string(data.manifest.image_dim) + "+" +
                             std::to_string(data.manifest.text_dim));
        }
    }
    TrainConfig run_cfg = cfg;
    if (cfg.regime == Regime::kStudentUncertainty) {
        run_cfg.uncertainty = UncertaintySource::kStudent;
    }

    ScorerConfig sc;
    sc.image_dim = data.manifest.image_dim;
    sc.text_dim = data.manifest.text_dim;
    sc.hidden = cfg.student_hidden;
    sc.seed = Rng(cfg.seed).split(0x696e6974ULL).next_u64();
    sc.role = Role::kStudent;

    return run_training(data, init_scorer(sc),
                        cfg.regime == Regime::kFinetune ? nullptr : teacher, run_cfg, cb);
}

TrainResult student_uncertainty_variant(const Dataset& data, const ScorerParams& teacher,
                                        const TrainConfig& cfg, const EpochCallback& cb) {
    TrainConfig variant = cfg;
    variant.regime = Regime::kStudentUncertainty;
    variant.uncertainty = UncertaintySource::kStudent;
    return train_student(data, &teacher, variant, cb);
}

std::string epoch_metrics_line(const EpochStats& s) {
    char buf[512];
    snprintf(buf, sizeof buf,
             "epoch=%zu task=%.17g distill=%.17g total=%.17g val_text_r1=%.17g val_image_r1=%.17g",
             s.epoch, s.task_loss, s.distill_loss, s.total_loss, s.val_text_r1, s.val_image_r1);
    return buf;
}

}  // namespace dcd
