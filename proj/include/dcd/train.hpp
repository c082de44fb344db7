#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dcd/data.hpp"
#include "dcd/losses.hpp"
#include "dcd/model.hpp"

namespace dcd {

enum class Regime { kFinetune, kVanillaKd, kDcd, kAblation, kStudentUncertainty };
enum class UncertaintySource { kTeacher, kStudent };
enum class DistillKind { kMse, kKl };
enum class RunStatus { kCompleted, kDiverged };

std::string regime_name(Regime r);
Regime regime_from_name(const std::string& s);

struct OptimizerConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam first/second moment accumulators, shaped like the parameters.
struct AdamState {
    std::vector<Matrix> m_w, v_w, m_b, v_b;
    size_t step = 0;
};

AdamState init_adam(const ScorerParams& params);

/// Adaptive-moment update with bias correction. Zero gradients leave the
/// parameters unchanged.
void optimizer_step(ScorerParams& params, const ParamGrads& grads, AdamState& state,
                    const OptimizerConfig& opt);

struct TrainConfig {
    Regime regime = Regime::kDcd;
    // Ablation switches; kDcd implies all three, kVanillaKd/kFinetune none.
    bool ds_ka = false;  // dynamic selection + knowledge adjustment
    bool hw = false;     // entropy-based hard-label weights w
    bool sw = false;     // reversed soft-label weights c
    UncertaintySource uncertainty = UncertaintySource::kTeacher;
    DistillKind distill = DistillKind::kMse;

    double alpha = 0.5;
    double tau = 1.0;
    size_t m = 63;        // negatives scored by the teacher
    size_t m_prime = 7;   // negatives kept for the student
    size_t batch = 80;    // queries per step
    size_t epochs = 40;
    uint64_t seed = 1;
    OptimizerConfig opt;
    std::vector<size_t> student_hidden = {128, 128};
    std::vector<size_t> teacher_hidden = {256, 256, 256, 256};
    double divergence_threshold = 1e6;
    std::string dump_candidates;  // optional per-batch candidate dump path
    double early_stop_text_r1 = -1.0;  // stop once val text R@1 reaches this (off when < 0)

    void validate() const;
    bool use_selection() const;
    bool use_hw() const;
    bool use_sw() const;
    bool uses_teacher() const { return regime != Regime::kFinetune; }
};

struct EpochStats {
    size_t epoch = 0;
    double task_loss = 0;     // mean over batches
    double distill_loss = 0;  // mean over batches (0 without a teacher)
    double total_loss = 0;
    double val_text_r1 = 0;
    double val_image_r1 = 0;
    double wall_s = 0;
};

struct RunRecord {
    RunStatus status = RunStatus::kCompleted;
    std::vector<EpochStats> epochs;
    long best_epoch = -1;
    double best_val_mean_r1 = -1.0;
    std::string divergence_note;
    double total_wall_s = 0;
};

struct TrainResult {
    ScorerParams best;   // highest validation mean R@1
    ScorerParams final;  // parameters at the last completed step
    RunRecord record;
};

/// Called after every epoch with the stats and the current parameters
/// (for streaming logs and optional per-epoch checkpoints).
using EpochCallback = std::function<void(const EpochStats&, const ScorerParams&)>;

/// Teacher pretraining: multi-negative matching loss over randomly sampled
/// m_prime negatives, no self-mining. Best-validation checkpoint returned.
TrainResult train_teacher(const Dataset& data, const TrainConfig& cfg,
                          const EpochCallback& cb = nullptr);

/// Student training under the configured regime. The teacher is frozen and
/// may be null only for the finetune regime. Divergence (non-finite or
/// exploding loss) aborts the run with a diagnostic and a partial record.
TrainResult train_student(const Dataset& data, const ScorerParams* teacher,
                          const TrainConfig& cfg, const EpochCallback& cb = nullptr);

/// DCD with uncertainties taken from the student's own logits. Expected to
/// underperform or diverge; divergence is a recorded outcome, not an error.
TrainResult student_uncertainty_variant(const Dataset& data, const ScorerParams& teacher,
                                        const TrainConfig& cfg, const EpochCallback& cb = nullptr);

/// Loss-trace line for an epoch: stable %.17g formatting, no timing fields,
/// so identical runs produce byte-identical traces.
std::string epoch_metrics_line(const EpochStats& s);

}  // namespace dcd
