// Command-line front end for the contrastive-distillation pipeline:
// data generation, teacher training, student distillation, evaluation,
// separability traces, the (M, M') sweep, the ablation grid and the
// gradient-check release gate.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "dcd/config.hpp"
#include "dcd/data.hpp"
#include "dcd/eval.hpp"
#include "dcd/gradcheck.hpp"
#include "dcd/losses.hpp"
#include "dcd/mining.hpp"
#include "dcd/model.hpp"
#include "dcd/train.hpp"

namespace fs = std::filesystem;
using namespace dcd;

namespace {

// Exit codes: 0 success, 2 configuration/usage, 3 data format or I/O,
// 4 training divergence, 1 anything else.
constexpr int kExitOk = 0;
constexpr int kExitGeneric = 1;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

struct FlagSpec {
    std::string key;
    std::string default_value;
    std::string help;
};

// One subcommand's config surface: defaults, then --config file entries,
// then explicit command-line overrides. The resolved map is snapshotted
// before any work.
class CommandConfig {
public:
    CommandConfig(CLI::App* cmd, std::vector<FlagSpec> specs) : cmd_(cmd) {
        for (auto& s : specs) {
            defaults_.set(s.key, s.default_value);
            auto* holder = &values_[s.key];
            cmd->add_option("--" + s.key, *holder, s.help);
        }
        cmd->add_option("--config", config_file_, "key=value config file (overridden by flags)");
    }

    KvConfig resolve() const {
        KvConfig cfg = defaults_;
        if (!config_file_.empty()) cfg.apply(KvConfig::from_file(config_file_), true);
        KvConfig overrides;
        for (const auto& [key, value] : values_) {
            if (cmd_->count("--" + key) > 0) overrides.set(key, value);
        }
        cfg.apply(overrides, true);
        return cfg;
    }

private:
    CLI::App* cmd_;
    KvConfig defaults_;
    std::map<std::string, std::string> values_;
    std::string config_file_;
};

void ensure_dir(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir + ": " + ec.message());
}

void snapshot(const KvConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    cfg.write(out_dir + "/spec.resolved");
}

TrainConfig train_config_from(const KvConfig& c) {
    TrainConfig t;
    t.regime = regime_from_name(c.get_str("regime"));
    t.ds_ka = c.get_bool("ds_ka");
    t.hw = c.get_bool("hw");
    t.sw = c.get_bool("sw");
    t.distill = c.get_str("distill") == "kl" ? DistillKind::kKl : DistillKind::kMse;
    t.alpha = c.get_double("alpha");
    t.tau = c.get_double("tau");
    t.m = static_cast<size_t>(c.get_int("m"));
    t.m_prime = static_cast<size_t>(c.get_int("m_prime"));
    t.batch = static_cast<size_t>(c.get_int("batch"));
    t.epochs = static_cast<size_t>(c.get_int("epochs"));
    t.seed = c.get_u64("seed");
    t.opt.lr = c.get_double("lr");
    t.opt.beta1 = c.get_double("beta1");
    t.opt.beta2 = c.get_double("beta2");
    t.opt.eps = c.get_double("eps");
    t.student_hidden = c.get_size_list("student_hidden");
    t.teacher_hidden = c.get_size_list("teacher_hidden");
    t.dump_candidates = c.get_str("dump_candidates");
    return t;
}

std::vector<FlagSpec> train_flags(const std::string& default_epochs,
                                  const std::string& default_regime) {
    return {
        {"features", "", "dataset directory (from gen-data or external)"},
        {"out", "", "output run directory"},
        {"regime", default_regime, "finetune|vanilla_kd|dcd|ablation|student_uncertainty"},
        {"ds_ka", "false", "ablation: dynamic selection + knowledge adjustment"},
        {"hw", "false", "ablation: entropy-weighted hard labels"},
        {"sw", "false", "ablation: reversed soft-label weights"},
        {"distill", "mse", "distillation loss for the soft target term: mse|kl"},
        {"alpha", "0.5", "objective mix: alpha*distill + (1-alpha)*task"},
        {"tau", "1", "softmax temperature for the kl distillation path"},
        {"m", "63", "negatives scored by the teacher per query"},
        {"m_prime", "7", "negatives kept for the student per query"},
        {"batch", "80", "queries per training step"},
        {"epochs", default_epochs, "training epochs"},
        {"seed", "1", "run seed"},
        {"lr", "0.001", "learning rate"},
        {"beta1", "0.9", "first-moment decay"},
        {"beta2", "0.999", "second-moment decay"},
        {"eps", "1e-8", "optimizer epsilon"},
        {"student_hidden", "128,128", "student hidden widths"},
        {"teacher_hidden", "256,256,256,256", "teacher hidden widths"},
        {"dump_candidates", "", "optional path for per-batch candidate dumps"},
        {"keep_epoch_checkpoints", "false", "write epoch_NNN.ckpt after every epoch"},
    };
}

// Streams per-epoch metrics so a diverged run still leaves its partial trace.
class RunWriter {
public:
    RunWriter(std::string dir, bool keep_epoch_checkpoints)
        : dir_(std::move(dir)),
          keep_epochs_(keep_epoch_checkpoints),
          metrics_(dir_ + "/metrics.log", std::ios::binary),
          timing_(dir_ + "/timing.log", std::ios::binary) {
        if (!metrics_ || !timing_) throw IoError("cannot open run logs in " + dir_);
    }

    void on_epoch(const EpochStats& s, const ScorerParams& params) {
        metrics_ << epoch_metrics_line(s) << "\n";
        metrics_.flush();
        char buf[128];
        snprintf(buf, sizeof buf, "epoch=%zu wall_s=%.3f\n", s.epoch, s.wall_s);
        timing_ << buf;
        timing_.flush();
        if (keep_epochs_) {
            char name[64];
            snprintf(name, sizeof name, "/epoch_%03zu.ckpt", s.epoch);
            save_checkpoint(params, dir_ + name);
        }
    }

    void finish(const TrainResult& result) {
        save_checkpoint(result.best, dir_ + "/best.ckpt");
        save_checkpoint(result.final, dir_ + "/final.ckpt");
        std::ofstream rec(dir_ + "/record.txt", std::ios::binary);
        rec << "status=" << (result.record.status == RunStatus::kCompleted ? "completed" : "diverged")
            << "\n";
        rec << "epochs=" << result.record.epochs.size() << "\n";
        rec << "best_epoch=" << result.record.best_epoch << "\n";
        char buf[128];
        snprintf(buf, sizeof buf, "best_val_mean_r1=%.17g\n", result.record.best_val_mean_r1);
        rec << buf;
        snprintf(buf, sizeof buf, "total_wall_s=%.3f\n", result.record.total_wall_s);
        rec << buf;
        if (!result.record.divergence_note.empty()) {
            rec << "divergence=" << result.record.divergence_note << "\n";
        }
    }

private:
    std::string dir_;
    bool keep_epochs_;
    std::ofstream metrics_;
    std::ofstream timing_;
};

int cmd_gen_data(const KvConfig& cfg) {
    DatasetManifest m;
    m.n_train = static_cast<size_t>(cfg.get_int("n_train"));
    m.n_val = static_cast<size_t>(cfg.get_int("n_val"));
    m.n_test = static_cast<size_t>(cfg.get_int("n_test"));
    m.captions_per_image = static_cast<size_t>(cfg.get_int("captions_per_image"));
    m.image_dim = static_cast<size_t>(cfg.get_int("image_dim"));
    m.text_dim = static_cast<size_t>(cfg.get_int("text_dim"));
    m.latent_dim = static_cast<size_t>(cfg.get_int("latent_dim"));
    m.noise_sigma = cfg.get_double("noise_sigma");
    m.seed = cfg.get_u64("seed");
    m.validate();  // fail before creating anything

    const std::string out = resolve_out_dir(cfg.get_str("out"));
    snapshot(cfg, out);
    generate_synthetic(m, out);
    std::cout << "dataset written to " << out << "\n";
    return kExitOk;
}

int cmd_train_teacher(const KvConfig& cfg) {
    const std::string out = resolve_out_dir(cfg.get_str("out"));
    TrainConfig t = train_config_from(cfg);
    t.validate();
    const Dataset data = load_features(cfg.get_str("features"));
    snapshot(cfg, out);
    RunWriter writer(out, cfg.get_bool("keep_epoch_checkpoints"));
    TrainResult result = train_teacher(
        data, t, [&](const EpochStats& s, const ScorerParams& p) {
            std::cout << epoch_metrics_line(s) << "\n";
            writer.on_epoch(s, p);
        });
    writer.finish(result);
    if (result.record.status == RunStatus::kDiverged) {
        std::cerr << "training diverged: " << result.record.divergence_note << "\n";
        return kExitDivergence;
    }
    std::cout << "best val mean R@1 " << result.record.best_val_mean_r1 << " (epoch "
              << result.record.best_epoch << "), checkpoint " << out << "/best.ckpt\n";
    return kExitOk;
}

int cmd_distill(const KvConfig& cfg) {
    const std::string out = resolve_out_dir(cfg.get_str("out"));
    TrainConfig t = train_config_from(cfg);
    t.validate();
    const Dataset data = load_features(cfg.get_str("features"));

    ScorerParams teacher;
    const ScorerParams* teacher_ptr = nullptr;
    if (t.uses_teacher()) {
        teacher = load_checkpoint(cfg.get_str("teacher"));
        teacher_ptr = &teacher;
    }
    snapshot(cfg, out);
    RunWriter writer(out, cfg.get_bool("keep_epoch_checkpoints"));
    TrainResult result = train_student(
        data, teacher_ptr, t, [&](const EpochStats& s, const ScorerParams& p) {
            std::cout << epoch_metrics_line(s) << "\n";
            writer.on_epoch(s, p);
        });
    writer.finish(result);
    if (result.record.status == RunStatus::kDiverged) {
        std::cerr << "training diverged: " << result.record.divergence_note << "\n";
        // Divergence is the documented outcome for the student-uncertainty
        // variant; the run record is the deliverable there.
        return t.regime == Regime::kStudentUncertainty ? kExitOk : kExitDivergence;
    }
    std::cout << "best val mean R@1 " << result.record.best_val_mean_r1 << " (epoch "
              << result.record.best_epoch << "), checkpoint " << out << "/best.ckpt\n";
    return kExitOk;
}

int cmd_evaluate(const KvConfig& cfg) {
    const Dataset data = load_features(cfg.get_str("features"));
    const ScorerParams params = load_checkpoint(cfg.get_str("checkpoint"));
    const Split& split = data.split(cfg.get_str("split"));
    const std::string out = resolve_out_dir(cfg.get_str("out"));
    if (!out.empty()) snapshot(cfg, out);
    const RetrievalMetrics m = evaluate_retrieval(params, split);
    std::cout << metrics_to_kv(m);
    if (!out.empty()) write_metrics_files(m, out);
    return kExitOk;
}

int cmd_trace(const KvConfig& cfg) {
    const Dataset data = load_features(cfg.get_str("features"));
    const Split& split = data.split(cfg.get_str("split"));

    std::vector<std::string> paths;
    const std::string ckpts = cfg.get_str("checkpoints");
    if (fs::is_directory(ckpts)) {
        for (const auto& e : fs::directory_iterator(ckpts)) {
            const std::string name = e.path().filename().string();
            if (name.rfind("epoch_", 0) == 0 && name.size() > 5 &&
                name.substr(name.size() - 5) == ".ckpt") {
                paths.push_back(e.path().string());
            }
        }
        std::sort(paths.begin(), paths.end());
        if (paths.empty()) throw UsageError("no epoch_*.ckpt files in " + ckpts);
    } else {
        std::stringstream ss(ckpts);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (!item.empty()) paths.push_back(item);
        }
        if (paths.empty()) throw UsageError("no checkpoints given");
    }

    const std::string out = resolve_out_dir(cfg.get_str("out"));
    if (!out.empty()) snapshot(cfg, out);
    const SeparabilityTrace trace =
        separability_trace(paths, split, static_cast<size_t>(cfg.get_int("probe_count")));
    if (!out.empty()) write_trace_tsv(trace, out + "/trace.tsv");
    for (size_t i = 0; i < trace.positive.size(); ++i) {
        printf("epoch=%zu positive=%.6f neg1=%.6f neg2=%.6f neg3=%.6f\n", i, trace.positive[i],
               trace.neg1[i], trace.neg2[i], trace.neg3[i]);
    }
    return kExitOk;
}

// Runs grid cells on a small thread pool; each cell owns its output subdir.
template <typename Cell>
void run_cells(size_t n_cells, size_t jobs, const Cell& cell) {
    if (jobs <= 1) {
        for (size_t i = 0; i < n_cells; ++i) cell(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    for (size_t t = 0; t < std::min(jobs, n_cells); ++t) {
        pool.emplace_back([&] {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= n_cells) return;
                cell(i);
            }
        });
    }
    for (auto& th : pool) th.join();
}

int cmd_sweep_mm(const KvConfig& cfg) {
    const std::string out = resolve_out_dir(cfg.get_str("out"));
    const Dataset data = load_features(cfg.get_str("features"));
    const ScorerParams teacher = load_checkpoint(cfg.get_str("teacher"));
    snapshot(cfg, out);

    // Grid entries are total sample counts (teacher, student) including the
    // positive: "64,8" trains with m=63 scored negatives and m_prime=7 kept.
    std::vector<std::pair<size_t, size_t>> grid;
    {
        std::stringstream ss(cfg.get_str("grid"));
        std::string item;
        while (std::getline(ss, item, ';')) {
            auto comma = item.find(',');
            if (comma == std::string::npos) throw ConfigError("grid entry '" + item + "'");
            const size_t teacher_total = std::stoul(item.substr(0, comma));
            const size_t student_total = std::stoul(item.substr(comma + 1));
            if (teacher_total < 2 || student_total < 2 || student_total > teacher_total) {
                throw ConfigError("grid entry '" + item + "' out of range");
            }
            grid.emplace_back(teacher_total, student_total);
        }
        if (grid.empty()) throw ConfigError("empty sweep grid");
    }
    const size_t seeds = static_cast<size_t>(cfg.get_int("seeds"));
    const uint64_t base_seed = cfg.get_u64("seed");
    const size_t jobs = static_cast<size_t>(cfg.get_int("jobs"));

    struct CellResult {
        size_t teacher_total, student_total, seed_index;
        double text_r1 = 0, image_r1 = 0, wall_s = 0;
        std::string error;
    };
    std::vector<CellResult> cells(grid.size() * seeds);
    std::mutex io_mutex;

    run_cells(cells.size(), jobs, [&](size_t idx) {
        const auto [mt, ms] = grid[idx / seeds];
        const size_t seed_index = idx % seeds;
        CellResult r;
        r.teacher_total = mt;
        r.student_total = ms;
        r.seed_index = seed_index;
        char sub[128];
        snprintf(sub, sizeof sub, "/cell_m%zu_mp%zu_s%zu", mt - 1, ms - 1, seed_index);
        const std::string cell_dir = out + sub;
        try {
            ensure_dir(cell_dir);
            TrainConfig t = train_config_from(cfg);
            t.regime = Regime::kDcd;
            t.m = mt - 1;
            t.m_prime = ms - 1;
            t.seed = base_seed + seed_index;
            t.validate();
            RunWriter writer(cell_dir, false);
            TrainResult res = train_student(data, &teacher, t,
                                            [&](const EpochStats& s, const ScorerParams& p) {
                                                writer.on_epoch(s, p);
                                            });
            writer.finish(res);
            if (res.record.status == RunStatus::kDiverged) {
                r.error = "diverged: " + res.record.divergence_note;
            } else {
                const RetrievalMetrics m = evaluate_retrieval(res.best, data.test);
                r.text_r1 = m.text_r1;
                r.image_r1 = m.image_r1;
            }
            r.wall_s = res.record.total_wall_s;
        } catch (const std::exception& e) {
            r.error = e.what();
        }
        std::lock_guard<std::mutex> lock(io_mutex);
        cells[idx] = r;
        std::cout << "cell (" << mt << "," << ms << ") seed " << seed_index
                  << (r.error.empty() ? " done" : (" failed: " + r.error)) << "\n";
    });

    std::ofstream tsv(out + "/sweep.tsv", std::ios::binary);
    tsv << "teacher_total\tstudent_total\tm\tm_prime\tseed\ttext_r1\timage_r1\twall_s\tstatus\n";
    for (const auto& r : cells) {
        char buf[256];
        snprintf(buf, sizeof buf, "%zu\t%zu\t%zu\t%zu\t%zu\t%.4f\t%.4f\t%.3f\t%s\n",
                 r.teacher_total, r.student_total, r.teacher_total - 1, r.student_total - 1,
                 r.seed_index, r.text_r1, r.image_r1, r.wall_s,
                 r.error.empty() ? "ok" : r.error.c_str());
        tsv << buf;
    }

    std::ofstream sum(out + "/sweep_summary.tsv", std::ios::binary);
    sum << "teacher_total\tstudent_total\tmean_text_r1\tmean_image_r1\tmean_wall_s\truns\n";
    printf("%-16s %-8s %-8s %-8s\n", "(teacher,student)", "TR@1", "IR@1", "time_s");
    for (size_t g = 0; g < grid.size(); ++g) {
        double tr = 0, ir = 0, ws = 0;
        size_t n = 0;
        for (size_t s = 0; s < seeds; ++s) {
            const auto& r = cells[g * seeds + s];
            if (!r.error.empty()) continue;
            tr += r.text_r1;
            ir += r.image_r1;
            ws += r.wall_s;
            ++n;
        }
        if (n > 0) {
            tr /= static_cast<double>(n);
            ir /= static_cast<double>(n);
            ws /= static_cast<double>(n);
        }
        char buf[256];
        snprintf(buf, sizeof buf, "%zu\t%zu\t%.4f\t%.4f\t%.3f\t%zu\n", grid[g].first,
                 grid[g].second, tr, ir, ws, n);
        sum << buf;
        printf("(%zu,%zu)%*s %-8.2f %-8.2f %-8.2f\n", grid[g].first, grid[g].second,
               static_cast<int>(10 - std::to_string(grid[g].first).size() -
                                std::to_string(grid[g].second).size()),
               "", tr, ir, ws);
    }
    std::cout << "sweep written to " << out << "\n";
    return kExitOk;
}

int cmd_ablate(const KvConfig& cfg) {
    const std::string out = resolve_out_dir(cfg.get_str("out"));
    const Dataset data = load_features(cfg.get_str("features"));
    const ScorerParams teacher = load_checkpoint(cfg.get_str("teacher"));
    snapshot(cfg, out);

    struct Row {
        const char* name;
        Regime regime;
        bool ds_ka, hw, sw;
    };
    const Row rows[] = {
        {"vanilla", Regime::kVanillaKd, false, false, false},
        {"ds_ka", Regime::kAblation, true, false, false},
        {"ds_ka+hw", Regime::kAblation, true, true, false},
        {"ds_ka+sw", Regime::kAblation, true, false, true},
        {"full", Regime::kDcd, true, true, true},
    };
    const size_t seeds = static_cast<size_t>(cfg.get_int("seeds"));
    const uint64_t base_seed = cfg.get_u64("seed");
    const size_t jobs = static_cast<size_t>(cfg.get_int("jobs"));

    struct CellResult {
        RetrievalMetrics m;
        std::string error;
    };
    std::vector<CellResult> cells(std::size(rows) * seeds);
    std::mutex io_mutex;

    run_cells(cells.size(), jobs, [&](size_t idx) {
        const Row& row = rows[idx / seeds];
        const size_t seed_index = idx % seeds;
        CellResult r;
        const std::string cell_dir =
            out + "/" + row.name + "_s" + std::to_string(seed_index);
        try {
            ensure_dir(cell_dir);
            TrainConfig t = train_config_from(cfg);
            t.regime = row.regime;
            t.ds_ka = row.ds_ka;
            t.hw = row.hw;
            t.sw = row.sw;
            t.seed = base_seed + seed_index;
            t.validate();
            RunWriter writer(cell_dir, false);
            TrainResult res = train_student(data, &teacher, t,
                                            [&](const EpochStats& s, const ScorerParams& p) {
                                                writer.on_epoch(s, p);
                                            });
            writer.finish(res);
            if (res.record.status == RunStatus::kDiverged) {
                r.error = "diverged: " + res.record.divergence_note;
            } else {
                r.m = evaluate_retrieval(res.best, data.test);
            }
        } catch (const std::exception& e) {
            r.error = e.what();
        }
        std::lock_guard<std::mutex> lock(io_mutex);
        cells[idx] = r;
        std::cout << "ablation " << row.name << " seed " << seed_index
                  << (r.error.empty() ? " done" : (" failed: " + r.error)) << "\n";
    });

    std::ofstream tsv(out + "/ablate.tsv", std::ios::binary);
    tsv << "regime\tseed\ttext_r1\ttext_r5\ttext_r10\timage_r1\timage_r5\timage_r10\tstatus\n";
    for (size_t i = 0; i < cells.size(); ++i) {
        const Row& row = rows[i / seeds];
        const auto& r = cells[i];
        char buf[320];
        snprintf(buf, sizeof buf, "%s\t%zu\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\t%s\n", row.name,
                 i % seeds, r.m.text_r1, r.m.text_r5, r.m.text_r10, r.m.image_r1, r.m.image_r5,
                 r.m.image_r10, r.error.empty() ? "ok" : r.error.c_str());
        tsv << buf;
    }

    std::ofstream sum(out + "/ablate_summary.tsv", std::ios::binary);
    sum << "regime\ttext_r1\ttext_r5\ttext_r10\timage_r1\timage_r5\timage_r10\truns\n";
    printf("%-10s %-14s %-14s %-14s %-14s %-14s %-14s\n", "regime", "TR@1", "TR@5", "TR@10",
           "IR@1", "IR@5", "IR@10");
    for (size_t g = 0; g < std::size(rows); ++g) {
        std::vector<RetrievalMetrics> ok;
        for (size_t s = 0; s < seeds; ++s) {
            if (cells[g * seeds + s].error.empty()) ok.push_back(cells[g * seeds + s].m);
        }
        auto stat = [&](auto field) {
            double mean = 0, sd = 0;
            for (const auto& m : ok) mean += m.*field;
            if (!ok.empty()) mean /= static_cast<double>(ok.size());
            for (const auto& m : ok) sd += (m.*field - mean) * (m.*field - mean);
            sd = ok.size() > 1 ? std::sqrt(sd / static_cast<double>(ok.size() - 1)) : 0.0;
            return std::pair<double, double>(mean, sd);
        };
        const auto tr1 = stat(&RetrievalMetrics::text_r1), tr5 = stat(&RetrievalMetrics::text_r5),
                   tr10 = stat(&RetrievalMetrics::text_r10), ir1 = stat(&RetrievalMetrics::image_r1),
                   ir5 = stat(&RetrievalMetrics::image_r5), ir10 = stat(&RetrievalMetrics::image_r10);
        char buf[320];
        snprintf(buf, sizeof buf, "%s\t%.2f±%.2f\t%.2f±%.2f\t%.2f±%.2f\t%.2f±%.2f\t%.2f±%.2f\t%.2f±%.2f\t%zu\n",
                 rows[g].name, tr1.first, tr1.second, tr5.first, tr5.second, tr10.first,
                 tr10.second, ir1.first, ir1.second, ir5.first, ir5.second, ir10.first,
                 ir10.second, ok.size());
        sum << buf;
        printf("%-10s %6.2f±%-6.2f %6.2f±%-6.2f %6.2f±%-6.2f %6.2f±%-6.2f %6.2f±%-6.2f %6.2f±%-6.2f\n",
               rows[g].name, tr1.first, tr1.second, tr5.first, tr5.second, tr10.first, tr10.second,
               ir1.first, ir1.second, ir5.first, ir5.second, ir10.first, ir10.second);
    }
    std::cout << "ablation written to " << out << "\n";
    return kExitOk;
}

int cmd_gradcheck(const KvConfig& cfg) {
    const auto results = run_gradient_checks(static_cast<size_t>(cfg.get_int("instances")),
                                             cfg.get_double("step"), cfg.get_str("corrupt"));
    const std::string out = resolve_out_dir(cfg.get_str("out"));
    std::string report;
    for (const auto& r : results) {
        char buf[160];
        snprintf(buf, sizeof buf, "%-22s worst_rel_err=%.3e %s\n", r.name.c_str(), r.worst_rel_err,
                 r.pass ? "pass" : "FAIL");
        report += buf;
    }
    std::cout << report;
    if (!out.empty()) {
        snapshot(cfg, out);
        std::ofstream f(out + "/gradcheck.txt", std::ios::binary);
        f << report;
    }
    if (!all_pass(results)) {
        for (const auto& r : results) {
            if (!r.pass) std::cerr << "gradient check failed: " << r.name << "\n";
        }
        return kExitGeneric;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"cross-modal matching distillation pipeline"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic paired-feature dataset");
    CommandConfig gen_cfg(gen, {
        {"out", "dataset", "output dataset directory"},
        {"n_train", "2000", "training images"},
        {"n_val", "200", "validation images"},
        {"n_test", "200", "test images"},
        {"captions_per_image", "5", "captions per image"},
        {"image_dim", "64", "image feature width"},
        {"text_dim", "64", "text feature width"},
        {"latent_dim", "16", "shared latent width"},
        {"noise_sigma", "0.25", "feature noise level"},
        {"seed", "1", "generation seed"},
    });

    auto* teach = app.add_subcommand("train-teacher", "pretrain the teacher scorer");
    CommandConfig teach_cfg(teach, train_flags("30", "finetune"));

    auto* distill = app.add_subcommand("distill", "train a student under a regime");
    auto distill_flags = train_flags("40", "dcd");
    distill_flags.push_back({"teacher", "", "teacher checkpoint"});
    CommandConfig distill_cfg(distill, distill_flags);

    auto* eval_cmd = app.add_subcommand("evaluate", "retrieval metrics for a checkpoint");
    CommandConfig eval_cfg(eval_cmd, {
        {"features", "", "dataset directory"},
        {"checkpoint", "", "scorer checkpoint"},
        {"split", "test", "train|val|test"},
        {"out", "", "optional output directory"},
    });

    auto* trace = app.add_subcommand("trace", "separability trace over checkpoints");
    CommandConfig trace_cfg(trace, {
        {"features", "", "dataset directory"},
        {"checkpoints", "", "run dir with epoch_*.ckpt, or comma list of checkpoints"},
        {"split", "test", "probe split"},
        {"probe_count", "32", "probe queries (0 = whole split)"},
        {"out", "", "optional output directory"},
    });

    auto* sweep = app.add_subcommand("sweep-mm", "teacher/student sample-count sweep");
    auto sweep_flags = train_flags("8", "dcd");
    sweep_flags.push_back({"grid", "16,16;32,4;32,8;64,4;64,8;64,16",
                           "semicolon list of (teacher,student) total sample counts"});
    sweep_flags.push_back({"seeds", "1", "seeds per cell (seed, seed+1, ...)"});
    sweep_flags.push_back({"jobs", "1", "concurrent cells"});
    sweep_flags.push_back({"teacher", "", "teacher checkpoint"});
    CommandConfig sweep_cfg(sweep, sweep_flags);

    auto* ablate = app.add_subcommand("ablate", "regime ablation grid");
    auto ablate_flags = train_flags("8", "dcd");
    ablate_flags.push_back({"seeds", "5", "seeds per regime"});
    ablate_flags.push_back({"jobs", "1", "concurrent cells"});
    ablate_flags.push_back({"teacher", "", "teacher checkpoint"});
    CommandConfig ablate_cfg(ablate, ablate_flags);

    auto* gradcheck = app.add_subcommand("gradcheck", "analytic-vs-numeric gradient release gate");
    CommandConfig gradcheck_cfg(gradcheck, {
        {"instances", "20", "random instances per check"},
        {"step", "1e-5", "central difference step"},
        {"corrupt", "", "perturb the named check (test hook)"},
        {"out", "", "optional output directory"},
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitConfig;
    }

    try {
        if (gen->parsed()) return cmd_gen_data(gen_cfg.resolve());
        if (teach->parsed()) return cmd_train_teacher(teach_cfg.resolve());
        if (distill->parsed()) return cmd_distill(distill_cfg.resolve());
        if (eval_cmd->parsed()) return cmd_evaluate(eval_cfg.resolve());
        if (trace->parsed()) return cmd_trace(trace_cfg.resolve());
        if (sweep->parsed()) return cmd_sweep_mm(sweep_cfg.resolve());
        if (ablate->parsed()) return cmd_ablate(ablate_cfg.resolve());
        if (gradcheck->parsed()) return cmd_gradcheck(gradcheck_cfg.resolve());
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const DataFormatError& e) {
        std::cerr << "data format error: " << e.what() << "\n";
        return kExitData;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitGeneric;
    }
    return kExitGeneric;
}
