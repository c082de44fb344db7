#include "dcd/eval.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>

namespace dcd {

Matrix MlpScorer::score_matrix(const std::vector<FeatureRecord>& images,
                               const std::vector<FeatureRecord>& texts) const {
    std::vector<const Matrix*> keys;
    keys.reserve(texts.size());
    for (const auto& t : texts) keys.push_back(&t.vector);
    Matrix s(images.size(), texts.size());
    for (size_t i = 0; i < images.size(); ++i) {
        LogitVector row = score_candidates(params_, images[i].vector, keys);
        std::memcpy(s.row_ptr(i), row.data(), row.size() * sizeof(double));
    }
    return s;
}

namespace {

// Top-k candidate indices by descending score, ties by smaller index.
// `score(j)` reads candidate j's score.
template <typename ScoreFn>
std::array<bool, 3> hits_at_1_5_10(size_t n_candidates, ScoreFn score,
                                   const std::function<bool(size_t)>& is_match) {
    const size_t k = std::min<size_t>(10, n_candidates);
    std::vector<size_t> idx(n_candidates);
    std::iota(idx.begin(), idx.end(), 0);
    std::partial_sort(idx.begin(), idx.begin() + static_cast<ptrdiff_t>(k), idx.end(),
                      [&](size_t a, size_t b) {
                          const double sa = score(a), sb = score(b);
                          if (sa != sb) return sa > sb;
                          return a < b;
                      });
    std::array<bool, 3> hits{false, false, false};
    for (size_t r = 0; r < k; ++r) {
        if (is_match(idx[r])) {
            if (r < 1) hits[0] = true;
            if (r < 5) hits[1] = true;
            hits[2] = true;
            break;
        }
    }
    return hits;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

RetrievalMetrics evaluate_retrieval(const PairScorer& scorer, const Split& split) {
    if (split.images.empty() || split.texts.empty()) {
        throw UsageError("evaluate_retrieval: empty split");
    }
    const Matrix s = scorer.score_matrix(split.images, split.texts);
    if (s.rows() != split.images.size() || s.cols() != split.texts.size()) {
        throw ShapeError("evaluate_retrieval: score matrix " + s.shape_str());
    }
    s.require_finite("evaluate_retrieval");

    const int64_t n_img = static_cast<int64_t>(split.images.size());
    const int64_t n_txt = static_cast<int64_t>(split.texts.size());

    std::vector<std::array<bool, 3>> text_hits(n_img), image_hits(n_txt);
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < n_img; ++i) {
        const int64_t group = split.images[i].group_id;
        text_hits[i] = hits_at_1_5_10(
            split.texts.size(), [&](size_t t) { return s.at(static_cast<size_t>(i), t); },
            [&](size_t t) { return split.texts[t].group_id == group; });
    }
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < n_txt; ++t) {
        const int64_t group = split.texts[t].group_id;
        image_hits[t] = hits_at_1_5_10(
            split.images.size(), [&](size_t i) { return s.at(i, static_cast<size_t>(t)); },
            [&](size_t i) { return split.images[i].group_id == group; });
    }

    auto percent = [](const std::vector<std::array<bool, 3>>& hits, size_t slot) {
        size_t n = 0;
        for (const auto& h : hits) n += h[slot] ? 1 : 0;
        return 100.0 * static_cast<double>(n) / static_cast<double>(hits.size());
    };
    RetrievalMetrics m;
    m.text_r1 = percent(text_hits, 0);
    m.text_r5 = percent(text_hits, 1);
    m.text_r10 = percent(text_hits, 2);
    m.image_r1 = percent(image_hits, 0);
    m.image_r5 = percent(image_hits, 1);
    m.image_r10 = percent(image_hits, 2);
    return m;
}

RetrievalMetrics evaluate_retrieval(const ScorerParams& params, const Split& split) {
    return evaluate_retrieval(MlpScorer(params), split);
}

TracePoint separability_point(const PairScorer& scorer, const Split& split, size_t probe_count) {
    if (split.images.empty() || split.texts.empty()) {
        throw UsageError("separability_point: empty split");
    }
    const size_t n_probe =
        probe_count == 0 ? split.images.size() : std::min(probe_count, split.images.size());
    std::vector<FeatureRecord> probes(split.images.begin(),
                                      split.images.begin() + static_cast<ptrdiff_t>(n_probe));
    const Matrix s = scorer.score_matrix(probes, split.texts);

    double pos = 0, n1 = 0, n2 = 0, n3 = 0;
    for (size_t i = 0; i < n_probe; ++i) {
        const int64_t group = probes[i].group_id;
        // The positive pair is the query's lowest-index caption.
        double pos_score = 0;
        bool found = false;
        std::array<double, 3> top{-HUGE_VAL, -HUGE_VAL, -HUGE_VAL};
        for (size_t t = 0; t < split.texts.size(); ++t) {
            const double v = s.at(i, t);
            if (split.texts[t].group_id == group) {
                if (!found) {
                    pos_score = v;
                    found = true;
                }
            } else if (v > top[2]) {
                if (v > top[0]) {
                    top = {v, top[0], top[1]};
                } else if (v > top[1]) {
                    top = {top[0], v, top[1]};
                } else {
                    top[2] = v;
                }
            }
        }
        if (!found) throw UsageError("separability_point: probe image has no caption in split");
        pos += sigmoid(pos_score);
        n1 += sigmoid(top[0]);
        n2 += sigmoid(top[1]);
        n3 += sigmoid(top[2]);
    }
    const double d = static_cast<double>(n_probe);
    return TracePoint{pos / d, n1 / d, n2 / d, n3 / d};
}

SeparabilityTrace separability_trace(const std::vector<std::string>& checkpoint_paths,
                                     const Split& split, size_t probe_count) {
    if (checkpoint_paths.empty()) throw UsageError("separability_trace: no checkpoints");
    SeparabilityTrace trace;
    for (const auto& path : checkpoint_paths) {
        ScorerParams p = load_checkpoint(path);
        TracePoint pt = separability_point(MlpScorer(p), split, probe_count);
        trace.positive.push_back(pt.positive);
        trace.neg1.push_back(pt.neg1);
        trace.neg2.push_back(pt.neg2);
        trace.neg3.push_back(pt.neg3);
    }
    return trace;
}

std::string metrics_to_kv(const RetrievalMetrics& m) {
    char buf[256];
    std::string out;
    auto add = [&](const char* key, double v) {
        snprintf(buf, sizeof buf, "%s=%.17g\n", key, v);
        out += buf;
    };
    add("text_r1", m.text_r1);
    add("text_r5", m.text_r5);
    add("text_r10", m.text_r10);
    add("image_r1", m.image_r1);
    add("image_r5", m.image_r5);
    add("image_r10", m.image_r10);
    return out;
}

void write_metrics_files(const RetrievalMetrics& m, const std::string& dir) {
    {
        std::ofstream out(dir + "/metrics.txt", std::ios::binary);
        if (!out) throw IoError("cannot write " + dir + "/metrics.txt");
        out << metrics_to_kv(m);
    }
    std::ofstream tsv(dir + "/metrics.tsv", std::ios::binary);
    if (!tsv) throw IoError("cannot write " + dir + "/metrics.tsv");
    tsv << "text_r1\ttext_r5\ttext_r10\timage_r1\timage_r5\timage_r10\n";
    char buf[256];
    snprintf(buf, sizeof buf, "%.4f\t%.4f\t%.4f\t%.4f\t%.4f\t%.4f\n", m.text_r1, m.text_r5,
             m.text_r10, m.image_r1, m.image_r5, m.image_r10);
    tsv << buf;
}

void write_trace_tsv(const SeparabilityTrace& t, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path);
    out << "epoch\tpositive\tneg1\tneg2\tneg3\n";
    char buf[256];
    for (size_t i = 0; i < t.positive.size(); ++i) {
        snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\t%.6f\t%.6f\n", i, t.positive[i], t.neg1[i],
                 t.neg2[i], t.neg3[i]);
        out << buf;
    }
}

}  // namespace dcd
