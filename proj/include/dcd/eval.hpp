#pragma once

#include <string>
#include <vector>

#include "dcd/data.hpp"
#include "dcd/model.hpp"

namespace dcd {

/// Recall percentages, both retrieval directions. R@1 <= R@5 <= R@10 <= 100.
struct RetrievalMetrics {
    double text_r1 = 0, text_r5 = 0, text_r10 = 0;    // image query -> rank texts
    double image_r1 = 0, image_r5 = 0, image_r10 = 0; // text query -> rank images

    double mean_r1() const { return 0.5 * (text_r1 + image_r1); }
};

/// Anything that can score all image x text pairs of a split.
/// Rows are images, columns are texts.
class PairScorer {
public:
    virtual ~PairScorer() = default;
    virtual Matrix score_matrix(const std::vector<FeatureRecord>& images,
                                const std::vector<FeatureRecord>& texts) const = 0;
};

/// Scores pairs with a fusion MLP, one batched forward per image query.
class MlpScorer : public PairScorer {
public:
    explicit MlpScorer(const ScorerParams& params) : params_(params) {}
    Matrix score_matrix(const std::vector<FeatureRecord>& images,
                        const std::vector<FeatureRecord>& texts) const override;

private:
    const ScorerParams& params_;
};

/// Ranks all split texts per image query and vice versa, descending score,
/// ties broken by smaller index. A text-retrieval query hits at K if any
/// caption sharing the image's group id ranks within the top K; image
/// retrieval is symmetric.
RetrievalMetrics evaluate_retrieval(const PairScorer& scorer, const Split& split);
RetrievalMetrics evaluate_retrieval(const ScorerParams& params, const Split& split);

/// Per-epoch mean logistic-squashed matching score of the positive pair and
/// of the three highest-scoring negative pairs over a fixed probe set.
/// Ranking uses raw logits; the squash only bounds the reported traces.
struct SeparabilityTrace {
    std::vector<double> positive, neg1, neg2, neg3;  // one entry per checkpoint
};

/// One trace point for a single scorer over the first `probe_count` images of
/// the split (0 = all). The positive pair is the query's lowest-index caption.
struct TracePoint {
    double positive, neg1, neg2, neg3;
};
TracePoint separability_point(const PairScorer& scorer, const Split& split, size_t probe_count);

/// Loads each checkpoint in order and evaluates one trace point per epoch.
SeparabilityTrace separability_trace(const std::vector<std::string>& checkpoint_paths,
                                     const Split& split, size_t probe_count);

/// key=value lines (machine-parseable) plus a one-row TSV summary.
void write_metrics_files(const RetrievalMetrics& m, const std::string& dir);
std::string metrics_to_kv(const RetrievalMetrics& m);

/// Column-delimited series: epoch, positive, neg1, neg2, neg3.
void write_trace_tsv(const SeparabilityTrace& t, const std::string& path);

}  // namespace dcd
