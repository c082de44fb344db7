#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dcd/numeric.hpp"

namespace dcd {

enum class Role { kTeacher, kStudent };
enum class Activation { kTanh };

std::string role_name(Role r);
Role role_from_name(const std::string& s);

/// Architecture + init seed for a fusion scorer.
struct ScorerConfig {
    size_t image_dim = 64;
    size_t text_dim = 64;
    std::vector<size_t> hidden;  // non-empty
    uint64_t seed = 0;
    Role role = Role::kStudent;

    size_t input_dim() const { return image_dim + text_dim; }
    void validate() const;
};

ScorerConfig default_teacher_config(uint64_t seed);
ScorerConfig default_student_config(uint64_t seed);

/// Layered dense-network parameters for a cross-modal fusion scorer:
/// concat(image, text) -> hidden tanh layers -> 1 linear output logit.
struct ScorerParams {
    std::vector<Matrix> weights;  // layer i: in_i x out_i
    std::vector<Matrix> bias;     // layer i: 1 x out_i
    Activation activation = Activation::kTanh;
    Role role = Role::kStudent;
    size_t image_dim = 0;
    size_t text_dim = 0;
    uint64_t seed = 0;

    size_t num_layers() const { return weights.size(); }
    size_t input_dim() const { return image_dim + text_dim; }
    size_t param_count() const;
    void validate() const;  // dimension chaining + scalar output
};

/// Scaled uniform init: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0.
ScorerParams init_scorer(const ScorerConfig& config);

/// Batched forward: rows of `input` are concat(image, text) pairs; returns
/// the n x 1 logit column. Pass a tape to record for backward.
Matrix forward(const ScorerParams& params, const Matrix& input);
Matrix forward(const ScorerParams& params, const Matrix& input, GradTape& tape);

/// Gradients shaped like `params`, zero-filled.
ParamGrads zero_grads(const ScorerParams& params);

/// Matching logit for a single (image, text) pair.
double score_pair(const ScorerParams& params, const Matrix& image_feat, const Matrix& text_feat);

/// One logit per (query, key) pair; keys scored in order, in one batched forward.
LogitVector score_candidates(const ScorerParams& params, const Matrix& query_feat,
                             const std::vector<const Matrix*>& key_feats);

/// Pack rows of concat(query, key_j) into an n x (image_dim + text_dim) matrix.
Matrix concat_pairs(const Matrix& query_feat, const std::vector<const Matrix*>& key_feats);

// Parameter <-> flat vector, for the finite-difference oracle.
Matrix flatten_params(const ScorerParams& params);
void unflatten_params(const Matrix& flat, ScorerParams& params);

// Checkpoint file: text key-value manifest, a `data` separator line, then one
// raw little-endian f64 blob per layer (weights then bias), in layer order.
// Round-trips bit-exactly.
void save_checkpoint(const ScorerParams& params, const std::string& path);
ScorerParams load_checkpoint(const std::string& path);

}  // namespace dcd
