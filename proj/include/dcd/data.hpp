#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dcd/matrix.hpp"

namespace dcd {

enum class Modality { kImage, kText };

/// One modality's feature vector plus identity/grouping metadata. Captions of
/// one image share its group_id; splits are disjoint by group_id.
struct FeatureRecord {
    int64_t id = 0;
    int64_t group_id = 0;
    Modality modality = Modality::kImage;
    Matrix vector;  // 1 x d
};

struct DatasetManifest {
    size_t n_train = 2000;
    size_t n_val = 200;
    size_t n_test = 200;
    size_t captions_per_image = 5;
    size_t image_dim = 64;
    size_t text_dim = 64;
    size_t latent_dim = 16;
    double noise_sigma = 0.25;
    uint64_t seed = 1;

    void validate() const;
    size_t n_images() const { return n_train + n_val + n_test; }
};

/// A split: images, their captions, and the matched (image index, text index)
/// pairs within the split.
struct Split {
    std::vector<FeatureRecord> images;
    std::vector<FeatureRecord> texts;
    std::vector<std::pair<size_t, size_t>> pairs;
};

struct Dataset {
    DatasetManifest manifest;
    Split train, val, test;
    // Generation-time extras, absent for externally supplied features.
    std::optional<Matrix> proj_image;  // latent_dim x image_dim
    std::optional<Matrix> proj_text;   // latent_dim x text_dim
    std::optional<Matrix> train_latents, val_latents, test_latents;

    const Split& split(const std::string& name) const;
};

// Binary matrix container: 8-byte magic "DCDMAT01", two little-endian u64
// counts (rows, cols), then rows*cols little-endian f64 values, row-major.
void write_matrix_file(const Matrix& m, const std::string& path);
Matrix read_matrix_file(const std::string& path);

/// Shared latent concepts projected into two noisy modality spaces:
/// image_i = z_i * A + sigma * eps, caption_ij = z_i * B + sigma * eps'.
/// Group-disjoint splits, byte-identical output per seed. Validates the
/// manifest before creating any file.
void generate_synthetic(const DatasetManifest& manifest, const std::string& out_dir);

/// Loads a dataset directory (synthetic or externally precomputed features in
/// the same format). Write->read round-trips are bit-exact.
Dataset load_features(const std::string& dir);

/// Seeded shuffle of the split's matched pairs, partitioned into batches of
/// size k (trailing short batch dropped). Deterministic per (seed, epoch).
std::vector<std::vector<size_t>> make_batches(const Split& split, size_t k, uint64_t seed,
                                              size_t epoch);

/// Sanity oracle for generated data: recover latents from both modalities via
/// the stored projections and report nearest-neighbour R@1 (percent) on the
/// given split. Near 100 for small noise by construction.
double latent_alignment_r_at_1(const Dataset& dataset, const Split& split);

}  // namespace dcd
