#include "dcd/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "dcd/kernels.hpp"
#include "dcd/rng.hpp"

namespace fs = std::filesystem;

namespace dcd {

static_assert(std::endian::native == std::endian::little,
              "feature blobs are little-endian; big-endian hosts are unsupported");

namespace {
constexpr char kMagic[8] = {'D', 'C', 'D', 'M', 'A', 'T', '0', '1'};
}

void DatasetManifest::validate() const {
    if (n_train == 0 || n_val == 0 || n_test == 0) {
        throw ConfigError("dataset split sizes must all be > 0 (train=" + std::to_string(n_train) +
                          " val=" + std::to_string(n_val) + " test=" + std::to_string(n_test) + ")");
    }
    if (captions_per_image == 0) throw ConfigError("captions_per_image must be >= 1");
    if (image_dim == 0 || text_dim == 0 || latent_dim == 0) {
        throw ConfigError("feature/latent dims must be > 0");
    }
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw ConfigError("noise_sigma must be finite and >= 0");
    }
}

const Split& Dataset::split(const std::string& name) const {
    if (name == "train") return train;
    if (name == "val") return val;
    if (name == "test") return test;
    throw ConfigError("unknown split '" + name + "' (expected train|val|test)");
}

void write_matrix_file(const Matrix& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    uint64_t rows = m.rows(), cols = m.cols();
    out.write(kMagic, 8);
    out.write(reinterpret_cast<const char*>(&rows), 8);
    out.write(reinterpret_cast<const char*>(&cols), 8);
    out.write(reinterpret_cast<const char*>(m.data().data()),
              static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!out) throw IoError("short write: " + path);
}

Matrix read_matrix_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw DataFormatError(path + ": bad magic at byte offset 0");
    }
    uint64_t rows = 0, cols = 0;
    if (!in.read(reinterpret_cast<char*>(&rows), 8) || !in.read(reinterpret_cast<char*>(&cols), 8)) {
        throw DataFormatError(path + ": truncated header at byte offset 8");
    }
    if (rows == 0 || cols == 0 || rows > (1ULL << 32) || cols > (1ULL << 32)) {
        throw DataFormatError(path + ": implausible dimensions " + std::to_string(rows) + "x" +
                              std::to_string(cols) + " at byte offset 8");
    }
    Matrix m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data().data()),
            static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (static_cast<size_t>(in.gcount()) != m.size() * sizeof(double)) {
        throw DataFormatError(path + ": blob truncated at byte offset " +
                              std::to_string(24 + in.gcount()));
    }
    for (size_t i = 0; i < m.size(); ++i) {
        if (!std::isfinite(m.data()[i])) {
            throw DataFormatError(path + ": non-finite value at byte offset " +
                                  std::to_string(24 + i * sizeof(double)));
        }
    }
    char extra;
    if (in.read(&extra, 1)) {
        throw DataFormatError(path + ": trailing bytes at byte offset " +
                              std::to_string(24 + m.size() * sizeof(double)));
    }
    return m;
}

namespace {

struct SplitBlock {
    Matrix images, texts, image_groups, text_groups, latents;
};

void write_manifest(const DatasetManifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    std::ostringstream sigma;
    sigma.precision(17);
    sigma << m.noise_sigma;
    out << "format=dcd-dataset-v1\n"
        << "n_train=" << m.n_train << "\n"
        << "n_val=" << m.n_val << "\n"
        << "n_test=" << m.n_test << "\n"
        << "captions_per_image=" << m.captions_per_image << "\n"
        << "image_dim=" << m.image_dim << "\n"
        << "text_dim=" << m.text_dim << "\n"
        << "latent_dim=" << m.latent_dim << "\n"
        << "noise_sigma=" << sigma.str() << "\n"
        << "seed=" << m.seed << "\n";
    if (!out) throw IoError("short write: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    DatasetManifest m;
    std::string line;
    bool saw_format = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw DataFormatError(path + ": manifest line '" + line + "'");
        const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        try {
            if (key == "format") {
                if (val != "dcd-dataset-v1") throw DataFormatError(path + ": unknown format " + val);
                saw_format = true;
            } else if (key == "n_train") m.n_train = std::stoul(val);
            else if (key == "n_val") m.n_val = std::stoul(val);
            else if (key == "n_test") m.n_test = std::stoul(val);
            else if (key == "captions_per_image") m.captions_per_image = std::stoul(val);
            else if (key == "image_dim") m.image_dim = std::stoul(val);
            else if (key == "text_dim") m.text_dim = std::stoul(val);
            else if (key == "latent_dim") m.latent_dim = std::stoul(val);
            else if (key == "noise_sigma") m.noise_sigma = std::stod(val);
            else if (key == "seed") m.seed = std::stoull(val);
            else throw DataFormatError(path + ": unknown manifest key " + key);
        } catch (const std::invalid_argument&) {
            throw DataFormatError(path + ": bad value for " + key + ": '" + val + "'");
        }
    }
    if (!saw_format) throw DataFormatError(path + ": missing format line");
    m.validate();
    return m;
}

SplitBlock generate_split(const DatasetManifest& m, size_t n, size_t group_base, Rng& rng,
                          const Matrix& proj_image, const Matrix& proj_text) {
    const size_t cpi = m.captions_per_image;
    SplitBlock b;
    b.latents = Matrix(n, m.latent_dim);
    b.image_groups = Matrix(n, 1);
    b.text_groups = Matrix(n * cpi, 1);

    Matrix image_noise(n, m.image_dim);
    Matrix text_noise(n * cpi, m.text_dim);
    // Fixed draw order per image: latent, image noise, then caption noise.
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < m.latent_dim; ++j) b.latents.at(i, j) = rng.normal();
        for (size_t j = 0; j < m.image_dim; ++j) image_noise.at(i, j) = m.noise_sigma * rng.normal();
        for (size_t c = 0; c < cpi; ++c) {
            for (size_t j = 0; j < m.text_dim; ++j) {
                text_noise.at(i * cpi + c, j) = m.noise_sigma * rng.normal();
            }
        }
        b.image_groups.at(i, 0) = static_cast<double>(group_base + i);
        for (size_t c = 0; c < cpi; ++c) {
            b.text_groups.at(i * cpi + c, 0) = static_cast<double>(group_base + i);
        }
    }

    b.images = kern::matmul(b.latents, proj_image);
    for (size_t i = 0; i < b.images.size(); ++i) b.images.data()[i] += image_noise.data()[i];

    Matrix caption_latents(n * cpi, m.latent_dim);
    for (size_t i = 0; i < n; ++i) {
        for (size_t c = 0; c < cpi; ++c) {
            std::memcpy(caption_latents.row_ptr(i * cpi + c), b.latents.row_ptr(i),
                        m.latent_dim * sizeof(double));
        }
    }
    b.texts = kern::matmul(caption_latents, proj_text);
    for (size_t i = 0; i < b.texts.size(); ++i) b.texts.data()[i] += text_noise.data()[i];
    return b;
}

}  // namespace

void generate_synthetic(const DatasetManifest& manifest, const std::string& out_dir) {
    manifest.validate();  // no partial files on invalid sizes

    Rng rng(manifest.seed);
    const double proj_scale = 1.0 / std::sqrt(static_cast<double>(manifest.latent_dim));
    Matrix proj_image(manifest.latent_dim, manifest.image_dim);
    for (double& v : proj_image.data()) v = proj_scale * rng.normal();
    Matrix proj_text(manifest.latent_dim, manifest.text_dim);
    for (double& v : proj_text.data()) v = proj_scale * rng.normal();

    const struct {
        const char* name;
        size_t n;
        size_t base;
    } splits[] = {
        {"train", manifest.n_train, 0},
        {"val", manifest.n_val, manifest.n_train},
        {"test", manifest.n_test, manifest.n_train + manifest.n_val},
    };

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir + ": " + ec.message());

    write_manifest(manifest, out_dir + "/manifest.txt");
    write_matrix_file(proj_image, out_dir + "/proj_image.bin");
    write_matrix_file(proj_text, out_dir + "/proj_text.bin");
    for (const auto& s : splits) {
        SplitBlock b = generate_split(manifest, s.n, s.base, rng, proj_image, proj_text);
        const std::string prefix = out_dir + "/" + s.name;
        write_matrix_file(b.images, prefix + ".images.bin");
        write_matrix_file(b.texts, prefix + ".texts.bin");
        write_matrix_file(b.image_groups, prefix + ".image_groups.bin");
        write_matrix_file(b.text_groups, prefix + ".text_groups.bin");
        write_matrix_file(b.latents, prefix + ".latents.bin");
    }
}

namespace {

Split load_split(const std::string& dir, const std::string& name, const DatasetManifest& m,
                 size_t id_base_images, size_t id_base_texts) {
    const std::string prefix = dir + "/" + name;
    Matrix images = read_matrix_file(prefix + ".images.bin");
    Matrix texts = read_matrix_file(prefix + ".texts.bin");
    Matrix image_groups = read_matrix_file(prefix + ".image_groups.bin");
    Matrix text_groups = read_matrix_file(prefix + ".text_groups.bin");

    if (images.cols() != m.image_dim) {
        throw DataFormatError(prefix + ".images.bin: dim " + std::to_string(images.cols()) +
                              " vs manifest image_dim " + std::to_string(m.image_dim));
    }
    if (texts.cols() != m.text_dim) {
        throw DataFormatError(prefix + ".texts.bin: dim " + std::to_string(texts.cols()) +
                              " vs manifest text_dim " + std::to_string(m.text_dim));
    }
    if (image_groups.rows() != images.rows() || image_groups.cols() != 1) {
        throw DataFormatError(prefix + ".image_groups.bin: " + image_groups.shape_str() +
                              " vs images " + images.shape_str());
    }
    if (text_groups.rows() != texts.rows() || text_groups.cols() != 1) {
        throw DataFormatError(prefix + ".text_groups.bin: " + text_groups.shape_str() +
                              " vs texts " + texts.shape_str());
    }

    Split split;
    std::map<int64_t, size_t> image_by_group;
    for (size_t i = 0; i < images.rows(); ++i) {
        FeatureRecord rec;
        rec.id = static_cast<int64_t>(id_base_images + i);
        rec.group_id = static_cast<int64_t>(image_groups.at(i, 0));
        rec.modality = Modality::kImage;
        rec.vector = Matrix(1, m.image_dim, std::vector<double>(
                                                images.row_ptr(i), images.row_ptr(i) + m.image_dim));
        if (!image_by_group.emplace(rec.group_id, i).second) {
            throw DataFormatError(prefix + ": duplicate image group id " +
                                  std::to_string(rec.group_id));
        }
        split.images.push_back(std::move(rec));
    }
    for (size_t t = 0; t < texts.rows(); ++t) {
        FeatureRecord rec;
        rec.id = static_cast<int64_t>(id_base_texts + t);
        rec.group_id = static_cast<int64_t>(text_groups.at(t, 0));
        rec.modality = Modality::kText;
        rec.vector = Matrix(1, m.text_dim,
                            std::vector<double>(texts.row_ptr(t), texts.row_ptr(t) + m.text_dim));
        auto it = image_by_group.find(rec.group_id);
        if (it == image_by_group.end()) {
            throw DataFormatError(prefix + ": text row " + std::to_string(t) + " group " +
                                  std::to_string(rec.group_id) + " has no image");
        }
        split.pairs.emplace_back(it->second, t);
        split.texts.push_back(std::move(rec));
    }
    return split;
}

}  // namespace

Dataset load_features(const std::string& dir) {
    Dataset d;
    d.manifest = read_manifest(dir + "/manifest.txt");
    const DatasetManifest& m = d.manifest;
    // Record ids are globally unique per modality, ordered train, val, test.
    d.train = load_split(dir, "train", m, 0, 0);
    d.val = load_split(dir, "val", m, m.n_train, d.train.texts.size());
    d.test =
        load_split(dir, "test", m, m.n_train + m.n_val, d.train.texts.size() + d.val.texts.size());

    auto load_optional = [&](const std::string& path) -> std::optional<Matrix> {
        if (!fs::exists(path)) return std::nullopt;
        return read_matrix_file(path);
    };
    d.proj_image = load_optional(dir + "/proj_image.bin");
    d.proj_text = load_optional(dir + "/proj_text.bin");
    d.train_latents = load_optional(dir + "/train.latents.bin");
    d.val_latents = load_optional(dir + "/val.latents.bin");
    d.test_latents = load_optional(dir + "/test.latents.bin");

    // Split disjointness by group id.
    auto groups_of = [](const Split& s) {
        std::vector<int64_t> g;
        for (const auto& r : s.images) g.push_back(r.group_id);
        std::sort(g.begin(), g.end());
        return g;
    };
    auto gt = groups_of(d.train), gv = groups_of(d.val), gs = groups_of(d.test);
    std::vector<int64_t> inter;
    std::set_intersection(gt.begin(), gt.end(), gv.begin(), gv.end(), std::back_inserter(inter));
    std::set_intersection(gt.begin(), gt.end(), gs.begin(), gs.end(), std::back_inserter(inter));
    std::set_intersection(gv.begin(), gv.end(), gs.begin(), gs.end(), std::back_inserter(inter));
    if (!inter.empty()) {
        throw DataFormatError(dir + ": splits share group id " + std::to_string(inter.front()));
    }
    return d;
}

std::vector<std::vector<size_t>> make_batches(const Split& split, size_t k, uint64_t seed,
                                              size_t epoch) {
    if (k == 0 || k > split.pairs.size()) {
        throw ConfigError("batch size " + std::to_string(k) + " vs split with " +
                          std::to_string(split.pairs.size()) + " pairs");
    }
    std::vector<size_t> order(split.pairs.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng = Rng(seed).split(0x626174636865ULL + epoch);
    rng.shuffle(order);

    std::vector<std::vector<size_t>> batches;
    for (size_t start = 0; start + k <= order.size(); start += k) {
        batches.emplace_back(order.begin() + static_cast<ptrdiff_t>(start),
                             order.begin() + static_cast<ptrdiff_t>(start + k));
    }
    return batches;
}

namespace {

// Solve the small symmetric system S x = b in place (Gaussian elimination with
// partial pivoting); S is latent_dim x latent_dim.
std::vector<double> solve_linear(Matrix s, std::vector<double> b) {
    const size_t n = s.rows();
    for (size_t col = 0; col < n; ++col) {
        size_t pivot = col;
        for (size_t r = col + 1; r < n; ++r) {
            if (std::fabs(s.at(r, col)) > std::fabs(s.at(pivot, col))) pivot = r;
        }
        if (std::fabs(s.at(pivot, col)) < 1e-12) throw NumericError("singular projection gram matrix");
        if (pivot != col) {
            for (size_t j = 0; j < n; ++j) std::swap(s.at(col, j), s.at(pivot, j));
            std::swap(b[col], b[pivot]);
        }
        for (size_t r = col + 1; r < n; ++r) {
            const double f = s.at(r, col) / s.at(col, col);
            for (size_t j = col; j < n; ++j) s.at(r, j) -= f * s.at(col, j);
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n);
    for (size_t i = n; i-- > 0;) {
        double acc = b[i];
        for (size_t j = i + 1; j < n; ++j) acc -= s.at(i, j) * x[j];
        x[i] = acc / s.at(i, i);
    }
    return x;
}

// Least-squares latent recovery: rows of feats against projection proj
// (latent_dim x d): z = argmin ||z*proj - x||, via proj proj^T z^T = proj x^T.
Matrix recover_latents(const Matrix& feats, const Matrix& proj) {
    Matrix gram = kern::matmul_abt(proj, proj);        // latent x latent
    Matrix rhs = kern::matmul_abt(feats, proj);        // n x latent
    Matrix out(feats.rows(), proj.rows());
    for (size_t i = 0; i < feats.rows(); ++i) {
        std::vector<double> b(rhs.row_ptr(i), rhs.row_ptr(i) + rhs.cols());
        std::vector<double> z = solve_linear(gram, std::move(b));
        std::memcpy(out.row_ptr(i), z.data(), z.size() * sizeof(double));
    }
    return out;
}

}  // namespace

double latent_alignment_r_at_1(const Dataset& dataset, const Split& split) {
    if (!dataset.proj_image || !dataset.proj_text) {
        throw UsageError("latent_alignment_r_at_1 requires stored projections");
    }
    Matrix img_feats(split.images.size(), dataset.manifest.image_dim);
    for (size_t i = 0; i < split.images.size(); ++i) {
        std::memcpy(img_feats.row_ptr(i), split.images[i].vector.row_ptr(0),
                    img_feats.cols() * sizeof(double));
    }
    Matrix txt_feats(split.texts.size(), dataset.manifest.text_dim);
    for (size_t t = 0; t < split.texts.size(); ++t) {
        std::memcpy(txt_feats.row_ptr(t), split.texts[t].vector.row_ptr(0),
                    txt_feats.cols() * sizeof(double));
    }
    Matrix zi = recover_latents(img_feats, *dataset.proj_image);
    Matrix zt = recover_latents(txt_feats, *dataset.proj_text);

    size_t hits = 0;
    for (size_t i = 0; i < zi.rows(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        size_t best_t = 0;
        for (size_t t = 0; t < zt.rows(); ++t) {
            double d2 = 0.0;
            for (size_t j = 0; j < zi.cols(); ++j) {
                const double diff = zi.at(i, j) - zt.at(t, j);
                d2 += diff * diff;
            }
            if (d2 < best) {
                best = d2;
                best_t = t;
            }
        }
        if (split.texts[best_t].group_id == split.images[i].group_id) ++hits;
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(zi.rows());
}

}  // namespace dcd
