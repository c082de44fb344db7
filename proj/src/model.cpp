#include "dcd/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dcd/kernels.hpp"
#include "dcd/rng.hpp"

namespace dcd {

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian; big-endian hosts are unsupported");

std::string role_name(Role r) { return r == Role::kTeacher ? "teacher" : "student"; }

Role role_from_name(const std::string& s) {
    if (s == "teacher") return Role::kTeacher;
    if (s == "student") return Role::kStudent;
    throw DataFormatError("unknown role '" + s + "'");
}

void ScorerConfig::validate() const {
    if (image_dim == 0 || text_dim == 0) throw ConfigError("scorer dims must be > 0");
    if (hidden.empty()) throw ConfigError("scorer hidden widths must be non-empty");
    for (size_t w : hidden) {
        if (w == 0) throw ConfigError("scorer hidden width must be > 0");
    }
}

ScorerConfig default_teacher_config(uint64_t seed) {
    return ScorerConfig{64, 64, {256, 256, 256, 256}, seed, Role::kTeacher};
}

ScorerConfig default_student_config(uint64_t seed) {
    return ScorerConfig{64, 64, {128, 128}, seed, Role::kStudent};
}

size_t ScorerParams::param_count() const {
    size_t n = 0;
    for (size_t i = 0; i < weights.size(); ++i) n += weights[i].size() + bias[i].size();
    return n;
}

void ScorerParams::validate() const {
    if (weights.empty() || weights.size() != bias.size()) {
        throw ShapeError("scorer params: empty or mismatched layer lists");
    }
    if (weights.front().rows() != input_dim()) {
        throw ShapeError("scorer params: first layer expects " +
                         std::to_string(weights.front().rows()) + " inputs, features give " +
                         std::to_string(input_dim()));
    }
    for (size_t i = 0; i + 1 < weights.size(); ++i) {
        if (weights[i].cols() != weights[i + 1].rows()) {
            throw ShapeError("scorer params: layer " + std::to_string(i) + " output width " +
                             std::to_string(weights[i].cols()) + " vs layer " +
                             std::to_string(i + 1) + " input width " +
                             std::to_string(weights[i + 1].rows()));
        }
    }
    for (size_t i = 0; i < weights.size(); ++i) {
        if (bias[i].rows() != 1 || bias[i].cols() != weights[i].cols()) {
            throw ShapeError("scorer params: bias " + std::to_string(i) + " shape " +
                             bias[i].shape_str());
        }
    }
    if (weights.back().cols() != 1) throw ShapeError("scorer params: final layer must emit 1 logit");
}

ScorerParams init_scorer(const ScorerConfig& config) {
    config.validate();
    ScorerParams p;
    p.activation = Activation::kTanh;
    p.role = config.role;
    p.image_dim = config.image_dim;
    p.text_dim = config.text_dim;
    p.seed = config.seed;

    std::vector<size_t> widths;
    widths.push_back(config.input_dim());
    for (size_t h : config.hidden) widths.push_back(h);
    widths.push_back(1);

    Rng rng(config.seed);
    for (size_t i = 0; i + 1 < widths.size(); ++i) {
        const size_t fan_in = widths[i], fan_out = widths[i + 1];
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        Matrix w(fan_in, fan_out);
        for (double& v : w.data()) v = rng.uniform(-scale, scale);
        p.weights.push_back(std::move(w));
        p.bias.emplace_back(1, fan_out);
    }
    p.validate();
    return p;
}

Matrix forward(const ScorerParams& params, const Matrix& input) {
    Matrix x = input;
    for (size_t i = 0; i < params.num_layers(); ++i) {
        x = dense_forward(x, params.weights[i], params.bias[i]);
        if (i + 1 < params.num_layers()) x = kern::tanh_map(x);
    }
    return x;
}

Matrix forward(const ScorerParams& params, const Matrix& input, GradTape& tape) {
    Matrix x = input;
    for (size_t i = 0; i < params.num_layers(); ++i) {
        x = dense_forward(x, params.weights[i], params.bias[i], tape, static_cast<int>(i));
        if (i + 1 < params.num_layers()) x = tanh_forward(x, tape);
    }
    return x;
}

ParamGrads zero_grads(const ScorerParams& params) {
    ParamGrads g;
    for (size_t i = 0; i < params.num_layers(); ++i) {
        g.weights.emplace_back(params.weights[i].rows(), params.weights[i].cols());
        g.bias.emplace_back(1, params.bias[i].cols());
    }
    return g;
}

Matrix concat_pairs(const Matrix& query_feat, const std::vector<const Matrix*>& key_feats) {
    const size_t qd = query_feat.cols(), n = key_feats.size();
    if (query_feat.rows() != 1) throw ShapeError("concat_pairs: query must be 1 x d");
    const size_t kd = key_feats.empty() ? 0 : key_feats[0]->cols();
    Matrix x(n, qd + kd);
    for (size_t i = 0; i < n; ++i) {
        const Matrix& k = *key_feats[i];
        if (k.rows() != 1 || k.cols() != kd) {
            throw ShapeError("concat_pairs: key " + std::to_string(i) + " shape " + k.shape_str());
        }
        std::memcpy(x.row_ptr(i), query_feat.row_ptr(0), qd * sizeof(double));
        std::memcpy(x.row_ptr(i) + qd, k.row_ptr(0), kd * sizeof(double));
    }
    return x;
}

double score_pair(const ScorerParams& params, const Matrix& image_feat, const Matrix& text_feat) {
    if (image_feat.cols() != params.image_dim || text_feat.cols() != params.text_dim) {
        throw ShapeError("score_pair: features " + image_feat.shape_str() + "/" +
                         text_feat.shape_str() + " vs scorer dims " +
                         std::to_string(params.image_dim) + "+" + std::to_string(params.text_dim));
    }
    Matrix x = concat_pairs(image_feat, {&text_feat});
    return forward(params, x).at(0, 0);
}

LogitVector score_candidates(const ScorerParams& params, const Matrix& query_feat,
                             const std::vector<const Matrix*>& key_feats) {
    if (key_feats.empty()) throw UsageError("score_candidates: no keys");
    Matrix x = concat_pairs(query_feat, key_feats);
    if (x.cols() != params.input_dim()) {
        throw ShapeError("score_candidates: pair width " + std::to_string(x.cols()) +
                         " vs scorer input " + std::to_string(params.input_dim()));
    }
    Matrix logits = forward(params, x);
    LogitVector out(key_feats.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = logits.at(i, 0);
    return out;
}

Matrix flatten_params(const ScorerParams& params) {
    Matrix flat(1, params.param_count());
    size_t o = 0;
    for (size_t i = 0; i < params.num_layers(); ++i) {
        for (double v : params.weights[i].data()) flat.data()[o++] = v;
        for (double v : params.bias[i].data()) flat.data()[o++] = v;
    }
    return flat;
}

void unflatten_params(const Matrix& flat, ScorerParams& params) {
    if (flat.size() != params.param_count()) {
        throw ShapeError("unflatten_params: " + std::to_string(flat.size()) + " values vs " +
                         std::to_string(params.param_count()) + " parameters");
    }
    size_t o = 0;
    for (size_t i = 0; i < params.num_layers(); ++i) {
        for (double& v : params.weights[i].data()) v = flat.data()[o++];
        for (double& v : params.bias[i].data()) v = flat.data()[o++];
    }
}

void save_checkpoint(const ScorerParams& params, const std::string& path) {
    params.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out << "format=dcd-scorer-v1\n";
    out << "role=" << role_name(params.role) << "\n";
    out << "activation=tanh\n";
    out << "seed=" << params.seed << "\n";
    out << "image_dim=" << params.image_dim << "\n";
    out << "text_dim=" << params.text_dim << "\n";
    out << "layers=" << params.num_layers() << "\n";
    for (size_t i = 0; i < params.num_layers(); ++i) {
        out << "layer" << i << "=" << params.weights[i].rows() << "x" << params.weights[i].cols()
            << "\n";
    }
    out << "data\n";
    for (size_t i = 0; i < params.num_layers(); ++i) {
        out.write(reinterpret_cast<const char*>(params.weights[i].data().data()),
                  static_cast<std::streamsize>(params.weights[i].size() * sizeof(double)));
        out.write(reinterpret_cast<const char*>(params.bias[i].data().data()),
                  static_cast<std::streamsize>(params.bias[i].size() * sizeof(double)));
    }
    if (!out) throw IoError("short write on checkpoint: " + path);
}

ScorerParams load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint: " + path);

    ScorerParams p;
    size_t layers = 0;
    std::vector<std::pair<size_t, size_t>> shapes;
    std::string line;
    bool saw_format = false;
    while (std::getline(in, line)) {
        if (line == "data") break;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw DataFormatError("checkpoint manifest line '" + line + "'");
        const std::string key = line.substr(0, eq), val = line.substr(eq + 1);
        if (key == "format") {
            if (val != "dcd-scorer-v1") throw DataFormatError("unknown checkpoint format " + val);
            saw_format = true;
        } else if (key == "role") {
            p.role = role_from_name(val);
        } else if (key == "activation") {
            if (val != "tanh") throw DataFormatError("unknown activation " + val);
        } else if (key == "seed") {
            p.seed = std::stoull(val);
        } else if (key == "image_dim") {
            p.image_dim = std::stoul(val);
        } else if (key == "text_dim") {
            p.text_dim = std::stoul(val);
        } else if (key == "layers") {
            layers = std::stoul(val);
        } else if (key.rfind("layer", 0) == 0) {
            auto x = val.find('x');
            if (x == std::string::npos) throw DataFormatError("bad layer shape " + val);
            shapes.emplace_back(std::stoul(val.substr(0, x)), std::stoul(val.substr(x + 1)));
        } else {
            throw DataFormatError("unknown checkpoint key " + key);
        }
    }
    if (!saw_format || shapes.size() != layers || layers == 0) {
        throw DataFormatError("checkpoint manifest incomplete in " + path);
    }
    for (auto [r, c] : shapes) {
        Matrix w(r, c), b(1, c);
        in.read(reinterpret_cast<char*>(w.data().data()),
                static_cast<std::streamsize>(w.size() * sizeof(double)));
        in.read(reinterpret_cast<char*>(b.data().data()),
                static_cast<std::streamsize>(b.size() * sizeof(double)));
        if (!in) throw DataFormatError("checkpoint blob truncated in " + path);
        p.weights.push_back(std::move(w));
        p.bias.push_back(std::move(b));
    }
    char extra;
    if (in.read(&extra, 1)) throw DataFormatError("trailing bytes after checkpoint blobs in " + path);
    p.validate();
    return p;
}

}  // namespace dcd
