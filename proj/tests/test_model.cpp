#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>

#include "dcd/model.hpp"
#include "test_helpers.hpp"

using namespace dcd;
using namespace dcd::test;

namespace {

ScorerParams tiny_scorer(uint64_t seed) {
    return init_scorer(ScorerConfig{3, 4, {6, 5}, seed, Role::kStudent});
}

}  // namespace

TEST_CASE("zero-initialized final layer scores zero for any input") {
    ScorerParams p = tiny_scorer(1);
    for (double& v : p.weights.back().data()) v = 0.0;
    for (double& v : p.bias.back().data()) v = 0.0;
    Rng rng(2);
    for (int i = 0; i < 10; ++i) {
        Matrix img = random_matrix(1, 3, rng);
        Matrix txt = random_matrix(1, 4, rng);
        CHECK(score_pair(p, img, txt) == 0.0);
    }
}

TEST_CASE("scoring is deterministic") {
    ScorerParams p = tiny_scorer(7);
    Rng rng(3);
    Matrix img = random_matrix(1, 3, rng);
    Matrix txt = random_matrix(1, 4, rng);
    const double a = score_pair(p, img, txt);
    const double b = score_pair(p, img, txt);
    CHECK(a == b);  // bitwise
}

TEST_CASE("seed-42 golden score") {
    // Regression anchor recorded from the first verified build.
    ScorerParams p = init_scorer(ScorerConfig{4, 4, {8, 8}, 42, Role::kStudent});
    Matrix img(1, 4, {0.25, -0.5, 1.0, 0.125});
    Matrix txt(1, 4, {-1.0, 0.75, 0.0, 0.5});
    const double got = score_pair(p, img, txt);
    CHECK(got == doctest::Approx(-0.030785843498451468).epsilon(1e-12));
}

TEST_CASE("score_candidates equals independent score_pair calls") {
    ScorerParams p = tiny_scorer(11);
    Rng rng(5);
    Matrix query = random_matrix(1, 3, rng);
    std::vector<Matrix> keys;
    for (int i = 0; i < 8; ++i) keys.push_back(random_matrix(1, 4, rng));
    std::vector<const Matrix*> key_ptrs;
    for (auto& k : keys) key_ptrs.push_back(&k);

    LogitVector batch = score_candidates(p, query, key_ptrs);
    REQUIRE(batch.size() == 8);
    for (size_t i = 0; i < keys.size(); ++i) {
        CHECK(batch[i] == score_pair(p, query, keys[i]));  // loop oracle, bitwise
    }

    SUBCASE("single key") {
        LogitVector one = score_candidates(p, query, {&keys[3]});
        REQUIRE(one.size() == 1);
        CHECK(one[0] == score_pair(p, query, keys[3]));
    }

    SUBCASE("permuting keys permutes logits identically") {
        std::vector<const Matrix*> perm{key_ptrs[5], key_ptrs[0], key_ptrs[7], key_ptrs[2]};
        LogitVector out = score_candidates(p, query, perm);
        CHECK(out[0] == batch[5]);
        CHECK(out[1] == batch[0]);
        CHECK(out[2] == batch[7]);
        CHECK(out[3] == batch[2]);
    }
}

TEST_CASE("init_scorer is reproducible and seed-sensitive") {
    ScorerConfig cfg{8, 8, {16}, 99, Role::kStudent};
    ScorerParams a = init_scorer(cfg);
    ScorerParams b = init_scorer(cfg);
    CHECK(flatten_params(a) == flatten_params(b));

    cfg.seed = 100;
    ScorerParams c = init_scorer(cfg);
    CHECK(flatten_params(a) != flatten_params(c));
}

TEST_CASE("init weights honour the 1/sqrt(fan_in) bound") {
    // Both layers have fan-in 100: 50+50 input -> 100 hidden -> 1.
    ScorerParams p = init_scorer(ScorerConfig{50, 50, {100}, 4, Role::kStudent});
    for (const auto& w : p.weights) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(w.rows()));
        CHECK(bound == doctest::Approx(0.1));
        for (double v : w.data()) {
            CHECK(v >= -bound);
            CHECK(v <= bound);
        }
    }
    for (const auto& b : p.bias) {
        for (double v : b.data()) CHECK(v == 0.0);
    }
}

TEST_CASE("default teacher capacity exceeds default student capacity") {
    ScorerParams teacher = init_scorer(default_teacher_config(1));
    ScorerParams student = init_scorer(default_student_config(1));
    CHECK(teacher.param_count() > student.param_count());
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    TempDir tmp("ckpt");
    ScorerParams p = init_scorer(ScorerConfig{5, 3, {7, 4}, 21, Role::kTeacher});
    const std::string path = tmp.path("scorer.ckpt");
    save_checkpoint(p, path);
    ScorerParams q = load_checkpoint(path);
    CHECK(q.role == Role::kTeacher);
    CHECK(q.image_dim == 5);
    CHECK(q.text_dim == 3);
    CHECK(q.seed == 21);
    CHECK(flatten_params(p) == flatten_params(q));

    // Re-saving reproduces the identical byte stream.
    const std::string path2 = tmp.path("scorer2.ckpt");
    save_checkpoint(q, path2);
    CHECK(read_file_bytes(path) == read_file_bytes(path2));
}

TEST_CASE("checkpoint errors") {
    TempDir tmp("ckpt_err");
    CHECK_THROWS_AS(load_checkpoint(tmp.path("missing.ckpt")), IoError);

    ScorerParams p = tiny_scorer(2);
    const std::string path = tmp.path("trunc.ckpt");
    save_checkpoint(p, path);
    std::string bytes = read_file_bytes(path);
    {
        std::ofstream out(path, std::ios::binary);
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 16));
    }
    CHECK_THROWS_AS(load_checkpoint(path), DataFormatError);
}

TEST_CASE("params validation rejects broken layer chains") {
    ScorerParams p = tiny_scorer(3);
    p.weights[1] = Matrix(99, 5);
    CHECK_THROWS_AS(p.validate(), ShapeError);

    ScorerParams q = tiny_scorer(3);
    q.weights.back() = Matrix(q.weights.back().rows(), 2);
    q.bias.back() = Matrix(1, 2);
    CHECK_THROWS_AS(q.validate(), ShapeError);
}

TEST_CASE("score_pair rejects mismatched features") {
    ScorerParams p = tiny_scorer(5);
    Matrix img(1, 99);
    Matrix txt(1, 4);
    CHECK_THROWS_AS(score_pair(p, img, txt), ShapeError);
}
