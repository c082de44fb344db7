#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "dcd/gradcheck.hpp"
#include "dcd/losses.hpp"
#include "test_helpers.hpp"

using namespace dcd;
using namespace dcd::test;

TEST_CASE("nce_loss point values") {
    // Saturated positive: term vanishes.
    LossValue sat = nce_loss({{30.0, 0.0, 0.0}});
    CHECK(sat.per_query[0] < 1e-9);
    CHECK(sat.per_query[0] >= 0.0);

    // All-equal logits of length n give ln n.
    for (size_t n : {2, 5, 8}) {
        LossValue eq = nce_loss({LogitVector(n, 1.23)});
        CHECK(eq.per_query[0] == doctest::Approx(std::log(double(n))).epsilon(1e-12));
    }

    // Margin-2 single negative.
    LossValue m2 = nce_loss({{2.0, 0.0}});
    CHECK(approx(m2.value, 0.1269280110429725, 1e-9));

    CHECK_THROWS_AS(nce_loss({}), UsageError);
    // Batch reduction is the sum of per-query terms.
    LossValue batch = nce_loss({{2.0, 0.0}, {1.0, 1.0}});
    CHECK(batch.value == doctest::Approx(batch.per_query[0] + batch.per_query[1]));
    CHECK(batch.value >= 0.0);
}

TEST_CASE("itm_loss point values and arity") {
    LossValue eq = itm_loss({{0.7, 0.7}});
    CHECK(approx(eq.per_query[0], 0.6931471805599453, 1e-12));

    LossValue plus2 = itm_loss({{1.5, -0.5}});
    CHECK(approx(plus2.per_query[0], 0.1269280110429725, 1e-9));

    LossValue minus2 = itm_loss({{-0.5, 1.5}});
    CHECK(approx(minus2.per_query[0], 2.1269280110429727, 1e-9));

    CHECK_THROWS_AS(itm_loss({{1.0, 2.0, 3.0}}), UsageError);
}

TEST_CASE("itm_hard_loss point values") {
    // m_prime = 1 reduces exactly to itm_loss, bitwise.
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        std::vector<LogitVector> scores{random_logits(2, rng), random_logits(2, rng)};
        CHECK(itm_hard_loss(scores).value == itm_loss(scores).value);
    }

    LossValue eq8 = itm_hard_loss({LogitVector(8, 0.3)});
    CHECK(approx(eq8.per_query[0], 2.0794415416798357, 1e-12));

    LossValue v = itm_hard_loss({{1.0, 0.0, 0.0, 0.0}});
    CHECK(approx(v.per_query[0], 0.7436683806286791, 1e-9));
}

TEST_CASE("itm_hard_loss validates against candidate lists") {
    CandidateList cl;
    cl.query_id = 1;
    cl.positive_key_id = 10;
    cl.negative_key_ids = {11, 12};
    cl.teacher_logits_raw = {1.0, 0.5, 0.2};
    cl.teacher_logits_adjusted = {1.0, 0.5, 0.2};
    std::vector<CandidateList> cls{cl};
    CHECK_NOTHROW(itm_hard_loss(cls, {{0.3, 0.1, 0.0}}));
    CHECK_THROWS_AS(itm_hard_loss(cls, {{0.3, 0.1}}), ShapeError);
    CHECK_THROWS_AS(itm_hard_loss(cls, {{0.3, 0.1, 0.0}, {0.1, 0.0, 0.0}}), ShapeError);
}

TEST_CASE("kl_distill point values and properties") {
    CHECK(kl_distill_term({0.4, -1.0, 2.0}, {0.4, -1.0, 2.0}, 1.0) == doctest::Approx(0.0));

    const double v = kl_distill_term({0.0, 0.0}, {std::log(3.0), 0.0}, 1.0);
    CHECK(approx(v, 0.13081203594113697, 1e-9));

    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        const size_t n = 2 + rng.below(6);
        const double tau = rng.uniform(0.25, 4.0);
        const double kl = kl_distill_term(random_logits(n, rng, -8.0, 8.0),
                                          random_logits(n, rng, -8.0, 8.0), tau);
        CHECK(kl >= 0.0);  // Gibbs inequality
    }

    CHECK_THROWS_AS(kl_distill_term({1.0}, {1.0, 2.0}, 1.0), ShapeError);
    CHECK_THROWS_AS(kl_distill_term({std::nan("")}, {1.0}, 1.0), NumericError);
    CHECK_THROWS_AS(kl_distill_term({1.0}, {1.0}, 0.0), ConfigError);
}

TEST_CASE("mse_distill point values") {
    CHECK(mse_distill_term({{1.0, 2.0}, {1.0, 2.0}}) == 0.0);
    CHECK(mse_distill_term({{1.0, 0.0}, {0.0, 1.0}}) == doctest::Approx(2.0));
    CHECK(mse_distill_term({{3.0, 0.0, 1.0}, {1.0, 1.0, 1.0}}) == doctest::Approx(5.0));
    CHECK_THROWS_AS(mse_distill_term({{1.0}, {1.0, 2.0}}), ShapeError);

    LossValue batch = mse_distill_loss({{{3.0, 0.0, 1.0}, {1.0, 1.0, 1.0}}, {{1.0}, {1.0}}});
    CHECK(batch.value == doctest::Approx(5.0));
}

TEST_CASE("vanilla_kd_objective mixes losses") {
    LossValue mse{2.0, {2.0}};
    LossValue task{4.0, {4.0}};
    CHECK(vanilla_kd_objective(mse, task, 0.0).value == doctest::Approx(4.0));
    CHECK(vanilla_kd_objective(mse, task, 1.0).value == doctest::Approx(2.0));
    CHECK(vanilla_kd_objective(mse, task, 0.5).value == doctest::Approx(3.0));
    CHECK_THROWS_AS(vanilla_kd_objective(mse, task, -0.1), ConfigError);
    CHECK_THROWS_AS(vanilla_kd_objective(mse, task, 1.1), ConfigError);
}

TEST_CASE("teacher_uncertainty point values") {
    CHECK(approx(teacher_uncertainty(LogitVector(8, 0.0)), 2.0794415416798357, 1e-12));
    CHECK(teacher_uncertainty({30.0, 0.0, 0.0}) < 1e-9);
    // p = [0.9, 0.1] via logits [ln 0.9, ln 0.1].
    CHECK(approx(teacher_uncertainty({std::log(0.9), std::log(0.1)}), 0.3250829733914482, 1e-9));
}

TEST_CASE("teacher_uncertainty bounds and permutation invariance") {
    Rng rng(7);
    for (int i = 0; i < 1000; ++i) {
        const size_t n = 1 + rng.below(10);
        LogitVector z = random_logits(n, rng, -50.0, 50.0);
        const double u = teacher_uncertainty(z);
        CHECK(u >= 0.0);
        CHECK(u <= std::log(double(n)) + 1e-12);

        LogitVector perm = z;
        rng.shuffle(perm);
        CHECK(approx(teacher_uncertainty(perm), u, 1e-12));
    }
}

TEST_CASE("hard_label_weights point values") {
    WeightVector w = hard_label_weights({1.0, 1.0, 2.0});
    CHECK(w.values == std::vector<double>{0.25, 0.25, 0.5});
    w.validate();

    w = hard_label_weights({0.7, 0.7, 0.7, 0.7});
    for (double v : w.values) CHECK(v == doctest::Approx(0.25));

    w = hard_label_weights({0.2, 0.8});
    CHECK(w.values[0] == doctest::Approx(0.2));
    CHECK(w.values[1] == doctest::Approx(0.8));

    // Degenerate all-zero uncertainties fall back to uniform.
    w = hard_label_weights({0.0, 0.0, 0.0});
    for (double v : w.values) CHECK(v == doctest::Approx(1.0 / 3));
    w.validate();

    CHECK_THROWS_AS(hard_label_weights({-0.5, 1.0}), UsageError);
    CHECK_THROWS_AS(hard_label_weights({}), UsageError);
}

TEST_CASE("soft_label_weights point values and reversal") {
    WeightVector uniform = uniform_weights(4, WeightKind::kHard);
    WeightVector c = soft_label_weights(uniform);
    for (double v : c.values) CHECK(v == doctest::Approx(0.25));

    WeightVector w{{0.2, 0.8}, WeightKind::kHard};
    c = soft_label_weights(w);
    CHECK(approx(c.values[0], 0.6456563062257954, 1e-9));
    CHECK(approx(c.values[1], 0.3543436937742045, 1e-9));
    // Matches the printed 6-decimal reference values.
    CHECK(approx(c.values[0], 0.645656, 2e-6));
    CHECK(approx(c.values[1], 0.354344, 2e-6));

    Rng rng(9);
    for (int i = 0; i < 1000; ++i) {
        const size_t k = 2 + rng.below(8);
        std::vector<double> u(k);
        for (double& v : u) v = rng.uniform(0.01, 3.0);
        WeightVector hard = hard_label_weights(u);
        WeightVector soft = soft_label_weights(hard);
        soft.validate();
        // Larger w means smaller c (monotone reversal).
        for (size_t a = 0; a < k; ++a) {
            for (size_t b = 0; b < k; ++b) {
                if (hard.values[a] > hard.values[b]) CHECK(soft.values[a] <= soft.values[b]);
            }
        }
    }
}

TEST_CASE("weight vectors normalize over 1000 random batches") {
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        const size_t k = 1 + rng.below(12);
        std::vector<double> u(k);
        const bool degenerate = i % 50 == 0;
        for (double& v : u) v = degenerate ? 0.4242 : rng.uniform(0.0001, 5.0);
        WeightVector w = hard_label_weights(u);
        WeightVector c = soft_label_weights(w);
        double ws = 0, cs = 0;
        for (double v : w.values) {
            CHECK(v > 0.0);
            ws += v;
        }
        for (double v : c.values) {
            CHECK(v > 0.0);
            cs += v;
        }
        CHECK(approx(ws, 1.0, 1e-9));
        CHECK(approx(cs, 1.0, 1e-9));
    }
}

TEST_CASE("witm_loss point values and reductions") {
    // Uniform weights reduce to itm_hard / K.
    Rng rng(13);
    for (int i = 0; i < 100; ++i) {
        const size_t k = 1 + rng.below(6);
        std::vector<LogitVector> scores;
        for (size_t q = 0; q < k; ++q) scores.push_back(random_logits(4, rng));
        const double witm = witm_loss(scores, uniform_weights(k, WeightKind::kHard)).value;
        const double hard = itm_hard_loss(scores).value;
        CHECK(approx(witm, hard / double(k), 1e-12));
    }

    // K = 1: w = 1, equals itm_hard exactly.
    std::vector<LogitVector> one{{0.3, -0.2, 0.9}};
    CHECK(witm_loss(one, uniform_weights(1, WeightKind::kHard)).value ==
          itm_hard_loss(one).value);

    // Weighted sum of known per-query terms (0.25*ln2 + 0.75*ln(1+e^-2)).
    std::vector<LogitVector> scores{{1.0, 1.0}, {2.0, 0.0}};
    WeightVector w{{0.25, 0.75}, WeightKind::kHard};
    CHECK(approx(witm_loss(scores, w).value, 0.2684828034222157, 1e-9));

    CHECK_THROWS_AS(witm_loss(scores, uniform_weights(3, WeightKind::kHard)), ShapeError);
}

TEST_CASE("wds_loss point values and reductions") {
    Rng rng(17);
    for (int i = 0; i < 100; ++i) {
        const size_t k = 1 + rng.below(6);
        std::vector<DistillPair> pairs(k);
        for (auto& p : pairs) {
            p.student = random_logits(5, rng);
            p.teacher = random_logits(5, rng);
        }
        const double wds = wds_loss(pairs, uniform_weights(k, WeightKind::kSoft)).value;
        const double mse = mse_distill_loss(pairs).value;
        CHECK(approx(wds, mse / double(k), 1e-12));
    }

    std::vector<DistillPair> same(3);
    for (auto& p : same) p.student = p.teacher = {1.0, 2.0, 3.0};
    WeightVector any{{0.5, 0.3, 0.2}, WeightKind::kSoft};
    CHECK(wds_loss(same, any).value == 0.0);

    // c = [0.6, 0.4] over per-query squared errors [2, 5].
    std::vector<DistillPair> pairs{{{1.0, 0.0}, {0.0, 1.0}}, {{3.0, 0.0, 1.0}, {1.0, 1.0, 1.0}}};
    WeightVector c{{0.6, 0.4}, WeightKind::kSoft};
    CHECK(wds_loss(pairs, c).value == doctest::Approx(3.2));

    CHECK_THROWS_AS(wds_loss(pairs, uniform_weights(3, WeightKind::kSoft)), ShapeError);
}

TEST_CASE("dcd_objective mixes the weighted losses") {
    LossValue wds{3.2, {3.2}};
    LossValue witm{0.2684828034222157, {0.2684828034222157}};
    CHECK(dcd_objective(wds, witm, 0.0).value == doctest::Approx(witm.value));
    CHECK(dcd_objective(wds, witm, 1.0).value == doctest::Approx(wds.value));
    CHECK(approx(dcd_objective(wds, witm, 0.5).value, 1.7342414017111079, 1e-9));
    CHECK_THROWS_AS(dcd_objective(wds, witm, 2.0), ConfigError);
}

TEST_CASE("analytic gradients match finite differences for every loss") {
    const auto results = run_gradient_checks(20);
    REQUIRE(results.size() >= 9);
    // Coverage rule: every loss operation appears in the report.
    for (const char* name : {"nce", "itm", "itm_hard", "kl_distill", "mse_distill",
                             "vanilla_kd_objective", "witm", "wds", "dcd_objective",
                             "student_end_to_end", "task_end_to_end"}) {
        const bool found = std::any_of(results.begin(), results.end(),
                                       [&](const auto& r) { return r.name == name; });
        CHECK_MESSAGE(found, name);
    }
    for (const auto& r : results) {
        CHECK_MESSAGE(r.pass, r.name, " worst_rel_err=", r.worst_rel_err);
        CHECK(r.worst_rel_err < 1e-4);
    }
}

TEST_CASE("a corrupted gradient is caught and named") {
    const auto results = run_gradient_checks(3, 1e-5, "witm");
    bool witm_failed = false;
    for (const auto& r : results) {
        if (r.name == "witm") witm_failed = !r.pass;
    }
    CHECK(witm_failed);
    CHECK(!all_pass(results));
}
