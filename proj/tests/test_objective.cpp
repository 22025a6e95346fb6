#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "omniclip/gradcheck.hpp"
#include "omniclip/objective.hpp"
#include "oracles.hpp"

using namespace omniclip;

namespace {
Tensor random_tensor(Shape s, SplitMix64& rng, double scl = 1.0) {
    Tensor t(std::move(s));
    for (double& v : t.data) v = scl * rng.normal();
    return t;
}

SimilarityHead head_with(double tau, double smoothing) {
    ModelConfig cfg;
    cfg.temperature = tau;
    cfg.label_smoothing = smoothing;
    return SimilarityHead(cfg);
}
} // namespace

TEST_CASE("cosine similarity closed forms") {
    Var fv = Var::constant(Tensor({2, 2}, {1, 0, 0, 1}));
    Var ft = Var::constant(Tensor({2, 2}, {1, 0, 0, 1}));
    Tensor sims = similarity_matrix(fv, ft).value();
    CHECK(sims.at({0, 0}) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(sims.at({0, 1}) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(sims.at({1, 1}) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("cosine similarity is exactly invariant to power-of-two row rescaling") {
    SplitMix64 rng(1);
    Tensor v = random_tensor({3, 5}, rng);
    Tensor v2 = v;
    for (std::size_t j = 0; j < 5; ++j) {
        v2.at({0, j}) *= 2.0;
        v2.at({1, j}) *= 0.5;
        v2.at({2, j}) *= 4.0;
    }
    Tensor w = random_tensor({4, 5}, rng);
    Tensor s1 = similarity_matrix(Var::constant(v), Var::constant(w)).value();
    Tensor s2 = similarity_matrix(Var::constant(v2), Var::constant(w)).value();
    CHECK(bitwise_equal(s1, s2));
}

TEST_CASE("similarity rejects zero rows and bounds values") {
    CHECK_THROWS_AS(similarity_matrix(Var::constant(Tensor({1, 3})), Var::constant(Tensor({1, 3}, {1, 0, 0}))),
                    NumericError);
    SplitMix64 rng(2);
    Tensor sims = similarity_matrix(Var::constant(random_tensor({6, 8}, rng, 3.0)),
                                    Var::constant(random_tensor({5, 8}, rng, 3.0)))
                      .value();
    for (double v : sims.data) CHECK(std::fabs(v) <= 1.0 + 1e-12);
}

TEST_CASE("uniform similarities give ln C with zero smoothing") {
    SimilarityHead head = head_with(1.0, 0.0);
    Var sims = Var::constant(Tensor::full({3, 4}, 0.37));
    double loss = classification_loss(sims, {0, 1, 3}, head).value()[0];
    CHECK(std::fabs(loss - std::log(4.0)) < 1e-12);
}

TEST_CASE("confident similarity drives the loss to zero as tau shrinks") {
    SimilarityHead head = head_with(0.01, 0.0);
    Var sims = Var::constant(Tensor({1, 3}, {1.0, -1.0, -1.0}));
    double loss = classification_loss(sims, {0}, head).value()[0];
    CHECK(loss < 1e-12);
    CHECK(loss >= 0.0);
}

TEST_CASE("label smoothing 0.1 matches the extended-precision oracle") {
    SimilarityHead head = head_with(0.07, 0.1);
    std::vector<double> row{0.31, -0.44, 0.86};
    Var sims = Var::constant(Tensor({1, 3}, std::vector<double>(row)));
    double loss = classification_loss(sims, {2}, head).value()[0];
    std::vector<double> scaled(row);
    for (double& v : scaled) v /= 0.07;
    double ref = oracle::smoothed_ce(scaled, 2, 0.1);
    CHECK(std::fabs(loss - ref) / std::fabs(ref) < 1e-10);
}

TEST_CASE("loss is invariant under per-row positive rescaling of the video features") {
    SplitMix64 rng(3);
    Tensor fv = random_tensor({4, 6}, rng);
    Tensor ft = random_tensor({3, 6}, rng);
    SimilarityHead head = head_with(0.07, 0.1);
    std::vector<std::size_t> labels{0, 2, 1, 0};
    double l1 = classification_loss(similarity_matrix(Var::constant(fv), Var::constant(ft)), labels, head).value()[0];
    Tensor fv2 = fv;
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 6; ++j) fv2.at({i, j}) *= (i % 2 ? 2.0 : 0.25);
    double l2 = classification_loss(similarity_matrix(Var::constant(fv2), Var::constant(ft)), labels, head).value()[0];
    CHECK(l1 == l2);
}

TEST_CASE("loss gradient w.r.t. video features passes grad_check") {
    SplitMix64 rng(4);
    Var fv = Var::leaf(random_tensor({3, 5}, rng), true, "fv");
    Var ft = Var::constant(random_tensor({4, 5}, rng));
    SimilarityHead head = head_with(0.07, 0.1);
    std::vector<std::size_t> labels{1, 3, 0};
    ParamList params{{"fv", fv}};
    auto rep = grad_check([&] { return classification_loss(similarity_matrix(fv, ft), labels, head); }, params, 1e-5);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("loss errors") {
    SimilarityHead head = head_with(0.07, 0.1);
    Var sims = Var::constant(Tensor({2, 3}));
    CHECK_THROWS_AS(classification_loss(sims, {0, 3}, head), ConfigError);
    CHECK_THROWS_AS(classification_loss(sims, {0}, head), ShapeError);
}

TEST_CASE("top-k accuracy closed cases and oracle") {
    Tensor sims({3, 4}, {0.9, 0.1, 0.0, 0.2, //
                         0.1, 0.8, 0.3, 0.0, //
                         0.0, 0.1, 0.2, 0.9});
    CHECK(top_k_accuracy(sims, {0, 1, 3}, 1) == 1.0);
    CHECK(top_k_accuracy(sims, {2, 0, 1}, 4) == 1.0);

    SplitMix64 rng(5);
    Tensor r = random_tensor({10, 5}, rng);
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 10; ++i) labels.push_back(rng.below(5));
    for (std::size_t k = 1; k <= 5; ++k) {
        // brute-force oracle: count entries strictly larger, ties by index
        std::size_t hits = 0;
        for (std::size_t i = 0; i < 10; ++i) {
            std::size_t rank = 0;
            for (std::size_t j = 0; j < 5; ++j) {
                double a = r.at({i, j}), b = r.at({i, labels[i]});
                if (a > b || (a == b && j < labels[i])) ++rank;
            }
            if (rank < k) ++hits;
        }
        CHECK(top_k_accuracy(r, labels, k) == doctest::Approx(hits / 10.0));
    }
}

TEST_CASE("top-k ties break toward the lowest class index") {
    Tensor sims({1, 3}, {0.5, 0.5, 0.5});
    CHECK(top_k_accuracy(sims, {0}, 1) == 1.0);
    CHECK(top_k_accuracy(sims, {1}, 1) == 0.0);
    CHECK(top_k_accuracy(sims, {1}, 2) == 1.0);
}

TEST_CASE("top-k is invariant under strictly increasing transforms") {
    SplitMix64 rng(6);
    Tensor r = random_tensor({8, 6}, rng);
    Tensor r2 = r;
    for (double& v : r2.data) v = std::tanh(3.0 * v) * 10.0 + 2.0;
    std::vector<std::size_t> labels;
    for (std::size_t i = 0; i < 8; ++i) labels.push_back(rng.below(6));
    for (std::size_t k = 1; k <= 6; ++k) CHECK(top_k_accuracy(r, labels, k) == top_k_accuracy(r2, labels, k));
}

TEST_CASE("top-k rejects out-of-range k") {
    Tensor sims({2, 3});
    CHECK_THROWS_AS(top_k_accuracy(sims, {0, 1}, 0), ConfigError);
    CHECK_THROWS_AS(top_k_accuracy(sims, {0, 1}, 4), ConfigError);
}

TEST_CASE("trainable temperature is a parameter; fixed is not") {
    ModelConfig cfg;
    cfg.trainable_temperature = true;
    SimilarityHead head(cfg);
    ParamList ps;
    head.collect(ps);
    CHECK(ps.size() == 1);
    CHECK(ps[0].var.trainable());
    CHECK(head.apply_temperature(Var::constant(Tensor({1, 1}, {0.07}))).value()[0] ==
          doctest::Approx(1.0).epsilon(1e-12));

    SimilarityHead fixed = head_with(0.07, 0.1);
    ParamList ps2;
    fixed.collect(ps2);
    CHECK(ps2.empty());
}
