#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "omniclip/cost.hpp"
#include "omniclip/gradcheck.hpp"
#include "omniclip/pta.hpp"
#include "oracles.hpp"

using namespace omniclip;

namespace {
Tensor random_tensor(Shape s, SplitMix64& rng, double scl = 1.0) {
    Tensor t(std::move(s));
    for (double& v : t.data) v = scl * rng.normal();
    return t;
}
} // namespace

TEST_CASE("ratio 1/4 at d=64 gives bottleneck width 16") {
    ModelConfig cfg = desk_config();
    ParallelTemporalAdapter pta("pta", cfg);
    CHECK(cfg.bottleneck() == 16);
    CHECK(pta.bottleneck() == 16);
}

TEST_CASE("zero up-projection kills the output") {
    ModelConfig cfg = micro_config();
    ParallelTemporalAdapter pta("pta", cfg);
    ParamList ps;
    pta.collect(ps);
    for (auto& p : ps)
        if (p.name.find("up.") != std::string::npos) {
            Var v = p.var;
            v.value().fill(0.0);
        }
    SplitMix64 rng(1);
    Var out = pta.forward(Var::constant(random_tensor({2, 4, 5, 16}, rng)));
    for (double v : out.value().data) CHECK(v == 0.0);
}

TEST_CASE("single frame degenerates to Up(Wo Wv Down(x))") {
    ModelConfig cfg = micro_config();
    cfg.frames = 1;
    ParallelTemporalAdapter pta("pta", cfg);
    ParamList ps;
    pta.collect(ps);
    std::vector<double> down_w, wv, wo, up_w;
    for (auto& p : ps) {
        if (p.name.ends_with(".b") || p.name.ends_with("bq") || p.name.ends_with("bv") || p.name.ends_with("bo")) {
            Var v = p.var;
            v.value().fill(0.0);
        }
    }
    for (auto& p : ps) {
        if (p.name.ends_with("down.w")) down_w = p.var.value().data;
        if (p.name.ends_with("attn.wv")) wv = p.var.value().data;
        if (p.name.ends_with("attn.wo")) wo = p.var.value().data;
        if (p.name.ends_with("up.w")) up_w = p.var.value().data;
    }
    SplitMix64 rng(2);
    Tensor x = random_tensor({1, 1, 3, 16}, rng);
    Var out = pta.forward(Var::constant(x));

    std::size_t b = pta.bottleneck();
    for (std::size_t pos = 0; pos < 3; ++pos) {
        std::vector<double> row(16);
        for (std::size_t c = 0; c < 16; ++c) row[c] = x.at({0, 0, pos, c});
        auto down = oracle::matmul(row, down_w, 1, 16, b);
        auto v = oracle::matmul(down, wv, 1, b, b);
        auto o = oracle::matmul(v, wo, 1, b, b);
        auto up = oracle::matmul(o, up_w, 1, b, 16);
        for (std::size_t c = 0; c < 16; ++c)
            CHECK(out.value().at({0, 0, pos, c}) == doctest::Approx(up[c]).epsilon(1e-10));
    }
}

TEST_CASE("token positions never mix: permutation equivariance is exact") {
    ModelConfig cfg = micro_config();
    ParallelTemporalAdapter pta("pta", cfg);
    SplitMix64 rng(3);
    std::size_t n = 6;
    Tensor x = random_tensor({1, 4, n, 16}, rng);
    std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    Tensor xp({1, 4, n, 16});
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < 16; ++c) xp.at({0, t, j, c}) = x.at({0, t, perm[j], c});
    Tensor a = pta.forward(Var::constant(x)).value();
    Tensor b = pta.forward(Var::constant(xp)).value();
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t j = 0; j < n; ++j)
            for (std::size_t c = 0; c < 16; ++c) CHECK(b.at({0, t, j, c}) == a.at({0, t, perm[j], c}));
}

TEST_CASE("frame permutations change the output") {
    ModelConfig cfg = micro_config();
    ParallelTemporalAdapter pta("pta", cfg);
    SplitMix64 rng(4);
    Tensor x = random_tensor({1, 4, 3, 16}, rng);
    Tensor xp = x;
    std::size_t row = 3 * 16;
    for (std::size_t j = 0; j < row; ++j) {
        std::swap(xp.data[0 * row + j], xp.data[3 * row + j]);
        std::swap(xp.data[1 * row + j], xp.data[2 * row + j]);
    }
    Tensor a = pta.forward(Var::constant(x)).value();
    Tensor b = pta.forward(Var::constant(xp)).value();
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff = std::max(diff, std::fabs(a[i] - b[i]));
    CHECK(diff > 1e-6);
}

TEST_CASE("fuse contracts") {
    FusionGate gate("alpha", 7);
    SplitMix64 rng(5);
    Tensor s = random_tensor({2, 3, 4, 8}, rng);
    Tensor t = random_tensor({2, 3, 4, 8}, rng);

    CHECK(gate.alpha.value()[0] == 0.0);
    Var fused0 = fuse(Var::constant(s), Var::constant(t), gate);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(fused0.value()[i] == s.data[i]);

    gate.alpha.value()[0] = 1.0;
    Var fused1 = fuse(Var::constant(s), Var::constant(t), gate);
    for (std::size_t i = 0; i < s.size(); ++i)
        CHECK(fused1.value()[i] == doctest::Approx(s.data[i] + t.data[i]).epsilon(1e-15));

    CHECK_THROWS_AS(fuse(Var::constant(s), Var::constant(Tensor({2, 3, 4, 7})), gate), ShapeError);
}

TEST_CASE("dL/dalpha equals the inner product with the temporal branch") {
    FusionGate gate("alpha", 8);
    SplitMix64 rng(6);
    gate.alpha.value()[0] = 0.37;
    Var s = Var::constant(random_tensor({2, 3, 4}, rng));
    Var t = Var::constant(random_tensor({2, 3, 4}, rng));
    Var coeff = Var::constant(random_tensor({2, 3, 4}, rng));

    ParamList params{{"alpha", gate.alpha}};
    auto rep = grad_check([&] { return mean_all(mul(fuse(s, t, gate), coeff)); }, params, 1e-5);
    CHECK(rep.max_rel_err < 1e-6);

    zero_grads(params);
    backward(mean_all(mul(fuse(s, t, gate), coeff)));
    // dL/dout = coeff / numel; dL/dalpha = <dL/dout, temporal>
    long double expect = 0.0L;
    for (std::size_t i = 0; i < t.size(); ++i) expect += coeff.value()[i] / 24.0 * t.value()[i];
    CHECK(gate.alpha.grad_or_zero()[0] == doctest::Approx(static_cast<double>(expect)).epsilon(1e-12));
}

TEST_CASE("adapter parameter count matches the cost model") {
    ModelConfig cfg = desk_config();
    ParallelTemporalAdapter pta("pta", cfg);
    ParamList ps;
    pta.collect(ps);
    std::size_t actual = 0;
    for (const auto& p : ps) actual += p.var.size();
    CHECK(actual == pta.parameter_count());

    std::size_t d = cfg.dim, b = cfg.bottleneck();
    CHECK(pta.parameter_count() == d * b + b + (4 * b * b + 3 * b) + b * d + d);

    // cost model's pta entry is adapters plus one alpha per adapted block
    CostReport rep = cost_report(cfg, {"up", "down"});
    std::size_t adapted = 0;
    for (std::size_t i = 0; i < cfg.depth; ++i)
        if (cfg.block_has_pta(i)) ++adapted;
    for (const auto& m : rep.modules)
        if (m.name == "pta") CHECK(m.params_trainable == adapted * (pta.parameter_count() + 1));
}

TEST_CASE("adapter passes grad_check") {
    ModelConfig cfg = micro_config();
    ParallelTemporalAdapter pta("pta", cfg);
    SplitMix64 rng(9);
    Var x = Var::leaf(random_tensor({1, 3, 4, 16}, rng), true, "x");
    ParamList params{{"x", x}};
    pta.collect(params);
    Var coeff = Var::constant(random_tensor({1, 3, 4, 16}, rng));
    auto rep = grad_check([&] { return mean_all(mul(pta.forward(x), coeff)); }, params, 1e-5);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("exclude_cls leaves position zero untouched") {
    ModelConfig cfg = micro_config();
    cfg.pta_exclude_cls = true;
    ParallelTemporalAdapter pta("pta", cfg);
    SplitMix64 rng(10);
    Var x = Var::constant(random_tensor({1, 3, 4, 16}, rng));
    Tensor out = pta.forward(x).value();
    for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t c = 0; c < 16; ++c) CHECK(out.at({0, t, 0, c}) == 0.0);
}
