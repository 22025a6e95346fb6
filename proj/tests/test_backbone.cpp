#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "omniclip/backbone.hpp"
#include "omniclip/gradcheck.hpp"
#include "oracles.hpp"

using namespace omniclip;

namespace {

Tensor random_tensor(Shape s, SplitMix64& rng, double scl = 1.0) {
    Tensor t(std::move(s));
    for (double& v : t.data) v = scl * rng.normal();
    return t;
}

oracle::VitBlockWeights weights_of(const ViTBlock& blk) {
    oracle::VitBlockWeights w;
    w.ln1_g = blk.ln1.gamma.value().data;
    w.ln1_b = blk.ln1.beta.value().data;
    w.ln2_g = blk.ln2.gamma.value().data;
    w.ln2_b = blk.ln2.beta.value().data;
    w.wq = blk.attn.wq.value().data;
    w.bq = blk.attn.bq.value().data;
    w.wk = blk.attn.wk.value().data;
    w.wv = blk.attn.wv.value().data;
    w.bv = blk.attn.bv.value().data;
    w.wo = blk.attn.wo.value().data;
    w.bo = blk.attn.bo.value().data;
    w.w1 = blk.w1.value().data;
    w.b1 = blk.b1.value().data;
    w.w2 = blk.w2.value().data;
    w.b2 = blk.b2.value().data;
    return w;
}

} // namespace

TEST_CASE("patch_embed shape and class token") {
    ModelConfig cfg = desk_config();
    PatchEmbedder pe("patch", cfg, false);
    CHECK(cfg.patch_count() == 16);

    Tensor pixels({2, 3, 3, 32, 32}); // all-zero pixels
    Var tokens = pe.embed_pixels(pixels);
    CHECK(tokens.shape() == Shape{2, 3, 17, 64});
    // zero bias by construction, so patch tokens are all zero and token 0 is e_cls
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t t = 0; t < 3; ++t)
            for (std::size_t j = 0; j < 17; ++j)
                for (std::size_t c = 0; c < 64; ++c) {
                    double v = tokens.value().at({b, t, j, c});
                    if (j == 0)
                        CHECK(v == pe.cls.value()[c]);
                    else
                        CHECK(v == 0.0);
                }
}

TEST_CASE("patch_embed projects flattened rasters") {
    ModelConfig cfg = desk_config();
    PatchEmbedder pe("patch", cfg, false);
    SplitMix64 rng(3);
    Tensor pixels = random_tensor({1, 1, 3, 32, 32}, rng);
    Var tokens = pe.embed_pixels(pixels);

    // pick patch (1, 2) of the 4x4 grid and rebuild its projection by loops
    std::size_t py = 1, px = 2, P = 8;
    std::vector<double> flat;
    for (std::size_t c = 0; c < 3; ++c)
        for (std::size_t y = 0; y < P; ++y)
            for (std::size_t x = 0; x < P; ++x) flat.push_back(pixels.at({0, 0, c, py * P + y, px * P + x}));
    const auto& w = pe.proj.value();
    for (std::size_t out = 0; out < 64; ++out) {
        long double s = pe.bias.value()[out];
        for (std::size_t i = 0; i < flat.size(); ++i) s += flat[i] * w.data[i * 64 + out];
        CHECK(tokens.value().at({0, 0, 1 + py * 4 + px, out}) ==
              doctest::Approx(static_cast<double>(s)).epsilon(1e-12));
    }
}

TEST_CASE("patch_embed rejects indivisible extents") {
    ModelConfig cfg = desk_config();
    PatchEmbedder pe("patch", cfg, false);
    CHECK_THROWS_AS(pe.embed_pixels(Tensor({1, 1, 3, 30, 32})), ShapeError);
}

TEST_CASE("add_encodings broadcasts PE over frames and TE over tokens") {
    ModelConfig cfg = micro_config();
    Encodings enc("enc", cfg);
    std::size_t n = 1 + cfg.patch_count(), t = cfg.frames, d = cfg.dim;

    enc.pe.value().fill(0.0);
    enc.te.value().fill(0.0);
    SplitMix64 rng(4);
    Tensor tokens = random_tensor({2, t, n, d}, rng);
    Var out = add_encodings(Var::constant(tokens), enc);
    CHECK(bitwise_equal(out.value(), tokens));

    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t c = 0; c < d; ++c) enc.pe.value().at({j, c}) = static_cast<double>(j);
    for (std::size_t ti = 0; ti < t; ++ti)
        for (std::size_t c = 0; c < d; ++c) enc.te.value().at({ti, c}) = static_cast<double>(ti);
    Var out2 = add_encodings(Var::constant(Tensor({2, t, n, d})), enc);
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t ti = 0; ti < t; ++ti)
            for (std::size_t j = 0; j < n; ++j)
                for (std::size_t c = 0; c < d; ++c)
                    CHECK(out2.value().at({b, ti, j, c}) == static_cast<double>(j + ti));
}

TEST_CASE("gradients reach PE and TE") {
    ModelConfig cfg = micro_config();
    std::size_t n = 1 + cfg.patch_count(), t = cfg.frames, d = cfg.dim;
    SplitMix64 rng(5);
    Encodings enc("enc", cfg);
    // the test flips both encodings to trainable leaves
    enc.pe = Var::leaf(random_tensor({n, d}, rng, 0.1), true, "pe");
    enc.te = Var::leaf(random_tensor({t, d}, rng, 0.1), true, "te");
    Var tokens = Var::constant(random_tensor({2, t, n, d}, rng));
    Var coeff = Var::constant(random_tensor({2, t, n, d}, rng));
    ParamList params{{"pe", enc.pe}, {"te", enc.te}};
    auto rep = grad_check([&] { return mean_all(mul(add_encodings(tokens, enc), coeff)); }, params, 1e-5);
    CHECK(rep.max_rel_err < 1e-6);
}

TEST_CASE("vit block collapses to identity with zero out-projections") {
    ViTBlock blk("blk", 16, 2, 11, true);
    blk.attn.wo.value().fill(0.0);
    blk.attn.bo.value().fill(0.0);
    blk.w2.value().fill(0.0);
    blk.b2.value().fill(0.0);
    SplitMix64 rng(6);
    Tensor x = random_tensor({3, 5, 16}, rng);
    Var y = blk.forward(Var::constant(x));
    CHECK(bitwise_equal(y.value(), x));
}

TEST_CASE("frozen block receives no gradient") {
    ViTBlock blk("blk", 8, 2, 12, /*trainable=*/false);
    SplitMix64 rng(7);
    Var x = Var::leaf(random_tensor({2, 3, 8}, rng), true, "x");
    Var loss = mean_all(mul(blk.forward(x), blk.forward(x)));
    backward(loss);
    ParamList ps;
    blk.collect(ps);
    for (const auto& p : ps) {
        CHECK_FALSE(p.var.trainable());
        CHECK_FALSE(p.var.has_grad());
    }
    CHECK(x.has_grad());
}

TEST_CASE("vit block micro case matches the straight-line oracle") {
    ViTBlock blk("blk", 4, 1, 13, true);
    SplitMix64 rng(8);
    Tensor x = random_tensor({2, 4}, rng);
    Var y = blk.forward(Var::constant(x));
    auto ref = oracle::vit_block(x.data, 2, 4, 1, weights_of(blk));
    for (std::size_t i = 0; i < ref.size(); ++i) CHECK(std::fabs(y.value()[i] - ref[i]) < 1e-10);
}

TEST_CASE("spatial independence across frames") {
    ViTBlock blk("blk", 16, 4, 14, false);
    SplitMix64 rng(9);
    Tensor x = random_tensor({4, 6, 16}, rng); // frames flattened into the batch axis
    Tensor x2 = x;
    for (std::size_t j = 0; j < 6 * 16; ++j) x2.data[2 * 6 * 16 + j] += rng.normal();
    Var y1 = blk.forward(Var::constant(x));
    Var y2 = blk.forward(Var::constant(x2));
    for (std::size_t f = 0; f < 4; ++f) {
        bool same = true;
        for (std::size_t j = 0; j < 6 * 16 && same; ++j)
            same = y1.value()[f * 6 * 16 + j] == y2.value()[f * 6 * 16 + j];
        CHECK(same == (f != 2));
    }
}

TEST_CASE("backbone forward is frame-permutation equivariant with TE zeroed") {
    ModelConfig cfg = micro_config();
    PatchEmbedder pe("patch", cfg, false);
    Encodings enc("enc", cfg);
    enc.te.value().fill(0.0);
    ViTBlock blk("blk", cfg.dim, cfg.heads, cfg.seed, false);

    SplitMix64 rng(10);
    Tensor pixels = random_tensor({1, 4, 3, 16, 16}, rng, 0.3);
    std::vector<std::size_t> perm{2, 0, 3, 1};
    Tensor permuted({1, 4, 3, 16, 16});
    std::size_t fsz = 3 * 16 * 16;
    for (std::size_t t = 0; t < 4; ++t)
        std::copy(pixels.data.begin() + perm[t] * fsz, pixels.data.begin() + (perm[t] + 1) * fsz,
                  permuted.data.begin() + t * fsz);

    auto run = [&](const Tensor& px) { return blk.forward(add_encodings(pe.embed_pixels(px), enc)).value(); };
    Tensor a = run(pixels), b = run(permuted);
    std::size_t tok = (1 + cfg.patch_count()) * cfg.dim;
    for (std::size_t t = 0; t < 4; ++t)
        for (std::size_t j = 0; j < tok; ++j) CHECK(b.data[t * tok + j] == a.data[perm[t] * tok + j]);
}

TEST_CASE("text encoder is deterministic and template-faithful") {
    ModelConfig cfg = micro_config();
    std::vector<std::string> names{"punch", "jump", "wave"};
    TextEncoder te(names, cfg);

    auto words = te.token_words("punch");
    CHECK(words == std::vector<std::string>{"a", "video", "of", "punch", "action"});

    Tensor f1 = te.encode({"punch"});
    Tensor f2 = te.encode({"punch"});
    CHECK(bitwise_equal(f1, f2));

    Tensor all = te.encode(names);
    CHECK(all.shape == Shape{3, cfg.out_dim});
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j) {
            bool identical = true;
            for (std::size_t c = 0; c < cfg.out_dim && identical; ++c)
                identical = all.at({i, c}) == all.at({j, c});
            CHECK_FALSE(identical);
        }

    CHECK_THROWS_AS(te.encode({"swim"}), ConfigError);
}
