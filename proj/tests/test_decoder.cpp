#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "avseg/decoder.hpp"
#include "avseg/error.hpp"
#include "avseg/model.hpp"
#include "avseg/resize.hpp"
#include "support/gradcheck.hpp"

using namespace avseg;

namespace {

void make_identity(nn::Linear& lin) {
    Tensor& w = lin.w.node()->value;
    w.fill(0.0);
    for (int64_t i = 0; i < w.dim(0); ++i) w(i, i) = 1.0;
    lin.b.node()->value.fill(0.0);
}

void make_identity_attention(nn::MultiheadAttention& att) {
    make_identity(att.wq);
    make_identity(att.wk);
    make_identity(att.wv);
    make_identity(att.wo);
}

RobustKeyParams robust_with(nn::ParamStore& ps, int64_t dim, double tau1, double tau2, double s, double u,
                            double snd) {
    RobustKeyParams p = make_robust_key_params(ps, dim, tau1, tau2);
    p.e_silent.node()->value.fill(s);
    p.e_uncertain.node()->value.fill(u);
    p.e_sounding.node()->value.fill(snd);
    return p;
}

}  // namespace

TEST_CASE("robust keys select the embedding by thresholded prior") {
    nn::ParamStore ps;
    const int64_t T = 1, D = 3, h = 2, w = 2;
    Tensor fv({T, D, h, w});
    Rng rng(1);
    for (int64_t i = 0; i < fv.numel(); ++i) fv[i] = rng.normal();

    SUBCASE("prior of zeros tags everything silent") {
        RobustKeyParams p = robust_with(ps, D, 0.3, 0.7, 10.0, 20.0, 30.0);
        Tensor prior({T, 4, 4});
        int64_t clamps = 0;
        ad::Value keys = robust_audio_keys(ad::constant(fv), prior, p, &clamps);
        for (int64_t i = 0; i < fv.numel(); ++i)
            CHECK(keys.val()[i] == doctest::Approx(fv[i] + 10.0).epsilon(1e-12));
        CHECK(clamps == 0);
    }

    SUBCASE("prior of ones tags everything sounding when tau2 < 1") {
        RobustKeyParams p = robust_with(ps, D, 0.3, 0.7, 10.0, 20.0, 30.0);
        Tensor prior = Tensor::full({T, 4, 4}, 1.0);
        ad::Value keys = robust_audio_keys(ad::constant(fv), prior, p, nullptr);
        for (int64_t i = 0; i < fv.numel(); ++i)
            CHECK(keys.val()[i] == doctest::Approx(fv[i] + 30.0).epsilon(1e-12));
    }

    SUBCASE("mid value lands in the uncertain band") {
        RobustKeyParams p = robust_with(ps, D, 0.3, 0.7, 10.0, 20.0, 30.0);
        Tensor prior = Tensor::full({T, 2, 2}, 0.5);
        ad::Value keys = robust_audio_keys(ad::constant(fv), prior, p, nullptr);
        for (int64_t i = 0; i < fv.numel(); ++i)
            CHECK(keys.val()[i] == doctest::Approx(fv[i] + 20.0).epsilon(1e-12));
    }

    SUBCASE("out-of-range prior values are clamped and counted") {
        RobustKeyParams p = robust_with(ps, D, 0.3, 0.7, 1.0, 2.0, 3.0);
        Tensor prior = Tensor::full({T, 2, 2}, 1.2);
        int64_t clamps = 0;
        ad::Value keys = robust_audio_keys(ad::constant(fv), prior, p, &clamps);
        CHECK(clamps == 4);
        for (int64_t i = 0; i < fv.numel(); ++i)
            CHECK(keys.val()[i] == doctest::Approx(fv[i] + 3.0).epsilon(1e-12));
    }
}

TEST_CASE("threshold partition is disjoint and covering for random priors") {
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        const int64_t h = 3 + rng.uniform_int(6), w = 3 + rng.uniform_int(6);
        Tensor prior = rng.uniform_tensor({1, 8, 8}, -0.1, 1.1);  // includes overshoot
        const double tau1 = rng.uniform(0.0, 0.89);
        const double tau2 = std::min(1.0, tau1 + rng.uniform(0.01, 1.0 - tau1));
        int64_t clamps = 0;
        IntTensor idx = robust_index_mask(prior, h, w, tau1, tau2, &clamps);
        Tensor resized_oracle = resize_bilinear(prior, h, w);
        for (int64_t i = 0; i < idx.numel(); ++i) {
            const double v = std::clamp(resized_oracle[i], 0.0, 1.0);
            const bool in_silent = v < tau1;
            const bool in_uncertain = tau1 <= v && v <= tau2;
            const bool in_sounding = v > tau2;
            CHECK(static_cast<int>(in_silent) + static_cast<int>(in_uncertain) +
                      static_cast<int>(in_sounding) == 1);
            const int expect = in_silent ? 0 : (in_uncertain ? 1 : 2);
            CHECK(idx[i] == expect);
        }
    }
}

TEST_CASE("attention mask initialization") {
    SUBCASE("all-ones prior gives an all-true mask") {
        Tensor prior = Tensor::full({2, 8, 8}, 1.0);
        AttentionMask m = init_attention_mask(&prior, 2, 3, 4, 4);
        for (int64_t i = 0; i < m.allow.numel(); ++i) CHECK(m.allow[i] == 1);
    }

    SUBCASE("no prior gives an all-true mask") {
        AttentionMask m = init_attention_mask(nullptr, 2, 3, 4, 4);
        for (int64_t i = 0; i < m.allow.numel(); ++i) CHECK(m.allow[i] == 1);
    }

    SUBCASE("empty prior after resize falls back to all-true") {
        Tensor prior({1, 8, 8});
        prior(0, 0, 0) = 1.0;  // vanishes when nearest-resized to 2x2
        AttentionMask m = init_attention_mask(&prior, 1, 2, 2, 2);
        for (int64_t i = 0; i < m.allow.numel(); ++i) CHECK(m.allow[i] == 1);
    }

    SUBCASE("disk prior equals a direct nearest-threshold computation") {
        const int64_t H = 32, W = 32, h = 8, w = 8;
        Tensor prior({1, H, W});
        for (int64_t y = 0; y < H; ++y)
            for (int64_t x = 0; x < W; ++x)
                prior(0, y, x) = ((y - 16.0) * (y - 16.0) + (x - 16.0) * (x - 16.0) <= 81.0) ? 1.0 : 0.0;
        AttentionMask m = init_attention_mask(&prior, 1, 2, h, w);
        auto iy = make_nearest_axis(H, h);
        auto ix = make_nearest_axis(W, w);
        for (int64_t q = 0; q < 2; ++q)
            for (int64_t y = 0; y < h; ++y)
                for (int64_t x = 0; x < w; ++x) {
                    const uint8_t want =
                        prior(0, iy[static_cast<size_t>(y)], ix[static_cast<size_t>(x)]) >= 0.5 ? 1 : 0;
                    CHECK(m.allow(0, q, y * w + x) == want);
                }
    }
}

TEST_CASE("masked attention weights") {
    nn::ParamStore ps;
    Rng rng(3);
    const int64_t D = 4, nq = 2, S = 5;
    nn::MultiheadAttention att(ps, "att", D, 2, rng);
    ad::Value q = ad::constant(rng.normal_tensor({1, nq, D}));
    ad::Value k = ad::constant(rng.normal_tensor({1, S, D}));
    ad::Value v = ad::constant(rng.normal_tensor({1, S, D}));

    SUBCASE("all-true mask equals unmasked attention elementwise") {
        TensorT<uint8_t> allow({1, nq, S});
        allow.fill(1);
        auto masked = att.forward(q, k, v, &allow, "t");
        auto open = att.forward(q, k, v, nullptr, "t");
        CHECK(bitwise_equal(masked.out.val(), open.out.val()));
        CHECK(bitwise_equal(masked.weights.val(), open.weights.val()));
    }

    SUBCASE("masked keys receive exactly zero weight") {
        TensorT<uint8_t> allow({1, nq, S});
        for (int64_t i = 0; i < allow.numel(); ++i) allow[i] = (i % 3 == 0) ? 0 : 1;
        allow(0, 0, 1) = 1;  // keep rows nonempty
        allow(0, 1, 1) = 1;
        auto res = att.forward(q, k, v, &allow, "t");
        const Tensor& wts = res.weights.val();  // [heads, nq, S]
        for (int64_t hh = 0; hh < 2; ++hh)
            for (int64_t qq = 0; qq < nq; ++qq) {
                double sum = 0;
                for (int64_t s = 0; s < S; ++s) {
                    if (!allow(0, qq, s)) CHECK(wts(hh, qq, s) == 0.0);
                    sum += wts(hh, qq, s);
                }
                CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
            }
    }

    SUBCASE("a single allowed key makes the output that key's value") {
        make_identity_attention(att);
        TensorT<uint8_t> allow({1, nq, S});
        allow(0, 0, 3) = 1;
        allow(0, 1, 0) = 1;
        auto res = att.forward(q, k, v, &allow, "t");
        for (int64_t d = 0; d < D; ++d) {
            CHECK(res.out.val()(0, 0, d) == doctest::Approx(v.val()(0, 3, d)).epsilon(1e-12));
            CHECK(res.out.val()(0, 1, d) == doctest::Approx(v.val()(0, 0, d)).epsilon(1e-12));
        }
    }

    SUBCASE("hand-set logits give softmax weights e/(e+1), 1/(e+1)") {
        nn::ParamStore ps1;
        Rng r1(4);
        nn::MultiheadAttention a1(ps1, "a1", 1, 1, r1);
        make_identity_attention(a1);
        Tensor qv({1, 1, 1});
        qv(0, 0, 0) = 1.0;
        Tensor kv({1, 2, 1});
        kv(0, 0, 0) = 1.0;  // logits (1, 0) at scale 1/sqrt(1)
        kv(0, 1, 0) = 0.0;
        Tensor vv({1, 2, 1});
        vv(0, 0, 0) = 5.0;
        vv(0, 1, 0) = -3.0;
        auto res = a1.forward(ad::constant(qv), ad::constant(kv), ad::constant(vv), nullptr, "t");
        const double e = std::exp(1.0);
        CHECK(res.weights.val()(0, 0, 0) == doctest::Approx(e / (e + 1.0)).epsilon(1e-12));
        CHECK(res.weights.val()(0, 0, 1) == doctest::Approx(1.0 / (e + 1.0)).epsilon(1e-12));
        CHECK(res.weights.val()(0, 0, 0) == doctest::Approx(0.7311).epsilon(1e-4));
        CHECK(res.weights.val()(0, 0, 1) == doctest::Approx(0.2689).epsilon(1e-4));
    }
}

TEST_CASE("empty-mask fallback: layer equals the all-true run for that query") {
    nn::ParamStore ps;
    Rng rng(5);
    const int64_t D = 8, nq = 3, S = 4;
    DecoderLayer layer(ps, "layer", D, 2, 2, rng);
    ad::Value q = ad::constant(rng.normal_tensor({1, nq, D}));
    ad::Value pos = ad::constant(rng.normal_tensor({nq, D}));
    ad::Value k = ad::constant(rng.normal_tensor({1, S, D}));
    ad::Value v = ad::constant(rng.normal_tensor({1, S, D}));

    AttentionMask withempty;
    withempty.allow = TensorT<uint8_t>({1, nq, S});
    withempty.allow.fill(1);
    for (int64_t s = 0; s < S; ++s) withempty.allow(0, 1, s) = 0;  // query 1 empty

    AttentionMask alltrue;
    alltrue.allow = TensorT<uint8_t>({1, nq, S});
    alltrue.allow.fill(1);

    ad::Value out_a = layer.forward(q, pos, k, v, withempty, "a");
    ad::Value out_b = layer.forward(q, pos, k, v, alltrue, "b");
    for (int64_t d = 0; d < D; ++d) CHECK(out_a.val()(0, 1, d) == out_b.val()(0, 1, d));
}

TEST_CASE("NaN logits surface as a numerical error with layer context") {
    nn::ParamStore ps;
    Rng rng(6);
    nn::MultiheadAttention att(ps, "att", 4, 2, rng);
    Tensor bad({1, 2, 4});
    bad[0] = std::numeric_limits<double>::quiet_NaN();
    ad::Value k = ad::constant(rng.normal_tensor({1, 3, 4}));
    try {
        att.forward(ad::constant(bad), k, k, nullptr, "decoder layer 7");
        FAIL("expected NumericalError");
    } catch (const NumericalError& e) {
        CHECK(std::string(e.what()).find("decoder layer 7") != std::string::npos);
    }
}

namespace {

ModelConfig tiny_model_cfg() {
    ModelConfig mc;
    mc.embed_dim = 8;
    mc.audio_dim = 6;
    mc.num_queries = 3;
    mc.num_classes = 2;
    mc.heads = 2;
    mc.num_stages = 4;
    mc.ffn_mult = 2;
    mc.stage_widths = {4, 8, 8, 8};
    return mc;
}

}  // namespace

TEST_CASE("decode produces one aux prediction per layer, 12 in total") {
    Model model(tiny_model_cfg(), 3);
    Rng rng(8);
    Tensor frames = rng.uniform_tensor({2, 3, 32, 32}, 0.0, 1.0);
    Tensor audio = rng.normal_tensor({2, 6});
    ModelOutput out = model.forward(frames, audio, Mode::AVSS_E2E, nullptr);
    CHECK(out.aux.size() == 12);
    CHECK(out.q_fuse.shape() == Shape({2, 3, 8}));
    CHECK(out.final.mask_logits.shape() == Shape({2, 3, 8, 8}));
    CHECK(out.final.class_logits.shape() == Shape({2, 3, 3}));
}

TEST_CASE("zero-stage decoder is the identity on queries") {
    ModelConfig mc = tiny_model_cfg();
    mc.num_stages = 0;
    Model model(mc, 3);
    Rng rng(9);
    Tensor frames = rng.uniform_tensor({1, 3, 32, 32}, 0.0, 1.0);
    Tensor audio = rng.normal_tensor({1, 6});

    MultiScaleFeatures feats = model.encoder.forward(ad::constant(frames));
    ad::Value fa = model.audio_proj.forward(ad::constant(audio));
    ad::Value qa = generate_queries(fa, model.bank);
    DecodeResult res = model.decoder.decode(qa, feats, nullptr, model.bank.proto_pos, nullptr, Mode::AVSS_E2E,
                                            [&](const ad::Value& q) {
                                                PredictionSet p;
                                                p.mask_logits = model.mask_head.predict(q, feats.f1, nullptr);
                                                p.class_logits = model.class_head.predict(q);
                                                return p;
                                            });
    CHECK(res.aux.empty());
    CHECK(bitwise_equal(res.q_fuse.val(), qa.val()));
}

TEST_CASE("stones forward with all-ones prior and zeroed extras equals e2e forward") {
    // robust embeddings and the fusion projection are zero-initialized, so an
    // untrained model in stones mode with a prior of ones must match the
    // end-to-end forward exactly.
    Model model(tiny_model_cfg(), 4);
    Rng rng(10);
    Tensor frames = rng.uniform_tensor({2, 3, 32, 32}, 0.0, 1.0);
    Tensor audio = rng.normal_tensor({2, 6});
    Tensor prior = Tensor::full({2, 32, 32}, 1.0);

    ModelOutput stones = model.forward(frames, audio, Mode::AVSS_STONES, &prior);
    ModelOutput e2e = model.forward(frames, audio, Mode::AVSS_E2E, nullptr);
    CHECK(bitwise_equal(stones.q_fuse.val(), e2e.q_fuse.val()));
    CHECK(bitwise_equal(stones.final.mask_logits.val(), e2e.final.mask_logits.val()));
    CHECK(bitwise_equal(stones.final.class_logits.val(), e2e.final.class_logits.val()));
}

TEST_CASE("mode/prior contract violations raise config errors") {
    Model model(tiny_model_cfg(), 5);
    Rng rng(11);
    Tensor frames = rng.uniform_tensor({1, 3, 32, 32}, 0.0, 1.0);
    Tensor audio = rng.normal_tensor({1, 6});
    Tensor prior = Tensor::full({1, 32, 32}, 1.0);
    CHECK_THROWS_AS(model.forward(frames, audio, Mode::AVSS_STONES, nullptr), ConfigError);
    CHECK_THROWS_AS(model.forward(frames, audio, Mode::AVSS_E2E, &prior), ConfigError);
}

TEST_CASE("one full decoder layer passes the finite-difference check") {
    nn::ParamStore ps;
    Rng rng(12);
    const int64_t D = 8, nq = 3, S = 9;
    DecoderLayer layer(ps, "layer", D, 2, 2, rng);
    ad::Value q = ad::param(rng.normal_tensor({1, nq, D}));
    ad::Value pos = ad::param(rng.normal_tensor({nq, D}));
    ad::Value k = ad::param(rng.normal_tensor({1, S, D}));
    ad::Value v = ad::param(rng.normal_tensor({1, S, D}));
    AttentionMask allow;
    allow.allow = TensorT<uint8_t>({1, nq, S});
    Rng mrng(13);
    for (int64_t i = 0; i < allow.allow.numel(); ++i) allow.allow[i] = mrng.uniform() < 0.7 ? 1 : 0;
    Tensor probe = rng.normal_tensor({1, nq, D});
    auto f = [&]() {
        return ad::sum_all(ad::mul(layer.forward(q, pos, k, v, allow, "gc"), ad::constant(probe)));
    };
    std::vector<ad::Value> params{q, pos, k, v};
    for (const auto& [name, p] : ps.items()) params.push_back(p);
    auto res = testsupport::gradcheck(f, params, 6, rng);
    CHECK(res.max_rel_err < 1e-3);
}
