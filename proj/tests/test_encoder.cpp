#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "avseg/encoder.hpp"
#include "avseg/error.hpp"
#include "support/gradcheck.hpp"

using namespace avseg;

namespace {

EncoderConfig tiny_cfg() {
    EncoderConfig cfg;
    cfg.embed_dim = 8;
    cfg.stage_widths = {4, 8, 8, 8};
    return cfg;
}

}  // namespace

TEST_CASE("pyramid shapes at 96x96") {
    nn::ParamStore ps;
    Rng rng(1);
    EncoderConfig cfg;
    cfg.embed_dim = 16;
    cfg.stage_widths = {8, 16, 16, 16};
    VisualEncoder enc(ps, cfg, rng);
    MultiScaleFeatures f = enc.forward(ad::constant(Tensor({2, 3, 96, 96})));
    CHECK(f.f1.shape() == Shape({2, 16, 24, 24}));
    CHECK(f.f2.shape() == Shape({2, 16, 12, 12}));
    CHECK(f.f3.shape() == Shape({2, 16, 6, 6}));
    CHECK(f.f4.shape() == Shape({2, 16, 3, 3}));
}

TEST_CASE("bad divisibility raises a shape error") {
    nn::ParamStore ps;
    Rng rng(1);
    VisualEncoder enc(ps, tiny_cfg(), rng);
    CHECK_THROWS_AS(enc.forward(ad::constant(Tensor({1, 3, 60, 64}))), ShapeError);
}

TEST_CASE("zero input with zero merge layers yields constant bias maps") {
    nn::ParamStore ps;
    Rng rng(2);
    VisualEncoder enc(ps, tiny_cfg(), rng);
    for (auto& m : enc.merge) m.w.node()->value.fill(0.0);
    MultiScaleFeatures f = enc.forward(ad::constant(Tensor({1, 3, 32, 32})));
    const ad::Value* levels[4] = {&f.f1, &f.f2, &f.f3, &f.f4};
    for (int li = 0; li < 4; ++li) {
        const Tensor& t = levels[li]->val();
        const Tensor& bias = enc.merge[static_cast<size_t>(li)].b.val();
        const int64_t hw = t.dim(2) * t.dim(3);
        for (int64_t c = 0; c < t.dim(1); ++c)
            for (int64_t p = 0; p < hw; ++p) CHECK(t[c * hw + p] == doctest::Approx(bias[c]).epsilon(1e-12));
    }
}

TEST_CASE("encoder outputs stay finite on finite input") {
    nn::ParamStore ps;
    Rng rng(3);
    VisualEncoder enc(ps, tiny_cfg(), rng);
    Rng drng(4);
    MultiScaleFeatures f = enc.forward(ad::constant(drng.uniform_tensor({2, 3, 32, 32}, 0.0, 1.0)));
    CHECK(all_finite(f.f1.val()));
    CHECK(all_finite(f.f2.val()));
    CHECK(all_finite(f.f3.val()));
    CHECK(all_finite(f.f4.val()));
}

TEST_CASE("scalar readout gradient w.r.t. frames matches finite differences") {
    nn::ParamStore ps;
    Rng rng(5);
    VisualEncoder enc(ps, tiny_cfg(), rng);
    Rng drng(6);
    ad::Value frames = ad::param(drng.uniform_tensor({1, 3, 32, 32}, 0.0, 1.0));
    Tensor probe = drng.normal_tensor({1, 8, 8, 8});
    auto f = [&]() {
        MultiScaleFeatures feats = enc.forward(frames);
        return ad::sum_all(ad::mul(feats.f1, ad::constant(probe)));
    };
    auto res = testsupport::gradcheck(f, {frames}, 12, drng);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("every encoder parameter tensor passes a finite-difference spot check") {
    nn::ParamStore ps;
    Rng rng(7);
    VisualEncoder enc(ps, tiny_cfg(), rng);
    Rng drng(8);
    Tensor input = drng.uniform_tensor({1, 3, 32, 32}, 0.0, 1.0);
    Tensor probe = drng.normal_tensor({1, 8, 4, 4});
    auto f = [&]() {
        MultiScaleFeatures feats = enc.forward(ad::constant(input));
        return ad::sum_all(ad::mul(feats.f2, ad::constant(probe)));
    };
    std::vector<ad::Value> all_params;
    for (const auto& [name, v] : ps.items()) all_params.push_back(v);
    auto res = testsupport::gradcheck(f, all_params, 10, drng);
    CHECK(res.checked >= 10 * static_cast<int>(all_params.size()));
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("audio projector is an affine map") {
    nn::ParamStore ps;
    Rng rng(9);
    AudioProjector proj(ps, 6, 6, rng);

    SUBCASE("identity weights pass audio through") {
        proj.proj.w.node()->value.fill(0.0);
        for (int64_t i = 0; i < 6; ++i) proj.proj.w.node()->value(i, i) = 1.0;
        proj.proj.b.node()->value.fill(0.0);
        Tensor audio = rng.normal_tensor({3, 6});
        ad::Value fa = proj.forward(ad::constant(audio));
        CHECK(bitwise_equal(fa.val(), audio));
    }

    SUBCASE("zero audio yields the bias per frame") {
        ad::Value fa = proj.forward(ad::constant(Tensor({4, 6})));
        for (int64_t t = 0; t < 4; ++t)
            for (int64_t d = 0; d < 6; ++d) CHECK(fa.val()(t, d) == proj.proj.b.val()[d]);
    }

    SUBCASE("random case matches an independent multiply") {
        Tensor audio = rng.normal_tensor({3, 6});
        ad::Value fa = proj.forward(ad::constant(audio));
        for (int64_t t = 0; t < 3; ++t)
            for (int64_t d = 0; d < 6; ++d) {
                double s = proj.proj.b.val()[d];
                for (int64_t k = 0; k < 6; ++k) s += audio(t, k) * proj.proj.w.val()(d, k);
                CHECK(fa.val()(t, d) == doctest::Approx(s).epsilon(1e-12));
            }
    }
}
