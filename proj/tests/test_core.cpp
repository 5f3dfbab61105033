#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "avseg/autodiff.hpp"
#include "avseg/error.hpp"
#include "avseg/gemm.hpp"
#include "avseg/resize.hpp"
#include "avseg/rng.hpp"
#include "avseg/serialize.hpp"
#include "support/gradcheck.hpp"

using namespace avseg;
namespace fs = std::filesystem;

TEST_CASE("rng determinism and moments") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    Rng c(7);
    double mean = 0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) mean += c.normal();
    mean /= n;
    CHECK(std::abs(mean) < 0.05);
}

TEST_CASE("tensor container round-trips bit-exactly") {
    Rng rng(3);
    Tensor t = round_to_f32(rng.normal_tensor({2, 3, 4}));
    std::stringstream ss;
    write_tensor(ss, t, Dtype::F32);
    Tensor back = read_tensor(ss);
    CHECK(bitwise_equal(t, back));

    IntTensor it({3, 5});
    for (int64_t i = 0; i < it.numel(); ++i) it[i] = static_cast<int32_t>(i % 7);
    std::stringstream s2;
    write_tensor(s2, it, Dtype::U8);
    CHECK(bitwise_equal(it, read_int_tensor(s2)));
}

TEST_CASE("truncated container raises a data error") {
    Rng rng(5);
    Tensor t = rng.normal_tensor({8, 8});
    std::stringstream ss;
    write_tensor(ss, t, Dtype::F64);
    std::string payload = ss.str();
    payload.resize(payload.size() / 2);
    std::stringstream cut(payload);
    CHECK_THROWS_AS(read_tensor(cut), DataError);

    std::stringstream bad("not a tensor at all");
    CHECK_THROWS_AS(read_tensor(bad), DataError);
}

TEST_CASE("archive stores named tensors") {
    const fs::path dir = fs::temp_directory_path() / "avseg_archive_test";
    fs::create_directories(dir);
    Rng rng(11);
    std::map<std::string, Tensor> entries;
    entries["alpha"] = rng.normal_tensor({4, 4});
    entries["beta"] = rng.normal_tensor({2});
    write_archive(dir / "a.bin", entries);
    auto back = read_archive(dir / "a.bin");
    REQUIRE(back.size() == 2);
    CHECK(bitwise_equal(back.at("alpha"), entries.at("alpha")));
    CHECK(bitwise_equal(back.at("beta"), entries.at("beta")));
    fs::remove_all(dir);
}

TEST_CASE("gemm matches a scalar triple loop") {
    Rng rng(13);
    const int64_t m = 5, k = 7, n = 4;
    Tensor a = rng.normal_tensor({m, k}), b = rng.normal_tensor({k, n}), c({m, n});
    gemm(false, false, m, n, k, 1.0, a.data(), b.data(), 0.0, c.data());
    for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double s = 0;
            for (int64_t kk = 0; kk < k; ++kk) s += a(i, kk) * b(kk, j);
            CHECK(c(i, j) == doctest::Approx(s).epsilon(1e-12));
        }
}

TEST_CASE("bilinear resize matches hand-computed corner values") {
    // 2x2 checkerboard upsampled to 4x4 with half-pixel centers: the four
    // corner output pixels map outside the source grid and clamp to the
    // nearest source pixel.
    Tensor src({2, 2});
    src(0, 0) = 1.0;
    src(0, 1) = 0.0;
    src(1, 0) = 0.0;
    src(1, 1) = 1.0;
    Tensor up = resize_bilinear(src, 4, 4);
    CHECK(up(0, 0) == doctest::Approx(1.0));
    CHECK(up(0, 3) == doctest::Approx(0.0));
    CHECK(up(3, 0) == doctest::Approx(0.0));
    CHECK(up(3, 3) == doctest::Approx(1.0));
    // center pixels: source coord (i+0.5)*0.5-0.5 = 0.25 for i=1 -> w_hi 0.25
    CHECK(up(1, 1) == doctest::Approx(0.75 * 0.75 * 1.0 + 0.25 * 0.25 * 1.0).epsilon(1e-12));
}

TEST_CASE("autodiff elementwise ops match finite differences") {
    Rng rng(17);
    ad::Value x = ad::param(rng.normal_tensor({3, 4}));
    ad::Value y = ad::param(rng.normal_tensor({3, 4}));
    auto f = [&]() {
        ad::Value a = ad::mul(ad::sigmoid(x), ad::add(y, ad::mul_scalar(x, 0.5)));
        ad::Value b = ad::relu(ad::sub(a, ad::square(y)));
        return ad::mean_all(ad::add(b, ad::exp_v(ad::mul_scalar(x, 0.1))));
    };
    auto res = testsupport::gradcheck(f, {x, y}, 10, rng);
    CHECK(res.max_rel_err < 1e-6);
}

TEST_CASE("autodiff broadcasting matches finite differences") {
    Rng rng(19);
    ad::Value a = ad::param(rng.normal_tensor({2, 3, 1}));
    ad::Value b = ad::param(rng.normal_tensor({1, 1, 5}));
    ad::Value c = ad::param(rng.normal_tensor({3, 5}));
    auto f = [&]() { return ad::sum_all(ad::mul(ad::add(a, b), c)); };
    auto res = testsupport::gradcheck(f, {a, b, c}, 8, rng);
    CHECK(res.max_rel_err < 1e-7);
}

TEST_CASE("matmul and bmm gradients") {
    Rng rng(23);
    ad::Value a = ad::param(rng.normal_tensor({4, 6}));
    ad::Value b = ad::param(rng.normal_tensor({6, 3}));
    auto f1 = [&]() { return ad::sum_all(ad::square(ad::matmul(a, b))); };
    CHECK(testsupport::gradcheck(f1, {a, b}, 10, rng).max_rel_err < 1e-6);

    ad::Value p = ad::param(rng.normal_tensor({2, 3, 4}));
    ad::Value q = ad::param(rng.normal_tensor({2, 5, 4}));
    auto f2 = [&]() { return ad::mean_all(ad::sigmoid(ad::bmm_nt(p, q))); };
    CHECK(testsupport::gradcheck(f2, {p, q}, 10, rng).max_rel_err < 1e-6);
}

TEST_CASE("conv2d forward matches a scalar loop and gradients check out") {
    Rng rng(29);
    const int64_t N = 2, cin = 3, h = 6, w = 5, cout = 4, ks = 3, stride = 2, pad = 1;
    ad::Value x = ad::param(rng.normal_tensor({N, cin, h, w}));
    ad::Value wt = ad::param(rng.normal_tensor({cout, cin, ks, ks}));
    ad::Value bs = ad::param(rng.normal_tensor({cout}));
    ad::Value out = ad::conv2d(x, wt, bs, stride, pad);
    const int64_t oh = (h + 2 * pad - ks) / stride + 1, ow = (w + 2 * pad - ks) / stride + 1;
    REQUIRE(out.shape() == Shape({N, cout, oh, ow}));
    // scalar-loop oracle on one arbitrary output element
    for (auto [n, co, oy, ox] : {std::array<int64_t, 4>{0, 0, 0, 0}, std::array<int64_t, 4>{1, 3, 2, 1}}) {
        double s = bs.val()[co];
        for (int64_t ci = 0; ci < cin; ++ci)
            for (int64_t ky = 0; ky < ks; ++ky)
                for (int64_t kx = 0; kx < ks; ++kx) {
                    const int64_t iy = oy * stride - pad + ky, ix = ox * stride - pad + kx;
                    if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                    s += x.val()(n, ci, iy, ix) * wt.val()(co, ci, ky, kx);
                }
        CHECK(out.val()(n, co, oy, ox) == doctest::Approx(s).epsilon(1e-12));
    }
    auto f = [&]() { return ad::mean_all(ad::relu(ad::conv2d(x, wt, bs, stride, pad))); };
    CHECK(testsupport::gradcheck(f, {x, wt, bs}, 10, rng).max_rel_err < 1e-5);
}

TEST_CASE("layer_norm and masked softmax gradients") {
    Rng rng(31);
    ad::Value x = ad::param(rng.normal_tensor({4, 8}));
    ad::Value g = ad::param(rng.uniform_tensor({8}, 0.5, 1.5));
    ad::Value b = ad::param(rng.normal_tensor({8}));
    auto f = [&]() { return ad::mean_all(ad::square(ad::layer_norm(x, g, b))); };
    CHECK(testsupport::gradcheck(f, {x, g, b}, 10, rng).max_rel_err < 1e-5);

    TensorT<uint8_t> allow({4, 8});
    Rng mrng(5);
    for (int64_t i = 0; i < allow.numel(); ++i) allow[i] = mrng.uniform() < 0.6 ? 1 : 0;
    for (int64_t r = 0; r < 4; ++r) allow[r * 8 + 2] = 1;  // keep rows nonempty
    Tensor weights = rng.normal_tensor({4, 8});
    auto f2 = [&]() {
        return ad::sum_all(ad::mul(ad::softmax_masked(x, &allow), ad::constant(weights)));
    };
    CHECK(testsupport::gradcheck(f2, {x}, 12, rng).max_rel_err < 1e-6);

    ad::Value probs = ad::softmax_masked(x, &allow);
    for (int64_t i = 0; i < probs.numel(); ++i)
        if (!allow[i]) CHECK(probs.val()[i] == 0.0);
}

TEST_CASE("upsample_bilinear gradient") {
    Rng rng(37);
    ad::Value x = ad::param(rng.normal_tensor({2, 3, 4}));
    Tensor w = rng.normal_tensor({2, 7, 9});
    auto f = [&]() { return ad::sum_all(ad::mul(ad::upsample_bilinear(x, 7, 9), ad::constant(w))); };
    CHECK(testsupport::gradcheck(f, {x}, 10, rng).max_rel_err < 1e-6);
}

TEST_CASE("sum_sorted_all is permutation-exact") {
    Rng rng(41);
    Tensor vals = rng.normal_tensor({64});
    ad::Value v1 = ad::constant(vals);
    Tensor shuffled = vals;
    for (int64_t i = 63; i > 0; --i) std::swap(shuffled[i], shuffled[rng.uniform_int(i + 1)]);
    ad::Value v2 = ad::constant(shuffled);
    CHECK(ad::sum_sorted_all(v1).val()[0] == ad::sum_sorted_all(v2).val()[0]);
}

TEST_CASE("spatial_to_tokens and gather_rows gradients") {
    Rng rng(43);
    ad::Value x = ad::param(rng.normal_tensor({2, 3, 2, 2}));
    Tensor w = rng.normal_tensor({2, 4, 3});
    auto f = [&]() { return ad::sum_all(ad::mul(ad::spatial_to_tokens(x), ad::constant(w))); };
    CHECK(testsupport::gradcheck(f, {x}, 8, rng).max_rel_err < 1e-7);

    ad::Value m = ad::param(rng.normal_tensor({6, 5}));
    std::vector<int64_t> idx{4, 0, 4, 2};
    Tensor w2 = rng.normal_tensor({4, 5});
    auto f2 = [&]() { return ad::sum_all(ad::mul(ad::gather_rows(m, idx), ad::constant(w2))); };
    CHECK(testsupport::gradcheck(f2, {m}, 8, rng).max_rel_err < 1e-7);
}
