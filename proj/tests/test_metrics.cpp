#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "avseg/error.hpp"
#include "avseg/metrics.hpp"
#include "avseg/rng.hpp"
#include "avseg/synthdata.hpp"

using namespace avseg;

namespace {

IntTensor labels(Shape s, std::initializer_list<int32_t> v) {
    IntTensor t(std::move(s));
    int64_t i = 0;
    for (int32_t x : v) t[i++] = x;
    return t;
}

}  // namespace

TEST_CASE("perfect prediction scores 1.0 on both metrics") {
    Rng rng(3);
    IntTensor x({2, 4, 4});
    for (int64_t i = 0; i < x.numel(); ++i) x[i] = static_cast<int32_t>(rng.uniform_int(4));
    x[0] = 1;  // nonempty foreground
    CHECK(miou(x, x, 3) == 1.0);
    CHECK(fscore(x, x, 3) == 1.0);
}

TEST_CASE("disjoint binary foregrounds score 0") {
    IntTensor pred = labels({1, 2, 2}, {1, 1, 0, 0});
    IntTensor gt = labels({1, 2, 2}, {0, 0, 1, 1});
    CHECK(miou(pred, gt, 1) == 0.0);
    CHECK(fscore(pred, gt, 1) == 0.0);
}

TEST_CASE("half-covering prediction has IoU 0.5") {
    // pred = left half, gt = full frame
    IntTensor pred({1, 2, 4});
    IntTensor gt({1, 2, 4});
    for (int64_t y = 0; y < 2; ++y)
        for (int64_t x = 0; x < 4; ++x) {
            gt(0, y, x) = 1;
            pred(0, y, x) = x < 2 ? 1 : 0;
        }
    CHECK(miou(pred, gt, 1) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("fscore closed form at P=0.5, R=1.0") {
    // gt: 4 foreground pixels; pred: those 4 plus 4 false positives
    IntTensor gt({1, 2, 8});
    IntTensor pred({1, 2, 8});
    for (int64_t x = 0; x < 4; ++x) gt(0, 0, x) = 1;
    for (int64_t x = 0; x < 8; ++x) pred(0, 0, x) = 1;
    const double f = fscore(pred, gt, 1, 0.3);
    CHECK(f == doctest::Approx(1.3 * 0.5 / (0.3 * 0.5 + 1.0)).epsilon(1e-12));
    CHECK(f == doctest::Approx(0.5652).epsilon(1e-4));
}

TEST_CASE("empty prediction against nonempty gt gives F = 0") {
    IntTensor pred({1, 2, 2});
    IntTensor gt = labels({1, 2, 2}, {1, 0, 0, 1});
    CHECK(fscore(pred, gt, 1) == 0.0);
}

TEST_CASE("all-empty unions are an error, not zero") {
    IntTensor a({1, 2, 2});
    IntTensor b({1, 2, 2});
    CHECK_THROWS_AS(miou(a, b, 1), NumericalError);
}

TEST_CASE("semantic mIoU averages classes with nonzero union") {
    // labels 0,1,2 present; class 3 absent entirely
    IntTensor gt = labels({1, 2, 2}, {0, 1, 2, 2});
    IntTensor pred = labels({1, 2, 2}, {0, 1, 2, 0});
    // class 0: inter 1... pred(3)=0 vs gt(3)=2 -> union{0} grows
    // per-class: c0: I=1,U=2; c1: I=1,U=1; c2: I=1,U=2; c3 absent
    const double want = (0.5 + 1.0 + 0.5) / 3.0;
    CHECK(miou(pred, gt, 3) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("metric accumulation is frame-order invariant and mergeable") {
    Rng rng(9);
    IntTensor p1({1, 8, 8}), g1({1, 8, 8}), p2({1, 8, 8}), g2({1, 8, 8});
    for (int64_t i = 0; i < p1.numel(); ++i) {
        p1[i] = static_cast<int32_t>(rng.uniform_int(3));
        g1[i] = static_cast<int32_t>(rng.uniform_int(3));
        p2[i] = static_cast<int32_t>(rng.uniform_int(3));
        g2[i] = static_cast<int32_t>(rng.uniform_int(3));
    }
    MetricCounts fwd, rev, sharded_a, sharded_b;
    fwd.init(2);
    rev.init(2);
    sharded_a.init(2);
    sharded_b.init(2);
    fwd.accumulate(p1, g1);
    fwd.accumulate(p2, g2);
    rev.accumulate(p2, g2);
    rev.accumulate(p1, g1);
    sharded_a.accumulate(p1, g1);
    sharded_b.accumulate(p2, g2);
    sharded_a.merge(sharded_b);
    CHECK(evaluate_counts(fwd, false).miou == evaluate_counts(rev, false).miou);
    CHECK(evaluate_counts(fwd, false).miou == evaluate_counts(sharded_a, false).miou);
    CHECK(evaluate_counts(fwd, false).fscore == evaluate_counts(sharded_a, false).fscore);
}

TEST_CASE("measured mIoU decreases as corruption deepens") {
    GeneratorConfig cfg;
    cfg.height = 64;
    cfg.width = 64;
    cfg.frames = 2;
    SceneSample s = gen_scene(cfg, 33);
    double prev = -1.0;
    for (double target : {0.4, 0.6, 0.8, 0.95}) {
        Tensor soft = corrupt_mask(s.binary_mask, target, 3);
        IntTensor hard(soft.shape());
        for (int64_t i = 0; i < soft.numel(); ++i) hard[i] = soft[i] >= 0.5 ? 1 : 0;
        const double m = miou(hard, s.binary_mask, 1);
        CHECK(m > prev);
        prev = m;
    }
}

TEST_CASE("report json carries every EvalReport field") {
    IntTensor gt = labels({1, 2, 2}, {0, 1, 2, 2});
    MetricCounts c;
    c.init(2);
    c.accumulate(gt, gt);
    EvalReport rep = evaluate_counts(c, false);
    const std::string payload = report_to_json(rep, {"red_disk", "green_disk"});
    CHECK(payload.find("\"miou\"") != std::string::npos);
    CHECK(payload.find("\"fscore\"") != std::string::npos);
    CHECK(payload.find("per_class_iou") != std::string::npos);
    CHECK(payload.find("counts") != std::string::npos);
    CHECK(payload.find("red_disk") != std::string::npos);
}
