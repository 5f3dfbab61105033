#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <set>

#include "avseg/error.hpp"
#include "avseg/metrics.hpp"
#include "avseg/rng.hpp"
#include "avseg/synthdata.hpp"

using namespace avseg;
namespace fs = std::filesystem;

namespace {

GeneratorConfig small_cfg() {
    GeneratorConfig cfg;
    cfg.height = 64;
    cfg.width = 64;
    cfg.frames = 3;
    cfg.audio_dim = 16;
    cfg.num_classes = 8;
    return cfg;
}

double binary_iou_of(const IntTensor& a, const IntTensor& b) {
    int64_t inter = 0, uni = 0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        inter += (a[i] != 0 && b[i] != 0) ? 1 : 0;
        uni += (a[i] != 0 || b[i] != 0) ? 1 : 0;
    }
    return static_cast<double>(inter) / static_cast<double>(uni);
}

IntTensor binarize_at_half(const Tensor& soft) {
    IntTensor out(soft.shape());
    for (int64_t i = 0; i < soft.numel(); ++i) out[i] = soft[i] >= 0.5 ? 1 : 0;
    return out;
}

}  // namespace

TEST_CASE("no silent objects makes binary and semantic coincide") {
    GeneratorConfig cfg = small_cfg();
    cfg.silent_fraction = 0.0;
    cfg.onset_probability = 0.0;
    SceneSample s = gen_scene(cfg, 7);
    for (int64_t i = 0; i < s.semantic_mask.numel(); ++i)
        CHECK(s.binary_mask[i] == (s.semantic_mask[i] != 0 ? 1 : 0));
}

TEST_CASE("gen_scene is deterministic in (cfg, seed)") {
    GeneratorConfig cfg = small_cfg();
    SceneSample a = gen_scene(cfg, 7);
    SceneSample b = gen_scene(cfg, 7);
    CHECK(bitwise_equal(a.frames, b.frames));
    CHECK(bitwise_equal(a.audio, b.audio));
    CHECK(bitwise_equal(a.semantic_mask, b.semantic_mask));
    CHECK(bitwise_equal(a.binary_mask, b.binary_mask));
    SceneSample c = gen_scene(cfg, 8);
    CHECK_FALSE(bitwise_equal(a.frames, c.frames));
}

TEST_CASE("audio is the sum of active-class prototypes plus bounded noise") {
    GeneratorConfig cfg = small_cfg();
    cfg.min_objects = 2;
    cfg.max_objects = 2;
    cfg.min_sounding = 2;
    cfg.silent_fraction = 0.0;
    cfg.onset_probability = 0.0;
    GeneratedScene g = gen_scene_with_log(cfg, 3);
    REQUIRE(static_cast<int64_t>(g.event_log.size()) == cfg.frames);
    for (int64_t t = 0; t < cfg.frames; ++t) {
        REQUIRE(g.event_log[static_cast<size_t>(t)].size() == 2);
        Tensor expect({cfg.audio_dim});
        for (int c : g.event_log[static_cast<size_t>(t)]) {
            Tensor p = audio_class_prototype(cfg, c);
            for (int64_t i = 0; i < cfg.audio_dim; ++i) expect[i] += p[i];
        }
        for (int64_t i = 0; i < cfg.audio_dim; ++i)
            CHECK(std::abs(g.sample.audio(t, i) - expect[i]) < 6.0 * cfg.audio_noise);
    }
}

TEST_CASE("binary mask equals the sounding-class indicator everywhere") {
    GeneratorConfig cfg = small_cfg();
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        GeneratedScene g = gen_scene_with_log(cfg, seed);
        const int64_t hw = cfg.height * cfg.width;
        for (int64_t t = 0; t < cfg.frames; ++t) {
            std::set<int> active(g.event_log[static_cast<size_t>(t)].begin(),
                                 g.event_log[static_cast<size_t>(t)].end());
            for (int64_t p = 0; p < hw; ++p) {
                const int32_t sem = g.sample.semantic_mask[t * hw + p];
                const bool want = sem != 0 && active.count(sem) > 0;
                CHECK(g.sample.binary_mask[t * hw + p] == (want ? 1 : 0));
            }
        }
    }
}

TEST_CASE("gen_scene rejects dims not divisible by 32") {
    GeneratorConfig cfg = small_cfg();
    cfg.height = 60;
    CHECK_THROWS_AS(gen_scene(cfg, 1), ConfigError);
}

TEST_CASE("corrupt_mask identity at target 1.0") {
    SceneSample s = gen_scene(small_cfg(), 9);
    Tensor soft = corrupt_mask(s.binary_mask, 1.0, 5);
    for (int64_t i = 0; i < soft.numel(); ++i)
        CHECK(soft[i] == static_cast<double>(s.binary_mask[i]));
}

TEST_CASE("corrupt_mask hits the target IoU within tolerance") {
    SceneSample s = gen_scene(small_cfg(), 9);
    for (double target : {0.5, 0.7, 0.9}) {
        Tensor soft = corrupt_mask(s.binary_mask, target, 5);
        const double iou = binary_iou_of(binarize_at_half(soft), s.binary_mask);
        CHECK(iou > target - 0.05);
        CHECK(iou < target + 0.05);
        for (int64_t i = 0; i < soft.numel(); ++i) {
            CHECK(soft[i] >= 0.0);
            CHECK(soft[i] <= 1.0);
        }
    }
}

TEST_CASE("corrupt_mask at 0.99 flips only a thin symmetric difference") {
    SceneSample s = gen_scene(small_cfg(), 9);
    Tensor soft = corrupt_mask(s.binary_mask, 0.99, 5);
    IntTensor hard = binarize_at_half(soft);
    int64_t symdiff = 0, fg = 0;
    for (int64_t i = 0; i < hard.numel(); ++i) {
        symdiff += (hard[i] != s.binary_mask[i]) ? 1 : 0;
        fg += s.binary_mask[i];
    }
    // algebra: with both masks near |m|, symdiff ~ |union|(1-IoU), and
    // |union| <= 2|m|/(1+IoU)
    const double bound = 2.0 * (1.0 - 0.99) / (1.0 + 0.99) * static_cast<double>(fg);
    CHECK(static_cast<double>(symdiff) <= bound + 0.005 * static_cast<double>(fg) + 8.0);
}

TEST_CASE("corrupt_mask monotone in target and deterministic") {
    SceneSample s = gen_scene(small_cfg(), 10);
    double prev = -1.0;
    for (double target : {0.3, 0.5, 0.7, 0.9}) {
        Tensor soft = corrupt_mask(s.binary_mask, target, 77);
        Tensor again = corrupt_mask(s.binary_mask, target, 77);
        CHECK(bitwise_equal(soft, again));
        const double iou = binary_iou_of(binarize_at_half(soft), s.binary_mask);
        CHECK(iou > prev);
        prev = iou;
    }
    CHECK_THROWS_AS(corrupt_mask(s.binary_mask, 0.0, 1), ConfigError);
    CHECK_THROWS_AS(corrupt_mask(s.binary_mask, 1.5, 1), ConfigError);
}

TEST_CASE("dataset round-trip is bit-exact and deterministic on disk") {
    GeneratorConfig cfg = small_cfg();
    Dataset ds = generate_dataset(cfg, 3, 21, "train");
    const fs::path dir = fs::temp_directory_path() / "avseg_ds_test";
    fs::remove_all(dir);
    write_dataset(ds, dir);
    Dataset back = load_dataset(dir);
    REQUIRE(back.samples.size() == ds.samples.size());
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        CHECK(bitwise_equal(back.samples[i].frames, ds.samples[i].frames));
        CHECK(bitwise_equal(back.samples[i].audio, ds.samples[i].audio));
        CHECK(bitwise_equal(back.samples[i].semantic_mask, ds.samples[i].semantic_mask));
        CHECK(bitwise_equal(back.samples[i].binary_mask, ds.samples[i].binary_mask));
    }
    CHECK(back.manifest.sounding_event_log == ds.manifest.sounding_event_log);

    // identical (cfg, seed) -> identical bytes
    const fs::path dir2 = fs::temp_directory_path() / "avseg_ds_test2";
    fs::remove_all(dir2);
    write_dataset(generate_dataset(cfg, 3, 21, "train"), dir2);
    for (const auto& clip : ds.manifest.clip_ids)
        for (const char* f : {"frames.bin", "audio.bin", "semantic.bin", "binary.bin"}) {
            std::ifstream a(dir / clip / f, std::ios::binary), b(dir2 / clip / f, std::ios::binary);
            std::string sa((std::istreambuf_iterator<char>(a)), std::istreambuf_iterator<char>());
            std::string sb((std::istreambuf_iterator<char>(b)), std::istreambuf_iterator<char>());
            CHECK(sa == sb);
        }
    fs::remove_all(dir);
    fs::remove_all(dir2);
}

TEST_CASE("truncated tensor file fails the load") {
    Dataset ds = generate_dataset(small_cfg(), 2, 5, "val");
    const fs::path dir = fs::temp_directory_path() / "avseg_ds_trunc";
    fs::remove_all(dir);
    write_dataset(ds, dir);
    const fs::path victim = dir / ds.manifest.clip_ids[0] / "frames.bin";
    const auto size = fs::file_size(victim);
    fs::resize_file(victim, size / 2);
    CHECK_THROWS_AS(load_dataset(dir), DataError);
    fs::remove_all(dir);
}

TEST_CASE("label exceeding manifest num_classes fails validation") {
    Dataset ds = generate_dataset(small_cfg(), 2, 6, "val");
    const fs::path dir = fs::temp_directory_path() / "avseg_ds_badlabel";
    fs::remove_all(dir);
    write_dataset(ds, dir);
    // shrink the declared class count below a label that is present
    std::ifstream is(dir / "manifest.json");
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    is.close();
    auto pos = text.find("\"num_classes\": 8");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 16, "\"num_classes\": 1");
    std::ofstream os(dir / "manifest.json");
    os << text;
    os.close();
    CHECK_THROWS_AS(load_dataset(dir), DataError);
    fs::remove_all(dir);
}

TEST_CASE("sounding count knobs honor ms3/s4-style presets") {
    GeneratorConfig cfg = small_cfg();
    cfg.min_sounding = 2;  // ms3-style
    for (uint64_t seed = 0; seed < 5; ++seed) {
        GeneratedScene g = gen_scene_with_log(cfg, seed);
        std::set<int> all_active;
        for (const auto& frame : g.event_log) all_active.insert(frame.begin(), frame.end());
        CHECK(all_active.size() >= 2);
    }
    cfg.min_sounding = 1;
    cfg.max_sounding = 1;  // s4-style
    cfg.onset_probability = 0.0;
    for (uint64_t seed = 0; seed < 5; ++seed) {
        GeneratedScene g = gen_scene_with_log(cfg, seed);
        for (const auto& frame : g.event_log) CHECK(frame.size() == 1);
    }
}
