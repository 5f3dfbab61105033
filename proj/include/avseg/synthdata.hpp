#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "avseg/tensor.hpp"

namespace avseg {

// Procedural audio-visual scene generator. Objects are anti-aliased shapes
// (disk / rectangle / triangle) in one of three colors; a class is a
// shape-color combination, so at most 9 classes exist. Audio per frame is
// the sum of unit prototype vectors of the classes sounding in that frame
// plus isotropic noise; it is what lets a model separate a sounding object
// from a silent object of another class.
struct GeneratorConfig {
    int64_t height = 96;
    int64_t width = 96;
    int64_t frames = 5;
    int64_t audio_dim = 32;
    int64_t num_classes = 8;
    int64_t min_objects = 2;
    int64_t max_objects = 4;
    int64_t min_sounding = 1;
    int64_t max_sounding = 0;  // 0 = uncapped
    double silent_fraction = 0.5;    // per-object chance of staying silent
    double onset_probability = 0.25; // sounding object may start mid-clip
    double audio_noise = 0.05;
    uint64_t proto_seed = 946253;    // stream for class prototype vectors
    double min_radius_frac = 0.09;
    double max_radius_frac = 0.22;
};

struct SceneSample {
    Tensor frames;            // [T,3,H,W] in [0,1], on the f32 grid
    Tensor audio;             // [T,D_a], on the f32 grid
    IntTensor semantic_mask;  // [T,H,W], 0 = background
    IntTensor binary_mask;    // [T,H,W], 1 = pixel of a sounding class
    std::string clip_id;
};

struct DatasetManifest {
    std::string split;  // train | val | test
    int64_t num_clips = 0;
    int64_t frames = 0, height = 0, width = 0;
    int64_t audio_dim = 0, num_classes = 0;
    std::vector<std::string> class_names;
    std::vector<std::string> clip_ids;
    // clip -> frame -> sorted list of sounding class ids
    std::map<std::string, std::vector<std::vector<int>>> sounding_event_log;
};

struct Dataset {
    std::vector<SceneSample> samples;
    DatasetManifest manifest;
    const SceneSample& by_id(const std::string& clip_id) const;
};

std::vector<std::string> class_name_table(int64_t num_classes);

// Deterministic in (cfg, seed); throws ConfigError on bad dims.
SceneSample gen_scene(const GeneratorConfig& cfg, uint64_t seed);

// Same, but also returns the per-frame sounding class sets the audio was
// synthesized from (a sounding class may be fully occluded in the render
// yet still audible, so the log cannot be recovered from the masks).
struct GeneratedScene {
    SceneSample sample;
    std::vector<std::vector<int>> event_log;
};
GeneratedScene gen_scene_with_log(const GeneratorConfig& cfg, uint64_t seed);

// Prototype vector for one class, unit norm; reproducible from cfg alone.
Tensor audio_class_prototype(const GeneratorConfig& cfg, int64_t class_id);

// Degrade a binary mask to a soft map whose 0.5-binarization has IoU within
// a small tolerance of target_iou against the input, per frame. target 1.0
// returns the input unchanged.
Tensor corrupt_mask(const IntTensor& mask, double target_iou, uint64_t seed);

Dataset generate_dataset(const GeneratorConfig& cfg, int64_t clips, uint64_t seed, const std::string& split);

void write_dataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace avseg
