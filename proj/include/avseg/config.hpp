#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "avseg/heads.hpp"
#include "avseg/model.hpp"
#include "avseg/synthdata.hpp"

namespace avseg {

struct TrainConfig {
    std::string task = "avss";        // avs | avss
    std::string strategy = "stones";  // e2e | stones (avss only)
    int64_t steps = 2000;
    double lr = 1e-4;
    double weight_decay = 1e-4;
    bool cosine_decay = true;
    uint64_t seed = 1;
    LossWeights loss;
};

struct EvalConfig {
    std::string split = "test";
    double beta2 = 0.3;
    std::string stones_source = "oracle";  // oracle | corrupted | stage1
    double corrupt_iou = 0.85;
    uint64_t corrupt_seed = 1234;
    std::string stage1_checkpoint;
};

struct ExperimentConfig {
    GeneratorConfig data;
    int64_t train_clips = 400;
    int64_t val_clips = 40;
    int64_t test_clips = 60;
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;
};

ExperimentConfig default_config();

nlohmann::json config_to_json(const ExperimentConfig& cfg);
// starts from defaults (or `base`) and applies the fields present in j
ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig config_from_json(const nlohmann::json& j, const ExperimentConfig& base);

ExperimentConfig load_config_file(const std::filesystem::path& path);

// preset: s4 (single sounding source), ms3 (multi source), avss (semantic)
void apply_preset(ExperimentConfig& cfg, const std::string& preset);

uint64_t config_hash(const ExperimentConfig& cfg);

// the Mode the train config describes
Mode mode_of(const TrainConfig& t);

}  // namespace avseg
