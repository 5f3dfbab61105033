#pragma once

#include <filesystem>
#include <memory>

#include "avseg/config.hpp"
#include "avseg/model.hpp"
#include "avseg/nn.hpp"

namespace avseg {

// A checkpoint is a directory: weights.bin (named-tensor archive holding
// parameters, optimizer moments and the step counter) plus meta.json with
// the experiment config, its hash, and the step count.
struct Checkpoint {
    ExperimentConfig config;
    int64_t step = 0;
    std::map<std::string, Tensor> weights;
    std::map<std::string, Tensor> opt_state;
};

void save_checkpoint(const std::filesystem::path& dir, const Model& model, const nn::AdamW& opt, int64_t step,
                     const ExperimentConfig& cfg);

Checkpoint load_checkpoint(const std::filesystem::path& dir);

// Rebuild the model (and optionally the optimizer) from a checkpoint.
std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt, nn::AdamW* opt = nullptr);

}  // namespace avseg
