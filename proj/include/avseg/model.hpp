#pragma once

#include <array>
#include <memory>

#include "avseg/audioquery.hpp"
#include "avseg/decoder.hpp"
#include "avseg/encoder.hpp"
#include "avseg/heads.hpp"
#include "avseg/synthdata.hpp"

namespace avseg {

struct ModelConfig {
    int64_t embed_dim = 64;
    int64_t audio_dim = 32;
    int64_t num_queries = 16;
    int64_t num_classes = 8;  // 1 for the binary stage
    int64_t heads = 4;
    int64_t num_stages = 4;
    int64_t layers_per_stage = 3;
    int64_t ffn_mult = 4;
    std::array<int64_t, 4> stage_widths{32, 64, 64, 64};
    double tau1 = 0.3, tau2 = 0.7;
    bool adaptive_queries = true;
    bool robust_keys = true;
    bool mask_fusion = true;
};

struct ModelOutput {
    PredictionSet final;
    std::vector<PredictionSet> aux;
    ad::Value q_fuse;
    int64_t clamp_warnings = 0;
};

// The full network: backbone + audio projector + query bank + masked
// decoder + prediction heads. The mode is a forward-time argument so one
// parameter set can be run both with and without a prior.
class Model {
  public:
    Model(const ModelConfig& cfg, uint64_t init_seed);

    ModelOutput forward(const SceneSample& sample, Mode mode, const Tensor* prior);
    ModelOutput forward(const Tensor& frames, const Tensor& audio, Mode mode, const Tensor* prior);

    nn::ParamStore& params() { return params_; }
    const nn::ParamStore& params() const { return params_; }
    const ModelConfig& config() const { return cfg_; }

    VisualEncoder encoder;
    AudioProjector audio_proj;
    QueryBank bank;
    Decoder decoder;
    MaskHead mask_head;
    ClassHead class_head;
    RobustKeyParams robust;

  private:
    ModelConfig cfg_;
    nn::ParamStore params_;
};

}  // namespace avseg
