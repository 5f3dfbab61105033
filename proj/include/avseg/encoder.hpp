#pragma once

#include <array>

#include "avseg/nn.hpp"

namespace avseg {

// Merged feature pyramid at strides 4/8/16/32, all at the shared embed dim.
struct MultiScaleFeatures {
    ad::Value f1, f2, f3, f4;
    int64_t level_h(int i) const;
    int64_t level_w(int i) const;
    const ad::Value& level(int i) const;  // 1-based, f1..f4
};

struct EncoderConfig {
    int64_t embed_dim = 64;
    std::array<int64_t, 4> stage_widths{32, 64, 64, 64};
};

// Four-stage strided conv backbone plus a top-down pyramid merge: laterals
// project each stage to the embed dim, coarser levels are upsampled and
// added, and a 3x3 merge conv finishes each level.
class VisualEncoder {
  public:
    VisualEncoder() = default;
    VisualEncoder(nn::ParamStore& ps, const EncoderConfig& cfg, Rng& rng);

    MultiScaleFeatures forward(const ad::Value& frames) const;  // [T,3,H,W], H,W % 32 == 0

    // zero-fillable handles for the degenerate-output tests
    std::array<nn::Conv2d, 4> merge;

  private:
    EncoderConfig cfg_;
    struct Stage {
        nn::Conv2d conv_a, conv_b;
        nn::LayerNorm norm_a, norm_b;
    };
    std::array<Stage, 4> stages_;
    std::array<nn::Conv2d, 4> lateral_;
};

// fa = audio W^T + b, one row per frame
struct AudioProjector {
    nn::Linear proj;
    AudioProjector() = default;
    AudioProjector(nn::ParamStore& ps, int64_t audio_dim, int64_t embed_dim, Rng& rng);
    ad::Value forward(const ad::Value& audio) const;
};

}  // namespace avseg
