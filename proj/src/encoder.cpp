#include "avseg/encoder.hpp"

#include "avseg/error.hpp"

namespace avseg {

int64_t MultiScaleFeatures::level_h(int i) const { return level(i).shape()[2]; }
int64_t MultiScaleFeatures::level_w(int i) const { return level(i).shape()[3]; }

const ad::Value& MultiScaleFeatures::level(int i) const {
    switch (i) {
        case 1: return f1;
        case 2: return f2;
        case 3: return f3;
        case 4: return f4;
        default: throw ShapeError("pyramid level must be 1..4");
    }
}

VisualEncoder::VisualEncoder(nn::ParamStore& ps, const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    int64_t in_ch = 3;
    for (int s = 0; s < 4; ++s) {
        const int64_t w = cfg.stage_widths[static_cast<size_t>(s)];
        const std::string name = "enc.s" + std::to_string(s);
        // stage 0 halves twice (stride 4); later stages halve once then refine
        const int64_t stride_b = (s == 0) ? 2 : 1;
        stages_[static_cast<size_t>(s)].conv_a = nn::Conv2d(ps, name + ".conv_a", in_ch, w, 3, 2, 1, rng);
        stages_[static_cast<size_t>(s)].norm_a = nn::LayerNorm(ps, name + ".norm_a", w);
        stages_[static_cast<size_t>(s)].conv_b = nn::Conv2d(ps, name + ".conv_b", w, w, 3, stride_b, 1, rng);
        stages_[static_cast<size_t>(s)].norm_b = nn::LayerNorm(ps, name + ".norm_b", w);
        in_ch = w;
    }
    for (int s = 0; s < 4; ++s) {
        const int64_t w = cfg.stage_widths[static_cast<size_t>(s)];
        lateral_[static_cast<size_t>(s)] =
            nn::Conv2d(ps, "enc.lat" + std::to_string(s), w, cfg.embed_dim, 1, 1, 0, rng);
        merge[static_cast<size_t>(s)] =
            nn::Conv2d(ps, "enc.merge" + std::to_string(s), cfg.embed_dim, cfg.embed_dim, 3, 1, 1, rng);
    }
}

MultiScaleFeatures VisualEncoder::forward(const ad::Value& frames) const {
    const Shape& s = frames.shape();
    check_shape(s.size() == 4 && s[1] == 3, "encoder expects [T,3,H,W]");
    check_shape(s[2] % 32 == 0 && s[3] % 32 == 0, "H and W must be divisible by 32");

    std::array<ad::Value, 4> c;
    ad::Value x = frames;
    for (int st = 0; st < 4; ++st) {
        const Stage& stage = stages_[static_cast<size_t>(st)];
        x = ad::relu(ad::layer_norm_channels(stage.conv_a.forward(x), stage.norm_a.g, stage.norm_a.b));
        x = ad::relu(ad::layer_norm_channels(stage.conv_b.forward(x), stage.norm_b.g, stage.norm_b.b));
        c[static_cast<size_t>(st)] = x;
    }

    // top-down: coarse semantics injected into finer maps before the merge
    std::array<ad::Value, 4> p;
    p[3] = lateral_[3].forward(c[3]);
    for (int st = 2; st >= 0; --st) {
        ad::Value lat = lateral_[static_cast<size_t>(st)].forward(c[static_cast<size_t>(st)]);
        ad::Value up = ad::upsample_bilinear(p[static_cast<size_t>(st) + 1], lat.shape()[2], lat.shape()[3]);
        p[static_cast<size_t>(st)] = ad::add(lat, up);
    }

    MultiScaleFeatures out;
    out.f1 = merge[0].forward(p[0]);
    out.f2 = merge[1].forward(p[1]);
    out.f3 = merge[2].forward(p[2]);
    out.f4 = merge[3].forward(p[3]);
    return out;
}

AudioProjector::AudioProjector(nn::ParamStore& ps, int64_t audio_dim, int64_t embed_dim, Rng& rng) {
    proj = nn::Linear(ps, "audio.proj", audio_dim, embed_dim, rng);
}

ad::Value AudioProjector::forward(const ad::Value& audio) const { return proj.forward(audio); }

}  // namespace avseg
