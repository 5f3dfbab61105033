#pragma once

#include <functional>
#include <string>
#include <vector>

#include "avseg/encoder.hpp"
#include "avseg/heads.hpp"
#include "avseg/nn.hpp"

namespace avseg {

enum class Mode { AVS, AVSS_E2E, AVSS_STONES };

std::string mode_name(Mode m);

struct DecoderConfig {
    int64_t num_stages = 4;
    int64_t layers_per_stage = 3;  // must equal the number of decoder levels
    int64_t heads = 4;
    int64_t embed_dim = 64;
    int64_t ffn_mult = 4;
};

// Three embeddings selected by thresholding the prior: below tau1 silent,
// within [tau1,tau2] uncertain, above tau2 sounding.
struct RobustKeyParams {
    ad::Value e_silent, e_uncertain, e_sounding;  // [D] each
    double tau1 = 0.3, tau2 = 0.7;
};

RobustKeyParams make_robust_key_params(nn::ParamStore& ps, int64_t dim, double tau1, double tau2);

struct AttentionMask {
    TensorT<uint8_t> allow;  // [T,Nq,S], 1 = may attend
};

// any (t,q) row with no allowed key becomes all-true
void apply_empty_fallback(AttentionMask& mask);

// Index map of the bilinear-resized prior: 0 silent, 1 uncertain, 2 sounding.
// Values that drift outside [0,1] (resizing can overshoot) are clamped and
// counted in *clamp_count.
IntTensor robust_index_mask(const Tensor& prior, int64_t h, int64_t w, double tau1, double tau2,
                            int64_t* clamp_count);

ad::Value robust_audio_keys(const ad::Value& fv_level, const Tensor& prior, const RobustKeyParams& p,
                            int64_t* clamp_count);

// First-layer mask: nearest-resized prior thresholded at 0.5 (same set for
// every query), or all-true without a prior. A frame whose resized prior is
// empty falls back to all-true.
AttentionMask init_attention_mask(const Tensor* prior, int64_t T, int64_t nq, int64_t h, int64_t w);

// Between-layer refresh: previous mask logits bilinear-resized to the level,
// allowed where the logit is >= 0 (sigmoid >= 0.5); empty rows fall back to
// all-true per query.
AttentionMask attention_mask_from_logits(const Tensor& mask_logits, int64_t h, int64_t w);

struct DecoderLayer {
    nn::MultiheadAttention cross, self_attn;
    nn::LayerNorm norm_cross, norm_self, norm_ffn;
    nn::Linear ffn1, ffn2;

    DecoderLayer() = default;
    DecoderLayer(nn::ParamStore& ps, const std::string& name, int64_t dim, int64_t heads, int64_t ffn_mult,
                 Rng& rng);

    // masked cross-attention with residual + norm; weights_out exposes the
    // softmax weights for the zero-at-masked-keys invariant
    ad::Value cross_attend(const ad::Value& q, const ad::Value& pos_q, const ad::Value& keys,
                           const ad::Value& values, const AttentionMask& allow, const std::string& context,
                           ad::Value* weights_out = nullptr) const;

    ad::Value forward(const ad::Value& q, const ad::Value& pos_q, const ad::Value& keys,
                      const ad::Value& values, const AttentionMask& allow, const std::string& context) const;
};

using MaskHeadCallback = std::function<PredictionSet(const ad::Value& queries)>;

struct DecodeResult {
    ad::Value q_fuse;
    std::vector<PredictionSet> aux;  // one prediction set per layer
    int64_t clamp_warnings = 0;
};

// Stages cycle the pyramid coarse to fine (f4 -> f3 -> f2). The callback
// turns current queries into stride-4 mask logits + class logits; the next
// layer's attention mask is thresholded from it, Mask2Former style.
class Decoder {
  public:
    Decoder() = default;
    Decoder(nn::ParamStore& ps, const DecoderConfig& cfg, Rng& rng);

    DecodeResult decode(const ad::Value& q_a, const MultiScaleFeatures& feats, const Tensor* prior,
                        const ad::Value& pos_q, const RobustKeyParams* robust, Mode mode,
                        const MaskHeadCallback& mask_head) const;

    const DecoderConfig& config() const { return cfg_; }
    std::vector<DecoderLayer> layers;

  private:
    DecoderConfig cfg_;
};

}  // namespace avseg
