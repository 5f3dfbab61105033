#include "avseg/decoder.hpp"

#include "avseg/error.hpp"
#include "avseg/resize.hpp"

namespace avseg {

std::string mode_name(Mode m) {
    switch (m) {
        case Mode::AVS: return "avs";
        case Mode::AVSS_E2E: return "avss_e2e";
        default: return "avss_stones";
    }
}

RobustKeyParams make_robust_key_params(nn::ParamStore& ps, int64_t dim, double tau1, double tau2) {
    check_config(0.0 <= tau1 && tau1 < tau2 && tau2 <= 1.0, "need 0 <= tau1 < tau2 <= 1");
    RobustKeyParams p;
    p.e_silent = ps.add("robust.e_silent", Tensor::zeros({dim}));
    p.e_uncertain = ps.add("robust.e_uncertain", Tensor::zeros({dim}));
    p.e_sounding = ps.add("robust.e_sounding", Tensor::zeros({dim}));
    p.tau1 = tau1;
    p.tau2 = tau2;
    return p;
}

IntTensor robust_index_mask(const Tensor& prior, int64_t h, int64_t w, double tau1, double tau2,
                            int64_t* clamp_count) {
    check_shape(prior.rank() == 3, "prior must be [T,H,W]");
    check_config(tau1 < tau2, "need tau1 < tau2");
    Tensor resized = resize_bilinear(prior, h, w);
    IntTensor idx(resized.shape());
    int64_t clamped = 0;
    for (int64_t i = 0; i < resized.numel(); ++i) {
        double v = resized[i];
        if (v < 0.0 || v > 1.0) {
            v = std::clamp(v, 0.0, 1.0);
            ++clamped;
        }
        idx[i] = v < tau1 ? 0 : (v <= tau2 ? 1 : 2);
    }
    if (clamp_count) *clamp_count += clamped;
    return idx;
}

ad::Value robust_audio_keys(const ad::Value& fv_level, const Tensor& prior, const RobustKeyParams& p,
                            int64_t* clamp_count) {
    const Shape& s = fv_level.shape();
    check_shape(s.size() == 4, "feature level must be [T,D,h,w]");
    const int64_t T = s[0], D = s[1], h = s[2], w = s[3];
    IntTensor idx = robust_index_mask(prior, h, w, p.tau1, p.tau2, clamp_count);
    check_shape(idx.dim(0) == T, "prior frame count mismatch");

    Tensor ind[3] = {Tensor({T, 1, h, w}), Tensor({T, 1, h, w}), Tensor({T, 1, h, w})};
    for (int64_t i = 0; i < idx.numel(); ++i) ind[idx[i]][i] = 1.0;

    ad::Value out = fv_level;
    const ad::Value* embeds[3] = {&p.e_silent, &p.e_uncertain, &p.e_sounding};
    for (int k = 0; k < 3; ++k)
        out = ad::add(out, ad::mul(ad::constant(std::move(ind[k])), ad::reshape(*embeds[k], {1, D, 1, 1})));
    return out;
}

namespace {

void all_true_row(TensorT<uint8_t>& allow, int64_t row, int64_t s) {
    for (int64_t i = 0; i < s; ++i) allow[row * s + i] = 1;
}

}  // namespace

void apply_empty_fallback(AttentionMask& mask) {
    TensorT<uint8_t>& allow = mask.allow;
    const int64_t s = allow.dim(2);
    const int64_t rows = allow.numel() / s;
    for (int64_t r = 0; r < rows; ++r) {
        bool any = false;
        for (int64_t i = 0; i < s && !any; ++i) any = allow[r * s + i] != 0;
        if (!any) all_true_row(allow, r, s);
    }
}

AttentionMask init_attention_mask(const Tensor* prior, int64_t T, int64_t nq, int64_t h, int64_t w) {
    AttentionMask m;
    m.allow = TensorT<uint8_t>({T, nq, h * w});
    if (!prior) {
        m.allow.fill(1);
        return m;
    }
    check_shape(prior->rank() == 3 && prior->dim(0) == T, "prior must be [T,H,W]");
    Tensor resized = resize_nearest(*prior, h, w);
    for (int64_t t = 0; t < T; ++t)
        for (int64_t q = 0; q < nq; ++q)
            for (int64_t p = 0; p < h * w; ++p)
                m.allow[(t * nq + q) * h * w + p] = resized[t * h * w + p] >= 0.5 ? 1 : 0;
    apply_empty_fallback(m);
    return m;
}

AttentionMask attention_mask_from_logits(const Tensor& mask_logits, int64_t h, int64_t w) {
    check_shape(mask_logits.rank() == 4, "mask logits must be [T,Nq,h4,w4]");
    const int64_t T = mask_logits.dim(0), nq = mask_logits.dim(1);
    Tensor resized = resize_bilinear(mask_logits, h, w);
    AttentionMask m;
    m.allow = TensorT<uint8_t>({T, nq, h * w});
    for (int64_t i = 0; i < resized.numel(); ++i) m.allow[i] = resized[i] >= 0.0 ? 1 : 0;
    apply_empty_fallback(m);
    return m;
}

DecoderLayer::DecoderLayer(nn::ParamStore& ps, const std::string& name, int64_t dim, int64_t heads,
                           int64_t ffn_mult, Rng& rng) {
    cross = nn::MultiheadAttention(ps, name + ".cross", dim, heads, rng);
    self_attn = nn::MultiheadAttention(ps, name + ".self", dim, heads, rng);
    norm_cross = nn::LayerNorm(ps, name + ".norm_cross", dim);
    norm_self = nn::LayerNorm(ps, name + ".norm_self", dim);
    norm_ffn = nn::LayerNorm(ps, name + ".norm_ffn", dim);
    ffn1 = nn::Linear(ps, name + ".ffn1", dim, dim * ffn_mult, rng);
    ffn2 = nn::Linear(ps, name + ".ffn2", dim * ffn_mult, dim, rng);
}

ad::Value DecoderLayer::cross_attend(const ad::Value& q, const ad::Value& pos_q, const ad::Value& keys,
                                     const ad::Value& values, const AttentionMask& allow,
                                     const std::string& context, ad::Value* weights_out) const {
    const int64_t nq = q.shape()[1], D = q.shape()[2];
    AttentionMask normalized = allow;  // empty rows fall back to fully-unmasked
    apply_empty_fallback(normalized);
    ad::Value qp = ad::add(q, ad::reshape(pos_q, {1, nq, D}));
    auto att = cross.forward(qp, keys, values, &normalized.allow, context);
    if (weights_out) *weights_out = att.weights;
    return norm_cross.forward(ad::add(q, att.out));
}

ad::Value DecoderLayer::forward(const ad::Value& q_in, const ad::Value& pos_q, const ad::Value& keys,
                                const ad::Value& values, const AttentionMask& allow,
                                const std::string& context) const {
    const int64_t nq = q_in.shape()[1], D = q_in.shape()[2];
    ad::Value q = cross_attend(q_in, pos_q, keys, values, allow, context);

    ad::Value qp = ad::add(q, ad::reshape(pos_q, {1, nq, D}));
    auto self_out = self_attn.forward(qp, qp, q, nullptr, context + ".self");
    q = norm_self.forward(ad::add(q, self_out.out));

    ad::Value ffn = ffn2.forward(ad::relu(ffn1.forward(q)));
    return norm_ffn.forward(ad::add(q, ffn));
}

Decoder::Decoder(nn::ParamStore& ps, const DecoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    check_config(cfg.layers_per_stage == 3, "layers_per_stage must equal the 3 decoder levels");
    check_config(cfg.num_stages >= 0, "num_stages must be nonnegative");
    const int64_t n = cfg.num_stages * cfg.layers_per_stage;
    for (int64_t i = 0; i < n; ++i)
        layers.emplace_back(ps, "dec.l" + std::to_string(i), cfg.embed_dim, cfg.heads, cfg.ffn_mult, rng);
}

DecodeResult Decoder::decode(const ad::Value& q_a, const MultiScaleFeatures& feats, const Tensor* prior,
                             const ad::Value& pos_q, const RobustKeyParams* robust, Mode mode,
                             const MaskHeadCallback& mask_head) const {
    if (mode == Mode::AVSS_STONES)
        check_config(prior != nullptr, "stones mode requires a prior mask");
    else
        check_config(prior == nullptr, "prior mask is only valid in stones mode");

    DecodeResult res;
    if (layers.empty()) {
        res.q_fuse = q_a;
        return res;
    }

    const int64_t T = q_a.shape()[0], nq = q_a.shape()[1], D = q_a.shape()[2];
    ad::Value q = q_a;
    int64_t layer_idx = 0;
    for (int64_t stage = 0; stage < cfg_.num_stages; ++stage) {
        for (int64_t li = 0; li < cfg_.layers_per_stage; ++li, ++layer_idx) {
            const int level = static_cast<int>(4 - li);  // f4 -> f3 -> f2
            const ad::Value& fv = feats.level(level);
            const int64_t h = fv.shape()[2], w = fv.shape()[3];

            ad::Value key_src = fv;
            if (mode == Mode::AVSS_STONES && robust)
                key_src = robust_audio_keys(fv, *prior, *robust, &res.clamp_warnings);

            ad::Value keys = ad::add(ad::spatial_to_tokens(key_src),
                                     ad::constant(nn::sinusoidal_position_encoding_2d(h, w, D)
                                                      .reshaped({1, h * w, D})));
            ad::Value values = ad::spatial_to_tokens(fv);

            AttentionMask allow =
                layer_idx == 0
                    ? init_attention_mask(mode == Mode::AVSS_STONES ? prior : nullptr, T, nq, h, w)
                    : attention_mask_from_logits(res.aux.back().mask_logits.val(), h, w);

            q = layers[static_cast<size_t>(layer_idx)].forward(q, pos_q, keys, values, allow,
                                                               "decoder layer " + std::to_string(layer_idx));
            res.aux.push_back(mask_head(q));
        }
    }
    res.q_fuse = q;
    return res;
}

}  // namespace avseg
