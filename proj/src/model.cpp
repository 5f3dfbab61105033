#include "avseg/model.hpp"

#include "avseg/error.hpp"

namespace avseg {

Model::Model(const ModelConfig& cfg, uint64_t init_seed) : cfg_(cfg) {
    Rng rng(hash_mix(init_seed, 0x4D0DE1ULL));
    EncoderConfig ec{cfg.embed_dim, cfg.stage_widths};
    encoder = VisualEncoder(params_, ec, rng);
    audio_proj = AudioProjector(params_, cfg.audio_dim, cfg.embed_dim, rng);
    bank = QueryBank(params_, cfg.num_queries, cfg.embed_dim, rng, cfg.adaptive_queries);
    DecoderConfig dc{cfg.num_stages, cfg.layers_per_stage, cfg.heads, cfg.embed_dim, cfg.ffn_mult};
    decoder = Decoder(params_, dc, rng);
    mask_head = MaskHead(params_, cfg.embed_dim, rng);
    class_head = ClassHead(params_, cfg.embed_dim, cfg.num_classes, rng);
    robust = make_robust_key_params(params_, cfg.embed_dim, cfg.tau1, cfg.tau2);
}

ModelOutput Model::forward(const SceneSample& sample, Mode mode, const Tensor* prior) {
    return forward(sample.frames, sample.audio, mode, prior);
}

ModelOutput Model::forward(const Tensor& frames, const Tensor& audio, Mode mode, const Tensor* prior) {
    check_shape(frames.rank() == 4 && audio.rank() == 2 && frames.dim(0) == audio.dim(0),
                "forward expects frames [T,3,H,W] and audio [T,D_a]");
    MultiScaleFeatures feats = encoder.forward(ad::constant(frames));
    ad::Value fa = audio_proj.forward(ad::constant(audio));
    ad::Value q_a = cfg_.adaptive_queries ? generate_queries(fa, bank) : repeat_queries(fa, bank);

    const bool fuse = mode == Mode::AVSS_STONES && cfg_.mask_fusion;
    MaskHeadCallback head = [&](const ad::Value& queries) {
        PredictionSet p;
        p.mask_logits = mask_head.predict(queries, feats.f1, fuse ? prior : nullptr);
        p.class_logits = class_head.predict(queries);
        return p;
    };

    DecodeResult dec = decoder.decode(q_a, feats, mode == Mode::AVSS_STONES ? prior : nullptr, bank.proto_pos,
                                      cfg_.robust_keys ? &robust : nullptr, mode, head);

    ModelOutput out;
    out.q_fuse = dec.q_fuse;
    out.aux = dec.aux;
    out.clamp_warnings = dec.clamp_warnings;
    out.final = dec.aux.empty() ? head(dec.q_fuse) : dec.aux.back();
    return out;
}

}  // namespace avseg
