#include "avseg/config.hpp"

#include <cstdlib>
#include <fstream>

#include "avseg/error.hpp"
#include "avseg/rng.hpp"

using json = nlohmann::json;

namespace avseg {

ExperimentConfig default_config() { return ExperimentConfig{}; }

namespace {

json generator_to_json(const GeneratorConfig& g) {
    return json{{"height", g.height},
                {"width", g.width},
                {"frames", g.frames},
                {"audio_dim", g.audio_dim},
                {"num_classes", g.num_classes},
                {"min_objects", g.min_objects},
                {"max_objects", g.max_objects},
                {"min_sounding", g.min_sounding},
                {"max_sounding", g.max_sounding},
                {"silent_fraction", g.silent_fraction},
                {"onset_probability", g.onset_probability},
                {"audio_noise", g.audio_noise},
                {"proto_seed", g.proto_seed},
                {"min_radius_frac", g.min_radius_frac},
                {"max_radius_frac", g.max_radius_frac}};
}

json model_to_json(const ModelConfig& m) {
    return json{{"embed_dim", m.embed_dim},
                {"audio_dim", m.audio_dim},
                {"num_queries", m.num_queries},
                {"num_classes", m.num_classes},
                {"heads", m.heads},
                {"num_stages", m.num_stages},
                {"layers_per_stage", m.layers_per_stage},
                {"ffn_mult", m.ffn_mult},
                {"stage_widths", m.stage_widths},
                {"tau1", m.tau1},
                {"tau2", m.tau2},
                {"adaptive_queries", m.adaptive_queries},
                {"robust_keys", m.robust_keys},
                {"mask_fusion", m.mask_fusion}};
}

template <class T>
void get_if(const json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

void generator_from_json(const json& j, GeneratorConfig& g) {
    get_if(j, "height", g.height);
    get_if(j, "width", g.width);
    get_if(j, "frames", g.frames);
    get_if(j, "audio_dim", g.audio_dim);
    get_if(j, "num_classes", g.num_classes);
    get_if(j, "min_objects", g.min_objects);
    get_if(j, "max_objects", g.max_objects);
    get_if(j, "min_sounding", g.min_sounding);
    get_if(j, "max_sounding", g.max_sounding);
    get_if(j, "silent_fraction", g.silent_fraction);
    get_if(j, "onset_probability", g.onset_probability);
    get_if(j, "audio_noise", g.audio_noise);
    get_if(j, "proto_seed", g.proto_seed);
    get_if(j, "min_radius_frac", g.min_radius_frac);
    get_if(j, "max_radius_frac", g.max_radius_frac);
}

void model_from_json(const json& j, ModelConfig& m) {
    get_if(j, "embed_dim", m.embed_dim);
    get_if(j, "audio_dim", m.audio_dim);
    get_if(j, "num_queries", m.num_queries);
    get_if(j, "num_classes", m.num_classes);
    get_if(j, "heads", m.heads);
    get_if(j, "num_stages", m.num_stages);
    get_if(j, "layers_per_stage", m.layers_per_stage);
    get_if(j, "ffn_mult", m.ffn_mult);
    get_if(j, "stage_widths", m.stage_widths);
    get_if(j, "tau1", m.tau1);
    get_if(j, "tau2", m.tau2);
    get_if(j, "adaptive_queries", m.adaptive_queries);
    get_if(j, "robust_keys", m.robust_keys);
    get_if(j, "mask_fusion", m.mask_fusion);
}

}  // namespace

json config_to_json(const ExperimentConfig& cfg) {
    json j;
    j["data"] = generator_to_json(cfg.data);
    j["data"]["train_clips"] = cfg.train_clips;
    j["data"]["val_clips"] = cfg.val_clips;
    j["data"]["test_clips"] = cfg.test_clips;
    j["model"] = model_to_json(cfg.model);
    j["train"] = json{{"task", cfg.train.task},
                      {"strategy", cfg.train.strategy},
                      {"steps", cfg.train.steps},
                      {"lr", cfg.train.lr},
                      {"weight_decay", cfg.train.weight_decay},
                      {"cosine_decay", cfg.train.cosine_decay},
                      {"seed", cfg.train.seed},
                      {"loss",
                       json{{"lambda_cls", cfg.train.loss.lambda_cls},
                            {"lambda_mask", cfg.train.loss.lambda_mask},
                            {"lambda_dice", cfg.train.loss.lambda_dice},
                            {"lambda_aux", cfg.train.loss.lambda_aux},
                            {"null_weight", cfg.train.loss.null_weight}}}};
    j["eval"] = json{{"split", cfg.eval.split},
                     {"beta2", cfg.eval.beta2},
                     {"stones_source", cfg.eval.stones_source},
                     {"corrupt_iou", cfg.eval.corrupt_iou},
                     {"corrupt_seed", cfg.eval.corrupt_seed},
                     {"stage1_checkpoint", cfg.eval.stage1_checkpoint}};
    return j;
}

ExperimentConfig config_from_json(const json& j, const ExperimentConfig& base) {
    ExperimentConfig cfg = base;
    if (j.contains("data")) {
        const json& d = j.at("data");
        generator_from_json(d, cfg.data);
        get_if(d, "train_clips", cfg.train_clips);
        get_if(d, "val_clips", cfg.val_clips);
        get_if(d, "test_clips", cfg.test_clips);
    }
    if (j.contains("model")) model_from_json(j.at("model"), cfg.model);
    if (j.contains("train")) {
        const json& t = j.at("train");
        get_if(t, "task", cfg.train.task);
        get_if(t, "strategy", cfg.train.strategy);
        get_if(t, "steps", cfg.train.steps);
        get_if(t, "lr", cfg.train.lr);
        get_if(t, "weight_decay", cfg.train.weight_decay);
        get_if(t, "cosine_decay", cfg.train.cosine_decay);
        get_if(t, "seed", cfg.train.seed);
        if (t.contains("loss")) {
            const json& l = t.at("loss");
            get_if(l, "lambda_cls", cfg.train.loss.lambda_cls);
            get_if(l, "lambda_mask", cfg.train.loss.lambda_mask);
            get_if(l, "lambda_dice", cfg.train.loss.lambda_dice);
            get_if(l, "lambda_aux", cfg.train.loss.lambda_aux);
            get_if(l, "null_weight", cfg.train.loss.null_weight);
        }
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        get_if(e, "split", cfg.eval.split);
        get_if(e, "beta2", cfg.eval.beta2);
        get_if(e, "stones_source", cfg.eval.stones_source);
        get_if(e, "corrupt_iou", cfg.eval.corrupt_iou);
        get_if(e, "corrupt_seed", cfg.eval.corrupt_seed);
        get_if(e, "stage1_checkpoint", cfg.eval.stage1_checkpoint);
    }
    check_config(cfg.train.task == "avs" || cfg.train.task == "avss", "train.task must be avs or avss");
    check_config(cfg.train.strategy == "e2e" || cfg.train.strategy == "stones",
                 "train.strategy must be e2e or stones");
    return cfg;
}

ExperimentConfig config_from_json(const json& j) { return config_from_json(j, default_config()); }

ExperimentConfig load_config_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    check_config(is.is_open(), "cannot open config file: " + path.string());
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config parse error in " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

void apply_preset(ExperimentConfig& cfg, const std::string& preset) {
    if (preset == "s4") {
        cfg.data.min_objects = 1;
        cfg.data.max_objects = 3;
        cfg.data.min_sounding = 1;
        cfg.data.max_sounding = 1;
        cfg.train.task = "avs";
    } else if (preset == "ms3") {
        cfg.data.min_objects = 2;
        cfg.data.max_objects = 4;
        cfg.data.min_sounding = 2;
        cfg.data.max_sounding = 0;
        cfg.train.task = "avs";
    } else if (preset == "avss") {
        cfg.data.min_objects = 2;
        cfg.data.max_objects = 4;
        cfg.data.min_sounding = 1;
        cfg.data.max_sounding = 0;
        cfg.train.task = "avss";
    } else {
        throw ConfigError("unknown preset: " + preset + " (expected s4|ms3|avss)");
    }
}

uint64_t config_hash(const ExperimentConfig& cfg) { return hash_str(config_to_json(cfg).dump()); }

Mode mode_of(const TrainConfig& t) {
    if (t.task == "avs") return Mode::AVS;
    return t.strategy == "stones" ? Mode::AVSS_STONES : Mode::AVSS_E2E;
}

}  // namespace avseg
