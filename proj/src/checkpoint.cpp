#include "avseg/checkpoint.hpp"

#include <fstream>

#include "avseg/error.hpp"
#include "avseg/serialize.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace avseg {

void save_checkpoint(const fs::path& dir, const Model& model, const nn::AdamW& opt, int64_t step,
                     const ExperimentConfig& cfg) {
    fs::create_directories(dir);
    std::map<std::string, Tensor> all = model.params().snapshot();
    for (auto& [name, t] : opt.state_snapshot()) all.emplace(name, t);
    Tensor step_t({1});
    step_t[0] = static_cast<double>(opt.step_count);
    all.emplace("adam.step", step_t);
    write_archive(dir / "weights.bin", all);

    json meta;
    meta["config"] = config_to_json(cfg);
    meta["config_hash"] = config_hash(cfg);
    meta["step"] = step;
    meta["embed_dim"] = cfg.model.embed_dim;
    meta["stage_widths"] = cfg.model.stage_widths;
    std::ofstream os(dir / "meta.json");
    check_data(os.is_open(), "cannot write checkpoint meta in " + dir.string());
    os << meta.dump(2) << "\n";
}

Checkpoint load_checkpoint(const fs::path& dir) {
    std::ifstream is(dir / "meta.json");
    check_data(is.is_open(), "no meta.json in checkpoint " + dir.string());
    json meta;
    try {
        is >> meta;
    } catch (const json::exception& e) {
        throw DataError("checkpoint meta parse error: " + std::string(e.what()));
    }
    Checkpoint ck;
    ck.config = config_from_json(meta.at("config"));
    ck.step = meta.at("step").get<int64_t>();
    const uint64_t want_hash = meta.at("config_hash").get<uint64_t>();
    check_data(want_hash == config_hash(ck.config), "checkpoint config hash mismatch");

    std::map<std::string, Tensor> all = read_archive(dir / "weights.bin");
    for (auto& [name, t] : all) {
        if (name.rfind("adam.", 0) == 0)
            ck.opt_state.emplace(name, std::move(t));
        else
            ck.weights.emplace(name, std::move(t));
    }
    return ck;
}

std::unique_ptr<Model> model_from_checkpoint(const Checkpoint& ckpt, nn::AdamW* opt) {
    auto model = std::make_unique<Model>(ckpt.config.model, ckpt.config.train.seed);
    model->params().load(ckpt.weights);
    if (opt) {
        opt->lr = ckpt.config.train.lr;
        opt->weight_decay = ckpt.config.train.weight_decay;
        opt->load_state(ckpt.opt_state);
        auto it = ckpt.opt_state.find("adam.step");
        opt->step_count = it != ckpt.opt_state.end() ? static_cast<int64_t>(it->second[0]) : 0;
    }
    return model;
}

}  // namespace avseg
