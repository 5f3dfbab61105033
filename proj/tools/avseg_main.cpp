// Command-line driver: dataset generation, training, evaluation, the
// prior-quality sensitivity experiment, ablations, and report rendering.
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"

#include "avseg/checkpoint.hpp"
#include "avseg/config.hpp"
#include "avseg/error.hpp"
#include "avseg/metrics.hpp"
#include "avseg/pipeline.hpp"
#include "avseg/report.hpp"
#include "avseg/serialize.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace avseg;

namespace {

struct CommonOpts {
    std::string config_path;
    std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonOpts& c) {
    cmd->add_option("--config", c.config_path, "JSON config file (default: $AVSEG_CONFIG if set)");
    cmd->add_option("--seed", c.seed, "override train.seed");
}

ExperimentConfig resolve_config(const CommonOpts& c) {
    ExperimentConfig cfg;
    std::string path = c.config_path;
    if (path.empty()) {
        if (const char* env = std::getenv("AVSEG_CONFIG")) path = env;
    }
    if (!path.empty()) cfg = load_config_file(path);
    if (c.seed) cfg.train.seed = *c.seed;
    return cfg;
}

Dataset load_split(const fs::path& root, const std::string& split) {
    return load_dataset(root / split);
}

int cmd_gen_data(const std::string& out, int64_t clips, const std::string& preset, bool force,
                 std::optional<int64_t> val_clips, std::optional<int64_t> test_clips,
                 const CommonOpts& common) {
    ExperimentConfig cfg = resolve_config(common);
    if (!preset.empty()) apply_preset(cfg, preset);
    if (clips > 0) cfg.train_clips = clips;
    if (val_clips) cfg.val_clips = *val_clips;
    if (test_clips) cfg.test_clips = *test_clips;

    const fs::path root(out);
    if (fs::exists(root) && !fs::is_empty(root) && !force)
        throw ConfigError("output directory exists and is not empty (use --force): " + out);
    const uint64_t seed = cfg.train.seed;
    write_dataset(generate_dataset(cfg.data, cfg.train_clips, seed, "train"), root / "train");
    write_dataset(generate_dataset(cfg.data, cfg.val_clips, seed, "val"), root / "val");
    write_dataset(generate_dataset(cfg.data, cfg.test_clips, seed, "test"), root / "test");
    std::cout << "wrote " << cfg.train_clips << "/" << cfg.val_clips << "/" << cfg.test_clips
              << " train/val/test clips to " << out << "\n";
    return 0;
}

int cmd_train(const std::string& out, const std::string& data, std::optional<int64_t> steps, bool verbose,
              const CommonOpts& common) {
    ExperimentConfig cfg = resolve_config(common);
    if (steps) cfg.train.steps = *steps;

    Dataset train_set = data.empty() ? generate_dataset(cfg.data, cfg.train_clips, cfg.train.seed, "train")
                                     : load_split(data, "train");
    std::ostream* log = verbose ? &std::cout : nullptr;
    TrainRun run;
    const Mode mode = mode_of(cfg.train);
    if (mode == Mode::AVS)
        run = train_stage1(cfg, train_set, log);
    else if (mode == Mode::AVSS_STONES)
        run = train_stage2(cfg, train_set, log);
    else
        run = train_end2end(cfg, train_set, log);
    save_checkpoint(out, *run.model, run.opt, cfg.train.steps, cfg);
    std::cout << "trained " << mode_name(mode) << " for " << cfg.train.steps << " steps, final loss "
              << run.losses.back() << ", checkpoint at " << out << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data, const std::string& split,
             const std::string& json_out, const std::string& stones_source, std::optional<double> corrupt_iou,
             const std::string& stage1_path, const std::string& dump_dir, const CommonOpts& common) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    ExperimentConfig cfg = ckpt.config;
    if (!common.config_path.empty()) cfg = load_config_file(common.config_path);
    if (common.seed) cfg.train.seed = *common.seed;
    if (!split.empty()) cfg.eval.split = split;
    if (!stones_source.empty()) cfg.eval.stones_source = stones_source;
    if (corrupt_iou) cfg.eval.corrupt_iou = *corrupt_iou;
    if (!stage1_path.empty()) cfg.eval.stage1_checkpoint = stage1_path;

    auto model = model_from_checkpoint(ckpt);
    std::unique_ptr<Model> stage1;
    if (cfg.eval.stones_source == "stage1" && mode_of(ckpt.config.train) == Mode::AVSS_STONES) {
        check_config(!cfg.eval.stage1_checkpoint.empty(), "stones_source=stage1 needs --stage1-ckpt");
        Checkpoint s1 = load_checkpoint(cfg.eval.stage1_checkpoint);
        stage1 = model_from_checkpoint(s1);
    }

    Dataset eval_set = load_split(data, cfg.eval.split);
    PredictionSink sink;
    if (!dump_dir.empty()) {
        fs::create_directories(dump_dir);
        sink = [&](const std::string& clip, const IntTensor& labels) {
            fs::create_directories(fs::path(dump_dir) / clip);
            write_tensor_file(fs::path(dump_dir) / clip / "pred.bin", labels, Dtype::I32);
        };
    }
    EvalReport rep =
        evaluate_model(*model, eval_set, mode_of(ckpt.config.train), cfg.eval, stage1.get(), sink);
    const std::string payload = report_to_json(rep, eval_set.manifest.class_names);
    if (!json_out.empty()) {
        std::ofstream os(json_out);
        check_data(os.is_open(), "cannot write " + json_out);
        os << payload << "\n";
    }
    std::cout << payload << "\n";
    return 0;
}

int cmd_sensitivity(const std::string& ckpt_path, const std::string& data, const std::string& levels_arg,
                    const std::string& stage1_path, const std::string& json_out, const CommonOpts& common) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    ExperimentConfig cfg = ckpt.config;
    if (common.seed) cfg.train.seed = *common.seed;
    auto model = model_from_checkpoint(ckpt);
    std::unique_ptr<Model> stage1;
    if (!stage1_path.empty()) {
        Checkpoint s1 = load_checkpoint(stage1_path);
        stage1 = model_from_checkpoint(s1);
    }
    std::vector<std::string> levels;
    std::string cur;
    for (char ch : levels_arg + ",") {
        if (ch == ',') {
            if (!cur.empty()) levels.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    Dataset eval_set = load_split(data, cfg.eval.split);
    SensitivityTable table = run_sensitivity(cfg, *model, eval_set, levels, stage1.get(), &std::cout);
    const json payload = sensitivity_to_json(table, cfg);
    if (!json_out.empty()) {
        std::ofstream os(json_out);
        check_data(os.is_open(), "cannot write " + json_out);
        os << payload.dump(2) << "\n";
    }
    std::cout << payload.dump(2) << "\n";
    return 0;
}

int cmd_ablation(const std::string& data, const std::string& json_out, bool query_only,
                 std::optional<int64_t> steps, const CommonOpts& common) {
    ExperimentConfig cfg = resolve_config(common);
    if (steps) cfg.train.steps = *steps;
    Dataset train_set = data.empty() ? generate_dataset(cfg.data, cfg.train_clips, cfg.train.seed, "train")
                                     : load_split(data, "train");
    Dataset eval_set = data.empty() ? generate_dataset(cfg.data, cfg.test_clips, cfg.train.seed, "test")
                                    : load_split(data, cfg.eval.split);
    AblationReport rep = run_ablation(cfg, train_set, eval_set, query_only, &std::cout);
    const json payload = ablation_to_json(rep, cfg);
    if (!json_out.empty()) {
        std::ofstream os(json_out);
        check_data(os.is_open(), "cannot write " + json_out);
        os << payload.dump(2) << "\n";
    }
    std::cout << payload.dump(2) << "\n";
    return 0;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out) {
    std::vector<SensitivityRow> rows;
    for (const auto& path : inputs) {
        std::ifstream is(path);
        check_config(is.is_open(), "cannot open report input: " + path);
        json j;
        try {
            is >> j;
        } catch (const json::exception& e) {
            throw ConfigError("malformed report input " + path + ": " + e.what());
        }
        for (auto& r : report_rows_from_json(j)) rows.push_back(r);
    }
    write_report(rows, out);
    std::cout << "report written to " << out << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale audio-visual segmentation trainer"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset (train/val/test)");
    CommonOpts gen_common;
    std::string gen_out, gen_preset;
    int64_t gen_clips = 0;
    bool gen_force = false;
    std::optional<int64_t> gen_val, gen_test;
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--clips", gen_clips, "train clips (default from config)");
    gen->add_option("--preset", gen_preset, "s4 | ms3 | avss");
    gen->add_option("--val-clips", gen_val, "validation clips");
    gen->add_option("--test-clips", gen_test, "test clips");
    gen->add_flag("--force", gen_force, "overwrite an existing non-empty directory");
    add_common(gen, gen_common);

    auto* train = app.add_subcommand("train", "train a model per the config's task/strategy");
    CommonOpts train_common;
    std::string train_out, train_data;
    std::optional<int64_t> train_steps;
    bool train_verbose = false;
    train->add_option("--out", train_out, "checkpoint output directory")->required();
    train->add_option("--data", train_data, "dataset root (generated on the fly when omitted)");
    train->add_option("--steps", train_steps, "override train.steps");
    train->add_flag("--verbose", train_verbose, "log per-step losses");
    add_common(train, train_common);

    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint, emit a JSON report");
    CommonOpts eval_common;
    std::string ev_ckpt, ev_data, ev_split, ev_json, ev_source, ev_stage1, ev_dump;
    std::optional<double> ev_iou;
    ev->add_option("--ckpt", ev_ckpt, "checkpoint directory")->required();
    ev->add_option("--data", ev_data, "dataset root")->required();
    ev->add_option("--split", ev_split, "train | val | test");
    ev->add_option("--json", ev_json, "write the report JSON here");
    ev->add_option("--stones-source", ev_source, "oracle | corrupted | stage1");
    ev->add_option("--corrupt-iou", ev_iou, "target IoU for corrupted priors");
    ev->add_option("--stage1-ckpt", ev_stage1, "stage-1 checkpoint for stones_source=stage1");
    ev->add_option("--dump-predictions", ev_dump, "write per-clip label maps here");
    add_common(ev, eval_common);

    auto* sen = app.add_subcommand("sensitivity", "evaluate one stage-2 checkpoint across prior qualities");
    CommonOpts sen_common;
    std::string sen_ckpt, sen_data, sen_levels = "oracle,corrupted:0.85,corrupted:0.4", sen_stage1, sen_json;
    sen->add_option("--ckpt", sen_ckpt, "stage-2 checkpoint")->required();
    sen->add_option("--data", sen_data, "dataset root")->required();
    sen->add_option("--levels", sen_levels, "comma list: oracle | corrupted:<iou> | stage1");
    sen->add_option("--stage1-ckpt", sen_stage1, "stage-1 checkpoint for the stage1 level");
    sen->add_option("--json", sen_json, "write the table JSON here");
    add_common(sen, sen_common);

    auto* abl = app.add_subcommand("ablation", "train and compare ablated variants");
    CommonOpts abl_common;
    std::string abl_data, abl_json;
    bool abl_query_only = false;
    std::optional<int64_t> abl_steps;
    abl->add_option("--data", abl_data, "dataset root (generated when omitted)");
    abl->add_option("--json", abl_json, "write the report JSON here");
    abl->add_option("--steps", abl_steps, "per-variant training budget");
    abl->add_flag("--query-only", abl_query_only, "only the adaptive-vs-repeat comparison");
    add_common(abl, abl_common);

    auto* rep = app.add_subcommand("report", "render sensitivity JSONs into a table and plot");
    std::vector<std::string> rep_inputs;
    std::string rep_out;
    rep->add_option("--inputs", rep_inputs, "sensitivity JSON files")->required()->expected(-1);
    rep->add_option("--out", rep_out, "output directory")->required();

    auto* conf = app.add_subcommand("config", "configuration utilities");
    auto* conf_dump = conf->add_subcommand("dump", "print the full default config as JSON");
    CommonOpts conf_common;
    add_common(conf_dump, conf_common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (gen->parsed())
            return cmd_gen_data(gen_out, gen_clips, gen_preset, gen_force, gen_val, gen_test, gen_common);
        if (train->parsed()) return cmd_train(train_out, train_data, train_steps, train_verbose, train_common);
        if (ev->parsed())
            return cmd_eval(ev_ckpt, ev_data, ev_split, ev_json, ev_source, ev_iou, ev_stage1, ev_dump,
                            eval_common);
        if (sen->parsed()) return cmd_sensitivity(sen_ckpt, sen_data, sen_levels, sen_stage1, sen_json, sen_common);
        if (abl->parsed()) return cmd_ablation(abl_data, abl_json, abl_query_only, abl_steps, abl_common);
        if (rep->parsed()) return cmd_report(rep_inputs, rep_out);
        if (conf->parsed()) {
            std::cout << config_to_json(resolve_config(conf_common)).dump(2) << "\n";
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
