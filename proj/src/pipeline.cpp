#include "avseg/pipeline.hpp"

#include <cmath>

#include "avseg/error.hpp"
#include "avseg/inference.hpp"
#include "avseg/rng.hpp"

using json = nlohmann::json;

namespace avseg {

namespace {

constexpr uint64_t kDataStream = 0xDA7AULL;

int64_t pick_clip(uint64_t seed, int64_t step, int64_t n) {
    return static_cast<int64_t>(hash_mix(hash_mix(seed, kDataStream), static_cast<uint64_t>(step)) %
                                static_cast<uint64_t>(n));
}

ModelConfig model_config_for(const ExperimentConfig& cfg, Mode mode) {
    ModelConfig mc = cfg.model;
    mc.audio_dim = cfg.data.audio_dim;
    mc.num_classes = mode == Mode::AVS ? 1 : cfg.data.num_classes;
    return mc;
}

}  // namespace

Tensor oracle_prior(const SceneSample& sample) {
    Tensor prior(sample.binary_mask.shape());
    for (int64_t i = 0; i < prior.numel(); ++i) prior[i] = static_cast<double>(sample.binary_mask[i]);
    return prior;
}

IntTensor ground_truth_labels(const SceneSample& sample, bool semantic_task) {
    IntTensor gt(sample.binary_mask.shape());
    for (int64_t i = 0; i < gt.numel(); ++i)
        gt[i] = semantic_task ? (sample.binary_mask[i] ? sample.semantic_mask[i] : 0)
                              : (sample.binary_mask[i] ? 1 : 0);
    return gt;
}

double train_step(Model& model, nn::AdamW& opt, const SceneSample& sample, Mode mode,
                  const ExperimentConfig& cfg, int64_t step) {
    const bool semantic_task = mode != Mode::AVS;
    const int64_t h4 = cfg.data.height / 4, w4 = cfg.data.width / 4;
    TargetSet targets = build_targets(sample.semantic_mask, sample.binary_mask, semantic_task, h4, w4);

    Tensor prior;
    const Tensor* prior_ptr = nullptr;
    if (mode == Mode::AVSS_STONES) {  // ground-truth prior during training
        prior = oracle_prior(sample);
        prior_ptr = &prior;
    }

    ModelOutput out = model.forward(sample, mode, prior_ptr);

    const LossWeights& w = cfg.train.loss;
    auto assignment = hungarian_match(out.final, targets, w);
    ad::Value main = loss_main(out.final, targets, assignment, w);
    std::vector<ad::Value> aux;
    aux.reserve(out.aux.size());
    for (const auto& layer_preds : out.aux) {
        auto layer_assignment = hungarian_match(layer_preds, targets, w);
        aux.push_back(loss_main(layer_preds, targets, layer_assignment, w));
    }
    ad::Value total = loss_total(main, aux, w);
    const double loss = total.val()[0];
    if (!std::isfinite(loss)) throw NumericalError("non-finite training loss at step " + std::to_string(step));

    model.params().zero_grads();
    ad::backward(total);
    const double lr_now =
        cfg.train.cosine_decay ? nn::cosine_lr(cfg.train.lr, step, cfg.train.steps) : cfg.train.lr;
    opt.step(model.params(), lr_now);
    return loss;
}

std::vector<double> train_model(Model& model, nn::AdamW& opt, const Dataset& train, const ExperimentConfig& cfg,
                                int64_t steps, int64_t start_step, std::ostream* log) {
    check_config(!train.samples.empty(), "training set is empty");
    std::vector<double> losses;
    losses.reserve(static_cast<size_t>(steps));
    const Mode mode = mode_of(cfg.train);
    for (int64_t step = start_step; step < start_step + steps; ++step) {
        const int64_t idx = pick_clip(cfg.train.seed, step, static_cast<int64_t>(train.samples.size()));
        const double loss = train_step(model, opt, train.samples[static_cast<size_t>(idx)], mode, cfg, step);
        losses.push_back(loss);
        if (log) (*log) << "step " << step << " loss " << loss << "\n";
    }
    return losses;
}

namespace {

TrainRun run_training(ExperimentConfig cfg, Mode mode, const Dataset& train, std::ostream* log) {
    TrainRun run;
    run.model = std::make_shared<Model>(model_config_for(cfg, mode), cfg.train.seed);
    run.opt.lr = cfg.train.lr;
    run.opt.weight_decay = cfg.train.weight_decay;
    run.losses = train_model(*run.model, run.opt, train, cfg, cfg.train.steps, 0, log);
    return run;
}

}  // namespace

TrainRun train_stage1(const ExperimentConfig& cfg, const Dataset& train, std::ostream* log) {
    ExperimentConfig c = cfg;
    c.train.task = "avs";
    return run_training(c, Mode::AVS, train, log);
}

TrainRun train_stage2(const ExperimentConfig& cfg, const Dataset& train, std::ostream* log) {
    ExperimentConfig c = cfg;
    c.train.task = "avss";
    c.train.strategy = "stones";
    return run_training(c, Mode::AVSS_STONES, train, log);
}

TrainRun train_end2end(const ExperimentConfig& cfg, const Dataset& train, std::ostream* log) {
    ExperimentConfig c = cfg;
    c.train.task = "avss";
    c.train.strategy = "e2e";
    return run_training(c, Mode::AVSS_E2E, train, log);
}

Tensor eval_prior(const SceneSample& sample, const EvalConfig& eval, Model* stage1) {
    if (eval.stones_source == "oracle") return oracle_prior(sample);
    if (eval.stones_source == "corrupted")
        return corrupt_mask(sample.binary_mask, eval.corrupt_iou,
                            hash_mix(eval.corrupt_seed, hash_str(sample.clip_id)));
    if (eval.stones_source == "stage1") {
        check_config(stage1 != nullptr, "stones_source=stage1 needs a stage-1 model");
        ModelOutput out = stage1->forward(sample, Mode::AVS, nullptr);
        return binarize_avs(out.final.mask_logits.val(), out.final.class_logits.val(),
                            sample.binary_mask.dim(1), sample.binary_mask.dim(2));
    }
    throw ConfigError("unknown stones_source: " + eval.stones_source);
}

EvalReport evaluate_model(Model& model, const Dataset& data, Mode mode, const EvalConfig& eval, Model* stage1,
                          const PredictionSink& sink) {
    const bool semantic_task = mode != Mode::AVS;
    MetricCounts counts;
    counts.init(semantic_task ? data.manifest.num_classes : 1);
    for (const auto& sample : data.samples) {
        Tensor prior;
        const Tensor* prior_ptr = nullptr;
        if (mode == Mode::AVSS_STONES) {
            prior = eval_prior(sample, eval, stage1);
            prior_ptr = &prior;
        }
        ModelOutput out = model.forward(sample, mode, prior_ptr);
        IntTensor pred = finalize(postprocess(out.final.mask_logits.val(), out.final.class_logits.val()),
                                  data.manifest.height, data.manifest.width);
        counts.accumulate(pred, ground_truth_labels(sample, semantic_task));
        if (sink) sink(sample.clip_id, pred);
    }
    return evaluate_counts(counts, !semantic_task, eval.beta2);
}

SensitivityTable run_sensitivity(const ExperimentConfig& cfg, Model& stage2, const Dataset& eval_set,
                                 const std::vector<std::string>& levels, Model* stage1, std::ostream* log) {
    check_config(!levels.empty(), "sensitivity needs at least one level");
    SensitivityTable table;
    for (const auto& level : levels) {
        EvalConfig ec = cfg.eval;
        SensitivityRow row;
        if (level == "oracle") {
            ec.stones_source = "oracle";
            row.level = "oracle";
            row.prior_quality = 1.0;
        } else if (level.rfind("corrupted:", 0) == 0) {
            ec.stones_source = "corrupted";
            ec.corrupt_iou = std::stod(level.substr(10));
            char buf[32];
            std::snprintf(buf, sizeof(buf), "corrupted@%.2f", ec.corrupt_iou);
            row.level = buf;
            row.prior_quality = ec.corrupt_iou;
        } else if (level == "stage1") {
            check_config(stage1 != nullptr, "sensitivity level stage1 needs a stage-1 model");
            ec.stones_source = "stage1";
            row.level = "stage1";
            // prior quality = measured stage-1 binary mIoU on this split
            EvalConfig binary_eval = cfg.eval;
            row.prior_quality = evaluate_model(*stage1, eval_set, Mode::AVS, binary_eval).miou;
        } else {
            throw ConfigError("unknown sensitivity level: " + level);
        }
        EvalReport rep = evaluate_model(stage2, eval_set, Mode::AVSS_STONES, ec, stage1);
        row.miou = rep.miou;
        row.fscore = rep.fscore;
        table.rows.push_back(row);
        if (log) (*log) << "sensitivity " << row.level << " miou " << row.miou << " f " << row.fscore << "\n";
    }
    return table;
}

json sensitivity_to_json(const SensitivityTable& table, const ExperimentConfig& cfg) {
    json rows = json::array();
    for (const auto& r : table.rows)
        rows.push_back(json{{"level", r.level},
                            {"prior_quality", r.prior_quality},
                            {"miou", r.miou},
                            {"fscore", r.fscore}});
    return json{{"kind", "sensitivity"}, {"rows", rows}, {"config", config_to_json(cfg)}};
}

AblationReport run_ablation(const ExperimentConfig& cfg, const Dataset& train, const Dataset& eval_set,
                            bool query_only, std::ostream* log) {
    AblationReport report;

    // audio query ablation under the configured task
    for (const bool adaptive : {true, false}) {
        ExperimentConfig c = cfg;
        c.model.adaptive_queries = adaptive;
        const Mode mode = mode_of(c.train);
        TrainRun run = run_training(c, mode, train, log);
        EvalConfig ec = c.eval;
        if (mode == Mode::AVSS_STONES) ec.stones_source = "oracle";
        EvalReport rep = evaluate_model(*run.model, eval_set, mode, ec);
        AblationRow row;
        row.name = adaptive ? "adaptive_query" : "repeat_query";
        row.adaptive_queries = adaptive;
        row.miou = rep.miou;
        row.fscore = rep.fscore;
        report.query_rows.push_back(row);
        if (log) (*log) << "ablation " << row.name << " miou " << row.miou << "\n";
    }
    if (query_only) return report;

    // stepping-stone component grid, trained in stones mode, evaluated with
    // an oracle prior and a corrupted prior
    const struct {
        const char* name;
        bool robust, fusion;
    } grid[4] = {{"full", true, true},
                 {"wo_mask_fusion", true, false},
                 {"wo_robust_key", false, true},
                 {"wo_robust_key_mask_fusion", false, false}};
    for (const auto& v : grid) {
        ExperimentConfig c = cfg;
        c.train.task = "avss";
        c.train.strategy = "stones";
        c.model.robust_keys = v.robust;
        c.model.mask_fusion = v.fusion;
        TrainRun run = run_training(c, Mode::AVSS_STONES, train, log);
        EvalConfig oracle_eval = c.eval;
        oracle_eval.stones_source = "oracle";
        EvalConfig degraded_eval = c.eval;
        degraded_eval.stones_source = "corrupted";
        EvalReport rep_oracle = evaluate_model(*run.model, eval_set, Mode::AVSS_STONES, oracle_eval);
        EvalReport rep_degraded = evaluate_model(*run.model, eval_set, Mode::AVSS_STONES, degraded_eval);
        AblationRow row;
        row.name = v.name;
        row.robust_keys = v.robust;
        row.mask_fusion = v.fusion;
        row.miou = rep_oracle.miou;
        row.fscore = rep_oracle.fscore;
        row.miou_degraded = rep_degraded.miou;
        row.fscore_degraded = rep_degraded.fscore;
        report.stones_rows.push_back(row);
        if (log) (*log) << "ablation " << row.name << " miou " << row.miou << "\n";
    }
    return report;
}

json ablation_to_json(const AblationReport& report, const ExperimentConfig& cfg) {
    auto row_json = [](const AblationRow& r) {
        return json{{"name", r.name},
                    {"adaptive_queries", r.adaptive_queries},
                    {"robust_keys", r.robust_keys},
                    {"mask_fusion", r.mask_fusion},
                    {"miou", r.miou},
                    {"fscore", r.fscore},
                    {"miou_degraded", r.miou_degraded},
                    {"fscore_degraded", r.fscore_degraded}};
    };
    json q = json::array(), s = json::array();
    for (const auto& r : report.query_rows) q.push_back(row_json(r));
    for (const auto& r : report.stones_rows) s.push_back(row_json(r));
    return json{{"kind", "ablation"},
                {"query_ablation", q},
                {"stones_ablation", s},
                {"config", config_to_json(cfg)}};
}

}  // namespace avseg
