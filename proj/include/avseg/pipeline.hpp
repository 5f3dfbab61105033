#pragma once

#include <functional>
#include <memory>
#include <ostream>

#include "avseg/checkpoint.hpp"
#include "avseg/config.hpp"
#include "avseg/metrics.hpp"
#include "avseg/model.hpp"

namespace avseg {

struct TrainRun {
    std::shared_ptr<Model> model;
    nn::AdamW opt;
    std::vector<double> losses;  // loss_total per step
};

// One clip (batch size 1), one optimizer step. The step index selects the
// clip and the lr-schedule position, so resumed runs continue exactly.
double train_step(Model& model, nn::AdamW& opt, const SceneSample& sample, Mode mode,
                  const ExperimentConfig& cfg, int64_t step);

std::vector<double> train_model(Model& model, nn::AdamW& opt, const Dataset& train,
                                const ExperimentConfig& cfg, int64_t steps, int64_t start_step = 0,
                                std::ostream* log = nullptr);

// stage 1: binary supervision (C=1). stage 2: semantic supervision in stones
// mode with ground-truth priors during training. end-to-end: semantic
// supervision, no prior anywhere.
TrainRun train_stage1(const ExperimentConfig& cfg, const Dataset& train, std::ostream* log = nullptr);
TrainRun train_stage2(const ExperimentConfig& cfg, const Dataset& train, std::ostream* log = nullptr);
TrainRun train_end2end(const ExperimentConfig& cfg, const Dataset& train, std::ostream* log = nullptr);

Tensor oracle_prior(const SceneSample& sample);

// prior for evaluation per stones_source (oracle | corrupted | stage1)
Tensor eval_prior(const SceneSample& sample, const EvalConfig& eval, Model* stage1);

// AVSS ground truth: semantic labels on sounding pixels, background elsewhere
IntTensor ground_truth_labels(const SceneSample& sample, bool semantic_task);

using PredictionSink = std::function<void(const std::string& clip_id, const IntTensor& labels)>;

EvalReport evaluate_model(Model& model, const Dataset& data, Mode mode, const EvalConfig& eval,
                          Model* stage1 = nullptr, const PredictionSink& sink = nullptr);

struct SensitivityRow {
    std::string level;   // "oracle", "corrupted@0.85", "stage1"
    double prior_quality;  // 1.0 for oracle; target IoU for corrupted; measured for stage1
    double miou;
    double fscore;
};

struct SensitivityTable {
    std::vector<SensitivityRow> rows;
};

// levels: "oracle", "corrupted:<iou>", "stage1" (stage1 requires a model)
SensitivityTable run_sensitivity(const ExperimentConfig& cfg, Model& stage2, const Dataset& eval_set,
                                 const std::vector<std::string>& levels, Model* stage1,
                                 std::ostream* log = nullptr);

nlohmann::json sensitivity_to_json(const SensitivityTable& table, const ExperimentConfig& cfg);

struct AblationRow {
    std::string name;
    bool adaptive_queries = true;
    bool robust_keys = true;
    bool mask_fusion = true;
    double miou = 0;
    double fscore = 0;
    double miou_degraded = 0;    // stones grid: corrupted-prior column
    double fscore_degraded = 0;
};

struct AblationReport {
    std::vector<AblationRow> query_rows;   // adaptive vs repeat
    std::vector<AblationRow> stones_rows;  // full / w-o fusion / w-o robust / w-o both
};

// Trains matched-budget variants differing only in the ablated component.
// query_only skips the stones grid (used by the audio-query experiment).
AblationReport run_ablation(const ExperimentConfig& cfg, const Dataset& train, const Dataset& eval_set,
                            bool query_only = false, std::ostream* log = nullptr);

nlohmann::json ablation_to_json(const AblationReport& report, const ExperimentConfig& cfg);

}  // namespace avseg
