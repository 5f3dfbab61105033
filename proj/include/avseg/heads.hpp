#pragma once

#include <vector>

#include "avseg/nn.hpp"

namespace avseg {

// Per-query predictions. class_logits has C+1 columns, the last one the
// null (no object) class.
struct PredictionSet {
    ad::Value mask_logits;   // [T,Nq,h4,w4]
    ad::Value class_logits;  // [T,Nq,C+1]
};

struct Segment {
    int64_t class_id = 0;         // 1..C
    TensorT<uint8_t> mask;        // [h4,w4]
    int64_t area = 0;
};

struct TargetSet {
    std::vector<std::vector<Segment>> frames;
};

struct LossWeights {
    double lambda_cls = 2.0;
    double lambda_mask = 5.0;
    double lambda_dice = 5.0;
    double lambda_aux = 1.0;
    double null_weight = 0.1;
};

// target -> query assignment per frame; -1 for unmatched targets never occurs
// (more targets than queries is a configuration error).
struct FrameAssignment {
    std::vector<int64_t> target_to_query;
};

// Dot-product mask head: a 3-layer MLP embeds each query, logits are the
// per-pixel inner product with the stride-4 mask feature. When a prior is
// given it enters through a zero-initialized 1->D projection added to the
// mask feature, so an untrained fusion is exactly a no-op.
class MaskHead {
  public:
    MaskHead() = default;
    MaskHead(nn::ParamStore& ps, int64_t dim, Rng& rng);
    ad::Value predict(const ad::Value& queries, const ad::Value& f1, const Tensor* prior) const;

    nn::Mlp embed;
    ad::Value fusion_w, fusion_b;  // [D], [D]
};

struct ClassHead {
    nn::Linear proj;
    ClassHead() = default;
    ClassHead(nn::ParamStore& ps, int64_t dim, int64_t num_classes, Rng& rng);
    ad::Value predict(const ad::Value& queries) const { return proj.forward(queries); }
};

// --- losses (autodiff scalars) ---

// dice = 1 - (2*sum(p*t) + eps) / (sum(p) + sum(t) + eps), eps = 1
ad::Value dice_loss(const ad::Value& pred_prob, const Tensor& target);
// mean binary cross-entropy on probabilities
ad::Value mask_ce_loss(const ad::Value& pred_prob, const Tensor& target);
// weighted cross-entropy over C+1 classes; rows with target == null_index get
// null_weight. Reduction is order-independent so permuting rows is exact.
ad::Value cls_loss(const ad::Value& class_logits, const std::vector<int64_t>& target_class, int64_t null_index,
                   double null_weight);

// matching cost of one (query, target) pair from plain values
double match_cost(const Tensor& class_probs_row, const Tensor& mask_prob_plane, const Segment& target,
                  const LossWeights& w);

// min-cost assignment of each row to a distinct column, rows <= cols
std::vector<int64_t> solve_assignment(const Tensor& cost);

std::vector<FrameAssignment> hungarian_match(const PredictionSet& preds, const TargetSet& targets,
                                             const LossWeights& w);

ad::Value loss_main(const PredictionSet& preds, const TargetSet& targets,
                    const std::vector<FrameAssignment>& assignment, const LossWeights& w);

ad::Value loss_total(const ad::Value& main, const std::vector<ad::Value>& aux_losses, const LossWeights& w);

// Ground-truth segments at stride-4 resolution. Semantic task: connected
// class regions of the sounding-masked semantic map; binary task: the
// sounding region as one class-1 segment.
TargetSet build_targets(const IntTensor& semantic, const IntTensor& binary, bool semantic_task, int64_t h4,
                        int64_t w4);

}  // namespace avseg
