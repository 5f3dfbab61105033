#include "avseg/heads.hpp"

#include <cmath>
#include <deque>
#include <limits>

#include "avseg/error.hpp"
#include "avseg/resize.hpp"

namespace avseg {

MaskHead::MaskHead(nn::ParamStore& ps, int64_t dim, Rng& rng) {
    embed = nn::Mlp(ps, "mask_head.embed", dim, dim, dim, 3, rng);
    fusion_w = ps.add("mask_head.fusion.w", Tensor::zeros({dim}));
    fusion_b = ps.add("mask_head.fusion.b", Tensor::zeros({dim}));
}

ad::Value MaskHead::predict(const ad::Value& queries, const ad::Value& f1, const Tensor* prior) const {
    const int64_t T = f1.shape()[0], D = f1.shape()[1], h = f1.shape()[2], w = f1.shape()[3];
    check_shape(queries.shape().size() == 3 && queries.shape()[2] == D, "mask head query dim mismatch");
    const int64_t nq = queries.shape()[1];

    ad::Value feat = f1;
    if (prior) {
        check_shape(prior->rank() == 3 && prior->dim(0) == T, "prior must be [T,H,W]");
        Tensor resized = resize_bilinear(*prior, h, w);
        ad::Value pr = ad::constant(resized.reshaped({T, 1, h, w}));
        ad::Value inject = ad::add(ad::mul(pr, ad::reshape(fusion_w, {1, D, 1, 1})),
                                   ad::reshape(fusion_b, {1, D, 1, 1}));
        feat = ad::add(f1, inject);
    }
    ad::Value emb = embed.forward(queries);                      // [T,Nq,D]
    ad::Value tokens = ad::reshape(feat, {T, D, h * w});         // [T,D,hw]
    ad::Value logits = ad::bmm(emb, tokens);                     // [T,Nq,hw]
    return ad::reshape(logits, {T, nq, h, w});
}

ClassHead::ClassHead(nn::ParamStore& ps, int64_t dim, int64_t num_classes, Rng& rng) {
    proj = nn::Linear(ps, "class_head.proj", dim, num_classes + 1, rng);
}

ad::Value dice_loss(const ad::Value& pred_prob, const Tensor& target) {
    check_shape(pred_prob.shape() == target.shape(), "dice_loss shape mismatch");
    constexpr double eps = 1.0;
    ad::Value inter = ad::sum_all(ad::mul(pred_prob, ad::constant(target)));
    ad::Value sums = ad::sum_all(pred_prob);
    double tsum = 0;
    for (int64_t i = 0; i < target.numel(); ++i) tsum += target[i];
    ad::Value denom = ad::add_scalar(sums, tsum + eps);
    ad::Value ratio = ad::div(ad::add_scalar(ad::mul_scalar(inter, 2.0), eps), denom);
    return ad::add_scalar(ad::neg(ratio), 1.0);
}

ad::Value mask_ce_loss(const ad::Value& pred_prob, const Tensor& target) {
    check_shape(pred_prob.shape() == target.shape(), "mask_ce_loss shape mismatch");
    ad::Value t = ad::constant(target);
    Tensor ones_minus(target.shape());
    for (int64_t i = 0; i < target.numel(); ++i) ones_minus[i] = 1.0 - target[i];
    ad::Value pos = ad::mul(t, ad::log_clamped(pred_prob));
    ad::Value negp = ad::mul(ad::constant(std::move(ones_minus)),
                             ad::log_clamped(ad::add_scalar(ad::neg(pred_prob), 1.0)));
    return ad::neg(ad::mean_all(ad::add(pos, negp)));
}

ad::Value cls_loss(const ad::Value& class_logits, const std::vector<int64_t>& target_class, int64_t null_index,
                   double null_weight) {
    const int64_t ncol = class_logits.shape().back();
    const int64_t rows = class_logits.numel() / ncol;
    check_shape(static_cast<int64_t>(target_class.size()) == rows, "cls_loss target count mismatch");
    ad::Value probs = ad::softmax_masked(ad::reshape(class_logits, {rows, ncol}), nullptr);
    ad::Value nll = ad::neg(ad::pick_lastdim(ad::log_clamped(probs), target_class));
    Tensor wts({rows});
    int64_t n_null = 0;
    for (int64_t r = 0; r < rows; ++r) {
        const bool is_null = target_class[static_cast<size_t>(r)] == null_index;
        wts[r] = is_null ? null_weight : 1.0;
        n_null += is_null ? 1 : 0;
    }
    const double weight_sum =
        null_weight * static_cast<double>(n_null) + static_cast<double>(rows - n_null);
    return ad::mul_scalar(ad::sum_sorted_all(ad::mul(nll, ad::constant(std::move(wts)))), 1.0 / weight_sum);
}

namespace {

double plain_bce(const Tensor& prob, const TensorT<uint8_t>& target) {
    constexpr double eps = 1e-12;
    double s = 0;
    for (int64_t i = 0; i < prob.numel(); ++i) {
        const double p = prob[i];
        s -= target[i] ? std::log(std::max(p, eps)) : std::log(std::max(1.0 - p, eps));
    }
    return s / static_cast<double>(prob.numel());
}

double plain_dice(const Tensor& prob, const TensorT<uint8_t>& target) {
    constexpr double eps = 1.0;
    double inter = 0, psum = 0, tsum = 0;
    for (int64_t i = 0; i < prob.numel(); ++i) {
        inter += target[i] ? prob[i] : 0.0;
        psum += prob[i];
        tsum += target[i] ? 1.0 : 0.0;
    }
    return 1.0 - (2.0 * inter + eps) / (psum + tsum + eps);
}

}  // namespace

double match_cost(const Tensor& class_probs_row, const Tensor& mask_prob_plane, const Segment& target,
                  const LossWeights& w) {
    check_shape(target.class_id >= 1 && target.class_id < class_probs_row.numel(), "target class out of range");
    const double p_cls = class_probs_row[target.class_id];
    return -w.lambda_cls * p_cls + w.lambda_mask * plain_bce(mask_prob_plane, target.mask) +
           w.lambda_dice * plain_dice(mask_prob_plane, target.mask);
}

// shortest-augmenting-path assignment (rows <= cols), arbitrary real costs
std::vector<int64_t> solve_assignment(const Tensor& cost) {
    check_shape(cost.rank() == 2, "assignment cost must be a matrix");
    const int64_t R = cost.dim(0), C = cost.dim(1);
    check_config(R <= C, "assignment needs rows <= cols");
    constexpr double kInf = std::numeric_limits<double>::infinity();
    std::vector<double> u(static_cast<size_t>(R) + 1, 0.0), v(static_cast<size_t>(C) + 1, 0.0);
    std::vector<int64_t> p(static_cast<size_t>(C) + 1, 0), way(static_cast<size_t>(C) + 1, 0);
    for (int64_t i = 1; i <= R; ++i) {
        p[0] = i;
        int64_t j0 = 0;
        std::vector<double> minv(static_cast<size_t>(C) + 1, kInf);
        std::vector<uint8_t> used(static_cast<size_t>(C) + 1, 0);
        do {
            used[static_cast<size_t>(j0)] = 1;
            const int64_t i0 = p[static_cast<size_t>(j0)];
            double delta = kInf;
            int64_t j1 = -1;
            for (int64_t j = 1; j <= C; ++j) {
                if (used[static_cast<size_t>(j)]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[static_cast<size_t>(i0)] - v[static_cast<size_t>(j)];
                if (cur < minv[static_cast<size_t>(j)]) {
                    minv[static_cast<size_t>(j)] = cur;
                    way[static_cast<size_t>(j)] = j0;
                }
                if (minv[static_cast<size_t>(j)] < delta) {
                    delta = minv[static_cast<size_t>(j)];
                    j1 = j;
                }
            }
            for (int64_t j = 0; j <= C; ++j) {
                if (used[static_cast<size_t>(j)]) {
                    u[static_cast<size_t>(p[static_cast<size_t>(j)])] += delta;
                    v[static_cast<size_t>(j)] -= delta;
                } else {
                    minv[static_cast<size_t>(j)] -= delta;
                }
            }
            j0 = j1;
        } while (p[static_cast<size_t>(j0)] != 0);
        do {
            const int64_t j1 = way[static_cast<size_t>(j0)];
            p[static_cast<size_t>(j0)] = p[static_cast<size_t>(j1)];
            j0 = j1;
        } while (j0);
    }
    std::vector<int64_t> row_to_col(static_cast<size_t>(R), -1);
    for (int64_t j = 1; j <= C; ++j)
        if (p[static_cast<size_t>(j)] > 0) row_to_col[static_cast<size_t>(p[static_cast<size_t>(j)] - 1)] = j - 1;
    return row_to_col;
}

namespace {

// plain copies of the prediction tensors a single frame references
struct FrameView {
    Tensor class_probs;  // [Nq,C+1]
    Tensor mask_probs;   // [Nq,h,w]
};

FrameView frame_view(const PredictionSet& preds, int64_t t) {
    const Tensor& cls = preds.class_logits.val();
    const Tensor& msk = preds.mask_logits.val();
    const int64_t nq = cls.dim(1), ncol = cls.dim(2);
    const int64_t h = msk.dim(2), w = msk.dim(3);
    FrameView fv;
    fv.class_probs = Tensor({nq, ncol});
    for (int64_t q = 0; q < nq; ++q) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t c = 0; c < ncol; ++c) mx = std::max(mx, cls(t, q, c));
        double z = 0;
        for (int64_t c = 0; c < ncol; ++c) {
            fv.class_probs(q, c) = std::exp(cls(t, q, c) - mx);
            z += fv.class_probs(q, c);
        }
        for (int64_t c = 0; c < ncol; ++c) fv.class_probs(q, c) /= z;
    }
    fv.mask_probs = Tensor({nq, h, w});
    for (int64_t q = 0; q < nq; ++q)
        for (int64_t i = 0; i < h * w; ++i) {
            const double x = msk[(t * nq + q) * h * w + i];
            fv.mask_probs[q * h * w + i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
        }
    return fv;
}

}  // namespace

std::vector<FrameAssignment> hungarian_match(const PredictionSet& preds, const TargetSet& targets,
                                             const LossWeights& w) {
    const int64_t T = preds.class_logits.shape()[0];
    const int64_t nq = preds.class_logits.shape()[1];
    check_shape(static_cast<int64_t>(targets.frames.size()) == T, "target frame count mismatch");
    std::vector<FrameAssignment> out(static_cast<size_t>(T));
    for (int64_t t = 0; t < T; ++t) {
        const auto& segs = targets.frames[static_cast<size_t>(t)];
        const int64_t R = static_cast<int64_t>(segs.size());
        if (R == 0) continue;
        check_config(R <= nq, "more targets than queries (" + std::to_string(R) + " > " + std::to_string(nq) + ")");
        FrameView fv = frame_view(preds, t);
        Tensor cost({R, nq});
        for (int64_t r = 0; r < R; ++r) {
            Tensor cls_row({fv.class_probs.dim(1)});
            for (int64_t q = 0; q < nq; ++q) {
                for (int64_t c = 0; c < fv.class_probs.dim(1); ++c) cls_row[c] = fv.class_probs(q, c);
                Tensor plane({fv.mask_probs.dim(1), fv.mask_probs.dim(2)});
                for (int64_t i = 0; i < plane.numel(); ++i) plane[i] = fv.mask_probs[q * plane.numel() + i];
                cost(r, q) = match_cost(cls_row, plane, segs[static_cast<size_t>(r)], w);
            }
        }
        out[static_cast<size_t>(t)].target_to_query = solve_assignment(cost);
    }
    return out;
}

ad::Value loss_main(const PredictionSet& preds, const TargetSet& targets,
                    const std::vector<FrameAssignment>& assignment, const LossWeights& w) {
    const int64_t T = preds.class_logits.shape()[0];
    const int64_t nq = preds.class_logits.shape()[1];
    const int64_t ncol = preds.class_logits.shape()[2];
    const int64_t null_index = ncol - 1;
    const int64_t h = preds.mask_logits.shape()[2], wd = preds.mask_logits.shape()[3];

    // class targets: matched queries learn the segment class, the rest null
    std::vector<int64_t> cls_target(static_cast<size_t>(T * nq), null_index);
    std::vector<int64_t> pair_rows;  // flattened (t*nq + q) per matched pair
    std::vector<const Segment*> pair_segs;
    for (int64_t t = 0; t < T; ++t) {
        const auto& segs = targets.frames[static_cast<size_t>(t)];
        const auto& a = assignment[static_cast<size_t>(t)].target_to_query;
        check_shape(a.size() == segs.size(), "assignment/target size mismatch");
        for (size_t r = 0; r < segs.size(); ++r) {
            const int64_t q = a[r];
            check_shape(q >= 0 && q < nq, "assignment query index out of range");
            cls_target[static_cast<size_t>(t * nq + q)] = segs[r].class_id;
            pair_rows.push_back(t * nq + q);
            pair_segs.push_back(&segs[r]);
        }
    }

    ad::Value total =
        ad::mul_scalar(cls_loss(preds.class_logits, cls_target, null_index, w.null_weight), w.lambda_cls);

    const int64_t K = static_cast<int64_t>(pair_rows.size());
    if (K > 0 && (w.lambda_mask != 0.0 || w.lambda_dice != 0.0)) {
        const int64_t hw = h * wd;
        ad::Value planes =
            ad::gather_rows(ad::reshape(preds.mask_logits, {T * nq, hw}), pair_rows);  // [K,hw]
        ad::Value probs = ad::sigmoid(planes);
        Tensor tgt({K, hw});
        Tensor tgt_inv({K, hw});
        Tensor tsum({K, 1});
        for (int64_t k = 0; k < K; ++k) {
            const Segment& s = *pair_segs[static_cast<size_t>(k)];
            check_shape(s.mask.numel() == hw, "segment mask resolution mismatch");
            double ts = 0;
            for (int64_t i = 0; i < hw; ++i) {
                const double tv = s.mask[i] ? 1.0 : 0.0;
                tgt(k, i) = tv;
                tgt_inv(k, i) = 1.0 - tv;
                ts += tv;
            }
            tsum(k, 0) = ts;
        }
        ad::Value tgt_c = ad::constant(std::move(tgt));

        // mean BCE per pair, then mean over pairs
        ad::Value bce = ad::neg(ad::add(ad::mul(tgt_c, ad::log_clamped(probs)),
                                        ad::mul(ad::constant(std::move(tgt_inv)),
                                                ad::log_clamped(ad::add_scalar(ad::neg(probs), 1.0)))));
        ad::Value bce_per_pair = ad::mul_scalar(ad::sum_axis(bce, 1), 1.0 / static_cast<double>(hw));
        total = ad::add(total, ad::mul_scalar(ad::mean_all(bce_per_pair), w.lambda_mask));

        constexpr double eps = 1.0;
        ad::Value inter = ad::sum_axis(ad::mul(probs, tgt_c), 1);            // [K]
        ad::Value psum = ad::sum_axis(probs, 1);                             // [K]
        ad::Value denom = ad::add_scalar(ad::add(psum, ad::constant(tsum.reshaped({K}))), eps);
        ad::Value dice = ad::add_scalar(
            ad::neg(ad::div(ad::add_scalar(ad::mul_scalar(inter, 2.0), eps), denom)), 1.0);
        total = ad::add(total, ad::mul_scalar(ad::mean_all(dice), w.lambda_dice));
    }
    return ad::reshape(total, {1});
}

ad::Value loss_total(const ad::Value& main, const std::vector<ad::Value>& aux_losses, const LossWeights& w) {
    if (aux_losses.empty() || w.lambda_aux == 0.0) return main;
    ad::Value acc = aux_losses[0];
    for (size_t i = 1; i < aux_losses.size(); ++i) acc = ad::add(acc, aux_losses[i]);
    acc = ad::mul_scalar(acc, 1.0 / static_cast<double>(aux_losses.size()));
    return ad::add(main, ad::mul_scalar(acc, w.lambda_aux));
}

TargetSet build_targets(const IntTensor& semantic, const IntTensor& binary, bool semantic_task, int64_t h4,
                        int64_t w4) {
    check_shape(semantic.shape() == binary.shape() && semantic.rank() == 3, "target masks must be [T,H,W]");
    const int64_t T = semantic.dim(0);
    TargetSet ts;
    ts.frames.resize(static_cast<size_t>(T));

    // sounding-masked label map, nearest-downsampled to stride-4 grid
    IntTensor masked(semantic.shape());
    for (int64_t i = 0; i < semantic.numel(); ++i) masked[i] = binary[i] ? semantic[i] : 0;
    IntTensor small = resize_nearest(masked, h4, w4);

    for (int64_t t = 0; t < T; ++t) {
        auto& segs = ts.frames[static_cast<size_t>(t)];
        const int32_t* lab = small.data() + t * h4 * w4;
        if (!semantic_task) {
            Segment s;
            s.class_id = 1;
            s.mask = TensorT<uint8_t>({h4, w4});
            for (int64_t i = 0; i < h4 * w4; ++i) {
                s.mask[i] = lab[i] != 0 ? 1 : 0;
                s.area += s.mask[i];
            }
            if (s.area > 0) segs.push_back(std::move(s));
            continue;
        }
        // connected components (4-neighborhood) per class, row-major seed order
        std::vector<uint8_t> visited(static_cast<size_t>(h4 * w4), 0);
        for (int64_t start = 0; start < h4 * w4; ++start) {
            if (visited[static_cast<size_t>(start)] || lab[start] == 0) continue;
            const int32_t cls = lab[start];
            Segment s;
            s.class_id = cls;
            s.mask = TensorT<uint8_t>({h4, w4});
            std::deque<int64_t> q{start};
            visited[static_cast<size_t>(start)] = 1;
            while (!q.empty()) {
                const int64_t p = q.front();
                q.pop_front();
                s.mask[p] = 1;
                ++s.area;
                const int64_t y = p / w4, x = p % w4;
                const int64_t ns[4] = {p - w4, p + w4, p - 1, p + 1};
                const bool ok[4] = {y > 0, y + 1 < h4, x > 0, x + 1 < w4};
                for (int k = 0; k < 4; ++k) {
                    if (!ok[k] || visited[static_cast<size_t>(ns[k])] || lab[ns[k]] != cls) continue;
                    visited[static_cast<size_t>(ns[k])] = 1;
                    q.push_back(ns[k]);
                }
            }
            segs.push_back(std::move(s));
        }
    }
    return ts;
}

}  // namespace avseg
