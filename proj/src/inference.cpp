#include "avseg/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "avseg/error.hpp"
#include "avseg/resize.hpp"

namespace avseg {

Tensor postprocess(const Tensor& mask_logits, const Tensor& class_logits) {
    check_shape(mask_logits.rank() == 4 && class_logits.rank() == 3, "postprocess expects [T,Nq,h,w] and [T,Nq,C+1]");
    const int64_t T = mask_logits.dim(0), nq = mask_logits.dim(1);
    const int64_t h = mask_logits.dim(2), w = mask_logits.dim(3);
    const int64_t ncol = class_logits.dim(2);  // C + 1 with null last
    const int64_t C = ncol - 1;
    check_shape(class_logits.dim(0) == T && class_logits.dim(1) == nq, "prediction tensors disagree");

    Tensor probs({T, nq, ncol});
    for (int64_t t = 0; t < T; ++t)
        for (int64_t q = 0; q < nq; ++q) {
            double mx = -std::numeric_limits<double>::infinity();
            for (int64_t c = 0; c < ncol; ++c) mx = std::max(mx, class_logits(t, q, c));
            double z = 0;
            for (int64_t c = 0; c < ncol; ++c) {
                probs(t, q, c) = std::exp(class_logits(t, q, c) - mx);
                z += probs(t, q, c);
            }
            for (int64_t c = 0; c < ncol; ++c) probs(t, q, c) /= z;
        }

    Tensor sig({T, nq, h, w});
    for (int64_t i = 0; i < mask_logits.numel(); ++i) {
        const double x = mask_logits[i];
        sig[i] = x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }

    Tensor o_pred({T, C + 1, h, w});
    std::vector<double> addends(static_cast<size_t>(nq));
    for (int64_t t = 0; t < T; ++t) {
        for (int64_t c = 1; c <= C; ++c)
            for (int64_t p = 0; p < h * w; ++p) {
                for (int64_t q = 0; q < nq; ++q)
                    addends[static_cast<size_t>(q)] = probs(t, q, c - 1) * sig[(t * nq + q) * h * w + p];
                std::sort(addends.begin(), addends.end());
                double s = 0;
                for (double a : addends) s += a;
                o_pred[((t * (C + 1)) + c) * h * w + p] = s;
            }
        for (int64_t p = 0; p < h * w; ++p) {
            double mx = 0;
            for (int64_t c = 1; c <= C; ++c) mx = std::max(mx, o_pred[((t * (C + 1)) + c) * h * w + p]);
            o_pred[(t * (C + 1)) * h * w + p] = 1.0 - mx;
        }
    }
    return o_pred;
}

IntTensor finalize(const Tensor& o_pred, int64_t height, int64_t width) {
    check_shape(o_pred.rank() == 4, "finalize expects [T,C+1,h,w]");
    const int64_t T = o_pred.dim(0), nc = o_pred.dim(1);
    Tensor up = resize_bilinear(o_pred, height, width);
    IntTensor out({T, height, width});
    for (int64_t t = 0; t < T; ++t)
        for (int64_t p = 0; p < height * width; ++p) {
            int64_t best = 0;
            double bv = up[(t * nc) * height * width + p];
            for (int64_t c = 1; c < nc; ++c) {
                const double v = up[(t * nc + c) * height * width + p];
                if (v > bv) {  // strict: ties stay at the lowest index
                    bv = v;
                    best = c;
                }
            }
            out[t * height * width + p] = static_cast<int32_t>(best);
        }
    return out;
}

Tensor binarize_avs(const Tensor& mask_logits, const Tensor& class_logits, int64_t height, int64_t width) {
    check_shape(class_logits.dim(2) == 2, "binarize_avs expects a single-class model (C=1)");
    Tensor o_pred = postprocess(mask_logits, class_logits);
    const int64_t T = o_pred.dim(0), h = o_pred.dim(2), w = o_pred.dim(3);
    Tensor fg({T, h, w});
    for (int64_t t = 0; t < T; ++t)
        for (int64_t p = 0; p < h * w; ++p) fg[t * h * w + p] = o_pred[(t * 2 + 1) * h * w + p];
    Tensor up = resize_bilinear(fg, height, width);
    for (int64_t i = 0; i < up.numel(); ++i) up[i] = std::clamp(up[i], 0.0, 1.0);
    return up;
}

}  // namespace avseg
