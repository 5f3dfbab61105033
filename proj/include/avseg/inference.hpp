#pragma once

#include "avseg/tensor.hpp"

namespace avseg {

// Per-mask-classification composite: o_pred[t,c] for object classes c>=1 is
// the query sum of class probability times mask probability (null column
// dropped); channel 0 is 1 - max over object channels, so an all-null frame
// argmaxes to background. The query sum is order-independent (sorted
// accumulation), making o_pred exactly invariant to query permutation.
Tensor postprocess(const Tensor& mask_logits, const Tensor& class_logits);

// Bilinear-upsample each channel to (H,W), then per-pixel argmax with ties
// broken toward the lowest class index.
IntTensor finalize(const Tensor& o_pred, int64_t height, int64_t width);

// Stage-1 output for stage-2 consumption: the soft foreground channel of a
// single-class model, upsampled to full resolution and clamped to [0,1].
Tensor binarize_avs(const Tensor& mask_logits, const Tensor& class_logits, int64_t height, int64_t width);

}  // namespace avseg
