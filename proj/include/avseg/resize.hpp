#pragma once

#include <cstdint>
#include <vector>

#include "avseg/tensor.hpp"

namespace avseg {

// Half-pixel-center sampling grids (source coord = (dst + 0.5) * scale - 0.5),
// shared between the plain resize utilities and the autodiff upsample op so
// forward and gradient paths agree exactly.
struct BilinearAxis {
    std::vector<int64_t> lo, hi;  // clamped neighbor indices per output index
    std::vector<double> w_hi;     // weight on hi; weight on lo is 1 - w_hi
};

BilinearAxis make_bilinear_axis(int64_t src, int64_t dst);
std::vector<int64_t> make_nearest_axis(int64_t src, int64_t dst);

// Resize the trailing two axes; leading axes are treated as batch planes.
Tensor resize_bilinear(const Tensor& t, int64_t out_h, int64_t out_w);
Tensor resize_nearest(const Tensor& t, int64_t out_h, int64_t out_w);
IntTensor resize_nearest(const IntTensor& t, int64_t out_h, int64_t out_w);

}  // namespace avseg
