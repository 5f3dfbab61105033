#include "avseg/resize.hpp"

#include <cmath>

#include "avseg/error.hpp"

namespace avseg {

BilinearAxis make_bilinear_axis(int64_t src, int64_t dst) {
    BilinearAxis ax;
    ax.lo.resize(static_cast<size_t>(dst));
    ax.hi.resize(static_cast<size_t>(dst));
    ax.w_hi.resize(static_cast<size_t>(dst));
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (int64_t i = 0; i < dst; ++i) {
        double x = (static_cast<double>(i) + 0.5) * scale - 0.5;
        double fl = std::floor(x);
        int64_t lo = static_cast<int64_t>(fl);
        double frac = x - fl;
        int64_t hi = lo + 1;
        if (lo < 0) { lo = 0; hi = 0; frac = 0.0; }
        if (hi >= src) { hi = src - 1; if (lo >= src) lo = src - 1; if (lo == hi) frac = 0.0; }
        ax.lo[static_cast<size_t>(i)] = lo;
        ax.hi[static_cast<size_t>(i)] = hi;
        ax.w_hi[static_cast<size_t>(i)] = frac;
    }
    return ax;
}

std::vector<int64_t> make_nearest_axis(int64_t src, int64_t dst) {
    std::vector<int64_t> idx(static_cast<size_t>(dst));
    const double scale = static_cast<double>(src) / static_cast<double>(dst);
    for (int64_t i = 0; i < dst; ++i) {
        int64_t j = static_cast<int64_t>(std::floor((static_cast<double>(i) + 0.5) * scale));
        idx[static_cast<size_t>(i)] = std::min(std::max<int64_t>(j, 0), src - 1);
    }
    return idx;
}

namespace {

template <class T>
TensorT<T> resize_nearest_impl(const TensorT<T>& t, int64_t out_h, int64_t out_w) {
    check_shape(t.rank() >= 2, "resize needs rank >= 2, got " + shape_str(t.shape()));
    const int64_t h = t.dim(t.rank() - 2);
    const int64_t w = t.dim(t.rank() - 1);
    const int64_t planes = t.numel() / (h * w);
    auto iy = make_nearest_axis(h, out_h);
    auto ix = make_nearest_axis(w, out_w);
    Shape out_shape = t.shape();
    out_shape[out_shape.size() - 2] = out_h;
    out_shape[out_shape.size() - 1] = out_w;
    TensorT<T> out(out_shape);
    for (int64_t p = 0; p < planes; ++p) {
        const T* src = t.data() + p * h * w;
        T* dst = out.data() + p * out_h * out_w;
        for (int64_t y = 0; y < out_h; ++y)
            for (int64_t x = 0; x < out_w; ++x)
                dst[y * out_w + x] = src[iy[static_cast<size_t>(y)] * w + ix[static_cast<size_t>(x)]];
    }
    return out;
}

}  // namespace

Tensor resize_bilinear(const Tensor& t, int64_t out_h, int64_t out_w) {
    check_shape(t.rank() >= 2, "resize needs rank >= 2, got " + shape_str(t.shape()));
    const int64_t h = t.dim(t.rank() - 2);
    const int64_t w = t.dim(t.rank() - 1);
    const int64_t planes = t.numel() / (h * w);
    auto ay = make_bilinear_axis(h, out_h);
    auto ax = make_bilinear_axis(w, out_w);
    Shape out_shape = t.shape();
    out_shape[out_shape.size() - 2] = out_h;
    out_shape[out_shape.size() - 1] = out_w;
    Tensor out(out_shape);
    for (int64_t p = 0; p < planes; ++p) {
        const double* src = t.data() + p * h * w;
        double* dst = out.data() + p * out_h * out_w;
        for (int64_t y = 0; y < out_h; ++y) {
            const int64_t y0 = ay.lo[static_cast<size_t>(y)], y1 = ay.hi[static_cast<size_t>(y)];
            const double fy = ay.w_hi[static_cast<size_t>(y)];
            for (int64_t x = 0; x < out_w; ++x) {
                const int64_t x0 = ax.lo[static_cast<size_t>(x)], x1 = ax.hi[static_cast<size_t>(x)];
                const double fx = ax.w_hi[static_cast<size_t>(x)];
                const double v00 = src[y0 * w + x0], v01 = src[y0 * w + x1];
                const double v10 = src[y1 * w + x0], v11 = src[y1 * w + x1];
                dst[y * out_w + x] = (1 - fy) * ((1 - fx) * v00 + fx * v01) + fy * ((1 - fx) * v10 + fx * v11);
            }
        }
    }
    return out;
}

Tensor resize_nearest(const Tensor& t, int64_t out_h, int64_t out_w) { return resize_nearest_impl(t, out_h, out_w); }
IntTensor resize_nearest(const IntTensor& t, int64_t out_h, int64_t out_w) { return resize_nearest_impl(t, out_h, out_w); }

}  // namespace avseg
