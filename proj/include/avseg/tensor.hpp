#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "avseg/error.hpp"

namespace avseg {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

// Dense row-major tensor. TensorT<double> is the numeric workhorse;
// TensorT<int32_t> carries label maps.
template <class T>
class TensorT {
  public:
    TensorT() = default;
    explicit TensorT(Shape shape, T fill = T(0))
        : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {
        for (int64_t d : shape_) check_shape(d >= 0, "negative dimension in shape " + shape_str(shape_));
    }
    TensorT(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape(static_cast<int64_t>(data_.size()) == shape_numel(shape_),
                    "data size does not match shape " + shape_str(shape_));
    }

    static TensorT zeros(Shape shape) { return TensorT(std::move(shape), T(0)); }
    static TensorT full(Shape shape, T v) { return TensorT(std::move(shape), v); }

    const Shape& shape() const { return shape_; }
    int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
    int64_t dim(int64_t i) const { return shape_.at(static_cast<size_t>(i)); }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    std::vector<T>& vec() { return data_; }
    const std::vector<T>& vec() const { return data_; }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    T& at(std::initializer_list<int64_t> idx) { return data_[static_cast<size_t>(offset(idx))]; }
    const T& at(std::initializer_list<int64_t> idx) const { return data_[static_cast<size_t>(offset(idx))]; }

    T& operator()(int64_t i) { return at({i}); }
    T& operator()(int64_t i, int64_t j) { return at({i, j}); }
    T& operator()(int64_t i, int64_t j, int64_t k) { return at({i, j, k}); }
    T& operator()(int64_t i, int64_t j, int64_t k, int64_t l) { return at({i, j, k, l}); }
    const T& operator()(int64_t i) const { return at({i}); }
    const T& operator()(int64_t i, int64_t j) const { return at({i, j}); }
    const T& operator()(int64_t i, int64_t j, int64_t k) const { return at({i, j, k}); }
    const T& operator()(int64_t i, int64_t j, int64_t k, int64_t l) const { return at({i, j, k, l}); }

    TensorT reshaped(Shape shape) const {
        check_shape(shape_numel(shape) == numel(),
                    "reshape " + shape_str(shape_) + " -> " + shape_str(shape) + " changes numel");
        TensorT out;
        out.shape_ = std::move(shape);
        out.data_ = data_;
        return out;
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const TensorT& o) const { return shape_ == o.shape_; }

    int64_t offset(std::initializer_list<int64_t> idx) const {
        int64_t off = 0;
        size_t k = 0;
        for (int64_t i : idx) {
            off = off * shape_[k] + i;
            ++k;
        }
        return off;
    }

  private:
    Shape shape_;
    std::vector<T> data_;
};

using Tensor = TensorT<double>;
using IntTensor = TensorT<int32_t>;

// --- small elementwise helpers over plain tensors (no autodiff) ---

inline Tensor map(const Tensor& a, const std::function<double(double)>& f) {
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = f(a[i]);
    return out;
}

inline double max_abs(const Tensor& a) {
    double m = 0;
    for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i]));
    return m;
}

inline bool all_finite(const Tensor& a) {
    for (int64_t i = 0; i < a.numel(); ++i)
        if (!std::isfinite(a[i])) return false;
    return true;
}

inline bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

inline bool bitwise_equal(const IntTensor& a, const IntTensor& b) {
    if (!(a.shape() == b.shape())) return false;
    for (int64_t i = 0; i < a.numel(); ++i)
        if (a[i] != b[i]) return false;
    return true;
}

}  // namespace avseg
