#include "avseg/gemm.hpp"

#include <Eigen/Core>

namespace avseg {

namespace {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using MapM = Eigen::Map<RowMat>;
}  // namespace

void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha, const double* a,
          const double* b, double beta, double* c) {
    MapC A(a, trans_a ? k : m, trans_a ? m : k);
    MapC B(b, trans_b ? n : k, trans_b ? k : n);
    MapM C(c, m, n);
    if (beta == 0.0)
        C.setZero();
    else if (beta != 1.0)
        C *= beta;
    if (trans_a) {
        if (trans_b)
            C.noalias() += alpha * (A.transpose() * B.transpose());
        else
            C.noalias() += alpha * (A.transpose() * B);
    } else {
        if (trans_b)
            C.noalias() += alpha * (A * B.transpose());
        else
            C.noalias() += alpha * (A * B);
    }
}

}  // namespace avseg
