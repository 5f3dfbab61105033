#pragma once

#include <cstdint>

namespace avseg {

// C = alpha * op(A) * op(B) + beta * C over row-major buffers.
// op(A) is [m,k], op(B) is [k,n], C is [m,n].
void gemm(bool trans_a, bool trans_b, int64_t m, int64_t n, int64_t k, double alpha, const double* a,
          const double* b, double beta, double* c);

}  // namespace avseg
