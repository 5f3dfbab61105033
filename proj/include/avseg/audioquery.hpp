#pragma once

#include "avseg/nn.hpp"

namespace avseg {

// Learnable object queries plus one vector per query that measures audio
// affinity. That vector doubles as the query positional embedding in the
// decoder, which is why adaptive conditioning costs no extra parameters
// over the repeat baseline (whose positional embedding is a separate
// tensor of the same size).
struct QueryBank {
    ad::Value q_obj;      // [Nq,D], zero-initialized
    ad::Value proto_pos;  // [Nq,D]; audio prototypes (adaptive) or plain positional embedding (repeat)
    bool adaptive = true;

    QueryBank() = default;
    QueryBank(nn::ParamStore& ps, int64_t num_queries, int64_t dim, Rng& rng, bool adaptive);

    int64_t num_queries() const { return q_obj.shape()[0]; }
};

// q_a[t,i] = cos(proto_i, fa_t) * fa_t + q_obj_i; a zero-norm side makes the
// cosine 0 so the query passes through unchanged.
ad::Value generate_queries(const ad::Value& fa, const QueryBank& bank);

// repeat baseline: q_a[t,i] = fa_t + q_obj_i
ad::Value repeat_queries(const ad::Value& fa, const QueryBank& bank);

}  // namespace avseg
