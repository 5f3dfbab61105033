#include "avseg/audioquery.hpp"

#include <cmath>

#include "avseg/error.hpp"

namespace avseg {

QueryBank::QueryBank(nn::ParamStore& ps, int64_t num_queries, int64_t dim, Rng& rng, bool adaptive_)
    : adaptive(adaptive_) {
    q_obj = ps.add("queries.q_obj", Tensor::zeros({num_queries, dim}));
    Tensor proto = rng.normal_tensor({num_queries, dim});
    for (int64_t i = 0; i < num_queries; ++i) {
        double nrm = 0;
        for (int64_t d = 0; d < dim; ++d) nrm += proto(i, d) * proto(i, d);
        nrm = std::sqrt(nrm);
        for (int64_t d = 0; d < dim; ++d) proto(i, d) /= nrm;
    }
    proto_pos = ps.add(adaptive_ ? "queries.p_audio" : "queries.pos_embed", std::move(proto));
}

ad::Value generate_queries(const ad::Value& fa, const QueryBank& bank) {
    check_shape(fa.shape().size() == 2 && fa.shape()[1] == bank.q_obj.shape()[1],
                "audio feature must be [T,D] with the bank's D");
    const int64_t T = fa.shape()[0], nq = bank.q_obj.shape()[0], D = fa.shape()[1];

    ad::Value dots = ad::matmul_nt(fa, bank.proto_pos);                         // [T,Nq]
    ad::Value fa_norm = ad::sqrt_v(ad::sum_axis(ad::square(fa), 1));            // [T]
    ad::Value p_norm = ad::sqrt_v(ad::sum_axis(ad::square(bank.proto_pos), 1)); // [Nq]
    ad::Value denom = ad::mul(ad::reshape(fa_norm, {T, 1}), ad::reshape(p_norm, {1, nq}));

    // zero-norm rows get cosine 0 exactly; the +1 keeps the division benign
    Tensor valid({T, nq});
    Tensor bump({T, nq});
    for (int64_t t = 0; t < T; ++t)
        for (int64_t i = 0; i < nq; ++i) {
            const bool ok = denom.val()(t, i) > 0.0;
            valid(t, i) = ok ? 1.0 : 0.0;
            bump(t, i) = ok ? 0.0 : 1.0;
        }
    ad::Value cos = ad::mul(ad::div(dots, ad::add(denom, ad::constant(std::move(bump)))),
                            ad::constant(std::move(valid)));

    return ad::add(ad::mul(ad::reshape(cos, {T, nq, 1}), ad::reshape(fa, {T, 1, D})),
                   ad::reshape(bank.q_obj, {1, nq, D}));
}

ad::Value repeat_queries(const ad::Value& fa, const QueryBank& bank) {
    check_shape(fa.shape().size() == 2 && fa.shape()[1] == bank.q_obj.shape()[1],
                "audio feature must be [T,D] with the bank's D");
    const int64_t T = fa.shape()[0], nq = bank.q_obj.shape()[0], D = fa.shape()[1];
    return ad::add(ad::reshape(fa, {T, 1, D}), ad::reshape(bank.q_obj, {1, nq, D}));
}

}  // namespace avseg
