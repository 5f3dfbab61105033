#include "avseg/nn.hpp"

#include <cmath>

#include "avseg/error.hpp"

namespace avseg::nn {

ad::Value ParamStore::add(const std::string& name, Tensor init) {
    for (const auto& [n, v] : items_) check_config(n != name, "duplicate parameter name: " + name);
    ad::Value v = ad::param(std::move(init));
    items_.emplace_back(name, v);
    return v;
}

int64_t ParamStore::total_scalars() const {
    int64_t n = 0;
    for (const auto& [name, v] : items_) n += v.numel();
    return n;
}

void ParamStore::zero_grads() {
    for (auto& [name, v] : items_) {
        auto node = v.node();
        if (!node->grad_alloc) {
            node->grad = Tensor(node->value.shape());
            node->grad_alloc = true;
        } else {
            node->grad.fill(0.0);
        }
    }
}

std::map<std::string, Tensor> ParamStore::snapshot() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, v] : items_) out.emplace(name, v.val());
    return out;
}

void ParamStore::load(const std::map<std::string, Tensor>& weights) {
    for (auto& [name, v] : items_) {
        auto it = weights.find(name);
        check_data(it != weights.end(), "checkpoint missing parameter: " + name);
        check_data(it->second.shape() == v.shape(),
                   "checkpoint shape mismatch for " + name + ": " + shape_str(it->second.shape()) + " vs " +
                       shape_str(v.shape()));
        v.node()->value = it->second;
    }
}

Tensor kaiming_uniform(Shape shape, int64_t fan_in, Rng& rng) {
    const double bound = fan_in > 0 ? std::sqrt(1.0 / static_cast<double>(fan_in)) : 0.0;
    return rng.uniform_tensor(std::move(shape), -bound, bound);
}

Linear::Linear(ParamStore& ps, const std::string& name, int64_t in, int64_t out, Rng& rng, bool bias) {
    w = ps.add(name + ".w", kaiming_uniform({out, in}, in, rng));
    if (bias) b = ps.add(name + ".b", kaiming_uniform({out}, in, rng));
}

Conv2d::Conv2d(ParamStore& ps, const std::string& name, int64_t in, int64_t out, int64_t ksize, int64_t stride_,
               int64_t pad_, Rng& rng)
    : stride(stride_), pad(pad_) {
    const int64_t fan_in = in * ksize * ksize;
    w = ps.add(name + ".w", kaiming_uniform({out, in, ksize, ksize}, fan_in, rng));
    b = ps.add(name + ".b", kaiming_uniform({out}, fan_in, rng));
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& name, int64_t dim) {
    g = ps.add(name + ".g", Tensor::full({dim}, 1.0));
    b = ps.add(name + ".b", Tensor::zeros({dim}));
}

Mlp::Mlp(ParamStore& ps, const std::string& name, int64_t in, int64_t hidden, int64_t out, int64_t num_layers,
         Rng& rng) {
    check_config(num_layers >= 1, "Mlp needs at least one layer");
    for (int64_t i = 0; i < num_layers; ++i) {
        const int64_t di = (i == 0) ? in : hidden;
        const int64_t dj = (i == num_layers - 1) ? out : hidden;
        layers.emplace_back(ps, name + ".l" + std::to_string(i), di, dj, rng);
    }
}

ad::Value Mlp::forward(ad::Value x) const {
    for (size_t i = 0; i < layers.size(); ++i) {
        x = layers[i].forward(x);
        if (i + 1 < layers.size()) x = ad::relu(x);
    }
    return x;
}

MultiheadAttention::MultiheadAttention(ParamStore& ps, const std::string& name, int64_t dim, int64_t heads_,
                                       Rng& rng)
    : heads(heads_) {
    check_config(dim % heads_ == 0, "attention dim must divide heads");
    wq = Linear(ps, name + ".q", dim, dim, rng);
    wk = Linear(ps, name + ".k", dim, dim, rng);
    wv = Linear(ps, name + ".v", dim, dim, rng);
    wo = Linear(ps, name + ".o", dim, dim, rng);
}

AttentionOutput MultiheadAttention::forward(const ad::Value& q, const ad::Value& k, const ad::Value& v,
                                            const TensorT<uint8_t>* allow, const std::string& context) const {
    const int64_t B = q.shape()[0], nq = q.shape()[1], D = q.shape()[2];
    const int64_t S = k.shape()[1];
    const int64_t dh = D / heads;
    ad::Value qh = ad::split_heads(wq.forward(q), heads);
    ad::Value kh = ad::split_heads(wk.forward(k), heads);
    ad::Value vh = ad::split_heads(wv.forward(v), heads);
    ad::Value logits = ad::mul_scalar(ad::bmm_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (!all_finite(logits.val()))
        throw NumericalError("non-finite attention logits in " + context);
    TensorT<uint8_t> allow_heads;
    const TensorT<uint8_t>* mask_ptr = nullptr;
    if (allow) {
        check_shape(allow->shape() == Shape({B, nq, S}), "attention mask must be [B,Nq,S]");
        allow_heads = TensorT<uint8_t>({B * heads, nq, S});
        for (int64_t b = 0; b < B; ++b)
            for (int64_t hh = 0; hh < heads; ++hh)
                for (int64_t i = 0; i < nq * S; ++i)
                    allow_heads[(b * heads + hh) * nq * S + i] = (*allow)[b * nq * S + i];
        mask_ptr = &allow_heads;
    }
    ad::Value weights = ad::softmax_masked(logits, mask_ptr);
    ad::Value out = wo.forward(ad::merge_heads(ad::bmm(weights, vh), heads));
    return {out, weights};
}

Tensor sinusoidal_position_encoding_2d(int64_t h, int64_t w, int64_t dim) {
    check_config(dim % 4 == 0, "2-D sine encoding needs dim divisible by 4");
    const int64_t half = dim / 2;
    Tensor pe({h * w, dim});
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            const int64_t pos = y * w + x;
            for (int64_t i = 0; i < half / 2; ++i) {
                const double omega = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(half));
                pe(pos, 2 * i) = std::sin(static_cast<double>(y) * omega);
                pe(pos, 2 * i + 1) = std::cos(static_cast<double>(y) * omega);
                pe(pos, half + 2 * i) = std::sin(static_cast<double>(x) * omega);
                pe(pos, half + 2 * i + 1) = std::cos(static_cast<double>(x) * omega);
            }
        }
    return pe;
}

void AdamW::step(ParamStore& ps, double lr_now) {
    ++step_count;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (auto& [name, p] : ps.items()) {
        auto node = p.node();
        check_shape(node->grad_alloc, "optimizer step before any backward for " + name);
        auto [it_m, fresh] = m.try_emplace(name, Tensor(node->value.shape()));
        auto it_v = v.try_emplace(name, Tensor(node->value.shape())).first;
        Tensor& mm = it_m->second;
        Tensor& vv = it_v->second;
        Tensor& val = node->value;
        const Tensor& g = node->grad;
        for (int64_t i = 0; i < val.numel(); ++i) {
            mm[i] = beta1 * mm[i] + (1.0 - beta1) * g[i];
            vv[i] = beta2 * vv[i] + (1.0 - beta2) * g[i] * g[i];
            const double mhat = mm[i] / bc1;
            const double vhat = vv[i] / bc2;
            val[i] -= lr_now * (mhat / (std::sqrt(vhat) + eps)) + lr_now * weight_decay * val[i];
        }
    }
}

std::map<std::string, Tensor> AdamW::state_snapshot() const {
    std::map<std::string, Tensor> out;
    for (const auto& [name, t] : m) out.emplace("adam.m." + name, t);
    for (const auto& [name, t] : v) out.emplace("adam.v." + name, t);
    return out;
}

void AdamW::load_state(const std::map<std::string, Tensor>& state) {
    m.clear();
    v.clear();
    for (const auto& [name, t] : state) {
        if (name.rfind("adam.m.", 0) == 0) m.emplace(name.substr(7), t);
        if (name.rfind("adam.v.", 0) == 0) v.emplace(name.substr(7), t);
    }
}

double cosine_lr(double base_lr, int64_t step, int64_t total_steps) {
    if (total_steps <= 1) return base_lr;
    const double t = static_cast<double>(step) / static_cast<double>(total_steps - 1);
    return base_lr * 0.5 * (1.0 + std::cos(M_PI * t));
}

}  // namespace avseg::nn
