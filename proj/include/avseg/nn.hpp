#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "avseg/autodiff.hpp"
#include "avseg/rng.hpp"
#include "avseg/tensor.hpp"

namespace avseg::nn {

// Registry of named leaf parameters. Registration order is the checkpoint
// and optimizer iteration order, so it must be deterministic.
class ParamStore {
  public:
    ad::Value add(const std::string& name, Tensor init);
    const std::vector<std::pair<std::string, ad::Value>>& items() const { return items_; }
    int64_t total_scalars() const;
    void zero_grads();

    std::map<std::string, Tensor> snapshot() const;
    void load(const std::map<std::string, Tensor>& weights);

  private:
    std::vector<std::pair<std::string, ad::Value>> items_;
};

Tensor kaiming_uniform(Shape shape, int64_t fan_in, Rng& rng);

struct Linear {
    ad::Value w, b;
    Linear() = default;
    Linear(ParamStore& ps, const std::string& name, int64_t in, int64_t out, Rng& rng, bool bias = true);
    ad::Value forward(const ad::Value& x) const { return ad::linear(x, w, b); }
};

struct Conv2d {
    ad::Value w, b;
    int64_t stride = 1, pad = 0;
    Conv2d() = default;
    Conv2d(ParamStore& ps, const std::string& name, int64_t in, int64_t out, int64_t ksize, int64_t stride,
           int64_t pad, Rng& rng);
    ad::Value forward(const ad::Value& x) const { return ad::conv2d(x, w, b, stride, pad); }
};

struct LayerNorm {
    ad::Value g, b;
    LayerNorm() = default;
    LayerNorm(ParamStore& ps, const std::string& name, int64_t dim);
    ad::Value forward(const ad::Value& x) const { return ad::layer_norm(x, g, b); }
};

// MLP with ReLU between layers (none after the last).
struct Mlp {
    std::vector<Linear> layers;
    Mlp() = default;
    Mlp(ParamStore& ps, const std::string& name, int64_t in, int64_t hidden, int64_t out, int64_t num_layers,
        Rng& rng);
    ad::Value forward(ad::Value x) const;
};

struct AttentionOutput {
    ad::Value out;      // [B,Nq,D]
    ad::Value weights;  // [B*heads,Nq,S] softmax weights (inspectable)
};

// Multi-head attention with an optional boolean allow mask [B,Nq,S].
// Disallowed keys receive exactly zero weight. `context` tags numerical
// errors (NaN logits) with the calling layer.
struct MultiheadAttention {
    Linear wq, wk, wv, wo;
    int64_t heads = 1;
    MultiheadAttention() = default;
    MultiheadAttention(ParamStore& ps, const std::string& name, int64_t dim, int64_t heads, Rng& rng);
    AttentionOutput forward(const ad::Value& q, const ad::Value& k, const ad::Value& v,
                            const TensorT<uint8_t>* allow, const std::string& context) const;
};

// Fixed 2-D sine/cosine position table [h*w, dim]; dim must be divisible by 4.
Tensor sinusoidal_position_encoding_2d(int64_t h, int64_t w, int64_t dim);

// AdamW with decoupled weight decay and optional cosine lr schedule.
struct AdamW {
    double lr = 1e-4;
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    double weight_decay = 1e-4;
    int64_t step_count = 0;

    void step(ParamStore& ps, double lr_now);

    std::map<std::string, Tensor> m, v;
    std::map<std::string, Tensor> state_snapshot() const;
    void load_state(const std::map<std::string, Tensor>& state);
};

double cosine_lr(double base_lr, int64_t step, int64_t total_steps);

}  // namespace avseg::nn
