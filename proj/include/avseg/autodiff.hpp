#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "avseg/tensor.hpp"

namespace avseg::ad {

// Reverse-mode tape over double tensors. Nodes are created in topological
// order (monotone ids), so backward() just walks reachable nodes by
// descending id. All reductions and scatters run in a fixed order, which is
// what makes same-seed training curves bit-identical.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_alloc = false;
    int64_t id = 0;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backprop;
};

using NodePtr = std::shared_ptr<Node>;

class Value {
  public:
    Value() = default;
    explicit Value(NodePtr n) : node_(std::move(n)) {}

    bool defined() const { return node_ != nullptr; }
    const Tensor& val() const { return node_->value; }
    Tensor& grad() const { return node_->grad; }
    bool has_grad() const { return node_ && node_->grad_alloc; }
    const Shape& shape() const { return node_->value.shape(); }
    int64_t numel() const { return node_->value.numel(); }
    bool requires_grad() const { return node_ && node_->requires_grad; }
    NodePtr node() const { return node_; }

  private:
    NodePtr node_;
};

Value constant(Tensor t);
Value param(Tensor t);

// Seeds root (must be scalar) with grad 1 and accumulates into every
// reachable node that requires grad. Leaf grads are zeroed first.
void backward(const Value& root);

// elementwise, right-aligned numpy-style broadcasting
Value add(const Value& a, const Value& b);
Value sub(const Value& a, const Value& b);
Value mul(const Value& a, const Value& b);
Value div(const Value& a, const Value& b);

Value neg(const Value& a);
Value add_scalar(const Value& a, double s);
Value mul_scalar(const Value& a, double s);

Value relu(const Value& a);
Value sigmoid(const Value& a);
Value exp_v(const Value& a);
Value log_clamped(const Value& a, double eps = 1e-12);
Value sqrt_v(const Value& a);
Value square(const Value& a);

Value reshape(const Value& a, Shape s);

Value matmul(const Value& a, const Value& b);     // [m,k] x [k,n]
Value matmul_nt(const Value& a, const Value& b);  // [m,k] x [n,k]^T
Value bmm(const Value& a, const Value& b);        // [B,m,k] x [B,k,n]
Value bmm_nt(const Value& a, const Value& b);     // [B,m,k] x [B,n,k]^T

// x [..., Din], w [Dout, Din], optional b [Dout]
Value linear(const Value& x, const Value& w, const Value& b);

// x [N,Cin,H,W], w [Cout,Cin,kh,kw], optional b [Cout]
Value conv2d(const Value& x, const Value& w, const Value& b, int64_t stride, int64_t pad);

Value layer_norm(const Value& x, const Value& gain, const Value& bias, double eps = 1e-5);

// normalizes across C for each (n,h,w) of an [N,C,H,W] map
Value layer_norm_channels(const Value& x, const Value& gain, const Value& bias, double eps = 1e-5);

// [N,C,H,W] -> [N,H*W,C] token layout for attention
Value spatial_to_tokens(const Value& x);

// out[k,:] = x[idx[k],:] over the flattened leading dims of x [R, cols]
Value gather_rows(const Value& x, const std::vector<int64_t>& idx);

// softmax over the last dim; allow (same shape, 0/1) pins disallowed entries
// to exactly zero weight. Every row must keep at least one allowed entry.
Value softmax_masked(const Value& logits, const TensorT<uint8_t>* allow);

Value split_heads(const Value& x, int64_t heads);  // [B,S,D] -> [B*h,S,D/h]
Value merge_heads(const Value& x, int64_t heads);  // [B*h,S,Dh] -> [B,S,Dh*h]

Value sum_all(const Value& a);
Value mean_all(const Value& a);
Value sum_axis(const Value& a, int64_t axis);
// ascending-value summation: scalar result invariant under input permutation
Value sum_sorted_all(const Value& a);

// one element per row of the flattened last dim
Value pick_lastdim(const Value& x, const std::vector<int64_t>& idx);

Value upsample_bilinear(const Value& x, int64_t out_h, int64_t out_w);

}  // namespace avseg::ad
