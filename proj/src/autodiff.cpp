#include "avseg/autodiff.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <unordered_set>

#include "avseg/error.hpp"
#include "avseg/gemm.hpp"
#include "avseg/resize.hpp"

namespace avseg::ad {

namespace {

std::atomic<int64_t> g_next_id{1};

Value make_op(Tensor val, std::vector<Value> parents, std::function<void(Node&)> bp) {
    auto n = std::make_shared<Node>();
    n->value = std::move(val);
    n->id = g_next_id.fetch_add(1);
    bool rg = false;
    for (const auto& p : parents) rg = rg || p.requires_grad();
    n->requires_grad = rg;
    n->parents.reserve(parents.size());
    for (auto& p : parents) n->parents.push_back(p.node());
    if (rg) n->backprop = std::move(bp);
    return Value(n);
}

bool wants_grad(const NodePtr& p) { return p->requires_grad && p->grad_alloc; }

// right-aligned broadcast bookkeeping; stride 0 marks a broadcast axis
struct BCast {
    Shape out;
    std::vector<int64_t> sa, sb;
};

BCast make_bcast(const Shape& a, const Shape& b) {
    BCast bc;
    size_t rank = std::max(a.size(), b.size());
    bc.out.resize(rank);
    bc.sa.assign(rank, 0);
    bc.sb.assign(rank, 0);
    Shape ap(rank, 1), bp(rank, 1);
    std::copy(a.begin(), a.end(), ap.begin() + static_cast<int64_t>(rank - a.size()));
    std::copy(b.begin(), b.end(), bp.begin() + static_cast<int64_t>(rank - b.size()));
    for (size_t i = 0; i < rank; ++i) {
        check_shape(ap[i] == bp[i] || ap[i] == 1 || bp[i] == 1,
                    "broadcast mismatch " + shape_str(a) + " vs " + shape_str(b));
        bc.out[i] = std::max(ap[i], bp[i]);
    }
    int64_t stra = 1, strb = 1;
    for (size_t i = rank; i-- > 0;) {
        bc.sa[i] = (ap[i] == 1) ? 0 : stra;
        bc.sb[i] = (bp[i] == 1) ? 0 : strb;
        stra *= ap[i];
        strb *= bp[i];
    }
    return bc;
}

template <class F>
void bcast_for_each(const BCast& bc, F&& f) {
    const size_t rank = bc.out.size();
    if (rank == 0) {
        f(0, 0, 0);
        return;
    }
    std::vector<int64_t> idx(rank, 0);
    int64_t oa = 0, ob = 0;
    const int64_t total = shape_numel(bc.out);
    for (int64_t lin = 0; lin < total; ++lin) {
        f(lin, oa, ob);
        for (size_t i = rank; i-- > 0;) {
            ++idx[i];
            oa += bc.sa[i];
            ob += bc.sb[i];
            if (idx[i] < bc.out[i]) break;
            oa -= bc.sa[i] * bc.out[i];
            ob -= bc.sb[i] * bc.out[i];
            idx[i] = 0;
        }
    }
}

// binary elementwise op with broadcasting; dfa/dfb give partials wrt a and b
template <class FV, class DA, class DB>
Value binary_op(const Value& a, const Value& b, FV fv, DA dfa, DB dfb) {
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    Tensor out;
    if (av.same_shape(bv)) {
        out = Tensor(av.shape());
        for (int64_t i = 0; i < out.numel(); ++i) out[i] = fv(av[i], bv[i]);
    } else {
        BCast bc = make_bcast(av.shape(), bv.shape());
        out = Tensor(bc.out);
        bcast_for_each(bc, [&](int64_t o, int64_t ia, int64_t ib) { out[o] = fv(av[ia], bv[ib]); });
    }
    return make_op(std::move(out), {a, b}, [fv, dfa, dfb](Node& n) {
        auto pa = n.parents[0];
        auto pb = n.parents[1];
        const Tensor& av2 = pa->value;
        const Tensor& bv2 = pb->value;
        const Tensor& g = n.grad;
        if (av2.same_shape(bv2)) {
            if (wants_grad(pa))
                for (int64_t i = 0; i < g.numel(); ++i) pa->grad[i] += g[i] * dfa(av2[i], bv2[i]);
            if (wants_grad(pb))
                for (int64_t i = 0; i < g.numel(); ++i) pb->grad[i] += g[i] * dfb(av2[i], bv2[i]);
        } else {
            BCast bc = make_bcast(av2.shape(), bv2.shape());
            bool ga = wants_grad(pa), gb = wants_grad(pb);
            bcast_for_each(bc, [&](int64_t o, int64_t ia, int64_t ib) {
                if (ga) pa->grad[ia] += g[o] * dfa(av2[ia], bv2[ib]);
                if (gb) pb->grad[ib] += g[o] * dfb(av2[ia], bv2[ib]);
            });
        }
    });
}

// unary elementwise; df takes (x, y) so ops can reuse the forward value
template <class FV, class DF>
Value unary_op(const Value& a, FV fv, DF df) {
    const Tensor& av = a.val();
    Tensor out(av.shape());
    for (int64_t i = 0; i < out.numel(); ++i) out[i] = fv(av[i]);
    return make_op(std::move(out), {a}, [df](Node& n) {
        auto p = n.parents[0];
        if (!wants_grad(p)) return;
        for (int64_t i = 0; i < n.grad.numel(); ++i) p->grad[i] += n.grad[i] * df(p->value[i], n.value[i]);
    });
}

}  // namespace

Value constant(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->id = g_next_id.fetch_add(1);
    n->requires_grad = false;
    return Value(n);
}

Value param(Tensor t) {
    auto n = std::make_shared<Node>();
    n->value = std::move(t);
    n->id = g_next_id.fetch_add(1);
    n->requires_grad = true;
    return Value(n);
}

void backward(const Value& root) {
    check_shape(root.defined() && root.numel() == 1, "backward root must be a defined scalar");
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.node().get()};
    seen.insert(root.node().get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (auto& p : n->parents)
            if (seen.insert(p.get()).second) stack.push_back(p.get());
    }
    for (Node* n : order) {
        if (n->requires_grad) {
            n->grad = Tensor(n->value.shape());
            n->grad_alloc = true;
        }
    }
    if (!root.node()->requires_grad) return;  // nothing reachable needs gradients
    root.node()->grad[0] = 1.0;
    std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id > b->id; });
    for (Node* n : order)
        if (n->backprop && n->grad_alloc) n->backprop(*n);
}

Value add(const Value& a, const Value& b) {
    return binary_op(
        a, b, [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
        [](double, double) { return 1.0; });
}

Value sub(const Value& a, const Value& b) {
    return binary_op(
        a, b, [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
        [](double, double) { return -1.0; });
}

Value mul(const Value& a, const Value& b) {
    return binary_op(
        a, b, [](double x, double y) { return x * y; }, [](double, double y) { return y; },
        [](double x, double) { return x; });
}

Value div(const Value& a, const Value& b) {
    return binary_op(
        a, b, [](double x, double y) { return x / y; }, [](double, double y) { return 1.0 / y; },
        [](double x, double y) { return -x / (y * y); });
}

Value neg(const Value& a) {
    return unary_op(a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Value add_scalar(const Value& a, double s) {
    return unary_op(a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Value mul_scalar(const Value& a, double s) {
    return unary_op(a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Value relu(const Value& a) {
    return unary_op(a, [](double x) { return x > 0 ? x : 0.0; },
                    [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Value sigmoid(const Value& a) {
    auto f = [](double x) {
        if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
        double e = std::exp(x);
        return e / (1.0 + e);
    };
    return unary_op(a, f, [](double, double y) { return y * (1.0 - y); });
}

Value exp_v(const Value& a) {
    return unary_op(a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Value log_clamped(const Value& a, double eps) {
    return unary_op(a, [eps](double x) { return std::log(std::max(x, eps)); },
                    [eps](double x, double) { return x >= eps ? 1.0 / x : 0.0; });
}

Value sqrt_v(const Value& a) {
    // subgradient 0 at the origin so masked-out zero norms stay NaN-free
    return unary_op(a, [](double x) { return std::sqrt(x); },
                    [](double, double y) { return y > 0 ? 0.5 / y : 0.0; });
}

Value square(const Value& a) {
    return unary_op(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Value reshape(const Value& a, Shape s) {
    Tensor out = a.val().reshaped(std::move(s));
    return make_op(std::move(out), {a}, [](Node& n) {
        auto p = n.parents[0];
        if (!wants_grad(p)) return;
        for (int64_t i = 0; i < n.grad.numel(); ++i) p->grad[i] += n.grad[i];
    });
}

namespace {

Value matmul_impl(const Value& a, const Value& b, bool nt) {
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    check_shape(av.rank() == 2 && bv.rank() == 2, "matmul expects rank-2 operands");
    const int64_t m = av.dim(0), k = av.dim(1);
    const int64_t n = nt ? bv.dim(0) : bv.dim(1);
    check_shape((nt ? bv.dim(1) : bv.dim(0)) == k, "matmul inner dim mismatch");
    Tensor out({m, n});
    gemm(false, nt, m, n, k, 1.0, av.data(), bv.data(), 0.0, out.data());
    return make_op(std::move(out), {a, b}, [m, n, k, nt](Node& nd) {
        auto pa = nd.parents[0], pb = nd.parents[1];
        const double* g = nd.grad.data();
        if (wants_grad(pa)) {
            // dA = G * op(B)
            gemm(false, !nt, m, k, n, 1.0, g, pb->value.data(), 1.0, pa->grad.data());
        }
        if (wants_grad(pb)) {
            if (nt)
                gemm(true, false, n, k, m, 1.0, g, pa->value.data(), 1.0, pb->grad.data());  // dB = G^T A
            else
                gemm(true, false, k, n, m, 1.0, pa->value.data(), g, 1.0, pb->grad.data());  // dB = A^T G
        }
    });
}

Value bmm_impl(const Value& a, const Value& b, bool nt) {
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    check_shape(av.rank() == 3 && bv.rank() == 3 && av.dim(0) == bv.dim(0), "bmm expects matching [B,..] operands");
    const int64_t B = av.dim(0), m = av.dim(1), k = av.dim(2);
    const int64_t n = nt ? bv.dim(1) : bv.dim(2);
    check_shape((nt ? bv.dim(2) : bv.dim(1)) == k, "bmm inner dim mismatch");
    Tensor out({B, m, n});
    for (int64_t i = 0; i < B; ++i)
        gemm(false, nt, m, n, k, 1.0, av.data() + i * m * k, bv.data() + i * (nt ? n * k : k * n), 0.0,
             out.data() + i * m * n);
    return make_op(std::move(out), {a, b}, [B, m, n, k, nt](Node& nd) {
        auto pa = nd.parents[0], pb = nd.parents[1];
        for (int64_t i = 0; i < B; ++i) {
            const double* g = nd.grad.data() + i * m * n;
            const double* bvp = pb->value.data() + i * (nt ? n * k : k * n);
            const double* avp = pa->value.data() + i * m * k;
            if (wants_grad(pa)) gemm(false, !nt, m, k, n, 1.0, g, bvp, 1.0, pa->grad.data() + i * m * k);
            if (wants_grad(pb)) {
                if (nt)
                    gemm(true, false, n, k, m, 1.0, g, avp, 1.0, pb->grad.data() + i * n * k);
                else
                    gemm(true, false, k, n, m, 1.0, avp, g, 1.0, pb->grad.data() + i * k * n);
            }
        }
    });
}

}  // namespace

Value matmul(const Value& a, const Value& b) { return matmul_impl(a, b, false); }
Value matmul_nt(const Value& a, const Value& b) { return matmul_impl(a, b, true); }
Value bmm(const Value& a, const Value& b) { return bmm_impl(a, b, false); }
Value bmm_nt(const Value& a, const Value& b) { return bmm_impl(a, b, true); }

Value linear(const Value& x, const Value& w, const Value& b) {
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    check_shape(wv.rank() == 2, "linear weight must be [out,in]");
    const int64_t din = wv.dim(1), dout = wv.dim(0);
    check_shape(xv.rank() >= 1 && xv.dim(xv.rank() - 1) == din,
                "linear input " + shape_str(xv.shape()) + " incompatible with weight " + shape_str(wv.shape()));
    const int64_t rows = xv.numel() / din;
    Shape out_shape = xv.shape();
    out_shape.back() = dout;
    Tensor out(out_shape);
    gemm(false, true, rows, dout, din, 1.0, xv.data(), wv.data(), 0.0, out.data());
    const bool has_bias = b.defined();
    if (has_bias) {
        check_shape(b.val().numel() == dout, "linear bias size mismatch");
        for (int64_t r = 0; r < rows; ++r)
            for (int64_t c = 0; c < dout; ++c) out[r * dout + c] += b.val()[c];
    }
    std::vector<Value> parents = has_bias ? std::vector<Value>{x, w, b} : std::vector<Value>{x, w};
    return make_op(std::move(out), std::move(parents), [rows, din, dout, has_bias](Node& n) {
        auto px = n.parents[0], pw = n.parents[1];
        const double* g = n.grad.data();
        if (wants_grad(px)) gemm(false, false, rows, din, dout, 1.0, g, pw->value.data(), 1.0, px->grad.data());
        if (wants_grad(pw)) gemm(true, false, dout, din, rows, 1.0, g, px->value.data(), 1.0, pw->grad.data());
        if (has_bias && wants_grad(n.parents[2])) {
            double* db = n.parents[2]->grad.data();
            for (int64_t r = 0; r < rows; ++r)
                for (int64_t c = 0; c < dout; ++c) db[c] += g[r * dout + c];
        }
    });
}

namespace {

void im2col(const double* x, int64_t cin, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t stride,
            int64_t pad, int64_t oh, int64_t ow, double* col) {
    for (int64_t c = 0; c < cin; ++c)
        for (int64_t ky = 0; ky < kh; ++ky)
            for (int64_t kx = 0; kx < kw; ++kx) {
                double* dst = col + ((c * kh + ky) * kw + kx) * oh * ow;
                for (int64_t oy = 0; oy < oh; ++oy) {
                    const int64_t iy = oy * stride - pad + ky;
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        const int64_t ix = ox * stride - pad + kx;
                        dst[oy * ow + ox] =
                            (iy >= 0 && iy < h && ix >= 0 && ix < w) ? x[(c * h + iy) * w + ix] : 0.0;
                    }
                }
            }
}

void col2im_add(const double* col, int64_t cin, int64_t h, int64_t w, int64_t kh, int64_t kw, int64_t stride,
                int64_t pad, int64_t oh, int64_t ow, double* dx) {
    for (int64_t c = 0; c < cin; ++c)
        for (int64_t ky = 0; ky < kh; ++ky)
            for (int64_t kx = 0; kx < kw; ++kx) {
                const double* src = col + ((c * kh + ky) * kw + kx) * oh * ow;
                for (int64_t oy = 0; oy < oh; ++oy) {
                    const int64_t iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= h) continue;
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        const int64_t ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= w) continue;
                        dx[(c * h + iy) * w + ix] += src[oy * ow + ox];
                    }
                }
            }
}

}  // namespace

Value conv2d(const Value& x, const Value& w, const Value& b, int64_t stride, int64_t pad) {
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    check_shape(xv.rank() == 4 && wv.rank() == 4, "conv2d expects [N,C,H,W] and [Co,Ci,kh,kw]");
    const int64_t N = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
    const int64_t cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    check_shape(wv.dim(1) == cin, "conv2d channel mismatch");
    const int64_t oh = (h + 2 * pad - kh) / stride + 1;
    const int64_t ow = (wd + 2 * pad - kw) / stride + 1;
    check_shape(oh > 0 && ow > 0, "conv2d output would be empty");
    const int64_t ck = cin * kh * kw;
    Tensor out({N, cout, oh, ow});
    std::vector<double> col(static_cast<size_t>(ck * oh * ow));
    for (int64_t i = 0; i < N; ++i) {
        im2col(xv.data() + i * cin * h * wd, cin, h, wd, kh, kw, stride, pad, oh, ow, col.data());
        gemm(false, false, cout, oh * ow, ck, 1.0, wv.data(), col.data(), 0.0, out.data() + i * cout * oh * ow);
    }
    const bool has_bias = b.defined();
    if (has_bias) {
        check_shape(b.val().numel() == cout, "conv2d bias size mismatch");
        for (int64_t i = 0; i < N; ++i)
            for (int64_t c = 0; c < cout; ++c) {
                double* p = out.data() + (i * cout + c) * oh * ow;
                const double bias = b.val()[c];
                for (int64_t j = 0; j < oh * ow; ++j) p[j] += bias;
            }
    }
    std::vector<Value> parents = has_bias ? std::vector<Value>{x, w, b} : std::vector<Value>{x, w};
    return make_op(std::move(out), std::move(parents),
                   [N, cin, h, wd, cout, kh, kw, stride, pad, oh, ow, ck, has_bias](Node& n) {
                       auto px = n.parents[0], pw = n.parents[1];
                       std::vector<double> col(static_cast<size_t>(ck * oh * ow));
                       std::vector<double> dcol(static_cast<size_t>(ck * oh * ow));
                       for (int64_t i = 0; i < N; ++i) {
                           const double* g = n.grad.data() + i * cout * oh * ow;
                           if (wants_grad(pw)) {
                               im2col(px->value.data() + i * cin * h * wd, cin, h, wd, kh, kw, stride, pad,
                                      oh, ow, col.data());
                               gemm(false, true, cout, ck, oh * ow, 1.0, g, col.data(), 1.0, pw->grad.data());
                           }
                           if (wants_grad(px)) {
                               gemm(true, false, ck, oh * ow, cout, 1.0, pw->value.data(), g, 0.0, dcol.data());
                               col2im_add(dcol.data(), cin, h, wd, kh, kw, stride, pad, oh, ow,
                                          px->grad.data() + i * cin * h * wd);
                           }
                           if (has_bias && wants_grad(n.parents[2])) {
                               double* db = n.parents[2]->grad.data();
                               for (int64_t c = 0; c < cout; ++c) {
                                   double s = 0;
                                   for (int64_t j = 0; j < oh * ow; ++j) s += g[c * oh * ow + j];
                                   db[c] += s;
                               }
                           }
                       }
                   });
}

Value layer_norm(const Value& x, const Value& gain, const Value& bias, double eps) {
    const Tensor& xv = x.val();
    const int64_t d = xv.dim(xv.rank() - 1);
    check_shape(gain.val().numel() == d && bias.val().numel() == d, "layer_norm affine size mismatch");
    const int64_t rows = xv.numel() / d;
    Tensor out(xv.shape());
    Tensor xhat(xv.shape());
    Tensor inv_std({rows});
    for (int64_t r = 0; r < rows; ++r) {
        const double* px = xv.data() + r * d;
        double mu = 0;
        for (int64_t i = 0; i < d; ++i) mu += px[i];
        mu /= static_cast<double>(d);
        double var = 0;
        for (int64_t i = 0; i < d; ++i) var += (px[i] - mu) * (px[i] - mu);
        var /= static_cast<double>(d);
        const double s = 1.0 / std::sqrt(var + eps);
        inv_std[r] = s;
        for (int64_t i = 0; i < d; ++i) {
            const double xh = (px[i] - mu) * s;
            xhat[r * d + i] = xh;
            out[r * d + i] = gain.val()[i] * xh + bias.val()[i];
        }
    }
    return make_op(std::move(out), {x, gain, bias},
                   [rows, d, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& n) {
                       auto px = n.parents[0], pg = n.parents[1], pb = n.parents[2];
                       const Tensor& g = n.grad;
                       for (int64_t r = 0; r < rows; ++r) {
                           const double* gr = g.data() + r * d;
                           const double* xh = xhat.data() + r * d;
                           if (wants_grad(pg))
                               for (int64_t i = 0; i < d; ++i) pg->grad[i] += gr[i] * xh[i];
                           if (wants_grad(pb))
                               for (int64_t i = 0; i < d; ++i) pb->grad[i] += gr[i];
                           if (wants_grad(px)) {
                               double m1 = 0, m2 = 0;  // mean(dxhat), mean(dxhat*xhat)
                               for (int64_t i = 0; i < d; ++i) {
                                   const double dxh = gr[i] * pg->value[i];
                                   m1 += dxh;
                                   m2 += dxh * xh[i];
                               }
                               m1 /= static_cast<double>(d);
                               m2 /= static_cast<double>(d);
                               for (int64_t i = 0; i < d; ++i) {
                                   const double dxh = gr[i] * pg->value[i];
                                   px->grad[r * d + i] += inv_std[r] * (dxh - m1 - xh[i] * m2);
                               }
                           }
                       }
                   });
}

Value layer_norm_channels(const Value& x, const Value& gain, const Value& bias, double eps) {
    const Tensor& xv = x.val();
    check_shape(xv.rank() == 4, "layer_norm_channels expects [N,C,H,W]");
    const int64_t N = xv.dim(0), C = xv.dim(1), H = xv.dim(2), W = xv.dim(3);
    check_shape(gain.val().numel() == C && bias.val().numel() == C, "layer_norm_channels affine size mismatch");
    const int64_t hw = H * W;
    Tensor out(xv.shape());
    Tensor xhat(xv.shape());
    Tensor inv_std({N, H, W});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t p = 0; p < hw; ++p) {
            const int64_t base = n * C * hw + p;
            double mu = 0;
            for (int64_t c = 0; c < C; ++c) mu += xv[base + c * hw];
            mu /= static_cast<double>(C);
            double var = 0;
            for (int64_t c = 0; c < C; ++c) {
                const double d = xv[base + c * hw] - mu;
                var += d * d;
            }
            var /= static_cast<double>(C);
            const double s = 1.0 / std::sqrt(var + eps);
            inv_std[n * hw + p] = s;
            for (int64_t c = 0; c < C; ++c) {
                const double xh = (xv[base + c * hw] - mu) * s;
                xhat[base + c * hw] = xh;
                out[base + c * hw] = gain.val()[c] * xh + bias.val()[c];
            }
        }
    return make_op(std::move(out), {x, gain, bias},
                   [N, C, hw, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node& nd) {
                       auto px = nd.parents[0], pg = nd.parents[1], pb = nd.parents[2];
                       for (int64_t n = 0; n < N; ++n)
                           for (int64_t p = 0; p < hw; ++p) {
                               const int64_t base = n * C * hw + p;
                               if (wants_grad(pg))
                                   for (int64_t c = 0; c < C; ++c)
                                       pg->grad[c] += nd.grad[base + c * hw] * xhat[base + c * hw];
                               if (wants_grad(pb))
                                   for (int64_t c = 0; c < C; ++c) pb->grad[c] += nd.grad[base + c * hw];
                               if (wants_grad(px)) {
                                   double m1 = 0, m2 = 0;
                                   for (int64_t c = 0; c < C; ++c) {
                                       const double dxh = nd.grad[base + c * hw] * pg->value[c];
                                       m1 += dxh;
                                       m2 += dxh * xhat[base + c * hw];
                                   }
                                   m1 /= static_cast<double>(C);
                                   m2 /= static_cast<double>(C);
                                   const double s = inv_std[n * hw + p];
                                   for (int64_t c = 0; c < C; ++c) {
                                       const double dxh = nd.grad[base + c * hw] * pg->value[c];
                                       px->grad[base + c * hw] += s * (dxh - m1 - xhat[base + c * hw] * m2);
                                   }
                               }
                           }
                   });
}

Value spatial_to_tokens(const Value& x) {
    const Tensor& xv = x.val();
    check_shape(xv.rank() == 4, "spatial_to_tokens expects [N,C,H,W]");
    const int64_t N = xv.dim(0), C = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    Tensor out({N, hw, C});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t p = 0; p < hw; ++p) out[(n * hw + p) * C + c] = xv[(n * C + c) * hw + p];
    return make_op(std::move(out), {x}, [N, C, hw](Node& nd) {
        auto p0 = nd.parents[0];
        if (!wants_grad(p0)) return;
        for (int64_t n = 0; n < N; ++n)
            for (int64_t c = 0; c < C; ++c)
                for (int64_t p = 0; p < hw; ++p) p0->grad[(n * C + c) * hw + p] += nd.grad[(n * hw + p) * C + c];
    });
}

Value gather_rows(const Value& x, const std::vector<int64_t>& idx) {
    const Tensor& xv = x.val();
    check_shape(xv.rank() >= 2, "gather_rows expects rank >= 2");
    const int64_t cols = xv.dim(xv.rank() - 1);
    const int64_t rows = xv.numel() / cols;
    Tensor out({static_cast<int64_t>(idx.size()), cols});
    for (size_t k = 0; k < idx.size(); ++k) {
        check_shape(idx[k] >= 0 && idx[k] < rows, "gather_rows index out of range");
        for (int64_t c = 0; c < cols; ++c) out[static_cast<int64_t>(k) * cols + c] = xv[idx[k] * cols + c];
    }
    return make_op(std::move(out), {x}, [cols, idx](Node& nd) {
        auto p = nd.parents[0];
        if (!wants_grad(p)) return;
        for (size_t k = 0; k < idx.size(); ++k)
            for (int64_t c = 0; c < cols; ++c)
                p->grad[idx[k] * cols + c] += nd.grad[static_cast<int64_t>(k) * cols + c];
    });
}

Value softmax_masked(const Value& logits, const TensorT<uint8_t>* allow) {
    const Tensor& xv = logits.val();
    const int64_t d = xv.dim(xv.rank() - 1);
    const int64_t rows = xv.numel() / d;
    if (allow)
        check_shape(allow->shape() == xv.shape(), "softmax mask shape mismatch " + shape_str(allow->shape()) +
                                                      " vs " + shape_str(xv.shape()));
    Tensor out(xv.shape());
    for (int64_t r = 0; r < rows; ++r) {
        const double* px = xv.data() + r * d;
        const uint8_t* am = allow ? allow->data() + r * d : nullptr;
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t i = 0; i < d; ++i)
            if ((!am || am[i]) && px[i] > mx) mx = px[i];
        check_shape(mx > -std::numeric_limits<double>::infinity(),
                    "softmax row with no allowed entries (fallback should have run)");
        double z = 0;
        for (int64_t i = 0; i < d; ++i) {
            const double e = (!am || am[i]) ? std::exp(px[i] - mx) : 0.0;
            out[r * d + i] = e;
            z += e;
        }
        const double inv = 1.0 / z;
        for (int64_t i = 0; i < d; ++i) out[r * d + i] *= inv;
    }
    return make_op(std::move(out), {logits}, [rows, d](Node& n) {
        auto p = n.parents[0];
        if (!wants_grad(p)) return;
        for (int64_t r = 0; r < rows; ++r) {
            const double* y = n.value.data() + r * d;
            const double* g = n.grad.data() + r * d;
            double dot = 0;
            for (int64_t i = 0; i < d; ++i) dot += y[i] * g[i];
            double* dx = p->grad.data() + r * d;
            for (int64_t i = 0; i < d; ++i) dx[i] += y[i] * (g[i] - dot);
        }
    });
}

Value split_heads(const Value& x, int64_t heads) {
    const Tensor& xv = x.val();
    check_shape(xv.rank() == 3 && xv.dim(2) % heads == 0, "split_heads expects [B,S,D], D divisible by heads");
    const int64_t B = xv.dim(0), S = xv.dim(1), D = xv.dim(2), dh = D / heads;
    Tensor out({B * heads, S, dh});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t s = 0; s < S; ++s)
            for (int64_t hh = 0; hh < heads; ++hh)
                for (int64_t i = 0; i < dh; ++i)
                    out[((b * heads + hh) * S + s) * dh + i] = xv[(b * S + s) * D + hh * dh + i];
    return make_op(std::move(out), {x}, [B, S, D, dh, heads](Node& n) {
        auto p = n.parents[0];
        if (!wants_grad(p)) return;
        for (int64_t b = 0; b < B; ++b)
            for (int64_t s = 0; s < S; ++s)
                for (int64_t hh = 0; hh < heads; ++hh)
                    for (int64_t i = 0; i < dh; ++i)
                        p->grad[(b * S + s) * D + hh * dh + i] += n.grad[((b * heads + hh) * S + s) * dh + i];
    });
}

Value merge_heads(const Value& x, int64_t heads) {
    const Tensor& xv = x.val();
    check_shape(xv.rank() == 3 && xv.dim(0) % heads == 0, "merge_heads expects [B*h,S,Dh]");
    const int64_t B = xv.dim(0) / heads, S = xv.dim(1), dh = xv.dim(2), D = dh * heads;
    Tensor out({B, S, D});
    for (int64_t b = 0; b < B; ++b)
        for (int64_t s = 0; s < S; ++s)
            for (int64_t hh = 0; hh < heads; ++hh)
                for (int64_t i = 0; i < dh; ++i)
                    out[(b * S + s) * D + hh * dh + i] = xv[((b * heads + hh) * S + s) * dh + i];
    return make_op(std::move(out), {x}, [B, S, D, dh, heads](Node& n) {
        auto p = n.parents[0];
        if (!wants_grad(p)) return;
        for (int64_t b = 0; b < B; ++b)
            for (int64_t s = 0; s < S; ++s)
                for (int64_t hh = 0; hh < heads; ++hh)
                    for (int64_t i = 0; i < dh; ++i)
                        p->grad[((b * heads + hh) * S + s) * dh + i] += n.grad[(b * S + s) * D + hh * dh + i];
    });
}

Value sum_all(const Value& a) {
    double s = 0;
    for (int64_t i = 0; i < a.numel(); ++i) s += a.val()[i];
    Tensor out({1});
    out[0] = s;
    return make_op(std::move(out), {a}, [](Node& n) {
        auto p = n.parents[0];
        if (!wants_grad(p)) return;
        const double g = n.grad[0];
        for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += g;
    });
}

Value mean_all(const Value& a) {
    const double inv = 1.0 / static_cast<double>(a.numel());
    return mul_scalar(sum_all(a), inv);
}

Value sum_axis(const Value& a, int64_t axis) {
    const Tensor& av = a.val();
    check_shape(axis >= 0 && axis < av.rank(), "sum_axis out of range");
    int64_t outer = 1, inner = 1;
    for (int64_t i = 0; i < axis; ++i) outer *= av.dim(i);
    for (int64_t i = axis + 1; i < av.rank(); ++i) inner *= av.dim(i);
    const int64_t n = av.dim(axis);
    Shape out_shape;
    for (int64_t i = 0; i < av.rank(); ++i)
        if (i != axis) out_shape.push_back(av.dim(i));
    if (out_shape.empty()) out_shape = {1};
    Tensor out(out_shape);
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t j = 0; j < inner; ++j) {
            double s = 0;
            for (int64_t i = 0; i < n; ++i) s += av[(o * n + i) * inner + j];
            out[o * inner + j] = s;
        }
    return make_op(std::move(out), {a}, [outer, inner, n](Node& nd) {
        auto p = nd.parents[0];
        if (!wants_grad(p)) return;
        for (int64_t o = 0; o < outer; ++o)
            for (int64_t i = 0; i < n; ++i)
                for (int64_t j = 0; j < inner; ++j) p->grad[(o * n + i) * inner + j] += nd.grad[o * inner + j];
    });
}

Value sum_sorted_all(const Value& a) {
    std::vector<double> vals(a.val().vec());
    std::sort(vals.begin(), vals.end());
    double s = 0;
    for (double v : vals) s += v;
    Tensor out({1});
    out[0] = s;
    return make_op(std::move(out), {a}, [](Node& n) {
        auto p = n.parents[0];
        if (!wants_grad(p)) return;
        const double g = n.grad[0];
        for (int64_t i = 0; i < p->grad.numel(); ++i) p->grad[i] += g;
    });
}

Value pick_lastdim(const Value& x, const std::vector<int64_t>& idx) {
    const Tensor& xv = x.val();
    const int64_t d = xv.dim(xv.rank() - 1);
    const int64_t rows = xv.numel() / d;
    check_shape(static_cast<int64_t>(idx.size()) == rows, "pick_lastdim index count mismatch");
    Tensor out({rows});
    for (int64_t r = 0; r < rows; ++r) {
        check_shape(idx[static_cast<size_t>(r)] >= 0 && idx[static_cast<size_t>(r)] < d, "pick index out of range");
        out[r] = xv[r * d + idx[static_cast<size_t>(r)]];
    }
    return make_op(std::move(out), {x}, [d, idx](Node& n) {
        auto p = n.parents[0];
        if (!wants_grad(p)) return;
        for (int64_t r = 0; r < n.grad.numel(); ++r) p->grad[r * d + idx[static_cast<size_t>(r)]] += n.grad[r];
    });
}

Value upsample_bilinear(const Value& x, int64_t out_h, int64_t out_w) {
    const Tensor& xv = x.val();
    check_shape(xv.rank() >= 2, "upsample needs rank >= 2");
    const int64_t h = xv.dim(xv.rank() - 2), w = xv.dim(xv.rank() - 1);
    const int64_t planes = xv.numel() / (h * w);
    Tensor out = resize_bilinear(xv, out_h, out_w);
    auto ay = make_bilinear_axis(h, out_h);
    auto ax = make_bilinear_axis(w, out_w);
    return make_op(std::move(out), {x}, [planes, h, w, out_h, out_w, ay, ax](Node& n) {
        auto p = n.parents[0];
        if (!wants_grad(p)) return;
        for (int64_t pl = 0; pl < planes; ++pl) {
            const double* g = n.grad.data() + pl * out_h * out_w;
            double* dx = p->grad.data() + pl * h * w;
            for (int64_t y = 0; y < out_h; ++y) {
                const int64_t y0 = ay.lo[static_cast<size_t>(y)], y1 = ay.hi[static_cast<size_t>(y)];
                const double fy = ay.w_hi[static_cast<size_t>(y)];
                for (int64_t xo = 0; xo < out_w; ++xo) {
                    const int64_t x0 = ax.lo[static_cast<size_t>(xo)], x1 = ax.hi[static_cast<size_t>(xo)];
                    const double fx = ax.w_hi[static_cast<size_t>(xo)];
                    const double gv = g[y * out_w + xo];
                    dx[y0 * w + x0] += (1 - fy) * (1 - fx) * gv;
                    dx[y0 * w + x1] += (1 - fy) * fx * gv;
                    dx[y1 * w + x0] += fy * (1 - fx) * gv;
                    dx[y1 * w + x1] += fy * fx * gv;
                }
            }
        }
    });
}

}  // namespace avseg::ad
