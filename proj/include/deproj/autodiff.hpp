#pragma once

#include <array>
#include <cmath>
#include <cstring>
#include <functional>
#include <type_traits>
#include <utility>
#include <vector>

#include "deproj/kernels.hpp"
#include "deproj/tensor.hpp"

// Reverse-mode automatic differentiation on dense tensors. A TapeT owns
// every intermediate value; ops append nodes plus a closure that scatters
// the output gradient back to the inputs. backward() zeroes all gradient
// buffers first, so calling it repeatedly on the same tape is idempotent.
// TapeT<double> exists as a shadow path for gradient verification.

namespace deproj {

struct NodeId {
    int v = -1;
    bool valid() const { return v >= 0; }
};

template <typename T>
class TapeT {
public:
    using value_type = T;

    NodeId leaf(TensorT<T> value, bool needs_grad = false) {
        nodes_.push_back({std::move(value), needs_grad});
        grads_.emplace_back();
        return {static_cast<int>(nodes_.size()) - 1};
    }

    const TensorT<T>& val(NodeId id) const { return node(id).value; }
    TensorT<T>& val_mut(NodeId id) { return node(id).value; }

    bool needs(NodeId id) const { return node(id).needs; }

    // Gradient of the last backward() target with respect to this node.
    const TensorT<T>& grad(NodeId id) const {
        check(id);
        if (grads_[static_cast<std::size_t>(id.v)].empty())
            throw Error("gradient was not computed for node " + std::to_string(id.v));
        return grads_[static_cast<std::size_t>(id.v)];
    }

    TensorT<T>& grad_buf(NodeId id) {
        check(id);
        return grads_[static_cast<std::size_t>(id.v)];
    }

    int node_count() const { return static_cast<int>(nodes_.size()); }

    void backward(NodeId loss) {
        check(loss);
        if (val(loss).size() != 1)
            throw Error("backward target must be a scalar, got shape " +
                        shape_str(val(loss).shape()));
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (nodes_[i].needs || static_cast<int>(i) == loss.v) {
                if (grads_[i].empty())
                    grads_[i] = TensorT<T>(nodes_[i].value.shape());
                else
                    grads_[i].fill(T(0));
            }
        }
        grads_[static_cast<std::size_t>(loss.v)][0] = T(1);
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)(*this);
    }

    // Appends one node. The needs flag is the OR of the inputs'; when set,
    // factory(out_id) must return the backward closure for this op.
    template <typename F>
    NodeId emit(TensorT<T> value, std::initializer_list<NodeId> inputs, F&& factory) {
        bool needs_grad = false;
        for (NodeId in : inputs) needs_grad = needs_grad || needs(in);
        NodeId out = leaf(std::move(value), needs_grad);
        if (needs_grad) ops_.push_back(factory(out));
        return out;
    }

private:
    struct Node {
        TensorT<T> value;
        bool needs = false;
    };

    void check(NodeId id) const {
        if (!id.valid() || id.v >= static_cast<int>(nodes_.size()))
            throw Error("invalid tape node id " + std::to_string(id.v));
    }

    Node& node(NodeId id) {
        check(id);
        return nodes_[static_cast<std::size_t>(id.v)];
    }
    const Node& node(NodeId id) const {
        check(id);
        return nodes_[static_cast<std::size_t>(id.v)];
    }

    std::vector<Node> nodes_;
    std::vector<TensorT<T>> grads_;
    std::vector<std::function<void(TapeT&)>> ops_;
};

using Tape = TapeT<float>;
using TapeD = TapeT<double>;

namespace ops {

namespace detail {

// Spatial loops are written once for three spatial axes; lower-rank
// inputs are padded on the left with extent-1 axes (stride 1, pad 0).
struct ConvGeom {
    int B = 0, IC = 0, OC = 0;
    std::array<int, 3> S{1, 1, 1}, K{1, 1, 1}, P{0, 0, 0}, ST{1, 1, 1}, O{1, 1, 1};
    std::int64_t ssz = 0, ksz = 0, osz = 0;
};

inline ConvGeom conv_geom(const std::vector<int>& xs, const std::vector<int>& ks,
                          const std::vector<int>& stride, const std::vector<int>& pad) {
    if (xs.size() < 3)
        throw Error("conv input must have rank >= 3 (batch, channels, spatial), got " +
                    shape_str(xs));
    std::size_t nsp = xs.size() - 2;
    if (ks.size() != xs.size())
        throw Error("conv kernel rank must match input rank: kernel " + shape_str(ks) +
                    " vs input " + shape_str(xs));
    if (ks[1] != xs[1])
        throw Error("conv kernel input channels " + std::to_string(ks[1]) +
                    " do not match input channels " + std::to_string(xs[1]));
    if (stride.size() != nsp || pad.size() != nsp)
        throw Error("conv stride/pad must have one entry per spatial axis (" +
                    std::to_string(nsp) + ")");
    ConvGeom g;
    g.B = xs[0];
    g.IC = xs[1];
    g.OC = ks[0];
    std::size_t off = 3 - nsp;
    for (std::size_t i = 0; i < nsp; ++i) {
        if (stride[i] < 1) throw Error("conv stride must be >= 1");
        if (pad[i] < 0) throw Error("conv pad must be >= 0");
        g.S[off + i] = xs[2 + i];
        g.K[off + i] = ks[2 + i];
        g.P[off + i] = pad[i];
        g.ST[off + i] = stride[i];
    }
    for (int a = 0; a < 3; ++a) {
        int num = g.S[a] + 2 * g.P[a] - g.K[a];
        if (num < 0)
            throw Error("conv kernel " + shape_str(ks) + " exceeds padded input " +
                        shape_str(xs));
        g.O[a] = num / g.ST[a] + 1;
    }
    g.ssz = static_cast<std::int64_t>(g.S[0]) * g.S[1] * g.S[2];
    g.ksz = static_cast<std::int64_t>(g.K[0]) * g.K[1] * g.K[2];
    g.osz = static_cast<std::int64_t>(g.O[0]) * g.O[1] * g.O[2];
    return g;
}

// Output positions whose input index o*stride + k - pad stays in range.
inline int range_lo(int k, int p, int st) {
    int num = p - k;
    return num <= 0 ? 0 : (num + st - 1) / st;
}

inline int range_hi(int k, int p, int st, int extent, int out) {
    int num = extent - 1 + p - k;
    if (num < 0) return -1;
    int h = num / st;
    return h < out - 1 ? h : out - 1;
}

template <typename T>
void conv_forward(const ConvGeom& g, const T* x, const T* w, const T* b, T* y) {
    for (int bi = 0; bi < g.B; ++bi) {
        for (int oc = 0; oc < g.OC; ++oc) {
            T* plane = y + (static_cast<std::int64_t>(bi) * g.OC + oc) * g.osz;
            for (std::int64_t i = 0; i < g.osz; ++i) plane[i] = b[oc];
            for (int ic = 0; ic < g.IC; ++ic) {
                const T* xin = x + (static_cast<std::int64_t>(bi) * g.IC + ic) * g.ssz;
                const T* kw = w + (static_cast<std::int64_t>(oc) * g.IC + ic) * g.ksz;
                for (int k0 = 0; k0 < g.K[0]; ++k0) {
                    int l0 = range_lo(k0, g.P[0], g.ST[0]);
                    int h0 = range_hi(k0, g.P[0], g.ST[0], g.S[0], g.O[0]);
                    for (int k1 = 0; k1 < g.K[1]; ++k1) {
                        int l1 = range_lo(k1, g.P[1], g.ST[1]);
                        int h1 = range_hi(k1, g.P[1], g.ST[1], g.S[1], g.O[1]);
                        for (int k2 = 0; k2 < g.K[2]; ++k2) {
                            int l2 = range_lo(k2, g.P[2], g.ST[2]);
                            int h2 = range_hi(k2, g.P[2], g.ST[2], g.S[2], g.O[2]);
                            int n = h2 - l2 + 1;
                            if (n <= 0 || h0 < l0 || h1 < l1) continue;
                            T wv = kw[(static_cast<std::int64_t>(k0) * g.K[1] + k1) * g.K[2] + k2];
                            for (int o0 = l0; o0 <= h0; ++o0) {
                                int i0 = o0 * g.ST[0] + k0 - g.P[0];
                                for (int o1 = l1; o1 <= h1; ++o1) {
                                    int i1 = o1 * g.ST[1] + k1 - g.P[1];
                                    const T* src = xin +
                                        (static_cast<std::int64_t>(i0) * g.S[1] + i1) * g.S[2] +
                                        (l2 * g.ST[2] + k2 - g.P[2]);
                                    T* dst = plane +
                                        (static_cast<std::int64_t>(o0) * g.O[1] + o1) * g.O[2] + l2;
                                    if (g.ST[2] == 1) {
                                        kernels::axpy(wv, src, dst, static_cast<std::size_t>(n));
                                    } else {
                                        for (int j = 0; j < n; ++j)
                                            dst[j] += wv * src[static_cast<std::int64_t>(j) * g.ST[2]];
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv_backward(const ConvGeom& g, const T* x, const T* w, const T* gy,
                   T* gx, T* gw, T* gb) {
    for (int bi = 0; bi < g.B; ++bi) {
        for (int oc = 0; oc < g.OC; ++oc) {
            const T* gplane = gy + (static_cast<std::int64_t>(bi) * g.OC + oc) * g.osz;
            if (gb) gb[oc] += kernels::sum(gplane, static_cast<std::size_t>(g.osz));
            if (!gx && !gw) continue;
            for (int ic = 0; ic < g.IC; ++ic) {
                const T* xin = x + (static_cast<std::int64_t>(bi) * g.IC + ic) * g.ssz;
                T* gxin = gx ? gx + (static_cast<std::int64_t>(bi) * g.IC + ic) * g.ssz : nullptr;
                std::int64_t kbase = (static_cast<std::int64_t>(oc) * g.IC + ic) * g.ksz;
                for (int k0 = 0; k0 < g.K[0]; ++k0) {
                    int l0 = range_lo(k0, g.P[0], g.ST[0]);
                    int h0 = range_hi(k0, g.P[0], g.ST[0], g.S[0], g.O[0]);
                    for (int k1 = 0; k1 < g.K[1]; ++k1) {
                        int l1 = range_lo(k1, g.P[1], g.ST[1]);
                        int h1 = range_hi(k1, g.P[1], g.ST[1], g.S[1], g.O[1]);
                        for (int k2 = 0; k2 < g.K[2]; ++k2) {
                            int l2 = range_lo(k2, g.P[2], g.ST[2]);
                            int h2 = range_hi(k2, g.P[2], g.ST[2], g.S[2], g.O[2]);
                            int n = h2 - l2 + 1;
                            if (n <= 0 || h0 < l0 || h1 < l1) continue;
                            std::int64_t ki =
                                kbase + (static_cast<std::int64_t>(k0) * g.K[1] + k1) * g.K[2] + k2;
                            T wv = w[ki];
                            T wacc = T(0);
                            for (int o0 = l0; o0 <= h0; ++o0) {
                                int i0 = o0 * g.ST[0] + k0 - g.P[0];
                                for (int o1 = l1; o1 <= h1; ++o1) {
                                    int i1 = o1 * g.ST[1] + k1 - g.P[1];
                                    std::int64_t sbase =
                                        (static_cast<std::int64_t>(i0) * g.S[1] + i1) * g.S[2] +
                                        (l2 * g.ST[2] + k2 - g.P[2]);
                                    const T* grow = gplane +
                                        (static_cast<std::int64_t>(o0) * g.O[1] + o1) * g.O[2] + l2;
                                    if (g.ST[2] == 1) {
                                        if (gw)
                                            wacc += kernels::dot(grow, xin + sbase,
                                                                 static_cast<std::size_t>(n));
                                        if (gx)
                                            kernels::axpy(wv, grow, gxin + sbase,
                                                          static_cast<std::size_t>(n));
                                    } else {
                                        for (int j = 0; j < n; ++j) {
                                            std::int64_t si =
                                                sbase + static_cast<std::int64_t>(j) * g.ST[2];
                                            if (gw) wacc += grow[j] * xin[si];
                                            if (gx) gxin[si] += wv * grow[j];
                                        }
                                    }
                                }
                            }
                            if (gw) gw[ki] += wacc;
                        }
                    }
                }
            }
        }
    }
}

} // namespace detail

// Cross-correlation (kernels are not flipped) over 1-3 spatial axes.
// input [B, C, s...], kernel [OC, C, k...], bias [OC].
template <typename T>
NodeId conv(TapeT<T>& t, NodeId x, NodeId w, NodeId b,
            const std::vector<int>& stride, const std::vector<int>& pad) {
    const auto& xs = t.val(x).shape();
    const auto& ks = t.val(w).shape();
    detail::ConvGeom g = detail::conv_geom(xs, ks, stride, pad);
    const auto& bshape = t.val(b).shape();
    if (bshape.size() != 1 || bshape[0] != g.OC)
        throw Error("conv bias must have shape [" + std::to_string(g.OC) + "], got " +
                    shape_str(bshape));
    std::vector<int> os{g.B, g.OC};
    for (std::size_t i = 3 - (xs.size() - 2); i < 3; ++i) os.push_back(g.O[i]);
    TensorT<T> out(os);
    detail::conv_forward(g, t.val(x).data(), t.val(w).data(), t.val(b).data(), out.data());
    bool nx = t.needs(x), nw = t.needs(w), nb = t.needs(b);
    return t.emit(std::move(out), {x, w, b}, [=](NodeId y) {
        return [=](TapeT<T>& tp) {
            detail::conv_backward(g, tp.val(x).data(), tp.val(w).data(), tp.grad(y).data(),
                                  nx ? tp.grad_buf(x).data() : nullptr,
                                  nw ? tp.grad_buf(w).data() : nullptr,
                                  nb ? tp.grad_buf(b).data() : nullptr);
        };
    });
}

// y = x W^T + b with x [B, n], w [m, n], b [m] -> y [B, m].
template <typename T>
NodeId dense(TapeT<T>& t, NodeId x, NodeId w, NodeId b) {
    const auto& xs = t.val(x).shape();
    const auto& ws = t.val(w).shape();
    const auto& bs = t.val(b).shape();
    if (xs.size() != 2) throw Error("dense input must have rank 2, got " + shape_str(xs));
    if (ws.size() != 2) throw Error("dense weight must have rank 2, got " + shape_str(ws));
    int B = xs[0], n = xs[1], m = ws[0];
    if (ws[1] != n)
        throw Error("dense weight " + shape_str(ws) + " does not match input " + shape_str(xs));
    if (bs.size() != 1 || bs[0] != m)
        throw Error("dense bias must have shape [" + std::to_string(m) + "], got " +
                    shape_str(bs));
    TensorT<T> out({B, m});
    {
        const T* xv = t.val(x).data();
        const T* wv = t.val(w).data();
        const T* bv = t.val(b).data();
        for (int bi = 0; bi < B; ++bi)
            for (int mi = 0; mi < m; ++mi)
                out[static_cast<std::int64_t>(bi) * m + mi] =
                    kernels::dot(wv + static_cast<std::int64_t>(mi) * n,
                                 xv + static_cast<std::int64_t>(bi) * n,
                                 static_cast<std::size_t>(n)) + bv[mi];
    }
    bool nx = t.needs(x), nw = t.needs(w), nb = t.needs(b);
    return t.emit(std::move(out), {x, w, b}, [=](NodeId y) {
        return [=](TapeT<T>& tp) {
            const T* gy = tp.grad(y).data();
            const T* xv = tp.val(x).data();
            const T* wv = tp.val(w).data();
            for (int bi = 0; bi < B; ++bi) {
                const T* gyr = gy + static_cast<std::int64_t>(bi) * m;
                if (nb) kernels::axpy(T(1), gyr, tp.grad_buf(b).data(), static_cast<std::size_t>(m));
                for (int mi = 0; mi < m; ++mi) {
                    T gv = gyr[mi];
                    if (gv == T(0)) continue;
                    if (nx)
                        kernels::axpy(gv, wv + static_cast<std::int64_t>(mi) * n,
                                      tp.grad_buf(x).data() + static_cast<std::int64_t>(bi) * n,
                                      static_cast<std::size_t>(n));
                    if (nw)
                        kernels::axpy(gv, xv + static_cast<std::int64_t>(bi) * n,
                                      tp.grad_buf(w).data() + static_cast<std::int64_t>(mi) * n,
                                      static_cast<std::size_t>(n));
                }
            }
        };
    });
}

template <typename T>
NodeId leaky_relu(TapeT<T>& t, NodeId x, std::type_identity_t<T> slope) {
    if (!(slope >= T(0) && slope < T(1)))
        throw Error("leaky_relu slope must be in [0, 1)");
    TensorT<T> out(t.val(x).shape());
    kernels::leaky_relu(t.val(x).data(), out.data(),
                        static_cast<std::size_t>(out.size()), slope);
    return t.emit(std::move(out), {x}, [=](NodeId y) {
        return [=](TapeT<T>& tp) {
            kernels::leaky_relu_grad(tp.val(x).data(), tp.grad(y).data(),
                                     tp.grad_buf(x).data(),
                                     static_cast<std::size_t>(tp.val(x).size()), slope);
        };
    });
}

template <typename T>
NodeId sigmoid(TapeT<T>& t, NodeId x) {
    TensorT<T> out(t.val(x).shape());
    const T* xv = t.val(x).data();
    for (std::int64_t i = 0; i < out.size(); ++i)
        out[i] = T(1) / (T(1) + std::exp(-xv[i]));
    return t.emit(std::move(out), {x}, [=](NodeId y) {
        return [=](TapeT<T>& tp) {
            const T* yv = tp.val(y).data();
            const T* gy = tp.grad(y).data();
            T* gx = tp.grad_buf(x).data();
            for (std::int64_t i = 0; i < tp.val(y).size(); ++i)
                gx[i] += gy[i] * yv[i] * (T(1) - yv[i]);
        };
    });
}

// Gradient passes through where lo <= x <= hi and is zero outside.
template <typename T>
NodeId clamp(TapeT<T>& t, NodeId x, std::type_identity_t<T> lo, std::type_identity_t<T> hi) {
    if (!(lo <= hi)) throw Error("clamp requires lo <= hi");
    TensorT<T> out(t.val(x).shape());
    kernels::clamp(t.val(x).data(), out.data(), static_cast<std::size_t>(out.size()), lo, hi);
    return t.emit(std::move(out), {x}, [=](NodeId y) {
        return [=](TapeT<T>& tp) {
            const T* xv = tp.val(x).data();
            const T* gy = tp.grad(y).data();
            T* gx = tp.grad_buf(x).data();
            for (std::int64_t i = 0; i < tp.val(x).size(); ++i)
                if (xv[i] >= lo && xv[i] <= hi) gx[i] += gy[i];
        };
    });
}

// Nearest-neighbor upsampling by integer factors per spatial axis.
// input [B, C, s...]; each output cell copies in[o / factor].
template <typename T>
NodeId upsample_nearest(TapeT<T>& t, NodeId x, const std::vector<int>& factors) {
    const auto& xs = t.val(x).shape();
    if (xs.size() < 3)
        throw Error("upsample input must have rank >= 3, got " + shape_str(xs));
    std::size_t nsp = xs.size() - 2;
    if (factors.size() != nsp)
        throw Error("upsample needs one factor per spatial axis (" + std::to_string(nsp) + ")");
    std::array<int, 3> S{1, 1, 1}, F{1, 1, 1};
    std::size_t off = 3 - nsp;
    for (std::size_t i = 0; i < nsp; ++i) {
        if (factors[i] < 1) throw Error("upsample factors must be >= 1");
        S[off + i] = xs[2 + i];
        F[off + i] = factors[i];
    }
    int BC = xs[0] * xs[1];
    std::vector<int> os{xs[0], xs[1]};
    for (std::size_t i = 0; i < nsp; ++i) os.push_back(xs[2 + i] * factors[i]);
    TensorT<T> out(os);
    std::array<int, 3> O{S[0] * F[0], S[1] * F[1], S[2] * F[2]};
    std::int64_t ssz = static_cast<std::int64_t>(S[0]) * S[1] * S[2];
    std::int64_t osz = static_cast<std::int64_t>(O[0]) * O[1] * O[2];
    {
        const T* xv = t.val(x).data();
        T* yv = out.data();
        for (int bc = 0; bc < BC; ++bc) {
            const T* xin = xv + bc * ssz;
            T* yout = yv + bc * osz;
            for (int o0 = 0; o0 < O[0]; ++o0) {
                int i0 = o0 / F[0];
                for (int o1 = 0; o1 < O[1]; ++o1) {
                    int i1 = o1 / F[1];
                    const T* src = xin + (static_cast<std::int64_t>(i0) * S[1] + i1) * S[2];
                    T* dst = yout + (static_cast<std::int64_t>(o0) * O[1] + o1) * O[2];
                    for (int i2 = 0; i2 < S[2]; ++i2) {
                        T v = src[i2];
                        for (int j = 0; j < F[2]; ++j) *dst++ = v;
                    }
                }
            }
        }
    }
    return t.emit(std::move(out), {x}, [=](NodeId y) {
        return [=](TapeT<T>& tp) {
            const T* gy = tp.grad(y).data();
            T* gx = tp.grad_buf(x).data();
            for (int bc = 0; bc < BC; ++bc) {
                T* gxin = gx + bc * ssz;
                const T* gyout = gy + bc * osz;
                for (int o0 = 0; o0 < O[0]; ++o0) {
                    int i0 = o0 / F[0];
                    for (int o1 = 0; o1 < O[1]; ++o1) {
                        int i1 = o1 / F[1];
                        T* dst = gxin + (static_cast<std::int64_t>(i0) * S[1] + i1) * S[2];
                        const T* src = gyout + (static_cast<std::int64_t>(o0) * O[1] + o1) * O[2];
                        for (int i2 = 0; i2 < S[2]; ++i2) {
                            T acc = T(0);
                            for (int j = 0; j < F[2]; ++j) acc += *src++;
                            dst[i2] += acc;
                        }
                    }
                }
            }
        };
    });
}

template <typename T>
NodeId reshape(TapeT<T>& t, NodeId x, std::vector<int> new_shape) {
    if (shape_size(new_shape) != t.val(x).size())
        throw Error("reshape from " + shape_str(t.val(x).shape()) + " to " +
                    shape_str(new_shape) + " changes element count");
    TensorT<T> out(std::move(new_shape), t.val(x).vec());
    return t.emit(std::move(out), {x}, [=](NodeId y) {
        return [=](TapeT<T>& tp) {
            kernels::axpy(T(1), tp.grad(y).data(), tp.grad_buf(x).data(),
                          static_cast<std::size_t>(tp.val(x).size()));
        };
    });
}

// Collapses everything after the batch axis: [B, ...] -> [B, n].
template <typename T>
NodeId flatten(TapeT<T>& t, NodeId x) {
    const auto& xs = t.val(x).shape();
    if (xs.size() < 2) throw Error("flatten input must have rank >= 2");
    int n = 1;
    for (std::size_t i = 1; i < xs.size(); ++i) n *= xs[i];
    return reshape(t, x, {xs[0], n});
}

template <typename T>
NodeId concat(TapeT<T>& t, NodeId a, NodeId b, int axis) {
    const auto& as = t.val(a).shape();
    const auto& bs = t.val(b).shape();
    if (as.size() != bs.size())
        throw Error("concat inputs must have equal rank: " + shape_str(as) + " vs " +
                    shape_str(bs));
    if (axis < 0 || axis >= static_cast<int>(as.size()))
        throw Error("concat axis " + std::to_string(axis) + " out of range for " +
                    shape_str(as));
    for (std::size_t i = 0; i < as.size(); ++i)
        if (static_cast<int>(i) != axis && as[i] != bs[i])
            throw Error("concat shapes differ outside axis " + std::to_string(axis) + ": " +
                        shape_str(as) + " vs " + shape_str(bs));
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= as[i];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < as.size(); ++i) inner *= as[i];
    std::int64_t abl = as[axis] * inner, bbl = bs[axis] * inner;
    std::vector<int> os = as;
    os[static_cast<std::size_t>(axis)] = as[axis] + bs[axis];
    TensorT<T> out(os);
    {
        const T* av = t.val(a).data();
        const T* bv = t.val(b).data();
        T* yv = out.data();
        for (std::int64_t o = 0; o < outer; ++o) {
            std::memcpy(yv + o * (abl + bbl), av + o * abl, sizeof(T) * abl);
            std::memcpy(yv + o * (abl + bbl) + abl, bv + o * bbl, sizeof(T) * bbl);
        }
    }
    bool na = t.needs(a), nb = t.needs(b);
    return t.emit(std::move(out), {a, b}, [=](NodeId y) {
        return [=](TapeT<T>& tp) {
            const T* gy = tp.grad(y).data();
            for (std::int64_t o = 0; o < outer; ++o) {
                if (na)
                    kernels::axpy(T(1), gy + o * (abl + bbl),
                                  tp.grad_buf(a).data() + o * abl,
                                  static_cast<std::size_t>(abl));
                if (nb)
                    kernels::axpy(T(1), gy + o * (abl + bbl) + abl,
                                  tp.grad_buf(b).data() + o * bbl,
                                  static_cast<std::size_t>(bbl));
            }
        };
    });
}

// out axis i takes input axis perm[i].
template <typename T>
NodeId permute(TapeT<T>& t, NodeId x, const std::vector<int>& perm) {
    const auto& xs = t.val(x).shape();
    int r = static_cast<int>(xs.size());
    if (static_cast<int>(perm.size()) != r)
        throw Error("permute needs " + std::to_string(r) + " axes, got " +
                    std::to_string(perm.size()));
    std::vector<bool> seen(static_cast<std::size_t>(r), false);
    for (int p : perm) {
        if (p < 0 || p >= r || seen[static_cast<std::size_t>(p)])
            throw Error("permute axes must be a permutation of 0.." + std::to_string(r - 1));
        seen[static_cast<std::size_t>(p)] = true;
    }
    std::vector<int> os(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i) os[static_cast<std::size_t>(i)] = xs[static_cast<std::size_t>(perm[i])];
    std::vector<std::int64_t> xstride(static_cast<std::size_t>(r), 1);
    for (int i = r - 2; i >= 0; --i)
        xstride[static_cast<std::size_t>(i)] =
            xstride[static_cast<std::size_t>(i + 1)] * xs[static_cast<std::size_t>(i + 1)];
    std::vector<std::int64_t> ostride_in(static_cast<std::size_t>(r));
    for (int i = 0; i < r; ++i)
        ostride_in[static_cast<std::size_t>(i)] = xstride[static_cast<std::size_t>(perm[i])];
    TensorT<T> out(os);
    std::int64_t n = out.size();
    {
        const T* xv = t.val(x).data();
        T* yv = out.data();
        std::vector<int> c(static_cast<std::size_t>(r), 0);
        std::int64_t xi = 0;
        for (std::int64_t oi = 0; oi < n; ++oi) {
            yv[oi] = xv[xi];
            for (int a = r - 1; a >= 0; --a) {
                auto ai = static_cast<std::size_t>(a);
                xi += ostride_in[ai];
                if (++c[ai] < os[ai]) break;
                c[ai] = 0;
                xi -= ostride_in[ai] * os[ai];
            }
        }
    }
    return t.emit(std::move(out), {x}, [=](NodeId y) {
        return [=](TapeT<T>& tp) {
            const T* gy = tp.grad(y).data();
            T* gx = tp.grad_buf(x).data();
            std::vector<int> c(static_cast<std::size_t>(r), 0);
            std::int64_t xi = 0;
            for (std::int64_t oi = 0; oi < n; ++oi) {
                gx[xi] += gy[oi];
                for (int a = r - 1; a >= 0; --a) {
                    auto ai = static_cast<std::size_t>(a);
                    xi += ostride_in[ai];
                    if (++c[ai] < os[ai]) break;
                    c[ai] = 0;
                    xi -= ostride_in[ai] * os[ai];
                }
            }
        };
    });
}

template <typename T>
NodeId add(TapeT<T>& t, NodeId a, NodeId b) {
    if (!t.val(a).same_shape(t.val(b)))
        throw Error("add shapes differ: " + shape_str(t.val(a).shape()) + " vs " +
                    shape_str(t.val(b).shape()));
    TensorT<T> out = t.val(a);
    kernels::axpy(T(1), t.val(b).data(), out.data(), static_cast<std::size_t>(out.size()));
    bool na = t.needs(a), nb = t.needs(b);
    return t.emit(std::move(out), {a, b}, [=](NodeId y) {
        return [=](TapeT<T>& tp) {
            std::size_t n = static_cast<std::size_t>(tp.val(y).size());
            if (na) kernels::axpy(T(1), tp.grad(y).data(), tp.grad_buf(a).data(), n);
            if (nb) kernels::axpy(T(1), tp.grad(y).data(), tp.grad_buf(b).data(), n);
        };
    });
}

template <typename T>
NodeId scale(TapeT<T>& t, NodeId x, std::type_identity_t<T> c) {
    TensorT<T> out = t.val(x);
    kernels::scale(c, out.data(), static_cast<std::size_t>(out.size()));
    return t.emit(std::move(out), {x}, [=](NodeId y) {
        return [=](TapeT<T>& tp) {
            kernels::axpy(c, tp.grad(y).data(), tp.grad_buf(x).data(),
                          static_cast<std::size_t>(tp.val(x).size()));
        };
    });
}

template <typename T>
NodeId sum(TapeT<T>& t, NodeId x) {
    TensorT<T> out = TensorT<T>::scalar(
        kernels::sum(t.val(x).data(), static_cast<std::size_t>(t.val(x).size())));
    return t.emit(std::move(out), {x}, [=](NodeId y) {
        return [=](TapeT<T>& tp) {
            T g = tp.grad(y)[0];
            T* gx = tp.grad_buf(x).data();
            for (std::int64_t i = 0; i < tp.val(x).size(); ++i) gx[i] += g;
        };
    });
}

// Mean squared error over all elements.
template <typename T>
NodeId mse(TapeT<T>& t, NodeId a, NodeId b) {
    if (!t.val(a).same_shape(t.val(b)))
        throw Error("mse shapes differ: " + shape_str(t.val(a).shape()) + " vs " +
                    shape_str(t.val(b).shape()));
    std::int64_t n = t.val(a).size();
    TensorT<T> out = TensorT<T>::scalar(
        kernels::sumsq_diff(t.val(a).data(), t.val(b).data(), static_cast<std::size_t>(n)) /
        static_cast<T>(n));
    bool na = t.needs(a), nb = t.needs(b);
    return t.emit(std::move(out), {a, b}, [=](NodeId y) {
        return [=](TapeT<T>& tp) {
            T c = tp.grad(y)[0] * T(2) / static_cast<T>(n);
            if (na)
                kernels::diff_accum(c, tp.val(a).data(), tp.val(b).data(),
                                    tp.grad_buf(a).data(), static_cast<std::size_t>(n));
            if (nb)
                kernels::diff_accum(c, tp.val(b).data(), tp.val(a).data(),
                                    tp.grad_buf(b).data(), static_cast<std::size_t>(n));
        };
    });
}

// KL(q || p) between diagonal Gaussians given as mean and log-variance
// tensors. Sums over all non-batch elements and averages over the batch
// axis (the leading axis when rank >= 2, else batch 1).
template <typename T>
NodeId kl_diag(TapeT<T>& t, NodeId mu_q, NodeId lv_q, NodeId mu_p, NodeId lv_p) {
    const auto& s = t.val(mu_q).shape();
    for (NodeId id : {lv_q, mu_p, lv_p})
        if (!t.val(id).same_shape(t.val(mu_q)))
            throw Error("kl_diag inputs must share one shape, got " + shape_str(s) +
                        " vs " + shape_str(t.val(id).shape()));
    std::int64_t n = t.val(mu_q).size();
    int B = s.size() >= 2 ? s[0] : 1;
    double acc = 0.0;
    {
        const T* mq = t.val(mu_q).data();
        const T* lq = t.val(lv_q).data();
        const T* mp = t.val(mu_p).data();
        const T* lp = t.val(lv_p).data();
        for (std::int64_t i = 0; i < n; ++i) {
            double d = static_cast<double>(mq[i]) - static_cast<double>(mp[i]);
            double evq = std::exp(static_cast<double>(lq[i]));
            double evp = std::exp(static_cast<double>(lp[i]));
            acc += 0.5 * (static_cast<double>(lp[i]) - static_cast<double>(lq[i])) +
                   (evq + d * d) / (2.0 * evp) - 0.5;
        }
    }
    TensorT<T> out = TensorT<T>::scalar(static_cast<T>(acc / B));
    bool nmq = t.needs(mu_q), nlq = t.needs(lv_q), nmp = t.needs(mu_p), nlp = t.needs(lv_p);
    return t.emit(std::move(out), {mu_q, lv_q, mu_p, lv_p}, [=](NodeId y) {
        return [=](TapeT<T>& tp) {
            T c = tp.grad(y)[0] / static_cast<T>(B);
            const T* mq = tp.val(mu_q).data();
            const T* lq = tp.val(lv_q).data();
            const T* mp = tp.val(mu_p).data();
            const T* lp = tp.val(lv_p).data();
            for (std::int64_t i = 0; i < n; ++i) {
                T d = mq[i] - mp[i];
                T evp = std::exp(lp[i]);
                if (nmq) tp.grad_buf(mu_q)[i] += c * d / evp;
                if (nmp) tp.grad_buf(mu_p)[i] -= c * d / evp;
                if (nlq) tp.grad_buf(lv_q)[i] += c * T(0.5) * (std::exp(lq[i] - lp[i]) - T(1));
                if (nlp)
                    tp.grad_buf(lv_p)[i] +=
                        c * (T(0.5) - (std::exp(lq[i]) + d * d) / (T(2) * evp));
            }
        };
    });
}

// z = mu + exp(lv / 2) * eps with eps treated as a constant draw.
template <typename T>
NodeId reparam(TapeT<T>& t, NodeId mu, NodeId lv, const TensorT<T>& eps) {
    if (!t.val(mu).same_shape(t.val(lv)) || !t.val(mu).same_shape(eps))
        throw Error("reparam inputs must share one shape");
    std::int64_t n = t.val(mu).size();
    TensorT<T> out(t.val(mu).shape());
    {
        const T* m = t.val(mu).data();
        const T* l = t.val(lv).data();
        for (std::int64_t i = 0; i < n; ++i)
            out[i] = m[i] + std::exp(l[i] / T(2)) * eps[i];
    }
    bool nm = t.needs(mu), nl = t.needs(lv);
    TensorT<T> eps_copy = eps;
    return t.emit(std::move(out), {mu, lv}, [=](NodeId y) {
        return [=, e = std::move(eps_copy)](TapeT<T>& tp) {
            const T* gy = tp.grad(y).data();
            const T* l = tp.val(lv).data();
            for (std::int64_t i = 0; i < n; ++i) {
                if (nm) tp.grad_buf(mu)[i] += gy[i];
                if (nl)
                    tp.grad_buf(lv)[i] += gy[i] * T(0.5) * std::exp(l[i] / T(2)) * e[i];
            }
        };
    });
}

// Weighted sum along one absolute axis of x; the axis disappears.
template <typename T>
NodeId project(TapeT<T>& t, NodeId x, int axis, const std::vector<T>& weights) {
    const auto& xs = t.val(x).shape();
    int r = static_cast<int>(xs.size());
    if (r < 2) throw Error("project input must have rank >= 2, got " + shape_str(xs));
    if (axis < 0 || axis >= r)
        throw Error("project axis " + std::to_string(axis) + " out of range for " +
                    shape_str(xs));
    int d = xs[static_cast<std::size_t>(axis)];
    if (static_cast<int>(weights.size()) != d)
        throw Error("project weights length " + std::to_string(weights.size()) +
                    " does not match axis extent " + std::to_string(d));
    std::int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= xs[static_cast<std::size_t>(i)];
    for (int i = axis + 1; i < r; ++i) inner *= xs[static_cast<std::size_t>(i)];
    std::vector<int> os;
    for (int i = 0; i < r; ++i)
        if (i != axis) os.push_back(xs[static_cast<std::size_t>(i)]);
    TensorT<T> out(os);
    {
        const T* xv = t.val(x).data();
        T* yv = out.data();
        for (std::int64_t o = 0; o < outer; ++o)
            for (int k = 0; k < d; ++k)
                kernels::axpy(weights[static_cast<std::size_t>(k)],
                              xv + (o * d + k) * inner, yv + o * inner,
                              static_cast<std::size_t>(inner));
    }
    std::vector<T> w = weights;
    return t.emit(std::move(out), {x}, [=](NodeId y) {
        return [=, wv = std::move(w)](TapeT<T>& tp) {
            const T* gy = tp.grad(y).data();
            T* gx = tp.grad_buf(x).data();
            for (std::int64_t o = 0; o < outer; ++o)
                for (int k = 0; k < d; ++k)
                    kernels::axpy(wv[static_cast<std::size_t>(k)], gy + o * inner,
                                  gx + (o * d + k) * inner,
                                  static_cast<std::size_t>(inner));
        };
    });
}

} // namespace ops
} // namespace deproj
