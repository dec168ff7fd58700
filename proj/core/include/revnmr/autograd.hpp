#pragma once

#include <functional>
#include <memory>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

#include "revnmr/tensor.hpp"

namespace revnmr {

/// Reverse-mode autodiff over a dynamically recorded DAG of tensor ops.
/// Every op has a hand-written backward; gradients are checked against
/// central finite differences (see gradcheck.hpp).
template <class T>
struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // allocated on first backward touch
    std::vector<std::shared_ptr<Node<T>>> parents;
    std::function<void(Node<T>&)> backprop;  // scatters this->grad into parents
    bool requires_grad = false;
    bool recorded = false;  // produced by a recorded forward op

    void ensure_grad() {
        if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    }
};

template <class T>
using NodePtr = std::shared_ptr<Node<T>>;

namespace detail {
inline bool& grad_enabled_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

/// Scoped switch that disables graph recording (inference mode).
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
    ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

template <class T>
NodePtr<T> constant(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    return n;
}

/// Differentiable leaf (parameter or checked input).
template <class T>
NodePtr<T> leaf(Tensor<T> v) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(v);
    n->requires_grad = true;
    n->ensure_grad();
    return n;
}

/// Builds an op node; `backprop` must scatter node.grad into parents via
/// parent->grad (allocated beforehand for parents that require grad).
template <class T>
NodePtr<T> make_op(Tensor<T> value, std::vector<NodePtr<T>> parents, std::function<void(Node<T>&)> backprop) {
    auto n = std::make_shared<Node<T>>();
    n->value = std::move(value);
    if (!grad_enabled()) return n;
    bool needs = false;
    for (const auto& p : parents) needs = needs || p->requires_grad;
    n->recorded = true;
    n->requires_grad = needs;
    if (needs) {
        n->parents = std::move(parents);
        n->backprop = std::move(backprop);
    }
    return n;
}

/// Runs reverse-mode accumulation from `root`, seeding with `out_grad`.
/// Leaf gradients accumulate across calls (zeroed by the optimizer step).
template <class T>
void backward(const NodePtr<T>& root, const Tensor<T>& out_grad) {
    if (!root->recorded) throw std::runtime_error("backward: no recorded forward pass for this node");
    if (out_grad.shape() != root->value.shape())
        throw std::invalid_argument("backward: output-gradient shape " + out_grad.shape().str() +
                                    " does not match value shape " + root->value.shape().str());

    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<std::pair<Node<T>*, size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            Node<T>* p = node->parents[next++].get();
            if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    for (int64_t i = 0; i < out_grad.size(); ++i) root->grad[i] += out_grad[i];

    // `order` is a post-order (parents before children), so walk it backwards.
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node<T>* n = *it;
        if (!n->backprop) continue;
        for (auto& p : n->parents)
            if (p->requires_grad) p->ensure_grad();
        n->backprop(*n);
    }
}

template <class T>
void backward(const NodePtr<T>& root) {
    backward(root, Tensor<T>(root->value.shape(), T(1)));
}

// ---------------------------------------------------------------------------
// pointwise ops
// ---------------------------------------------------------------------------

namespace detail {
template <class T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                                    b.shape().str());
}
}  // namespace detail

template <class T>
NodePtr<T> add(NodePtr<T> a, NodePtr<T> b) {
    detail::check_same_shape("add", a->value, b->value);
    Tensor<T> out(a->value.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] + b->value[i];
    return make_op<T>(std::move(out), {a, b}, [a = a.get(), b = b.get()](Node<T>& n) {
        if (a->requires_grad)
            for (int64_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
        if (b->requires_grad)
            for (int64_t i = 0; i < n.grad.size(); ++i) b->grad[i] += n.grad[i];
    });
}

template <class T>
NodePtr<T> sub(NodePtr<T> a, NodePtr<T> b) {
    detail::check_same_shape("sub", a->value, b->value);
    Tensor<T> out(a->value.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = a->value[i] - b->value[i];
    return make_op<T>(std::move(out), {a, b}, [a = a.get(), b = b.get()](Node<T>& n) {
        if (a->requires_grad)
            for (int64_t i = 0; i < n.grad.size(); ++i) a->grad[i] += n.grad[i];
        if (b->requires_grad)
            for (int64_t i = 0; i < n.grad.size(); ++i) b->grad[i] -= n.grad[i];
    });
}

template <class T>
NodePtr<T> scale(NodePtr<T> x, T k) {
    Tensor<T> out(x->value.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = k * x->value[i];
    return make_op<T>(std::move(out), {x}, [x = x.get(), k](Node<T>& n) {
        for (int64_t i = 0; i < n.grad.size(); ++i) x->grad[i] += k * n.grad[i];
    });
}

/// ReLU; subgradient at 0 is 0.
template <class T>
NodePtr<T> relu(NodePtr<T> x) {
    Tensor<T> out(x->value.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = x->value[i] > T(0) ? x->value[i] : T(0);
    return make_op<T>(std::move(out), {x}, [x = x.get()](Node<T>& n) {
        for (int64_t i = 0; i < n.grad.size(); ++i)
            if (x->value[i] > T(0)) x->grad[i] += n.grad[i];
    });
}

template <class T>
NodePtr<T> sigmoid(NodePtr<T> x) {
    Tensor<T> out(x->value.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = static_cast<T>(1.0 / (1.0 + std::exp(-static_cast<double>(x->value[i]))));
    return make_op<T>(std::move(out), {x}, [x = x.get()](Node<T>& n) {
        for (int64_t i = 0; i < n.grad.size(); ++i) {
            T s = n.value[i];
            x->grad[i] += n.grad[i] * s * (T(1) - s);
        }
    });
}

/// |x|; subgradient at 0 is 0.
template <class T>
NodePtr<T> absval(NodePtr<T> x) {
    Tensor<T> out(x->value.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = x->value[i] < T(0) ? -x->value[i] : x->value[i];
    return make_op<T>(std::move(out), {x}, [x = x.get()](Node<T>& n) {
        for (int64_t i = 0; i < n.grad.size(); ++i) {
            if (x->value[i] > T(0)) x->grad[i] += n.grad[i];
            else if (x->value[i] < T(0)) x->grad[i] -= n.grad[i];
        }
    });
}

template <class T>
NodePtr<T> square(NodePtr<T> x) {
    Tensor<T> out(x->value.shape());
    for (int64_t i = 0; i < out.size(); ++i) out[i] = x->value[i] * x->value[i];
    return make_op<T>(std::move(out), {x}, [x = x.get()](Node<T>& n) {
        for (int64_t i = 0; i < n.grad.size(); ++i) x->grad[i] += T(2) * x->value[i] * n.grad[i];
    });
}

/// Distance of each cell from the [0,1] interval: max(0, x-1) + max(0, -x).
template <class T>
NodePtr<T> clamp01_violation(NodePtr<T> x) {
    Tensor<T> out(x->value.shape());
    for (int64_t i = 0; i < out.size(); ++i) {
        T v = x->value[i];
        out[i] = (v > T(1) ? v - T(1) : T(0)) + (v < T(0) ? -v : T(0));
    }
    return make_op<T>(std::move(out), {x}, [x = x.get()](Node<T>& n) {
        for (int64_t i = 0; i < n.grad.size(); ++i) {
            if (x->value[i] > T(1)) x->grad[i] += n.grad[i];
            else if (x->value[i] < T(0)) x->grad[i] -= n.grad[i];
        }
    });
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <class T>
NodePtr<T> sum(NodePtr<T> x) {
    T s = T(0);
    for (int64_t i = 0; i < x->value.size(); ++i) s += x->value[i];
    return make_op<T>(Tensor<T>::from(Shape{1}, {s}), {x}, [x = x.get()](Node<T>& n) {
        T g = n.grad[0];
        for (int64_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
    });
}

template <class T>
NodePtr<T> mean(NodePtr<T> x) {
    const T inv = T(1) / static_cast<T>(x->value.size());
    T s = T(0);
    for (int64_t i = 0; i < x->value.size(); ++i) s += x->value[i];
    return make_op<T>(Tensor<T>::from(Shape{1}, {s * inv}), {x}, [x = x.get(), inv](Node<T>& n) {
        T g = n.grad[0] * inv;
        for (int64_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
    });
}

// ---------------------------------------------------------------------------
// structural ops (rank-3 channel split/concat, rank-1 slices, reshape)
// ---------------------------------------------------------------------------

template <class T>
NodePtr<T> reshape(NodePtr<T> x, Shape shape) {
    if (shape.numel() != x->value.shape().numel())
        throw std::invalid_argument("reshape: element count mismatch " + x->value.shape().str() + " -> " +
                                    shape.str());
    std::vector<T> d(x->value.data(), x->value.data() + x->value.size());
    return make_op<T>(Tensor<T>::from(shape, std::move(d)), {x}, [x = x.get()](Node<T>& n) {
        for (int64_t i = 0; i < n.grad.size(); ++i) x->grad[i] += n.grad[i];
    });
}

template <class T>
NodePtr<T> slice_channels(NodePtr<T> x, int c0, int c1) {
    const Shape& s = x->value.shape();
    if (s.rank() != 3) throw std::invalid_argument("slice_channels: expected rank-3, got " + s.str());
    if (c0 < 0 || c1 > s.dim(0) || c0 >= c1) throw std::invalid_argument("slice_channels: bad channel range");
    const int64_t plane = static_cast<int64_t>(s.dim(1)) * s.dim(2);
    Tensor<T> out(Shape{c1 - c0, s.dim(1), s.dim(2)});
    for (int64_t i = 0; i < out.size(); ++i) out[i] = x->value[c0 * plane + i];
    return make_op<T>(std::move(out), {x}, [x = x.get(), c0, plane](Node<T>& n) {
        for (int64_t i = 0; i < n.grad.size(); ++i) x->grad[c0 * plane + i] += n.grad[i];
    });
}

template <class T>
NodePtr<T> concat_channels(NodePtr<T> a, NodePtr<T> b) {
    const Shape& sa = a->value.shape();
    const Shape& sb = b->value.shape();
    if (sa.rank() != 3 || sb.rank() != 3 || sa.dim(1) != sb.dim(1) || sa.dim(2) != sb.dim(2))
        throw std::invalid_argument("concat_channels: incompatible shapes " + sa.str() + " / " + sb.str());
    Tensor<T> out(Shape{sa.dim(0) + sb.dim(0), sa.dim(1), sa.dim(2)});
    const int64_t na = a->value.size();
    for (int64_t i = 0; i < na; ++i) out[i] = a->value[i];
    for (int64_t i = 0; i < b->value.size(); ++i) out[na + i] = b->value[i];
    return make_op<T>(std::move(out), {a, b}, [a = a.get(), b = b.get(), na](Node<T>& n) {
        if (a->requires_grad)
            for (int64_t i = 0; i < na; ++i) a->grad[i] += n.grad[i];
        if (b->requires_grad)
            for (int64_t i = 0; i < b->grad.size(); ++i) b->grad[i] += n.grad[na + i];
    });
}

template <class T>
NodePtr<T> slice1d(NodePtr<T> x, int64_t i0, int64_t i1) {
    if (x->value.shape().rank() != 1) throw std::invalid_argument("slice1d: expected rank-1");
    if (i0 < 0 || i1 > x->value.size() || i0 >= i1) throw std::invalid_argument("slice1d: bad range");
    std::vector<T> d(x->value.data() + i0, x->value.data() + i1);
    return make_op<T>(Tensor<T>::from(Shape{static_cast<int>(i1 - i0)}, std::move(d)), {x},
                      [x = x.get(), i0](Node<T>& n) {
                          for (int64_t i = 0; i < n.grad.size(); ++i) x->grad[i0 + i] += n.grad[i];
                      });
}

template <class T>
NodePtr<T> concat1d(NodePtr<T> a, NodePtr<T> b) {
    if (a->value.shape().rank() != 1 || b->value.shape().rank() != 1)
        throw std::invalid_argument("concat1d: expected rank-1 operands");
    const int64_t na = a->value.size();
    std::vector<T> d;
    d.reserve(static_cast<size_t>(na + b->value.size()));
    d.insert(d.end(), a->value.data(), a->value.data() + na);
    d.insert(d.end(), b->value.data(), b->value.data() + b->value.size());
    return make_op<T>(Tensor<T>::from(Shape{static_cast<int>(na + b->value.size())}, std::move(d)), {a, b},
                      [a = a.get(), b = b.get(), na](Node<T>& n) {
                          if (a->requires_grad)
                              for (int64_t i = 0; i < na; ++i) a->grad[i] += n.grad[i];
                          if (b->requires_grad)
                              for (int64_t i = 0; i < b->grad.size(); ++i) b->grad[i] += n.grad[na + i];
                      });
}

// ---------------------------------------------------------------------------
// conv2d, 3x3 kernel, zero padding 1, stride 1
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> conv2d_value(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& b) {
    const Shape& si = in.shape();
    const Shape& sw = w.shape();
    if (si.rank() != 3) throw std::invalid_argument("conv2d: input must be rank-3, got " + si.str());
    if (sw.rank() != 4 || sw.dim(2) != 3 || sw.dim(3) != 3)
        throw std::invalid_argument("conv2d: kernel must be [C_out,C_in,3,3], got " + sw.str());
    if (sw.dim(1) != si.dim(0))
        throw std::invalid_argument("conv2d: kernel C_in " + std::to_string(sw.dim(1)) +
                                    " does not match input channels " + std::to_string(si.dim(0)));
    if (b.shape().rank() != 1 || b.shape().dim(0) != sw.dim(0))
        throw std::invalid_argument("conv2d: bias must be [C_out]=" + std::to_string(sw.dim(0)) + ", got " +
                                    b.shape().str());
    const int Cout = sw.dim(0), Cin = si.dim(0), H = si.dim(1), W = si.dim(2);
    const int64_t plane = static_cast<int64_t>(H) * W;
    Tensor<T> out(Shape{Cout, H, W});
    if (H == 1 && W == 1) {
        // only the kernel center sees valid input; a plain matvec
        for (int o = 0; o < Cout; ++o) {
            const T* wp = w.data() + static_cast<int64_t>(o) * Cin * 9 + 4;
            T acc = b[o];
            for (int c = 0; c < Cin; ++c) acc += wp[c * 9] * in[c];
            out[o] = acc;
        }
        return out;
    }
    for (int o = 0; o < Cout; ++o) {
        T* op = out.data() + o * plane;
        const T bv = b[o];
        for (int64_t i = 0; i < plane; ++i) op[i] = bv;
        for (int dy = 0; dy < 3; ++dy) {
            const int y0 = std::max(0, 1 - dy), y1 = std::min(H, H + 1 - dy);
            if (y0 >= y1) continue;
            for (int dx = 0; dx < 3; ++dx) {
                const int x0 = std::max(0, 1 - dx), x1 = std::min(W, W + 1 - dx);
                if (x0 >= x1) continue;
                const T* wp = w.data() + (static_cast<int64_t>(o) * Cin * 9) + dy * 3 + dx;
                for (int c = 0; c < Cin; ++c) {
                    const T wv = wp[c * 9];
                    const T* inp = in.data() + c * plane;
                    for (int y = y0; y < y1; ++y) {
                        const T* ip = inp + (y + dy - 1) * W + (x0 + dx - 1);
                        T* orow = op + y * W + x0;
                        for (int x = 0; x < x1 - x0; ++x) orow[x] += wv * ip[x];
                    }
                }
            }
        }
    }
    return out;
}

template <class T>
NodePtr<T> conv2d(NodePtr<T> x, NodePtr<T> w, NodePtr<T> b) {
    Tensor<T> out = conv2d_value(x->value, w->value, b->value);
    const int Cout = w->value.shape().dim(0), Cin = x->value.shape().dim(0);
    const int H = x->value.shape().dim(1), W = x->value.shape().dim(2);
    return make_op<T>(std::move(out), {x, w, b},
                      [x = x.get(), w = w.get(), b = b.get(), Cout, Cin, H, W](Node<T>& n) {
                          const Tensor<T>& g = n.grad;
                          const int64_t plane = static_cast<int64_t>(H) * W;
                          if (b->requires_grad) {
                              for (int o = 0; o < Cout; ++o) {
                                  T s = T(0);
                                  const T* gp = g.data() + o * plane;
                                  for (int64_t i = 0; i < plane; ++i) s += gp[i];
                                  b->grad[o] += s;
                              }
                          }
                          if (H == 1 && W == 1) {
                              for (int o = 0; o < Cout; ++o) {
                                  const T go = g[o];
                                  const int64_t wbase = static_cast<int64_t>(o) * Cin * 9 + 4;
                                  if (w->requires_grad)
                                      for (int c = 0; c < Cin; ++c) w->grad[wbase + c * 9] += go * x->value[c];
                                  if (x->requires_grad)
                                      for (int c = 0; c < Cin; ++c) x->grad[c] += go * w->value[wbase + c * 9];
                              }
                              return;
                          }
                          for (int o = 0; o < Cout; ++o) {
                              const T* gp = g.data() + o * plane;
                              for (int dy = 0; dy < 3; ++dy) {
                                  const int y0 = std::max(0, 1 - dy), y1 = std::min(H, H + 1 - dy);
                                  if (y0 >= y1) continue;
                                  for (int dx = 0; dx < 3; ++dx) {
                                      const int x0 = std::max(0, 1 - dx), x1 = std::min(W, W + 1 - dx);
                                      if (x0 >= x1) continue;
                                      const int64_t wbase = static_cast<int64_t>(o) * Cin * 9 + dy * 3 + dx;
                                      for (int c = 0; c < Cin; ++c) {
                                          const T wv = w->value[wbase + c * 9];
                                          const T* inp = x->value.data() + c * plane;
                                          T* xgp = x->requires_grad ? x->grad.data() + c * plane : nullptr;
                                          T wacc = T(0);
                                          for (int y = y0; y < y1; ++y) {
                                              const T* grow = gp + y * W + x0;
                                              const int64_t ioff = (y + dy - 1) * W + (x0 + dx - 1);
                                              const T* irow = inp + ioff;
                                              T* xrow = xgp ? xgp + ioff : nullptr;
                                              for (int k = 0; k < x1 - x0; ++k) {
                                                  wacc += grow[k] * irow[k];
                                                  if (xrow) xrow[k] += wv * grow[k];
                                              }
                                          }
                                          if (w->requires_grad) w->grad[wbase + c * 9] += wacc;
                                      }
                                  }
                              }
                          }
                      });
}

// ---------------------------------------------------------------------------
// invertible space-to-depth (2x2 block -> 4 channels, TL,TR,BL,BR order)
// ---------------------------------------------------------------------------

template <class T>
Tensor<T> psi_forward_value(const Tensor<T>& in) {
    const Shape& s = in.shape();
    if (s.rank() != 3) throw std::invalid_argument("psi_forward: expected rank-3, got " + s.str());
    const int C = s.dim(0), H = s.dim(1), W = s.dim(2);
    if (H % 2 != 0 || W % 2 != 0)
        throw std::invalid_argument("psi_forward: spatial extents must be even, got " + s.str());
    Tensor<T> out(Shape{4 * C, H / 2, W / 2});
    for (int c = 0; c < C; ++c)
        for (int q = 0; q < 4; ++q)
            for (int y = 0; y < H / 2; ++y)
                for (int x = 0; x < W / 2; ++x)
                    out.at(4 * c + q, y, x) = in.at(c, 2 * y + (q >> 1), 2 * x + (q & 1));
    return out;
}

template <class T>
Tensor<T> psi_inverse_value(const Tensor<T>& in) {
    const Shape& s = in.shape();
    if (s.rank() != 3) throw std::invalid_argument("psi_inverse: expected rank-3, got " + s.str());
    const int C4 = s.dim(0), H = s.dim(1), W = s.dim(2);
    if (C4 % 4 != 0) throw std::invalid_argument("psi_inverse: channel count must be divisible by 4, got " + s.str());
    Tensor<T> out(Shape{C4 / 4, 2 * H, 2 * W});
    for (int c = 0; c < C4 / 4; ++c)
        for (int q = 0; q < 4; ++q)
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x)
                    out.at(c, 2 * y + (q >> 1), 2 * x + (q & 1)) = in.at(4 * c + q, y, x);
    return out;
}

template <class T>
NodePtr<T> psi_forward(NodePtr<T> x) {
    Tensor<T> out = psi_forward_value(x->value);
    return make_op<T>(std::move(out), {x}, [x = x.get()](Node<T>& n) {
        Tensor<T> g = psi_inverse_value(n.grad);
        for (int64_t i = 0; i < g.size(); ++i) x->grad[i] += g[i];
    });
}

template <class T>
NodePtr<T> psi_inverse(NodePtr<T> x) {
    Tensor<T> out = psi_inverse_value(x->value);
    return make_op<T>(std::move(out), {x}, [x = x.get()](Node<T>& n) {
        Tensor<T> g = psi_forward_value(n.grad);
        for (int64_t i = 0; i < g.size(); ++i) x->grad[i] += g[i];
    });
}

}  // namespace revnmr
