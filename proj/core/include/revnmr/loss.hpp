#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "revnmr/autograd.hpp"
#include "revnmr/chem.hpp"
#include "revnmr/dataset.hpp"
#include "revnmr/net.hpp"

namespace revnmr {

struct LossWeights {
    double w_y = 1.0;          // distance-aware BCE on Y_latent
    double w_range = 1.0;      // out-of-[0,1] penalty on reconstructions
    double w_sparse = 0.1;     // L1 sparsity of reconstructions
    double w_forbidden = 0.1;  // activations in the always-empty region
    double w_zfree = 0.0;      // optional Z_free moment regularizer
    double bce_pos_weight = 4.0;
};

struct LossBreakdown {
    double total = 0;
    double bce = 0;
    double range = 0;
    double sparsity = 0;
    double forbidden = 0;
    double zfree = 0;

    double inverse_direction(const LossWeights& w) const {
        return w.w_range * range + w.w_sparse * sparsity + w.w_forbidden * forbidden;
    }
};

namespace detail {
inline double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
inline double sigmoid_d(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace detail

/// Smears a binary target with the kernel (0.25, 0.5, 1, 0.5, 0.25): each
/// position takes the max over offsets -2..2 of neighbor * kernel weight,
/// clipped at the boundaries. This is what makes the BCE distance-aware: a
/// prediction one or two bins off a real peak is penalized less than a far
/// miss.
template <class T>
Tensor<T> smear_bits(const std::vector<uint8_t>& bits) {
    static constexpr double kKernel[5] = {0.25, 0.5, 1.0, 0.5, 0.25};
    const int n = static_cast<int>(bits.size());
    Tensor<T> out(Shape{n});
    for (int i = 0; i < n; ++i) {
        double best = 0.0;
        for (int d = -2; d <= 2; ++d) {
            const int j = i + d;
            if (j < 0 || j >= n || !bits[static_cast<size_t>(j)]) continue;
            best = std::max(best, kKernel[d + 2]);
        }
        out[i] = static_cast<T>(best);
    }
    return out;
}

template <class T>
Tensor<T> smear_target(const SpectrumCode& code) {
    std::vector<uint8_t> bits(kCodeBits);
    for (int i = 0; i < kCodeBits; ++i) bits[static_cast<size_t>(i)] = code[static_cast<size_t>(i)] ? 1 : 0;
    return smear_bits<T>(bits);
}

/// Mean over bits of BCE(sigmoid(pred), smeared target) with the given
/// positive-class weight; numerically stable softplus formulation.
template <class T>
NodePtr<T> distance_aware_bce(NodePtr<T> pred, const Tensor<T>& smeared, double pos_weight) {
    if (pred->value.shape() != smeared.shape())
        throw std::invalid_argument("distance_aware_bce: length mismatch " + pred->value.shape().str() +
                                    " vs " + smeared.shape().str());
    const int64_t n = pred->value.size();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double p = static_cast<double>(pred->value[i]);
        const double t = static_cast<double>(smeared[i]);
        acc += pos_weight * t * detail::softplus(-p) + (1.0 - t) * detail::softplus(p);
    }
    Tensor<T> value = Tensor<T>::from(Shape{1}, {static_cast<T>(acc / static_cast<double>(n))});
    return make_op<T>(std::move(value), {pred}, [pred = pred.get(), smeared, pos_weight, n](Node<T>& node) {
        const double g = static_cast<double>(node.grad[0]) / static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) {
            const double s = detail::sigmoid_d(static_cast<double>(pred->value[i]));
            const double t = static_cast<double>(smeared[i]);
            pred->grad[i] += static_cast<T>(g * (pos_weight * t * (s - 1.0) + (1.0 - t) * s));
        }
    });
}

template <class T>
NodePtr<T> distance_aware_bce(NodePtr<T> pred, const SpectrumCode& target, double pos_weight = 4.0) {
    if (pred->value.shape() != Shape{kCodeBits})
        throw std::invalid_argument("distance_aware_bce: expected 128 logits, got " + pred->value.shape().str());
    return distance_aware_bce(std::move(pred), smear_target<T>(target), pos_weight);
}

/// Mean over cells of the squared distance from [0,1].
template <class T>
NodePtr<T> range_penalty(NodePtr<T> x) {
    return mean(square(clamp01_violation(std::move(x))));
}

/// Mean absolute activation.
template <class T>
NodePtr<T> sparsity_penalty(NodePtr<T> x) {
    return mean(absval(std::move(x)));
}

/// Mean squared activation over the cells the bond encoder can never set
/// (column < row), across all four channels.
template <class T>
NodePtr<T> forbidden_region_penalty(NodePtr<T> x) {
    if (x->value.shape() != Shape{kBondChannels, kGrid, kGrid})
        throw std::invalid_argument("forbidden_region_penalty: expected [4,16,16], got " +
                                    x->value.shape().str());
    double acc = 0.0;
    for (int ch = 0; ch < kBondChannels; ++ch)
        for (int r = 0; r < kGrid; ++r)
            for (int c = 0; c < r; ++c) {
                const double v = static_cast<double>(x->value.at(ch, r, c));
                acc += v * v;
            }
    Tensor<T> value = Tensor<T>::from(Shape{1}, {static_cast<T>(acc / kForbiddenCells)});
    return make_op<T>(std::move(value), {x}, [x = x.get()](Node<T>& node) {
        const double g = static_cast<double>(node.grad[0]) / kForbiddenCells;
        for (int ch = 0; ch < kBondChannels; ++ch)
            for (int r = 0; r < kGrid; ++r)
                for (int c = 0; c < r; ++c)
                    x->grad.at(ch, r, c) += static_cast<T>(2.0 * g * static_cast<double>(x->value.at(ch, r, c)));
    });
}

/// (mean z)^2 + (std z - 1)^2 with population std; pulls Z_free toward
/// standard-normal moments when enabled.
template <class T>
NodePtr<T> zfree_moment_penalty(NodePtr<T> z) {
    const int64_t n = z->value.size();
    if (n < 1) throw std::invalid_argument("zfree_moment_penalty: empty input");
    double m = 0.0;
    for (int64_t i = 0; i < n; ++i) m += static_cast<double>(z->value[i]);
    m /= static_cast<double>(n);
    double var = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(z->value[i]) - m;
        var += d * d;
    }
    var /= static_cast<double>(n);
    const double s = std::sqrt(var);
    Tensor<T> value = Tensor<T>::from(Shape{1}, {static_cast<T>(m * m + (s - 1.0) * (s - 1.0))});
    return make_op<T>(std::move(value), {z}, [z = z.get(), m, s, n](Node<T>& node) {
        const double g = static_cast<double>(node.grad[0]);
        const double dm = 2.0 * m / static_cast<double>(n);
        for (int64_t i = 0; i < n; ++i) {
            double d = g * dm;
            if (s > 1e-12)
                d += g * 2.0 * (s - 1.0) * (static_cast<double>(z->value[i]) - m) / (static_cast<double>(n) * s);
            z->grad[i] += static_cast<T>(d);
        }
    });
}

/// Recorded loss graph for one dataset row. The forward pass drives the BCE
/// and Z_free terms; the inverse-direction terms are computed on the
/// reconstruction from the binary target code merged with a prior draw of
/// Z_free, matching how the net is used at inversion time.
template <class T>
struct SampleLoss {
    NodePtr<T> total;
    LossBreakdown values;
};

template <class T>
SampleLoss<T> sample_loss(const DatasetRow& row, const InvertibleNet<T>& net, const LossWeights& w,
                          RngStream rng) {
    const SpectrumCode code = compress_code(row.bins);

    NodePtr<T> x = constant(bonds_to_channels<T>(code_to_bonds(row.bond_code)));
    NodePtr<T> latent = net.forward(x);
    NodePtr<T> y_pred = slice1d(latent, 0, kCodeBits);
    NodePtr<T> z_fwd = slice1d(latent, kCodeBits, kInputCells);

    NodePtr<T> term_bce = distance_aware_bce(y_pred, code, w.bce_pos_weight);

    Tensor<T> z_sample(Shape{kZFreeDim});
    rng.fill_normal(z_sample);
    NodePtr<T> lat_inv = constant(merge_latent(code_to_tensor<T>(code), z_sample));
    NodePtr<T> xhat = net.inverse(lat_inv);

    NodePtr<T> term_range = range_penalty(xhat);
    NodePtr<T> term_sparse = sparsity_penalty(xhat);
    NodePtr<T> term_forbidden = forbidden_region_penalty(xhat);
    NodePtr<T> term_zfree = zfree_moment_penalty(z_fwd);

    NodePtr<T> total = scale(term_bce, static_cast<T>(w.w_y));
    total = add(total, scale(term_range, static_cast<T>(w.w_range)));
    total = add(total, scale(term_sparse, static_cast<T>(w.w_sparse)));
    total = add(total, scale(term_forbidden, static_cast<T>(w.w_forbidden)));
    total = add(total, scale(term_zfree, static_cast<T>(w.w_zfree)));

    SampleLoss<T> out;
    out.total = std::move(total);
    out.values.bce = static_cast<double>(term_bce->value[0]);
    out.values.range = static_cast<double>(term_range->value[0]);
    out.values.sparsity = static_cast<double>(term_sparse->value[0]);
    out.values.forbidden = static_cast<double>(term_forbidden->value[0]);
    out.values.zfree = static_cast<double>(term_zfree->value[0]);
    out.values.total = static_cast<double>(out.total->value[0]);
    return out;
}

/// Batch-mean loss values (no gradients). Per-sample Z_free draws come from
/// substreams of `rng` indexed by position, so the result is independent of
/// evaluation order.
template <class T>
LossBreakdown total_loss(const DatasetRows& batch, const InvertibleNet<T>& net, const LossWeights& w,
                         RngStream rng) {
    if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
    NoGradGuard ng;
    LossBreakdown acc;
    for (size_t i = 0; i < batch.size(); ++i) {
        const LossBreakdown v = sample_loss(batch[i], net, w, rng.substream(i)).values;
        acc.total += v.total;
        acc.bce += v.bce;
        acc.range += v.range;
        acc.sparsity += v.sparsity;
        acc.forbidden += v.forbidden;
        acc.zfree += v.zfree;
    }
    const double inv = 1.0 / static_cast<double>(batch.size());
    acc.total *= inv;
    acc.bce *= inv;
    acc.range *= inv;
    acc.sparsity *= inv;
    acc.forbidden *= inv;
    acc.zfree *= inv;
    return acc;
}

}  // namespace revnmr
