#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "revnmr/autograd.hpp"
#include "revnmr/checkpoint.hpp"
#include "revnmr/chem.hpp"
#include "revnmr/optim.hpp"
#include "revnmr/rng.hpp"

namespace revnmr {

/// Additive coupling over an even channel count: split x = (x1, x2) by
/// halves, output (x2, x1 + F(x2)). F is conv3x3 -> relu -> conv3x3 on the
/// half-channel slice, so forward and inverse are exact mutual inverses for
/// any parameter values.
template <class T>
struct CouplingBlock {
    int channels = 0;  // full count, even
    Parameter<T> w1, b1, w2, b2;

    CouplingBlock() = default;

    CouplingBlock(const std::string& name, int full_channels) : channels(full_channels) {
        if (channels % 2 != 0)
            throw std::invalid_argument("CouplingBlock: channel count must be even, got " +
                                        std::to_string(channels));
        const int half = channels / 2;
        w1 = Parameter<T>(name + ".conv1.weight", Tensor<T>(Shape{half, half, 3, 3}));
        b1 = Parameter<T>(name + ".conv1.bias", Tensor<T>(Shape{half}));
        w2 = Parameter<T>(name + ".conv2.weight", Tensor<T>(Shape{half, half, 3, 3}));
        b2 = Parameter<T>(name + ".conv2.bias", Tensor<T>(Shape{half}));
    }

    NodePtr<T> residual(NodePtr<T> h) const {
        return conv2d(relu(conv2d(std::move(h), w1.node, b1.node)), w2.node, b2.node);
    }

    NodePtr<T> forward(NodePtr<T> x) const {
        check_input(x->value.shape());
        const int half = channels / 2;
        NodePtr<T> x1 = slice_channels(x, 0, half);
        NodePtr<T> x2 = slice_channels(x, half, channels);
        return concat_channels(x2, add(x1, residual(x2)));
    }

    NodePtr<T> inverse(NodePtr<T> y) const {
        check_input(y->value.shape());
        const int half = channels / 2;
        NodePtr<T> y1 = slice_channels(y, 0, half);
        NodePtr<T> y2 = slice_channels(y, half, channels);
        return concat_channels(sub(y2, residual(y1)), y1);
    }

    void init_train(RngStream rng) {
        // He-scaled first conv, zero second conv: the block starts as an
        // exact channel swap, which keeps the initial stack near-identity.
        const int half = channels / 2;
        const double std1 = std::sqrt(2.0 / (9.0 * half));
        rng.fill_normal(w1.value(), std1);
        b1.value().fill(T(0));
        w2.value().fill(T(0));
        b2.value().fill(T(0));
    }

    /// Fan-in-scaled random parameters; keeps activations O(1) through the
    /// stack so round-trip and gradient tests probe the working regime.
    void randomize(RngStream rng, double gain) {
        const int half = channels / 2;
        const double std_w = gain / std::sqrt(9.0 * half);
        rng.fill_normal(w1.value(), std_w);
        rng.fill_normal(b1.value(), 0.05 * gain);
        rng.fill_normal(w2.value(), std_w);
        rng.fill_normal(b2.value(), 0.05 * gain);
    }

    std::vector<Parameter<T>*> parameters() { return {&w1, &b1, &w2, &b2}; }

private:
    void check_input(const Shape& s) const {
        if (s.rank() != 3 || s.dim(0) != channels)
            throw std::invalid_argument("CouplingBlock: expected " + std::to_string(channels) +
                                        " channels, got " + s.str());
    }
};

/// The bijection between the 4x16x16 bond encoding and a 1024-dimensional
/// latent: four stages of (space-to-depth, 2 coupling blocks) carrying shapes
/// 4x16x16 -> 16x8x8 -> 64x4x4 -> 256x2x2 -> 1024x1x1.
template <class T>
class InvertibleNet {
public:
    static constexpr int kStages = 4;
    static constexpr int kBlocksPerStage = 2;
    static constexpr int kLatentDim = kInputCells;  // 1024

    InvertibleNet() {
        int channels = kBondChannels;
        for (int s = 0; s < kStages; ++s) {
            channels *= 4;
            for (int b = 0; b < kBlocksPerStage; ++b) {
                const std::string name = "stage" + std::to_string(s) + ".block" + std::to_string(b);
                blocks_[s][b] = CouplingBlock<T>(name, channels);
            }
        }
    }

    /// Training initialization (near-identity stack).
    void init_params(RngStream rng) {
        uint64_t tag = 0;
        for (auto& stage : blocks_)
            for (auto& block : stage) block.init_train(rng.substream(tag++));
    }

    /// Fully random parameters (round-trip tests and benchmarks).
    void randomize_params(RngStream rng, double gain = 0.5) {
        uint64_t tag = 0;
        for (auto& stage : blocks_)
            for (auto& block : stage) block.randomize(rng.substream(tag++), gain);
    }

    NodePtr<T> forward(NodePtr<T> x) const {
        if (x->value.shape() != Shape{kBondChannels, kGrid, kGrid})
            throw std::invalid_argument("net forward: expected input shape [4,16,16], got " +
                                        x->value.shape().str());
        NodePtr<T> h = std::move(x);
        for (const auto& stage : blocks_) {
            h = psi_forward(std::move(h));
            for (const auto& block : stage) h = block.forward(std::move(h));
        }
        return reshape(std::move(h), Shape{kLatentDim});
    }

    NodePtr<T> inverse(NodePtr<T> latent) const {
        if (latent->value.shape() != Shape{kLatentDim})
            throw std::invalid_argument("net inverse: expected latent shape [1024], got " +
                                        latent->value.shape().str());
        NodePtr<T> h = reshape(std::move(latent), Shape{kLatentDim, 1, 1});
        for (int s = kStages - 1; s >= 0; --s) {
            for (int b = kBlocksPerStage - 1; b >= 0; --b) h = blocks_[s][b].inverse(std::move(h));
            h = psi_inverse(std::move(h));
        }
        return h;
    }

    Tensor<T> forward_value(const Tensor<T>& x) const {
        NoGradGuard ng;
        return forward(constant(x))->value;
    }

    Tensor<T> inverse_value(const Tensor<T>& latent) const {
        NoGradGuard ng;
        return inverse(constant(latent))->value;
    }

    std::vector<Parameter<T>*> parameters() {
        std::vector<Parameter<T>*> out;
        for (auto& stage : blocks_)
            for (auto& block : stage)
                for (Parameter<T>* p : block.parameters()) out.push_back(p);
        return out;
    }

    std::vector<const Parameter<T>*> parameters() const {
        std::vector<const Parameter<T>*> out;
        for (const auto& stage : blocks_)
            for (const auto& block : stage) {
                out.push_back(&block.w1);
                out.push_back(&block.b1);
                out.push_back(&block.w2);
                out.push_back(&block.b2);
            }
        return out;
    }

    CouplingBlock<T>& block(int stage, int idx) { return blocks_[stage][idx]; }

private:
    std::array<std::array<CouplingBlock<T>, kBlocksPerStage>, kStages> blocks_;
};

template <class T>
struct LatentSplit {
    Tensor<T> y_latent;  // positions 0..127
    Tensor<T> z_free;    // positions 128..1023
};

template <class T>
LatentSplit<T> split_latent(const Tensor<T>& latent) {
    if (latent.shape() != Shape{kInputCells})
        throw std::invalid_argument("split_latent: expected [1024], got " + latent.shape().str());
    LatentSplit<T> out{Tensor<T>(Shape{kCodeBits}), Tensor<T>(Shape{kZFreeDim})};
    for (int i = 0; i < kCodeBits; ++i) out.y_latent[i] = latent[i];
    for (int i = 0; i < kZFreeDim; ++i) out.z_free[i] = latent[kCodeBits + i];
    return out;
}

template <class T>
Tensor<T> merge_latent(const Tensor<T>& y, const Tensor<T>& z) {
    if (y.shape() != Shape{kCodeBits} || z.shape() != Shape{kZFreeDim})
        throw std::invalid_argument("merge_latent: expected [128] and [896], got " + y.shape().str() + " and " +
                                    z.shape().str());
    Tensor<T> latent(Shape{kInputCells});
    for (int i = 0; i < kCodeBits; ++i) latent[i] = y[i];
    for (int i = 0; i < kZFreeDim; ++i) latent[kCodeBits + i] = z[i];
    return latent;
}

template <class T>
Tensor<T> code_to_tensor(const SpectrumCode& code) {
    Tensor<T> y(Shape{kCodeBits});
    for (int i = 0; i < kCodeBits; ++i) y[i] = code[static_cast<size_t>(i)] ? T(1) : T(0);
    return y;
}

/// n i.i.d. draws of the 896-dimensional standard-normal prior over Z_free.
template <class T>
std::vector<Tensor<T>> sample_zfree(RngStream& rng, int n) {
    std::vector<Tensor<T>> out;
    out.reserve(static_cast<size_t>(n));
    for (int k = 0; k < n; ++k) {
        Tensor<T> z(Shape{kZFreeDim});
        rng.fill_normal(z);
        out.push_back(std::move(z));
    }
    return out;
}

template <class T>
void save_checkpoint(const InvertibleNet<T>& net, const std::string& path) {
    std::vector<NamedArray> arrays;
    for (const Parameter<T>* p : net.parameters()) {
        NamedArray a;
        a.name = p->name;
        const Shape& s = p->value().shape();
        for (int d = 0; d < s.rank(); ++d) a.shape.push_back(s.dim(d));
        a.data.resize(static_cast<size_t>(p->value().size()));
        for (int64_t i = 0; i < p->value().size(); ++i) a.data[static_cast<size_t>(i)] =
            static_cast<float>(p->value()[i]);
        arrays.push_back(std::move(a));
    }
    save_arrays(path, arrays);
}

template <class T>
void load_checkpoint(InvertibleNet<T>& net, const std::string& path) {
    const std::vector<NamedArray> arrays = load_arrays(path);
    std::vector<Parameter<T>*> params = net.parameters();
    if (arrays.size() != params.size())
        throw std::runtime_error("checkpoint " + path + ": expected " + std::to_string(params.size()) +
                                 " arrays, found " + std::to_string(arrays.size()));
    for (size_t k = 0; k < params.size(); ++k) {
        const NamedArray& a = arrays[k];
        Parameter<T>* p = params[k];
        if (a.name != p->name)
            throw std::runtime_error("checkpoint " + path + ": array '" + a.name + "' where '" + p->name +
                                     "' was expected");
        const Shape want = p->value().shape();
        const Shape got(a.shape);
        if (want != got)
            throw std::runtime_error("checkpoint " + path + ": array '" + a.name + "' has shape " + got.str() +
                                     ", expected " + want.str());
        for (int64_t i = 0; i < p->value().size(); ++i)
            p->value()[i] = static_cast<T>(a.data[static_cast<size_t>(i)]);
        p->grad().fill(T(0));
        p->m.fill(T(0));
        p->v.fill(T(0));
        p->steps = 0;
    }
}

}  // namespace revnmr
