#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "revnmr/autograd.hpp"
#include "revnmr/tensor.hpp"

namespace revnmr {

/// Trainable tensor: the value/gradient live in a persistent leaf node so the
/// same storage is shared by every recorded forward pass.
template <class T>
struct Parameter {
    std::string name;
    NodePtr<T> node;     // value + accumulated gradient
    Tensor<T> m, v;      // Adam moments, same shape as the value
    int64_t steps = 0;

    Parameter() = default;
    Parameter(std::string n, Tensor<T> value) : name(std::move(n)), node(leaf(std::move(value))) {
        m = Tensor<T>(node->value.shape());
        v = Tensor<T>(node->value.shape());
    }

    Tensor<T>& value() { return node->value; }
    const Tensor<T>& value() const { return node->value; }
    Tensor<T>& grad() { return node->grad; }
    const Tensor<T>& grad() const { return node->grad; }
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// One Adam update with bias correction over every parameter; gradients are
/// zeroed afterwards. Rejects non-finite gradients before touching any value.
template <class T>
void adam_step(std::vector<Parameter<T>*>& params, const AdamConfig& cfg = {}) {
    for (Parameter<T>* p : params)
        if (!p->grad().all_finite())
            throw std::runtime_error("adam_step: non-finite gradient in parameter '" + p->name + "'");

    for (Parameter<T>* p : params) {
        p->steps += 1;
        const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(p->steps));
        const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(p->steps));
        Tensor<T>& val = p->value();
        Tensor<T>& g = p->grad();
        for (int64_t i = 0; i < val.size(); ++i) {
            const double gi = static_cast<double>(g[i]);
            const double mi = cfg.beta1 * static_cast<double>(p->m[i]) + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * static_cast<double>(p->v[i]) + (1.0 - cfg.beta2) * gi * gi;
            p->m[i] = static_cast<T>(mi);
            p->v[i] = static_cast<T>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            val[i] = static_cast<T>(static_cast<double>(val[i]) - cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
        }
        g.fill(T(0));
    }
}

template <class T>
void zero_grads(std::vector<Parameter<T>*>& params) {
    for (Parameter<T>* p : params) p->grad().fill(T(0));
}

}  // namespace revnmr
