#pragma once

#include <cstdint>

#include "revnmr/tensor.hpp"

namespace revnmr {

/// Counter-based random stream. The full state is (seed, counter), so equal
/// states give equal draw sequences on every platform, and substreams can be
/// derived for independent consumers (one per sample, per epoch, ...).
class RngStream {
public:
    explicit RngStream(uint64_t seed = 0, uint64_t counter = 0) : seed_(seed), counter_(counter) {}

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }

    /// Stateless hash of (seed, word); used for draws and substream derivation.
    static uint64_t mix(uint64_t seed, uint64_t word);

    uint64_t next_u64() { return mix(seed_, ++counter_); }

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform();

    /// Uniform integer in [0, bound), bound >= 1.
    uint64_t below(uint64_t bound);

    /// Standard normal via Box-Muller (cosine branch only, so the state stays
    /// exactly (seed, counter)).
    double normal();

    /// Independent stream derived from this stream's seed and a tag.
    RngStream substream(uint64_t tag) const { return RngStream(mix(seed_, 0x9E6D62D06F695ABDull ^ tag)); }

    template <class T>
    void fill_normal(Tensor<T>& t, double stddev = 1.0, double mean = 0.0) {
        for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(mean + stddev * normal());
    }

    template <class T>
    void fill_uniform(Tensor<T>& t, double lo = 0.0, double hi = 1.0) {
        for (int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<T>(lo + (hi - lo) * uniform());
    }

private:
    uint64_t seed_;
    uint64_t counter_;
};

}  // namespace revnmr
