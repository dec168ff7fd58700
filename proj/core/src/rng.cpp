#include "revnmr/rng.hpp"

#include <cmath>

namespace revnmr {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;
}

uint64_t RngStream::mix(uint64_t seed, uint64_t word) {
    // splitmix64 finalizer over seed xor a Weyl-stepped word
    uint64_t z = seed ^ (word * 0x9E3779B97F4A7C15ull);
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ull;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBull;
    z ^= z >> 31;
    return z;
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

uint64_t RngStream::below(uint64_t bound) {
    if (bound == 0) throw std::invalid_argument("RngStream::below: bound must be >= 1");
    // multiply-shift; bias is negligible for the bounds used here (< 2^32)
    return static_cast<uint64_t>((static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
}

double RngStream::normal() {
    // u1 in (0,1] so log() is finite
    double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
}

}  // namespace revnmr
