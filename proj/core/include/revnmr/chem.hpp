#pragma once

#include <array>
#include <bitset>
#include <cstdint>
#include <string>
#include <vector>

#include "revnmr/tensor.hpp"

namespace revnmr {

constexpr int kMaxAtoms = 17;
constexpr int kGrid = 16;           // the 16x16 bond plane
constexpr int kBondChannels = 4;    // single, double, triple, aromatic
constexpr int kPairCount = 136;     // upper-triangle pairs of 17 atoms
constexpr int kBinCount = 1024;     // spectrum bins of width 0.2 ppm
constexpr int kCodeBits = 128;      // OR-compressed spectrum code
constexpr int kCodeGroup = 8;       // bins per code bit
constexpr double kBinWidth = 0.2;
constexpr double kShiftCeiling = 204.6;  // >= maps to the last bin
constexpr int kInputCells = kBondChannels * kGrid * kGrid;  // 1024
constexpr int kZFreeDim = kInputCells - kCodeBits;          // 896

/// Bond between carbon atoms i < j; order 1..3, plus an aromatic flag that is
/// recorded in addition to the alternating single/double depiction.
struct Bond {
    int i = 0;
    int j = 0;
    int order = 1;
    bool aromatic = false;

    bool operator==(const Bond&) const = default;
};

struct BondList {
    std::vector<Bond> bonds;
    int atom_count = 0;

    bool operator==(const BondList&) const = default;
};

/// Throws std::invalid_argument if the list breaks any structural invariant
/// (self-bonds, duplicate pairs, order outside 1..3, indices out of range).
void validate(const BondList& b);

/// 136 digits over the upper-triangle pairs (i,j), i<j, of 17 atoms in
/// lexicographic order. 0 = no bond, 1..3 = order, 6..8 = aromatic (order+5).
struct BondCode {
    std::array<uint8_t, kPairCount> codes{};

    bool operator==(const BondCode&) const = default;
};

/// Flat index of pair (i,j), i < j, in lexicographic order.
constexpr int pair_index(int i, int j) { return i * kGrid - i * (i - 1) / 2 + (j - i - 1); }

BondCode bonds_to_code(const BondList& b);
BondList code_to_bonds(const BondCode& c);  // atom_count = highest bonded index + 1

using PeakList = std::vector<double>;
using SpectrumBins = std::bitset<kBinCount>;
using SpectrumCode = std::bitset<kCodeBits>;

/// Encodes a bond list into the 4x16x16 binary input tensor: bond (i,j,order)
/// sets channel order-1 at cell (i, j-1); aromatic bonds additionally set
/// channel 3 at the same cell.
template <class T = float>
Tensor<T> bonds_to_channels(const BondList& b) {
    validate(b);
    Tensor<T> x(Shape{kBondChannels, kGrid, kGrid});
    for (const Bond& bd : b.bonds) {
        x.at(bd.order - 1, bd.i, bd.j - 1) = T(1);
        if (bd.aromatic) x.at(3, bd.i, bd.j - 1) = T(1);
    }
    return x;
}

/// Decodes a (possibly non-binary) channel tensor back into bonds, emitted
/// in lexicographic pair order. A cell in
/// the valid region decodes to a bond when any of channels 0-2 exceeds the
/// threshold; the order is the argmax over channels 0-2 (lowest order wins
/// ties) and the aromatic flag is channel 3 > threshold.
template <class T>
BondList channels_to_bonds(const Tensor<T>& x, double threshold = 0.5) {
    if (x.shape() != Shape{kBondChannels, kGrid, kGrid})
        throw std::invalid_argument("channels_to_bonds: expected shape [4,16,16], got " + x.shape().str());
    BondList out;
    int max_j = -1;
    for (int r = 0; r < kGrid; ++r) {
        for (int c = r; c < kGrid; ++c) {
            int order = 0;
            double best = threshold;
            for (int ch = 0; ch < 3; ++ch) {
                const double v = static_cast<double>(x.at(ch, r, c));
                if (v > best) {
                    best = v;
                    order = ch + 1;
                }
            }
            if (order == 0) continue;
            const bool arom = static_cast<double>(x.at(3, r, c)) > threshold;
            out.bonds.push_back({r, c + 1, order, arom});
            max_j = std::max(max_j, c + 1);
        }
    }
    out.atom_count = max_j + 1;
    return out;
}

/// True for cells the encoder can never write (below the placement diagonal).
constexpr bool is_forbidden_cell(int row, int col) { return col < row; }
constexpr int kForbiddenCells = kBondChannels * (kGrid * (kGrid - 1) / 2);  // 480

/// Bins a peak list into 1024 bins of width 0.2 ppm; bin 0 is "< 0 ppm" and
/// bin 1023 is ">= 204.6 ppm".
SpectrumBins bin_peaks(const PeakList& peaks);

/// OR-compression of 8 consecutive bins into each of the 128 code bits.
SpectrumCode compress_code(const SpectrumBins& bins);

std::string bits_to_string(const SpectrumBins& bins);
std::string code_to_string(const SpectrumCode& code);
SpectrumCode code_from_string(const std::string& s);

}  // namespace revnmr
