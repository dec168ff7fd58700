#include "revnmr/chem.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace revnmr {

void validate(const BondList& b) {
    if (b.atom_count < 0 || b.atom_count > kMaxAtoms)
        throw std::invalid_argument("BondList: atom count " + std::to_string(b.atom_count) + " exceeds " +
                                    std::to_string(kMaxAtoms));
    std::set<std::pair<int, int>> seen;
    for (const Bond& bd : b.bonds) {
        if (bd.i >= bd.j)
            throw std::invalid_argument("BondList: bond (" + std::to_string(bd.i) + "," + std::to_string(bd.j) +
                                        ") must have i < j");
        if (bd.i < 0 || bd.j >= b.atom_count)
            throw std::invalid_argument("BondList: bond (" + std::to_string(bd.i) + "," + std::to_string(bd.j) +
                                        ") out of range for atom count " + std::to_string(b.atom_count));
        if (bd.order < 1 || bd.order > 3)
            throw std::invalid_argument("BondList: bond order " + std::to_string(bd.order) +
                                        " outside {1,2,3}");
        if (!seen.insert({bd.i, bd.j}).second)
            throw std::invalid_argument("BondList: duplicate bond (" + std::to_string(bd.i) + "," +
                                        std::to_string(bd.j) + ")");
    }
}

BondCode bonds_to_code(const BondList& b) {
    validate(b);
    BondCode c;
    for (const Bond& bd : b.bonds)
        c.codes[pair_index(bd.i, bd.j)] = static_cast<uint8_t>(bd.order + (bd.aromatic ? 5 : 0));
    return c;
}

BondList code_to_bonds(const BondCode& c) {
    BondList out;
    int max_j = -1;
    int idx = 0;
    for (int i = 0; i < kMaxAtoms - 1; ++i) {
        for (int j = i + 1; j < kMaxAtoms; ++j, ++idx) {
            const int v = c.codes[idx];
            if (v == 0) continue;
            if (v == 4 || v == 5 || v > 8)
                throw std::invalid_argument("BondCode: illegal code " + std::to_string(v) + " at pair (" +
                                            std::to_string(i) + "," + std::to_string(j) + ")");
            const bool arom = v > 3;
            out.bonds.push_back({i, j, arom ? v - 5 : v, arom});
            max_j = std::max(max_j, j);
        }
    }
    out.atom_count = max_j + 1;
    return out;
}

SpectrumBins bin_peaks(const PeakList& peaks) {
    SpectrumBins bins;
    for (double s : peaks) {
        if (!std::isfinite(s)) throw std::invalid_argument("bin_peaks: non-finite chemical shift");
        int bin;
        if (s < 0.0) {
            bin = 0;
        } else if (s >= kShiftCeiling) {
            bin = kBinCount - 1;
        } else {
            // the 1e-9 slack keeps exact multiples of 0.2 in their own bin
            bin = std::min(kBinCount - 2, static_cast<int>(std::floor(s / kBinWidth + 1e-9)) + 1);
        }
        bins.set(static_cast<size_t>(bin));
    }
    return bins;
}

SpectrumCode compress_code(const SpectrumBins& bins) {
    SpectrumCode code;
    for (int g = 0; g < kCodeBits; ++g) {
        bool any = false;
        for (int k = 0; k < kCodeGroup; ++k) any = any || bins[static_cast<size_t>(kCodeGroup * g + k)];
        if (any) code.set(static_cast<size_t>(g));
    }
    return code;
}

std::string bits_to_string(const SpectrumBins& bins) {
    std::string s(kBinCount, '0');
    for (int i = 0; i < kBinCount; ++i)
        if (bins[static_cast<size_t>(i)]) s[static_cast<size_t>(i)] = '1';
    return s;
}

std::string code_to_string(const SpectrumCode& code) {
    std::string s(kCodeBits, '0');
    for (int i = 0; i < kCodeBits; ++i)
        if (code[static_cast<size_t>(i)]) s[static_cast<size_t>(i)] = '1';
    return s;
}

SpectrumCode code_from_string(const std::string& s) {
    if (s.size() != kCodeBits)
        throw std::invalid_argument("spectrum code must be exactly 128 characters, got " +
                                    std::to_string(s.size()));
    SpectrumCode code;
    for (int i = 0; i < kCodeBits; ++i) {
        const char ch = s[static_cast<size_t>(i)];
        if (ch == '1') code.set(static_cast<size_t>(i));
        else if (ch != '0')
            throw std::invalid_argument(std::string("spectrum code contains illegal character '") + ch + "'");
    }
    return code;
}

}  // namespace revnmr
