#include <ostream>

#include "doctest.h"

#include <algorithm>
#include <set>

#include "revnmr/chem.hpp"
#include "revnmr/rng.hpp"

using namespace revnmr;

namespace {

// alternating single/double ring, all bonds aromatic; lexicographic pair
// order, matching what the decoders emit
BondList benzene() {
    BondList b;
    b.atom_count = 6;
    b.bonds = {{0, 1, 1, true}, {0, 5, 2, true}, {1, 2, 2, true},
               {2, 3, 1, true}, {3, 4, 2, true}, {4, 5, 1, true}};
    return b;
}

BondList random_molecule(RngStream& rng) {
    BondList mol;
    mol.atom_count = 2 + static_cast<int>(rng.below(16));
    std::set<std::pair<int, int>> seen;
    for (int k = 1; k < mol.atom_count; ++k) {
        const int parent = static_cast<int>(rng.below(static_cast<uint64_t>(k)));
        mol.bonds.push_back({parent, k, 1 + static_cast<int>(rng.below(3)), rng.below(4) == 0});
        seen.insert({parent, k});
    }
    for (int e = 0; e < 2; ++e) {
        int i = static_cast<int>(rng.below(static_cast<uint64_t>(mol.atom_count)));
        int j = static_cast<int>(rng.below(static_cast<uint64_t>(mol.atom_count)));
        if (i == j) continue;
        if (i > j) std::swap(i, j);
        if (seen.insert({i, j}).second)
            mol.bonds.push_back({i, j, 1 + static_cast<int>(rng.below(3)), rng.below(4) == 0});
    }
    std::sort(mol.bonds.begin(), mol.bonds.end(),
              [](const Bond& a, const Bond& b) { return std::pair{a.i, a.j} < std::pair{b.i, b.j}; });
    return mol;
}

}  // namespace

TEST_CASE("bonds_to_channels: empty molecule encodes to zeros") {
    const Tensor<float> x = bonds_to_channels<float>(BondList{});
    CHECK(x.shape() == Shape{4, 16, 16});
    CHECK(x.max_abs() == 0.0f);
}

TEST_CASE("bonds_to_channels: benzene channel counts") {
    const Tensor<float> x = bonds_to_channels<float>(benzene());
    int counts[4] = {0, 0, 0, 0};
    for (int ch = 0; ch < 4; ++ch)
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < 16; ++c) counts[ch] += x.at(ch, r, c) != 0.0f;
    CHECK(counts[0] == 3);
    CHECK(counts[1] == 3);
    CHECK(counts[2] == 0);
    CHECK(counts[3] == 6);
}

TEST_CASE("bonds_to_channels: double bond placement") {
    BondList ethene;
    ethene.atom_count = 2;
    ethene.bonds = {{0, 1, 2, false}};
    const Tensor<float> x = bonds_to_channels<float>(ethene);
    CHECK(x.at(1, 0, 0) == 1.0f);
    double total = 0;
    for (int64_t i = 0; i < x.size(); ++i) total += x[i];
    CHECK(total == 1.0);
}

TEST_CASE("bonds_to_channels rejects bad orders and duplicates") {
    BondList bad;
    bad.atom_count = 3;
    bad.bonds = {{0, 1, 4, false}};
    CHECK_THROWS_AS(bonds_to_channels<float>(bad), std::invalid_argument);
    bad.bonds = {{0, 1, 1, false}, {0, 1, 2, false}};
    CHECK_THROWS_AS(bonds_to_channels<float>(bad), std::invalid_argument);
    bad.bonds = {{1, 1, 1, false}};
    CHECK_THROWS_AS(bonds_to_channels<float>(bad), std::invalid_argument);
}

TEST_CASE("channels_to_bonds: zeros, round trip, argmax rule") {
    CHECK(channels_to_bonds(Tensor<float>(Shape{4, 16, 16})).bonds.empty());

    const BondList ring = benzene();
    CHECK(channels_to_bonds(bonds_to_channels<float>(ring)) == ring);

    Tensor<float> x(Shape{4, 16, 16});
    x.at(0, 2, 5) = 0.6f;
    x.at(1, 2, 5) = 0.7f;
    x.at(2, 2, 5) = 0.1f;
    x.at(3, 2, 5) = 0.9f;
    const BondList got = channels_to_bonds(x);
    REQUIRE(got.bonds.size() == 1);
    CHECK(got.bonds[0] == Bond{2, 6, 2, true});
}

TEST_CASE("channels_to_bonds ignores the sub-diagonal region") {
    Tensor<float> x(Shape{4, 16, 16});
    x.at(0, 5, 2) = 1.0f;  // forbidden cell: col < row
    CHECK(channels_to_bonds(x).bonds.empty());
}

TEST_CASE("bonds/channels round trip on random molecules") {
    RngStream rng(321);
    for (int t = 0; t < 500; ++t) {
        const BondList mol = random_molecule(rng);
        const Tensor<float> x = bonds_to_channels<float>(mol);
        CHECK(channels_to_bonds(x) == mol);

        // popcount = bonds + aromatic bonds
        int arom = 0;
        for (const Bond& b : mol.bonds) arom += b.aromatic;
        double pop = 0;
        for (int64_t i = 0; i < x.size(); ++i) pop += x[i];
        CHECK(pop == static_cast<double>(mol.bonds.size() + arom));
    }
}

TEST_CASE("bond code round trip and aromatic increment") {
    const BondList ring = benzene();
    const BondCode code = bonds_to_code(ring);
    CHECK(code.codes[pair_index(0, 1)] == 6);  // single aromatic = 1 + 5
    CHECK(code.codes[pair_index(1, 2)] == 7);
    CHECK(code_to_bonds(code) == ring);

    RngStream rng(99);
    for (int t = 0; t < 200; ++t) {
        const BondList mol = random_molecule(rng);
        CHECK(code_to_bonds(bonds_to_code(mol)) == mol);
    }
}

TEST_CASE("bin_peaks: boundary rules") {
    CHECK(bin_peaks({}).none());
    const SpectrumBins below = bin_peaks({-3.0});
    CHECK(below.count() == 1);
    CHECK(below[0]);
    CHECK(bin_peaks({204.6})[1023]);
    CHECK(bin_peaks({500.0})[1023]);
    CHECK(bin_peaks({204.5})[1022]);   // [204.4, 204.6) folds into bin 1022
    CHECK(bin_peaks({204.39})[1022]);
    CHECK(bin_peaks({0.0})[1]);
    CHECK(bin_peaks({0.2})[2]);
    CHECK_THROWS(bin_peaks({std::numeric_limits<double>::infinity()}));
}

TEST_CASE("bin_peaks: menthol shift list") {
    const PeakList menthol = {31.6, 34.6, 23.2, 50.2, 71.5, 45.1, 25.8, 21, 16.1, 22.2};
    const SpectrumBins bins = bin_peaks(menthol);

    // independent oracle for one-decimal shifts: integer tenths, halved
    std::set<int> expected;
    for (double s : menthol) {
        const int tenths = static_cast<int>(std::lround(s * 10.0));
        expected.insert(tenths / 2 + 1);
    }
    CHECK(expected == std::set<int>{159, 174, 117, 252, 358, 226, 130, 106, 81, 112});
    CHECK(bins.count() == expected.size());
    for (int bit : expected) CHECK(bins[static_cast<size_t>(bit)]);
}

TEST_CASE("bin_peaks is permutation and duplicate invariant") {
    const PeakList a = {10.0, 55.5, 199.9, 3.2};
    PeakList b = {3.2, 199.9, 10.0, 55.5, 10.0, 10.0};
    CHECK(bin_peaks(a) == bin_peaks(b));
}

TEST_CASE("compress_code: group arithmetic and monotonicity") {
    CHECK(compress_code(SpectrumBins{}).none());

    SpectrumBins last;
    last.set(1023);
    const SpectrumCode c = compress_code(last);
    CHECK(c.count() == 1);
    CHECK(c[127]);

    SpectrumBins two;
    two.set(3);
    two.set(12);
    const SpectrumCode c2 = compress_code(two);
    CHECK(c2.count() == 2);
    CHECK(c2[0]);
    CHECK(c2[1]);

    RngStream rng(17);
    for (int t = 0; t < 300; ++t) {
        SpectrumBins bins;
        for (int k = 0; k < 40; ++k) bins.set(rng.below(1024));
        const SpectrumCode base = compress_code(bins);
        SpectrumBins more = bins;
        more.set(rng.below(1024));
        const SpectrumCode grown = compress_code(more);
        CHECK((base & ~grown).none());  // adding a 1 never clears a code bit
    }
}

TEST_CASE("code string round trip and validation") {
    SpectrumCode c;
    c.set(5);
    c.set(127);
    CHECK(code_from_string(code_to_string(c)) == c);
    CHECK_THROWS(code_from_string("01"));
    std::string bad(128, '0');
    bad[3] = 'x';
    CHECK_THROWS(code_from_string(bad));
}
