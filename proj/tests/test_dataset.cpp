#include <ostream>

#include "doctest.h"

#include <cmath>
#include <sstream>

#include "revnmr/dataset.hpp"

using namespace revnmr;

TEST_CASE("parse_row: canonical empty row") {
    const std::string line = "1,2," + std::string(136, '0') + "," + std::string(1024, '0');
    const DatasetRow row = parse_row(line);
    CHECK(row.molecule_id == 1);
    CHECK(row.spectrum_id == 2);
    CHECK(code_to_bonds(row.bond_code).bonds.empty());
    CHECK(row.bins.none());
    CHECK(serialize_row(row) == line);
}

TEST_CASE("parse_row: aromatic code 6 at the first pair") {
    std::string code(136, '0');
    code[0] = '6';
    const DatasetRow row = parse_row("7,7," + code + "," + std::string(1024, '0'));
    const BondList mol = code_to_bonds(row.bond_code);
    REQUIRE(mol.bonds.size() == 1);
    CHECK(mol.bonds[0] == Bond{0, 1, 1, true});
}

TEST_CASE("parse_row rejects malformed rows with diagnostics") {
    const std::string bits(1024, '0');
    CHECK_THROWS_WITH_AS(parse_row("1,2," + std::string(135, '0') + "," + bits, 12),
                         doctest::Contains("line 12"), std::invalid_argument);
    CHECK_THROWS_WITH_AS(parse_row("1,2," + std::string(136, '0') + "," + bits.substr(1), 3),
                         doctest::Contains("spectrum field"), std::invalid_argument);
    std::string code(136, '0');
    code[10] = '4';  // 4 and 5 are not legal bond codes
    CHECK_THROWS_WITH_AS(parse_row("1,2," + code + "," + bits, 1), doctest::Contains("illegal digit"),
                         std::invalid_argument);
    CHECK_THROWS(parse_row("1,2," + std::string(136, '0'), 1));
    CHECK_THROWS_WITH_AS(parse_row("x,2," + std::string(136, '0') + "," + bits, 4),
                         doctest::Contains("molecule id"), std::invalid_argument);
}

TEST_CASE("parse_row trims whitespace and round-trips") {
    std::string code(136, '0');
    code[1] = '2';
    std::string bits(1024, '0');
    bits[100] = '1';
    const DatasetRow row = parse_row("  10 , 20 , " + code + " , " + bits + " ");
    CHECK(row.molecule_id == 10);
    CHECK(parse_row(serialize_row(row)) == row);
}

TEST_CASE("parse_row: split-cells variant") {
    std::string line = "5,6";
    for (int k = 0; k < 136; ++k) line += (k == 3 ? ",2" : ",0");
    line += "," + std::string(1024, '0');
    const DatasetRow row = parse_row(line, 0, true);
    CHECK(row.bond_code.codes[3] == 2);
    CHECK_THROWS(parse_row(line, 0, false));
}

TEST_CASE("read_dataset: header flag and blank lines") {
    const std::string row_line = serialize_row(DatasetRow{});
    std::istringstream with_header("a,b,c,d\n" + row_line + "\n\n" + row_line + "\n");
    CsvOptions opts;
    opts.skip_header = true;
    CHECK(read_dataset(with_header, opts).size() == 2);

    std::istringstream no_header(row_line + "\n");
    CHECK(read_dataset(no_header).size() == 1);
}

TEST_CASE("estimate_entropy: degenerate and exact cases") {
    DatasetRows rows = synth_dataset(4, 3);
    rows[1] = rows[0];
    rows[2] = rows[0];
    rows[3] = rows[0];
    CHECK(estimate_entropy(rows) == 0.0);

    // one cell at p = 0.5, everything else constant
    BondList one;
    one.atom_count = 2;
    one.bonds = {{0, 1, 1, false}};
    DatasetRow with_bond;
    with_bond.bond_code = bonds_to_code(one);
    DatasetRows half = {with_bond, DatasetRow{}};
    CHECK(estimate_entropy(half) == doctest::Approx(1.0).epsilon(1e-12));

    // two cells at p = 0.25 -> 2 * H(0.25)
    BondList other;
    other.atom_count = 3;
    other.bonds = {{0, 2, 1, false}};
    DatasetRow with_other;
    with_other.bond_code = bonds_to_code(other);
    DatasetRows quarter = {with_bond, with_other, DatasetRow{}, DatasetRow{}};
    const double h25 = -0.25 * std::log2(0.25) - 0.75 * std::log2(0.75);
    CHECK(estimate_entropy(quarter) == doctest::Approx(2.0 * h25).epsilon(1e-12));

    CHECK_THROWS(estimate_entropy(DatasetRows{}));
    CHECK_THROWS(estimate_entropy(DatasetRows{DatasetRow{}}));
}

TEST_CASE("synth_dataset: determinism and generator post-conditions") {
    const DatasetRows a = synth_dataset(40, 1234);
    const DatasetRows b = synth_dataset(40, 1234);
    CHECK(a == b);
    CHECK(synth_dataset(40, 1235) != a);

    for (const DatasetRow& row : a) {
        const BondList mol = code_to_bonds(row.bond_code);
        CHECK(mol.bonds.size() >= 2);
        CHECK(mol.bonds.size() <= 16);
        CHECK(mol.atom_count <= 17);

        // the surrogate spectrum is a fixed function of the structure
        std::vector<int> degree(static_cast<size_t>(mol.atom_count), 0);
        for (const Bond& bd : mol.bonds) {
            ++degree[static_cast<size_t>(bd.i)];
            ++degree[static_cast<size_t>(bd.j)];
        }
        PeakList peaks;
        for (const Bond& bd : mol.bonds)
            peaks.push_back(synth_shift(bd.order, bd.aromatic,
                                        degree[static_cast<size_t>(bd.i)] + degree[static_cast<size_t>(bd.j)]));
        CHECK(bin_peaks(peaks) == row.bins);
    }
}

TEST_CASE("dataset file round trip") {
    const std::string path = "synth_roundtrip_test.csv";
    const DatasetRows rows = synth_dataset(12, 5);
    write_dataset_file(path, rows);
    CHECK(read_dataset_file(path) == rows);
    std::remove(path.c_str());
    CHECK_THROWS(read_dataset_file("does_not_exist_anywhere.csv"));
}
