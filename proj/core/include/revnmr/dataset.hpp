#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "revnmr/chem.hpp"

namespace revnmr {

/// One line of the reversibledata.csv format: molecule id, spectrum id, the
/// 136-digit bond string and the 1024-bit binned spectrum.
struct DatasetRow {
    int64_t molecule_id = 0;
    int64_t spectrum_id = 0;
    BondCode bond_code;
    SpectrumBins bins;

    bool operator==(const DatasetRow&) const = default;
};

using DatasetRows = std::vector<DatasetRow>;

struct CsvOptions {
    bool skip_header = false;  // tolerate a header line
    bool code_cells = false;   // bond code split over 136 cells instead of one string
};

/// Parses one CSV line; `line_no` is used only for diagnostics.
DatasetRow parse_row(const std::string& line, int line_no = 0, bool code_cells = false);

/// Canonical serialization; parse_row(serialize_row(r)) == r.
std::string serialize_row(const DatasetRow& row);

DatasetRows read_dataset(std::istream& in, const CsvOptions& opts = {});
DatasetRows read_dataset_file(const std::string& path, const CsvOptions& opts = {});
void write_dataset_file(const std::string& path, const DatasetRows& rows);

/// Sum over the 1024 input cells of the binary entropy of each cell's
/// empirical 1-frequency across the dataset.
double estimate_entropy(const DatasetRows& rows);

/// Deterministic surrogate dataset: random connected molecules of 3..17 atoms
/// whose pseudo-spectra are a fixed function of per-bond features, so the
/// structure-to-spectrum map is learnable.
DatasetRows synth_dataset(int n, uint64_t seed);

/// The surrogate shift assigned to a bond with the given features.
double synth_shift(int order, bool aromatic, int degree_sum);

/// Writes `content` to `path` via a temp file plus rename.
void atomic_write_file(const std::string& path, const std::string& content);

}  // namespace revnmr
