#include "revnmr/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "revnmr/rng.hpp"

namespace revnmr {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            out.push_back(trim(field));
            field.clear();
        } else {
            field += c;
        }
    }
    out.push_back(trim(field));
    return out;
}

[[noreturn]] void fail(int line_no, const std::string& msg) {
    throw std::invalid_argument("line " + std::to_string(line_no) + ": " + msg);
}

int64_t parse_id(const std::string& s, int line_no, const char* which) {
    if (s.empty()) fail(line_no, std::string(which) + " id is empty");
    try {
        size_t pos = 0;
        int64_t v = std::stoll(s, &pos);
        if (pos != s.size()) fail(line_no, std::string(which) + " id '" + s + "' is not an integer");
        return v;
    } catch (const std::invalid_argument&) {
        fail(line_no, std::string(which) + " id '" + s + "' is not an integer");
    } catch (const std::out_of_range&) {
        fail(line_no, std::string(which) + " id '" + s + "' is out of range");
    }
}

uint8_t parse_code_digit(char c, int line_no, int pos) {
    if (c < '0' || c > '8' || c == '4' || c == '5')
        fail(line_no, std::string("bond code field: illegal digit '") + c + "' at position " +
                          std::to_string(pos) + " (allowed: 0,1,2,3,6,7,8)");
    return static_cast<uint8_t>(c - '0');
}

}  // namespace

DatasetRow parse_row(const std::string& line, int line_no, bool code_cells) {
    const std::vector<std::string> fields = split_csv(line);
    const size_t expected = code_cells ? 3 + kPairCount : 4;
    if (fields.size() != expected)
        fail(line_no, "expected " + std::to_string(expected) + " comma-separated fields, got " +
                          std::to_string(fields.size()));

    DatasetRow row;
    row.molecule_id = parse_id(fields[0], line_no, "molecule");
    row.spectrum_id = parse_id(fields[1], line_no, "spectrum");

    if (code_cells) {
        for (int k = 0; k < kPairCount; ++k) {
            const std::string& f = fields[static_cast<size_t>(2 + k)];
            if (f.size() != 1)
                fail(line_no, "bond code cell " + std::to_string(k) + " must be a single digit, got '" + f + "'");
            row.bond_code.codes[static_cast<size_t>(k)] = parse_code_digit(f[0], line_no, k);
        }
    } else {
        const std::string& code = fields[2];
        if (code.size() != kPairCount)
            fail(line_no, "bond code field must be exactly " + std::to_string(kPairCount) +
                              " digits, got " + std::to_string(code.size()));
        for (int k = 0; k < kPairCount; ++k)
            row.bond_code.codes[static_cast<size_t>(k)] = parse_code_digit(code[static_cast<size_t>(k)], line_no, k);
    }

    const std::string& bits = fields.back();
    if (bits.size() != kBinCount)
        fail(line_no, "spectrum field must be exactly " + std::to_string(kBinCount) + " bits, got " +
                          std::to_string(bits.size()));
    for (int k = 0; k < kBinCount; ++k) {
        const char c = bits[static_cast<size_t>(k)];
        if (c == '1') row.bins.set(static_cast<size_t>(k));
        else if (c != '0')
            fail(line_no, std::string("spectrum field: illegal character '") + c + "' at position " +
                              std::to_string(k));
    }
    return row;
}

std::string serialize_row(const DatasetRow& row) {
    std::string out = std::to_string(row.molecule_id) + "," + std::to_string(row.spectrum_id) + ",";
    for (int k = 0; k < kPairCount; ++k) out += static_cast<char>('0' + row.bond_code.codes[static_cast<size_t>(k)]);
    out += ",";
    out += bits_to_string(row.bins);
    return out;
}

DatasetRows read_dataset(std::istream& in, const CsvOptions& opts) {
    DatasetRows rows;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (opts.skip_header && line_no == 1) continue;
        if (trim(line).empty()) continue;
        rows.push_back(parse_row(line, line_no, opts.code_cells));
    }
    return rows;
}

DatasetRows read_dataset_file(const std::string& path, const CsvOptions& opts) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open dataset file: " + path);
    return read_dataset(in, opts);
}

void write_dataset_file(const std::string& path, const DatasetRows& rows) {
    std::string content;
    for (const DatasetRow& r : rows) {
        content += serialize_row(r);
        content += '\n';
    }
    atomic_write_file(path, content);
}

double estimate_entropy(const DatasetRows& rows) {
    if (rows.size() < 2)
        throw std::invalid_argument("estimate_entropy: need at least 2 rows, got " +
                                    std::to_string(rows.size()));
    std::vector<int64_t> ones(static_cast<size_t>(kInputCells), 0);
    for (const DatasetRow& r : rows) {
        const Tensor<float> x = bonds_to_channels<float>(code_to_bonds(r.bond_code));
        for (int64_t i = 0; i < x.size(); ++i)
            if (x[i] != 0.0f) ++ones[static_cast<size_t>(i)];
    }
    const double n = static_cast<double>(rows.size());
    double bits = 0.0;
    for (int64_t c : ones) {
        const double p = static_cast<double>(c) / n;
        if (p > 0.0 && p < 1.0) bits += -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
    }
    return bits;
}

double synth_shift(int order, bool aromatic, int degree_sum) {
    const uint64_t key = static_cast<uint64_t>(order) * 1000003ull +
                         (aromatic ? 31ull : 0ull) + static_cast<uint64_t>(degree_sum) * 257ull;
    const uint64_t h = RngStream::mix(0x5EEDC0DEull, key);
    return static_cast<double>(h % 2046ull) / 10.0;  // [0, 204.5], inside [0, 204.6)
}

DatasetRows synth_dataset(int n, uint64_t seed) {
    if (n < 1) throw std::invalid_argument("synth_dataset: n must be >= 1");
    DatasetRows rows;
    rows.reserve(static_cast<size_t>(n));
    RngStream base(seed);
    for (int idx = 0; idx < n; ++idx) {
        RngStream rng = base.substream(static_cast<uint64_t>(idx));
        BondList mol;
        mol.atom_count = 3 + static_cast<int>(rng.below(15));  // 3..17

        auto draw_order = [&rng]() {
            const uint64_t r = rng.below(100);
            return r < 70 ? 1 : (r < 95 ? 2 : 3);
        };
        auto draw_aromatic = [&rng]() { return rng.below(100) < 15; };

        // spanning tree keeps the molecule connected; bond count = atoms-1
        std::set<std::pair<int, int>> pairs;
        for (int k = 1; k < mol.atom_count; ++k) {
            const int parent = static_cast<int>(rng.below(static_cast<uint64_t>(k)));
            mol.bonds.push_back({parent, k, draw_order(), draw_aromatic()});
            pairs.insert({parent, k});
        }
        const int extras = static_cast<int>(rng.below(3));
        for (int e = 0; e < extras && mol.bonds.size() < kGrid; ++e) {
            int i = static_cast<int>(rng.below(static_cast<uint64_t>(mol.atom_count)));
            int j = static_cast<int>(rng.below(static_cast<uint64_t>(mol.atom_count)));
            if (i == j) continue;
            if (i > j) std::swap(i, j);
            if (!pairs.insert({i, j}).second) continue;
            mol.bonds.push_back({i, j, draw_order(), draw_aromatic()});
        }

        std::vector<int> degree(static_cast<size_t>(mol.atom_count), 0);
        for (const Bond& b : mol.bonds) {
            ++degree[static_cast<size_t>(b.i)];
            ++degree[static_cast<size_t>(b.j)];
        }
        PeakList peaks;
        for (const Bond& b : mol.bonds)
            peaks.push_back(synth_shift(b.order, b.aromatic,
                                        degree[static_cast<size_t>(b.i)] + degree[static_cast<size_t>(b.j)]));

        DatasetRow row;
        row.molecule_id = idx + 1;
        row.spectrum_id = idx + 1;
        row.bond_code = bonds_to_code(mol);
        row.bins = bin_peaks(peaks);
        rows.push_back(std::move(row));
    }
    return rows;
}

void atomic_write_file(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot open file for writing: " + tmp);
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!out) throw std::runtime_error("write failed: " + tmp);
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0)
        throw std::runtime_error("cannot rename " + tmp + " to " + path);
}

}  // namespace revnmr
