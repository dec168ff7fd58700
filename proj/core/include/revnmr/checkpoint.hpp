#pragma once

#include <string>
#include <vector>

namespace revnmr {

/// Self-describing container of named float32 arrays. Layout, all integers
/// little-endian: magic "REVNMRCP", u32 version, u32 count, then per array
/// u32 name length, name bytes, u32 rank, u32 extents, float32 payload.
struct NamedArray {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

void save_arrays(const std::string& path, const std::vector<NamedArray>& arrays);
std::vector<NamedArray> load_arrays(const std::string& path);

}  // namespace revnmr
