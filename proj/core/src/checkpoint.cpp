#include "revnmr/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "revnmr/dataset.hpp"

namespace revnmr {

namespace {

constexpr char kMagic[8] = {'R', 'E', 'V', 'N', 'M', 'R', 'C', 'P'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xFF));
    out.push_back(static_cast<char>((v >> 8) & 0xFF));
    out.push_back(static_cast<char>((v >> 16) & 0xFF));
    out.push_back(static_cast<char>((v >> 24) & 0xFF));
}

class Reader {
public:
    explicit Reader(const std::string& path) : path_(path), in_(path, std::ios::binary) {
        if (!in_) throw std::runtime_error("cannot open checkpoint: " + path);
    }

    uint32_t u32(const char* what) {
        unsigned char b[4];
        read(b, 4, what);
        return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
               (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
    }

    float f32(const char* what) {
        const uint32_t bits = u32(what);
        return std::bit_cast<float>(bits);
    }

    void read(void* dst, size_t n, const char* what) {
        in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
        if (static_cast<size_t>(in_.gcount()) != n)
            throw std::runtime_error("checkpoint " + path_ + ": truncated while reading " + what +
                                     " at offset " + std::to_string(offset_));
        offset_ += n;
    }

    bool at_eof() {
        in_.peek();
        return in_.eof();
    }

    size_t offset() const { return offset_; }

private:
    std::string path_;
    std::ifstream in_;
    size_t offset_ = 0;
};

}  // namespace

void save_arrays(const std::string& path, const std::vector<NamedArray>& arrays) {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u32(out, kVersion);
    put_u32(out, static_cast<uint32_t>(arrays.size()));
    for (const NamedArray& a : arrays) {
        put_u32(out, static_cast<uint32_t>(a.name.size()));
        out += a.name;
        put_u32(out, static_cast<uint32_t>(a.shape.size()));
        size_t numel = 1;
        for (int d : a.shape) {
            put_u32(out, static_cast<uint32_t>(d));
            numel *= static_cast<size_t>(d);
        }
        if (numel != a.data.size())
            throw std::invalid_argument("save_arrays: array '" + a.name + "' shape does not match data length");
        for (float v : a.data) put_u32(out, std::bit_cast<uint32_t>(v));
    }
    atomic_write_file(path, out);
}

std::vector<NamedArray> load_arrays(const std::string& path) {
    Reader r(path);
    char magic[8];
    r.read(magic, sizeof(magic), "magic");
    if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw std::runtime_error("checkpoint " + path + ": bad magic at offset 0");
    const uint32_t version = r.u32("version");
    if (version != kVersion)
        throw std::runtime_error("checkpoint " + path + ": unsupported version " + std::to_string(version) +
                                 " at offset 8");
    const uint32_t count = r.u32("array count");
    std::vector<NamedArray> arrays;
    arrays.reserve(count);
    for (uint32_t k = 0; k < count; ++k) {
        NamedArray a;
        const uint32_t name_len = r.u32("name length");
        if (name_len > 4096)
            throw std::runtime_error("checkpoint " + path + ": implausible name length at offset " +
                                     std::to_string(r.offset() - 4));
        a.name.resize(name_len);
        if (name_len) r.read(a.name.data(), name_len, "name");
        const uint32_t rank = r.u32("rank");
        if (rank > 4)
            throw std::runtime_error("checkpoint " + path + ": array '" + a.name + "' has rank " +
                                     std::to_string(rank) + " > 4 at offset " + std::to_string(r.offset() - 4));
        size_t numel = 1;
        for (uint32_t d = 0; d < rank; ++d) {
            const uint32_t ext = r.u32("extent");
            a.shape.push_back(static_cast<int>(ext));
            numel *= ext;
        }
        a.data.resize(numel);
        for (size_t i = 0; i < numel; ++i) a.data[i] = r.f32("array data");
        arrays.push_back(std::move(a));
    }
    if (!r.at_eof())
        throw std::runtime_error("checkpoint " + path + ": trailing bytes at offset " +
                                 std::to_string(r.offset()));
    return arrays;
}

}  // namespace revnmr
