#include "utaam/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "utaam/errors.hpp"

static_assert(std::endian::native == std::endian::little,
              "UTT1 I/O assumes a little-endian host");

namespace utaam {

namespace {

constexpr char kMagic[4] = {'U', 'T', 'T', '1'};

void write_u32(std::ostream& out, std::uint32_t v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& in) {
    std::uint32_t v = 0;
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("UTT1: unexpected end of stream");
    return v;
}

}  // namespace

void write_tensor(std::ostream& out, const DenseTensor& x) {
    out.write(kMagic, sizeof kMagic);
    write_u32(out, static_cast<std::uint32_t>(x.order()));
    for (std::size_t d : x.dims()) write_u32(out, static_cast<std::uint32_t>(d));
    out.write(reinterpret_cast<const char*>(x.values().data()),
              static_cast<std::streamsize>(x.size() * sizeof(double)));
    if (!out) throw IoError("UTT1: write failed");
}

DenseTensor read_tensor(std::istream& in) {
    char magic[4] = {};
    in.read(magic, sizeof magic);
    if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0)
        throw IoError("UTT1: bad magic bytes");

    const std::uint32_t order = read_u32(in);
    if (order == 0) throw IoError("UTT1: zero-order tensor");
    std::vector<std::size_t> dims(order);
    std::size_t total = 1;
    for (auto& d : dims) {
        d = read_u32(in);
        if (d == 0) throw IoError("UTT1: zero extent");
        total *= d;
    }
    std::vector<double> values(total);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(total * sizeof(double)));
    if (!in) throw IoError("UTT1: truncated payload");
    return DenseTensor(std::move(dims), std::move(values));
}

void save_tensor(const std::filesystem::path& path, const DenseTensor& x) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path.string());
    write_tensor(out, x);
}

DenseTensor load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path.string());
    return read_tensor(in);
}

}  // namespace utaam
