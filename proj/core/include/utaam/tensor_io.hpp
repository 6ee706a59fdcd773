#pragma once

#include <filesystem>
#include <iosfwd>

#include "utaam/tensor.hpp"

namespace utaam {

// "UTT1" tensor container: magic, u32 LE order, the u32 LE extents, then
// the float64 LE payload in flat layout (last index fastest). Round trips
// are bit-exact.

void write_tensor(std::ostream& out, const DenseTensor& x);
DenseTensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const DenseTensor& x);
DenseTensor load_tensor(const std::filesystem::path& path);

}  // namespace utaam
