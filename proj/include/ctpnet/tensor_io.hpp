#pragma once

#include <iosfwd>

#include "ctpnet/tensor.hpp"

namespace ctpnet {

// Binary dump: rank (u32 LE), extents (u32 LE each), then float64 LE payload.
void write_tensor(std::ostream& os, const Tensor& t);
Tensor read_tensor(std::istream& is);

void write_u32(std::ostream& os, std::uint32_t v);
std::uint32_t read_u32(std::istream& is);

}  // namespace ctpnet
