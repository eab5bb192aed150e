#include "ctpnet/tensor_io.hpp"

#include <bit>
#include <cstdint>
#include <istream>
#include <limits>
#include <ostream>

#include "ctpnet/errors.hpp"

namespace ctpnet {

namespace {

template <typename U>
void write_le(std::ostream& os, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFFu);
  os.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U read_le(std::istream& is) {
  unsigned char buf[sizeof(U)];
  if (!is.read(reinterpret_cast<char*>(buf), sizeof(U))) throw IoError("truncated tensor stream");
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) { write_le(os, v); }
std::uint32_t read_u32(std::istream& is) { return read_le<std::uint32_t>(is); }

void write_tensor(std::ostream& os, const Tensor& t) {
  write_u32(os, static_cast<std::uint32_t>(t.rank()));
  for (auto e : t.shape()) {
    if (e > std::numeric_limits<std::uint32_t>::max()) throw IoError("extent too large for dump");
    write_u32(os, static_cast<std::uint32_t>(e));
  }
  for (double v : t.data()) write_le(os, std::bit_cast<std::uint64_t>(v));
  if (!os) throw IoError("tensor write failed");
}

Tensor read_tensor(std::istream& is) {
  const std::uint32_t rank = read_u32(is);
  if (rank > 16) throw IoError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = read_u32(is);
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = std::bit_cast<double>(read_le<std::uint64_t>(is));
  return Tensor(std::move(shape), std::move(data));
}

}  // namespace ctpnet
