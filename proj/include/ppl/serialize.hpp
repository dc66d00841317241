#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "ppl/tensor.hpp"

namespace ppl {

/// Flat binary tensor record:
///   "PTNS" | u16 version | u16 rank | rank x u64 extents | numel x f64
/// All integers and floats little-endian.
inline constexpr std::uint16_t kTensorRecordVersion = 1;

void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);

}  // namespace ppl
