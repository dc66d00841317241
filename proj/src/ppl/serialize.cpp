#include "ppl/serialize.hpp"

#include <bit>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include "ppl/error.hpp"

namespace ppl {

namespace {

constexpr char kMagic[4] = {'P', 'T', 'N', 'S'};

template <class T>
void put_le(std::ostream& out, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  unsigned char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  out.write(reinterpret_cast<const char*>(bytes), sizeof(T));
}

template <class T>
T get_le(std::istream& in) {
  unsigned char bytes[sizeof(T)];
  if (!in.read(reinterpret_cast<char*>(bytes), sizeof(T))) {
    throw SerializationError("truncated tensor record");
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(bytes[i], bytes[sizeof(T) - 1 - i]);
  }
  T value;
  std::memcpy(&value, bytes, sizeof(T));
  return value;
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  out.write(kMagic, 4);
  put_le<std::uint16_t>(out, kTensorRecordVersion);
  put_le<std::uint16_t>(out, static_cast<std::uint16_t>(t.rank()));
  for (auto e : t.shape()) put_le<std::uint64_t>(out, e);
  for (double v : t.data()) put_le<double>(out, v);
}

Tensor read_tensor(std::istream& in) {
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw SerializationError("bad tensor record magic");
  }
  const auto version = get_le<std::uint16_t>(in);
  if (version != kTensorRecordVersion) {
    throw SerializationError("unsupported tensor record version " + std::to_string(version));
  }
  const auto rank = get_le<std::uint16_t>(in);
  Shape shape(rank);
  for (auto& e : shape) e = static_cast<std::size_t>(get_le<std::uint64_t>(in));
  std::vector<double> data(shape_numel(shape));
  for (auto& v : data) v = get_le<double>(in);
  return Tensor::from_data(std::move(data), std::move(shape));
}

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  std::ostringstream os(std::ios::binary);
  write_tensor(os, t);
  const std::string s = os.str();
  return {s.begin(), s.end()};
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  std::istringstream is(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  return read_tensor(is);
}

}  // namespace ppl
