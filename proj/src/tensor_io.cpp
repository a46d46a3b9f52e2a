#include "stem/tensor_io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <fstream>
#include <iterator>
#include <limits>
#include <sstream>

namespace stem {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'T', 'E', 'M'};
constexpr std::size_t kFixedHeader = 16;  // magic + version + dtype + ndim

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[at + i]) << (8 * i);
  return v;
}

std::uint64_t get_u64(std::span<const std::uint8_t> b, std::size_t at) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[at + i]) << (8 * i);
  return v;
}

std::uint64_t checked_product(const std::vector<std::uint64_t>& dims) {
  std::uint64_t n = 1;
  for (std::uint64_t d : dims) {
    if (d != 0 && n > std::numeric_limits<std::uint64_t>::max() / 4 / d) {
      throw ShapeError("tensor dimensions overflow");
    }
    n *= d;
  }
  return n;
}

}  // namespace

std::uint64_t Tensor::element_count() const { return checked_product(dims); }

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor) {
  if (tensor.element_count() != tensor.data.size()) {
    throw ShapeError("tensor data length does not match its dims");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kFixedHeader + 8 * tensor.dims.size() + 4 * tensor.data.size());
  out.insert(out.end(), kMagic.begin(), kMagic.end());
  put_u32(out, kTensorFormatVersion);
  put_u32(out, kDtypeFloat32);
  put_u32(out, static_cast<std::uint32_t>(tensor.dims.size()));
  for (std::uint64_t d : tensor.dims) put_u64(out, d);
  for (float f : tensor.data) put_u32(out, std::bit_cast<std::uint32_t>(f));
  return out;
}

Tensor decode_tensor(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) {
    throw TruncatedError("header truncated: " + std::to_string(bytes.size()) + " bytes");
  }
  if (!std::equal(kMagic.begin(), kMagic.end(), bytes.begin(),
                  [](char m, std::uint8_t b) { return static_cast<std::uint8_t>(m) == b; })) {
    throw BadMagicError("bad magic: expected \"STEM\"");
  }
  if (bytes.size() < kFixedHeader) {
    throw TruncatedError("header truncated: expected at least " + std::to_string(kFixedHeader) +
                         " bytes, got " + std::to_string(bytes.size()));
  }
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kTensorFormatVersion) {
    throw BadVersionError("unsupported format version " + std::to_string(version) +
                          " (expected " + std::to_string(kTensorFormatVersion) + ")");
  }
  const std::uint32_t dtype = get_u32(bytes, 8);
  if (dtype != kDtypeFloat32) {
    throw BadDtypeError("unsupported dtype code " + std::to_string(dtype) + " (expected 1 = float32)");
  }
  const std::uint32_t ndim = get_u32(bytes, 12);
  const std::size_t header = kFixedHeader + 8 * static_cast<std::size_t>(ndim);
  if (bytes.size() < header) {
    throw TruncatedError("dims truncated: expected " + std::to_string(header) +
                         " header bytes, got " + std::to_string(bytes.size()));
  }
  Tensor t;
  t.dims.resize(ndim);
  for (std::uint32_t i = 0; i < ndim; ++i) t.dims[i] = get_u64(bytes, kFixedHeader + 8 * i);
  const std::uint64_t count = checked_product(t.dims);
  const std::uint64_t expected = header + 4 * count;
  if (bytes.size() < expected) {
    std::ostringstream os;
    os << "payload truncated: expected " << expected << " bytes, got " << bytes.size();
    throw TruncatedError(os.str());
  }
  if (bytes.size() > expected) {
    std::ostringstream os;
    os << "unexpected trailing data: expected " << expected << " bytes, got " << bytes.size();
    throw TrailingBytesError(os.str());
  }
  t.data.resize(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    t.data[i] = std::bit_cast<float>(get_u32(bytes, header + 4 * i));
  }
  return t;
}

void write_tensor(const std::filesystem::path& path, const Tensor& tensor) {
  const auto bytes = encode_tensor(tensor);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FileError("write failed for " + path.string());
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return decode_tensor(bytes);
  } catch (const TensorIoError& e) {
    // Re-raise with the file name attached, keeping the error class.
    const std::string msg = path.string() + ": " + e.what();
    if (e.kind() == "bad_magic") throw BadMagicError(msg);
    if (e.kind() == "bad_version") throw BadVersionError(msg);
    if (e.kind() == "bad_dtype") throw BadDtypeError(msg);
    if (e.kind() == "truncated") throw TruncatedError(msg);
    if (e.kind() == "trailing_bytes") throw TrailingBytesError(msg);
    throw;
  }
}

Tensor to_tensor(const FeatureMap& f) {
  return Tensor{{f.frames(), f.height(), f.width(), f.channels()},
                std::vector<float>(f.data().begin(), f.data().end())};
}

Tensor to_tensor(const Matrix& m) {
  Tensor t{{static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
           std::vector<float>(static_cast<std::size_t>(m.size()))};
  Eigen::Map<Matrix>(t.data.data(), m.rows(), m.cols()) = m;
  return t;
}

FeatureMap to_feature_map(const Tensor& t) {
  if (t.dims.size() == 4) {
    return FeatureMap(t.dims[0], t.dims[1], t.dims[2], t.dims[3], t.data);
  }
  if (t.dims.size() == 2) return FeatureMap(t.dims[0], 1, 1, t.dims[1], t.data);
  throw ShapeError("expected a 4-D (N, H, W, C) or 2-D (M, C) tensor, got " +
                   std::to_string(t.dims.size()) + " dims");
}

Matrix to_matrix(const Tensor& t) {
  if (t.dims.size() != 2) throw ShapeError("expected a 2-D tensor");
  return Eigen::Map<const Matrix>(t.data.data(), static_cast<Eigen::Index>(t.dims[0]),
                                  static_cast<Eigen::Index>(t.dims[1]));
}

}  // namespace stem
