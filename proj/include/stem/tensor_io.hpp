// Binary tensor files.
//
// Layout, all integers little-endian:
//   magic    4 bytes  "STEM"
//   version  u32      1
//   dtype    u32      1 = float32
//   ndim     u32
//   dims     ndim x u64
//   payload  prod(dims) x float32 LE, row-major
#pragma once

#include "stem/core.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace stem {

inline constexpr std::uint32_t kTensorFormatVersion = 1;
inline constexpr std::uint32_t kDtypeFloat32 = 1;

struct Tensor {
  std::vector<std::uint64_t> dims;
  std::vector<float> data;

  std::uint64_t element_count() const;
};

class TensorIoError : public Error {
 public:
  TensorIoError(std::string kind, const std::string& what) : Error(std::move(kind), what) {}
};

class FileError : public TensorIoError {
 public:
  explicit FileError(const std::string& what) : TensorIoError("file_error", what) {}
};
class BadMagicError : public TensorIoError {
 public:
  explicit BadMagicError(const std::string& what) : TensorIoError("bad_magic", what) {}
};
class BadVersionError : public TensorIoError {
 public:
  explicit BadVersionError(const std::string& what) : TensorIoError("bad_version", what) {}
};
class BadDtypeError : public TensorIoError {
 public:
  explicit BadDtypeError(const std::string& what) : TensorIoError("bad_dtype", what) {}
};
class TruncatedError : public TensorIoError {
 public:
  explicit TruncatedError(const std::string& what) : TensorIoError("truncated", what) {}
};
class TrailingBytesError : public TensorIoError {
 public:
  explicit TrailingBytesError(const std::string& what) : TensorIoError("trailing_bytes", what) {}
};

std::vector<std::uint8_t> encode_tensor(const Tensor& tensor);
Tensor decode_tensor(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& tensor);
Tensor read_tensor(const std::filesystem::path& path);

Tensor to_tensor(const FeatureMap& f);
Tensor to_tensor(const Matrix& m);
/// Accepts (N, H, W, C), or (M, C) which is read as N = M, H = W = 1.
FeatureMap to_feature_map(const Tensor& t);
Matrix to_matrix(const Tensor& t);

}  // namespace stem
