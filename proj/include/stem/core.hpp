// Dense tensor types and elementary numerics shared by every stem module.
#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace stem {

using Matrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixD = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

/// Inner dimension at which products and reductions switch to 64-bit accumulation.
inline constexpr Eigen::Index kWideAccumulationThreshold = 4096;

// ---------------------------------------------------------------------------
// Errors

class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  /// Machine-readable error class, e.g. "shape_error".
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error("shape_error", what) {}
};

class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& what) : Error("parameter_error", what) {}
};

class InputError : public Error {
 public:
  explicit InputError(const std::string& what) : Error("input_error", what) {}
};

// ---------------------------------------------------------------------------
// FeatureMap

/// Video features X of shape (N, H, W, C), row-major with the frame index
/// slowest. The flattened view is M = N*H*W rows of C channels.
class FeatureMap {
 public:
  FeatureMap(std::size_t frames, std::size_t height, std::size_t width, std::size_t channels);
  FeatureMap(std::size_t frames, std::size_t height, std::size_t width, std::size_t channels,
             std::vector<float> data);
  /// Wraps an M x C row matrix; M must equal frames*height*width.
  static FeatureMap from_rows(const Eigen::Ref<const Matrix>& rows, std::size_t frames,
                              std::size_t height, std::size_t width);

  std::size_t frames() const noexcept { return frames_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t pixels_per_frame() const noexcept { return height_ * width_; }
  std::size_t rows() const noexcept { return frames_ * height_ * width_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const float> data() const noexcept { return data_; }
  float at(std::size_t n, std::size_t y, std::size_t x, std::size_t c) const {
    return data_[((n * height_ + y) * width_ + x) * channels_ + c];
  }

  /// M x C view over the whole video.
  ConstMatrixMap flat() const;
  /// HW x C view over frame n (0-based).
  ConstMatrixMap frame(std::size_t n) const;

  bool same_shape(const FeatureMap& other) const noexcept;
  std::string shape_string() const;

 private:
  std::size_t frames_;
  std::size_t height_;
  std::size_t width_;
  std::size_t channels_;
  std::vector<float> data_;
};

// ---------------------------------------------------------------------------
// Numerics

/// Product a*b. Accumulates in double when the inner dimension reaches
/// kWideAccumulationThreshold, otherwise in float.
Matrix matmul(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b);

enum class Axis {
  kFirst,   // normalize down each column (sum over rows)
  kSecond,  // normalize along each row (sum over columns)
};

/// Temperature softmax along `axis`, stabilized by max subtraction.
Matrix softmax_dim(const Eigen::Ref<const Matrix>& x, Axis axis, float temperature);

// ---------------------------------------------------------------------------
// Random numbers

struct Seed {
  std::uint64_t value = 0;
};

/// Deterministic stream on top of mt19937_64, whose output sequence is fixed
/// by the standard. Distributions are implemented here rather than taken
/// from <random> so draws agree across standard libraries.
class Rng {
 public:
  explicit Rng(Seed seed) : engine_(seed.value) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n), unbiased.
  std::uint64_t index(std::uint64_t n);
  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline Rng seeded_rng(Seed seed) { return Rng(seed); }

/// rows x cols matrix of N(0, stddev^2) draws.
Matrix random_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev = 1.0);

bool all_finite(std::span<const float> values);

}  // namespace stem
