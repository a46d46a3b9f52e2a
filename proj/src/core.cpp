#include "stem/core.hpp"

#include "stem/parallel.hpp"

#include <atomic>
#include <cmath>
#include <numbers>
#include <sstream>

namespace stem {

namespace {

std::atomic<int> g_threads{1};

void check_dims(std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
  if (n == 0 || h == 0 || w == 0 || c == 0) {
    std::ostringstream os;
    os << "feature map dimensions must be positive, got (" << n << ", " << h << ", " << w << ", "
       << c << ")";
    throw ShapeError(os.str());
  }
}

}  // namespace

void set_num_threads(int threads) { g_threads.store(std::max(1, threads)); }
int num_threads() noexcept { return g_threads.load(); }

FeatureMap::FeatureMap(std::size_t frames, std::size_t height, std::size_t width,
                       std::size_t channels)
    : frames_(frames), height_(height), width_(width), channels_(channels) {
  check_dims(frames, height, width, channels);
  data_.assign(frames * height * width * channels, 0.0f);
}

FeatureMap::FeatureMap(std::size_t frames, std::size_t height, std::size_t width,
                       std::size_t channels, std::vector<float> data)
    : frames_(frames), height_(height), width_(width), channels_(channels), data_(std::move(data)) {
  check_dims(frames, height, width, channels);
  const std::size_t expected = frames * height * width * channels;
  if (data_.size() != expected) {
    std::ostringstream os;
    os << "feature map buffer holds " << data_.size() << " values, shape " << shape_string()
       << " needs " << expected;
    throw ShapeError(os.str());
  }
  if (!all_finite(data_)) throw InputError("feature map contains non-finite values");
}

FeatureMap FeatureMap::from_rows(const Eigen::Ref<const Matrix>& rows, std::size_t frames,
                                 std::size_t height, std::size_t width) {
  if (static_cast<std::size_t>(rows.rows()) != frames * height * width) {
    std::ostringstream os;
    os << "cannot view " << rows.rows() << " rows as " << frames << "x" << height << "x" << width;
    throw ShapeError(os.str());
  }
  std::vector<float> data(static_cast<std::size_t>(rows.size()));
  Eigen::Map<Matrix>(data.data(), rows.rows(), rows.cols()) = rows;
  return FeatureMap(frames, height, width, static_cast<std::size_t>(rows.cols()), std::move(data));
}

ConstMatrixMap FeatureMap::flat() const {
  return ConstMatrixMap(data_.data(), static_cast<Eigen::Index>(rows()),
                        static_cast<Eigen::Index>(channels_));
}

ConstMatrixMap FeatureMap::frame(std::size_t n) const {
  if (n >= frames_) throw ParameterError("frame index out of range");
  const std::size_t hw = pixels_per_frame();
  return ConstMatrixMap(data_.data() + n * hw * channels_, static_cast<Eigen::Index>(hw),
                        static_cast<Eigen::Index>(channels_));
}

bool FeatureMap::same_shape(const FeatureMap& other) const noexcept {
  return frames_ == other.frames_ && height_ == other.height_ && width_ == other.width_ &&
         channels_ == other.channels_;
}

std::string FeatureMap::shape_string() const {
  std::ostringstream os;
  os << "(" << frames_ << ", " << height_ << ", " << width_ << ", " << channels_ << ")";
  return os.str();
}

Matrix matmul(const Eigen::Ref<const Matrix>& a, const Eigen::Ref<const Matrix>& b) {
  if (a.cols() != b.rows()) {
    std::ostringstream os;
    os << "matmul inner dimensions differ: " << a.rows() << "x" << a.cols() << " by " << b.rows()
       << "x" << b.cols();
    throw ShapeError(os.str());
  }
  if (a.cols() >= kWideAccumulationThreshold) {
    MatrixD wide = a.cast<double>() * b.cast<double>();
    return wide.cast<float>();
  }
  Matrix out(a.rows(), b.cols());
  out.noalias() = a * b;
  return out;
}

Matrix softmax_dim(const Eigen::Ref<const Matrix>& x, Axis axis, float temperature) {
  if (!(temperature > 0.0f) || !std::isfinite(temperature)) {
    throw ParameterError("softmax temperature must be positive and finite");
  }
  if (x.size() == 0) return Matrix(x.rows(), x.cols());
  if (x.array().isNaN().any()) throw InputError("softmax input contains NaN");
  if (!x.allFinite()) throw InputError("softmax input contains infinite values");

  const float inv_t = 1.0f / temperature;
  Matrix out(x.rows(), x.cols());
  if (axis == Axis::kFirst) {
    const Eigen::RowVectorXf peak = x.colwise().maxCoeff();
    out = ((x.rowwise() - peak).array() * inv_t).exp().matrix();
    const Eigen::RowVectorXd sums = out.cast<double>().colwise().sum();
    for (Eigen::Index c = 0; c < out.cols(); ++c) {
      const double s = sums(c);
      for (Eigen::Index r = 0; r < out.rows(); ++r) {
        out(r, c) = static_cast<float>(static_cast<double>(out(r, c)) / s);
      }
    }
  } else {
    const Eigen::VectorXf peak = x.rowwise().maxCoeff();
    out = ((x.colwise() - peak).array() * inv_t).exp().matrix();
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      const double s = out.row(r).cast<double>().sum();
      out.row(r) = (out.row(r).cast<double>() / s).cast<float>();
    }
  }
  return out;
}

std::uint64_t Rng::index(std::uint64_t n) {
  if (n == 0) throw ParameterError("Rng::index needs a positive range");
  // Rejection sampling on the largest multiple of n.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t draw = engine_();
  while (draw >= limit) draw = engine_();
  return draw % n;
}

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

Matrix random_normal(Rng& rng, Eigen::Index rows, Eigen::Index cols, double stddev) {
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<float>(rng.normal(0.0, stddev));
  }
  return m;
}

bool all_finite(std::span<const float> values) {
  for (float v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace stem
