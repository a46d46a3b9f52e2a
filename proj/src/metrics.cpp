#include "stem/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

namespace stem {

namespace {

constexpr int kWindow = 11;
constexpr double kWindowSigma = 1.5;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> w{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double off = i - kWindow / 2;
    w[static_cast<std::size_t>(i)] = std::exp(-off * off / (2.0 * kWindowSigma * kWindowSigma));
    sum += w[static_cast<std::size_t>(i)];
  }
  for (double& v : w) v /= sum;
  return w;
}

// Valid-mode separable filtering of an H x W plane.
Eigen::MatrixXd filter_valid(const Eigen::MatrixXd& plane, const std::array<double, kWindow>& w) {
  const Eigen::Index oh = plane.rows() - kWindow + 1;
  const Eigen::Index ow = plane.cols() - kWindow + 1;
  Eigen::MatrixXd horiz = Eigen::MatrixXd::Zero(plane.rows(), ow);
  for (int i = 0; i < kWindow; ++i) horiz += w[static_cast<std::size_t>(i)] * plane.middleCols(i, ow);
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(oh, ow);
  for (int i = 0; i < kWindow; ++i) out += w[static_cast<std::size_t>(i)] * horiz.middleRows(i, oh);
  return out;
}

Eigen::MatrixXd channel_plane(const FeatureMap& f, std::size_t n, std::size_t c) {
  Eigen::MatrixXd plane(f.height(), f.width());
  for (std::size_t y = 0; y < f.height(); ++y) {
    for (std::size_t x = 0; x < f.width(); ++x) {
      plane(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = f.at(n, y, x, c);
    }
  }
  return plane;
}

void require_same_shape(const FeatureMap& a, const FeatureMap& b, const char* what) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(what) + ": shapes " + a.shape_string() + " and " +
                     b.shape_string() + " differ");
  }
}

std::span<const float> frame_span(const FeatureMap& f, std::size_t n) {
  const std::size_t len = f.pixels_per_frame() * f.channels();
  return f.data().subspan(n * len, len);
}

void finish(MetricReport& report) {
  report.mean = report.per_frame.empty()
                    ? 0.0
                    : std::accumulate(report.per_frame.begin(), report.per_frame.end(), 0.0) /
                          static_cast<double>(report.per_frame.size());
}

float bilinear_clamped(const FeatureMap& f, std::size_t n, double sy, double sx, std::size_t c) {
  const double max_y = static_cast<double>(f.height() - 1);
  const double max_x = static_cast<double>(f.width() - 1);
  sy = std::clamp(sy, 0.0, max_y);
  sx = std::clamp(sx, 0.0, max_x);
  const auto y0 = static_cast<std::size_t>(std::floor(sy));
  const auto x0 = static_cast<std::size_t>(std::floor(sx));
  const std::size_t y1 = std::min(y0 + 1, f.height() - 1);
  const std::size_t x1 = std::min(x0 + 1, f.width() - 1);
  const double fy = sy - static_cast<double>(y0);
  const double fx = sx - static_cast<double>(x0);
  const double top = (1.0 - fx) * f.at(n, y0, x0, c) + fx * f.at(n, y0, x1, c);
  const double bottom = (1.0 - fx) * f.at(n, y1, x0, c) + fx * f.at(n, y1, x1, c);
  return static_cast<float>((1.0 - fy) * top + fy * bottom);
}

}  // namespace

FlowField::FlowField(std::size_t pairs, std::size_t height, std::size_t width,
                     std::vector<float> data)
    : pairs_(pairs), height_(height), width_(width), data_(std::move(data)) {
  if (height == 0 || width == 0) throw ShapeError("flow field needs positive spatial size");
  if (data_.size() != pairs * height * width * 2) throw ShapeError("flow buffer size mismatch");
  for (std::size_t i = 0; i < data_.size(); i += 2) {
    if (!std::isfinite(data_[i]) || !std::isfinite(data_[i + 1])) {
      throw InputError("flow field contains non-finite values");
    }
    if (std::abs(data_[i]) >= static_cast<float>(width) ||
        std::abs(data_[i + 1]) >= static_cast<float>(height)) {
      throw InputError("flow displacement exceeds the frame size");
    }
  }
}

FlowField FlowField::constant(std::size_t pairs, std::size_t height, std::size_t width, float dx,
                              float dy) {
  std::vector<float> data(pairs * height * width * 2);
  for (std::size_t i = 0; i < data.size(); i += 2) {
    data[i] = dx;
    data[i + 1] = dy;
  }
  return FlowField(pairs, height, width, std::move(data));
}

double mse(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw ShapeError("mse inputs differ in size");
  if (a.empty()) throw ShapeError("mse of empty inputs");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sum += d * d;
  }
  return sum / static_cast<double>(a.size());
}

double psnr(std::span<const float> a, std::span<const float> b, double peak) {
  if (!(peak > 0.0)) throw ParameterError("PSNR peak must be positive");
  const double err = mse(a, b);
  if (err == 0.0) return kPsnrCeiling;
  return std::min(kPsnrCeiling, 10.0 * std::log10(peak * peak / err));
}

double ssim(const FeatureMap& a, const FeatureMap& b, double peak, std::size_t frame) {
  require_same_shape(a, b, "ssim");
  if (!(peak > 0.0)) throw ParameterError("SSIM peak must be positive");
  if (a.height() < kWindow || a.width() < kWindow) {
    std::ostringstream os;
    os << "SSIM needs frames of at least " << kWindow << "x" << kWindow << ", got " << a.height()
       << "x" << a.width();
    throw ShapeError(os.str());
  }
  if (frame >= a.frames()) throw ParameterError("SSIM frame index out of range");

  static const auto window = gaussian_window();
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  double total = 0.0;
  for (std::size_t c = 0; c < a.channels(); ++c) {
    const Eigen::MatrixXd pa = channel_plane(a, frame, c);
    const Eigen::MatrixXd pb = channel_plane(b, frame, c);
    const Eigen::MatrixXd mu_a = filter_valid(pa, window);
    const Eigen::MatrixXd mu_b = filter_valid(pb, window);
    const Eigen::MatrixXd aa = filter_valid(pa.cwiseProduct(pa), window);
    const Eigen::MatrixXd bb = filter_valid(pb.cwiseProduct(pb), window);
    const Eigen::MatrixXd ab = filter_valid(pa.cwiseProduct(pb), window);

    const auto ma = mu_a.array();
    const auto mb = mu_b.array();
    const Eigen::ArrayXXd var_a = aa.array() - ma.square();
    const Eigen::ArrayXXd var_b = bb.array() - mb.square();
    const Eigen::ArrayXXd cov = ab.array() - ma * mb;
    const Eigen::ArrayXXd map = ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) /
                                ((ma.square() + mb.square() + c1) * (var_a + var_b + c2));
    total += map.mean();
  }
  return total / static_cast<double>(a.channels());
}

MetricReport psnr_per_frame(const FeatureMap& a, const FeatureMap& b, double peak) {
  require_same_shape(a, b, "psnr");
  MetricReport report{"psnr", {}, 0.0, {{"peak", peak}}};
  for (std::size_t n = 0; n < a.frames(); ++n) {
    report.per_frame.push_back(psnr(frame_span(a, n), frame_span(b, n), peak));
  }
  finish(report);
  return report;
}

MetricReport ssim_per_frame(const FeatureMap& a, const FeatureMap& b, double peak) {
  require_same_shape(a, b, "ssim");
  MetricReport report{"ssim",
                      {},
                      0.0,
                      {{"peak", peak}, {"window", kWindow}, {"sigma", kWindowSigma}}};
  for (std::size_t n = 0; n < a.frames(); ++n) report.per_frame.push_back(ssim(a, b, peak, n));
  finish(report);
  return report;
}

FeatureMap warp_frames(const FeatureMap& frames, const FlowField& flow) {
  if (frames.frames() < 2) throw ShapeError("warping needs at least two frames");
  if (flow.pairs() != frames.frames() - 1 || flow.height() != frames.height() ||
      flow.width() != frames.width()) {
    std::ostringstream os;
    os << "flow of " << flow.pairs() << "x" << flow.height() << "x" << flow.width()
       << " does not match video " << frames.shape_string();
    throw ShapeError(os.str());
  }
  const std::size_t h = frames.height();
  const std::size_t w = frames.width();
  const std::size_t ch = frames.channels();
  std::vector<float> out(flow.pairs() * h * w * ch);
  std::size_t i = 0;
  for (std::size_t n = 0; n < flow.pairs(); ++n) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double sy = static_cast<double>(y) - flow.dy(n, y, x);
        const double sx = static_cast<double>(x) - flow.dx(n, y, x);
        for (std::size_t c = 0; c < ch; ++c) out[i++] = bilinear_clamped(frames, n, sy, sx, c);
      }
    }
  }
  return FeatureMap(flow.pairs(), h, w, ch, std::move(out));
}

MetricReport warp_error(const FeatureMap& frames, const FlowField& flow) {
  const FeatureMap warped = warp_frames(frames, flow);
  MetricReport report{"warp_error", {}, 0.0, {}};
  for (std::size_t n = 0; n < warped.frames(); ++n) {
    report.per_frame.push_back(mse(frame_span(warped, n), frame_span(frames, n + 1)));
  }
  finish(report);
  return report;
}

CosineMap cosine_similarity_map(const FeatureMap& f1, const FeatureMap& f2, std::size_t frame) {
  require_same_shape(f1, f2, "cosine similarity");
  if (frame >= f1.frames()) throw ParameterError("cosine similarity frame index out of range");
  CosineMap result{Matrix(f1.height(), f1.width()), 0.0};
  double sum = 0.0;
  for (std::size_t y = 0; y < f1.height(); ++y) {
    for (std::size_t x = 0; x < f1.width(); ++x) {
      double dot = 0.0, n1 = 0.0, n2 = 0.0;
      for (std::size_t c = 0; c < f1.channels(); ++c) {
        const double a = f1.at(frame, y, x, c);
        const double b = f2.at(frame, y, x, c);
        dot += a * b;
        n1 += a * a;
        n2 += b * b;
      }
      const double cos =
          (n1 > 0.0 && n2 > 0.0) ? std::clamp(dot / (std::sqrt(n1) * std::sqrt(n2)), -1.0, 1.0) : 0.0;
      result.map(static_cast<Eigen::Index>(y), static_cast<Eigen::Index>(x)) = static_cast<float>(cos);
      sum += cos;
    }
  }
  result.mean = sum / static_cast<double>(f1.height() * f1.width());
  return result;
}

}  // namespace stem
