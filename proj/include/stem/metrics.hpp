// Reconstruction and temporal-consistency metrics: PSNR, SSIM, flow-warp
// error and per-pixel feature cosine similarity.
#pragma once

#include "stem/core.hpp"

#include <map>
#include <string>
#include <vector>

namespace stem {

/// Per-pixel displacement (dx, dy) in pixels from frame n to frame n+1,
/// stored as an (N-1, H, W, 2) tensor.
class FlowField {
 public:
  FlowField(std::size_t pairs, std::size_t height, std::size_t width, std::vector<float> data);
  static FlowField constant(std::size_t pairs, std::size_t height, std::size_t width, float dx,
                            float dy);

  std::size_t pairs() const noexcept { return pairs_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  float dx(std::size_t n, std::size_t y, std::size_t x) const { return data_[index(n, y, x)]; }
  float dy(std::size_t n, std::size_t y, std::size_t x) const { return data_[index(n, y, x) + 1]; }
  std::span<const float> data() const noexcept { return data_; }

 private:
  std::size_t index(std::size_t n, std::size_t y, std::size_t x) const {
    return ((n * height_ + y) * width_ + x) * 2;
  }
  std::size_t pairs_;
  std::size_t height_;
  std::size_t width_;
  std::vector<float> data_;
};

struct MetricReport {
  std::string metric;
  std::vector<double> per_frame;
  double mean = 0.0;
  std::map<std::string, double> params;
};

/// Returned for identical inputs, and the ceiling for near-identical ones.
inline constexpr double kPsnrCeiling = 99.0;

/// 10 log10(peak^2 / MSE) over all elements, capped at kPsnrCeiling.
double psnr(std::span<const float> a, std::span<const float> b, double peak);
double mse(std::span<const float> a, std::span<const float> b);

/// Single-scale SSIM of two H x W x C frames with an 11x11 Gaussian window
/// (sigma 1.5), averaged over valid window positions and then channels.
double ssim(const FeatureMap& a, const FeatureMap& b, double peak, std::size_t frame = 0);

MetricReport psnr_per_frame(const FeatureMap& a, const FeatureMap& b, double peak);
MetricReport ssim_per_frame(const FeatureMap& a, const FeatureMap& b, double peak);

/// Frame n sampled at p - flow_n(p) with border-clamped bilinear lookups.
FeatureMap warp_frames(const FeatureMap& frames, const FlowField& flow);

/// MSE between warped frame n and frame n+1 for every pair, plus the mean.
MetricReport warp_error(const FeatureMap& frames, const FlowField& flow);

struct CosineMap {
  Matrix map;  // H x W
  double mean = 0.0;
};

/// dot(f1, f2) / (|f1| |f2|) per pixel of frame `frame`; zero-norm pixels give 0.
CosineMap cosine_similarity_map(const FeatureMap& f1, const FeatureMap& f2, std::size_t frame = 0);

}  // namespace stem
