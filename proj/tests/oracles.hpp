// Scalar-loop reference implementations used only by the tests. They work in
// double on plain vectors and share no code with the library.
#pragma once

#include "stem/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

namespace oracle {

// Row-major dense matrix.
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> v;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

inline Mat from(const stem::Matrix& m) {
  Mat out(static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols()));
  for (std::size_t i = 0; i < out.rows; ++i)
    for (std::size_t j = 0; j < out.cols; ++j)
      out(i, j) = m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  return out;
}

inline Mat from(const stem::FeatureMap& f) { return from(stem::Matrix(f.flat())); }

inline double max_abs_diff(const Mat& a, const stem::Matrix& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j)
      worst = std::max(worst, std::abs(a(i, j) - b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))));
  return worst;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < b.cols; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

// Z[k][m] = exp(mu_k . x_m / tau) / sum_j exp(mu_j . x_m / tau)
inline Mat e_step(const Mat& x, const Mat& mu, double tau) {
  Mat z(mu.rows, x.rows);
  for (std::size_t m = 0; m < x.rows; ++m) {
    std::vector<double> logit(mu.rows);
    double top = -INFINITY;
    for (std::size_t k = 0; k < mu.rows; ++k) {
      double dot = 0.0;
      for (std::size_t c = 0; c < x.cols; ++c) dot += mu(k, c) * x(m, c);
      logit[k] = dot / tau;
      top = std::max(top, logit[k]);
    }
    double denom = 0.0;
    for (std::size_t k = 0; k < mu.rows; ++k) denom += std::exp(logit[k] - top);
    for (std::size_t k = 0; k < mu.rows; ++k) z(k, m) = std::exp(logit[k] - top) / denom;
  }
  return z;
}

// mu_k = sum_i Z_ki x_i / sum_m Z_km
inline Mat m_step(const Mat& x, const Mat& z) {
  Mat mu(z.rows, x.cols);
  for (std::size_t k = 0; k < z.rows; ++k) {
    double w = 0.0;
    for (std::size_t m = 0; m < x.rows; ++m) w += z(k, m);
    for (std::size_t c = 0; c < x.cols; ++c) {
      double s = 0.0;
      for (std::size_t m = 0; m < x.rows; ++m) s += z(k, m) * x(m, c);
      mu(k, c) = s / w;
    }
  }
  return mu;
}

struct Em {
  Mat bases;
  Mat z;
};

// R alternations of E then M, plus one trailing E-step.
inline Em run_em(const Mat& x, Mat mu, double tau, int iterations) {
  for (int r = 0; r < iterations; ++r) mu = m_step(x, e_step(x, mu, tau));
  Mat z = e_step(x, mu, tau);
  return {mu, z};
}

// softmax(q k^T / sqrt(d)) v
inline Mat attend(const Mat& q, const Mat& k, const Mat& v) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols));
  Mat out(q.rows, v.cols);
  for (std::size_t i = 0; i < q.rows; ++i) {
    std::vector<double> s(k.rows);
    double top = -INFINITY;
    for (std::size_t j = 0; j < k.rows; ++j) {
      double dot = 0.0;
      for (std::size_t c = 0; c < q.cols; ++c) dot += q(i, c) * k(j, c);
      s[j] = dot * scale;
      top = std::max(top, s[j]);
    }
    double denom = 0.0;
    for (double& e : s) {
      e = std::exp(e - top);
      denom += e;
    }
    for (std::size_t j = 0; j < k.rows; ++j)
      for (std::size_t c = 0; c < v.cols; ++c) out(i, c) += s[j] / denom * v(j, c);
  }
  return out;
}

inline Mat rows_of(const Mat& m, std::size_t begin, std::size_t count) {
  Mat out(count, m.cols);
  std::copy(m.v.begin() + static_cast<std::ptrdiff_t>(begin * m.cols),
            m.v.begin() + static_cast<std::ptrdiff_t>((begin + count) * m.cols), out.v.begin());
  return out;
}

inline Mat stack(const std::vector<Mat>& parts) {
  Mat out(0, parts.front().cols);
  for (const Mat& p : parts) {
    out.v.insert(out.v.end(), p.v.begin(), p.v.end());
    out.rows += p.rows;
  }
  return out;
}

// Frame-context attention given 1-based context frames per query frame.
inline Mat context_attention(const Mat& x, std::size_t frames, const Mat& wq, const Mat& wk,
                             const Mat& wv,
                             const std::vector<std::vector<std::size_t>>& contexts) {
  const std::size_t hw = x.rows / frames;
  std::vector<Mat> out;
  for (std::size_t n = 0; n < frames; ++n) {
    std::vector<Mat> ctx;
    for (std::size_t f : contexts[n]) ctx.push_back(rows_of(x, (f - 1) * hw, hw));
    const Mat kv = stack(ctx);
    out.push_back(attend(matmul(rows_of(x, n * hw, hw), wq), matmul(kv, wk), matmul(kv, wv)));
  }
  return stack(out);
}

inline double mse(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

inline double psnr(const std::vector<double>& a, const std::vector<double>& b, double peak) {
  const double e = mse(a, b);
  if (e == 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(peak * peak / e));
}

// Frame `n` of a video stored as (N, H, W, C) doubles.
struct Video {
  std::size_t n = 0, h = 0, w = 0, c = 0;
  std::vector<double> v;
  double at(std::size_t f, std::size_t y, std::size_t x, std::size_t ch) const {
    return v[((f * h + y) * w + x) * c + ch];
  }
};

inline Video video_of(const stem::FeatureMap& f) {
  Video out{f.frames(), f.height(), f.width(), f.channels(), {}};
  for (float x : f.data()) out.v.push_back(x);
  return out;
}

inline std::vector<double> frame_values(const Video& v, std::size_t f) {
  const std::size_t len = v.h * v.w * v.c;
  return std::vector<double>(v.v.begin() + static_cast<std::ptrdiff_t>(f * len),
                             v.v.begin() + static_cast<std::ptrdiff_t>((f + 1) * len));
}

// Direct 2-D Gaussian window SSIM, one channel at a time, valid positions only.
inline double ssim(const Video& a, const Video& b, std::size_t f, double peak) {
  const int r = 5;
  double g[11][11];
  double gsum = 0.0;
  for (int i = -r; i <= r; ++i)
    for (int j = -r; j <= r; ++j) {
      g[i + r][j + r] = std::exp(-(i * i + j * j) / (2.0 * 1.5 * 1.5));
      gsum += g[i + r][j + r];
    }
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  double total = 0.0;
  for (std::size_t ch = 0; ch < a.c; ++ch) {
    double acc = 0.0;
    std::size_t count = 0;
    for (std::size_t y = r; y + r < a.h; ++y)
      for (std::size_t x = r; x + r < a.w; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int i = -r; i <= r; ++i)
          for (int j = -r; j <= r; ++j) {
            const double wgt = g[i + r][j + r] / gsum;
            const double va = a.at(f, y + i, x + j, ch);
            const double vb = b.at(f, y + i, x + j, ch);
            ma += wgt * va;
            mb += wgt * vb;
            saa += wgt * va * va;
            sbb += wgt * vb * vb;
            sab += wgt * va * vb;
          }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        acc += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
    total += acc / static_cast<double>(count);
  }
  return total / static_cast<double>(a.c);
}

// Frame f sampled at p - flow(p), bilinear, clamped to the border.
inline Video warp(const Video& v, const std::vector<double>& flow) {
  Video out{v.n - 1, v.h, v.w, v.c, {}};
  out.v.resize(out.n * v.h * v.w * v.c);
  for (std::size_t f = 0; f + 1 < v.n; ++f)
    for (std::size_t y = 0; y < v.h; ++y)
      for (std::size_t x = 0; x < v.w; ++x) {
        const std::size_t fi = ((f * v.h + y) * v.w + x) * 2;
        const double sx = static_cast<double>(x) - flow[fi];
        const double sy = static_cast<double>(y) - flow[fi + 1];
        const double cx = std::clamp(sx, 0.0, static_cast<double>(v.w - 1));
        const double cy = std::clamp(sy, 0.0, static_cast<double>(v.h - 1));
        const auto x0 = static_cast<std::size_t>(std::floor(cx));
        const auto y0 = static_cast<std::size_t>(std::floor(cy));
        const std::size_t x1 = std::min(x0 + 1, v.w - 1), y1 = std::min(y0 + 1, v.h - 1);
        const double ax = cx - static_cast<double>(x0), ay = cy - static_cast<double>(y0);
        for (std::size_t ch = 0; ch < v.c; ++ch) {
          const double top = (1 - ax) * v.at(f, y0, x0, ch) + ax * v.at(f, y0, x1, ch);
          const double bot = (1 - ax) * v.at(f, y1, x0, ch) + ax * v.at(f, y1, x1, ch);
          out.v[((f * v.h + y) * v.w + x) * v.c + ch] = (1 - ay) * top + ay * bot;
        }
      }
  return out;
}

inline std::vector<double> warp_error(const Video& v, const std::vector<double>& flow) {
  const Video w = warp(v, flow);
  std::vector<double> out;
  for (std::size_t f = 0; f + 1 < v.n; ++f) out.push_back(mse(frame_values(w, f), frame_values(v, f + 1)));
  return out;
}

inline std::vector<double> cosine_map(const Video& a, const Video& b, std::size_t f) {
  std::vector<double> out;
  for (std::size_t y = 0; y < a.h; ++y)
    for (std::size_t x = 0; x < a.w; ++x) {
      double dot = 0, na = 0, nb = 0;
      for (std::size_t c = 0; c < a.c; ++c) {
        dot += a.at(f, y, x, c) * b.at(f, y, x, c);
        na += a.at(f, y, x, c) * a.at(f, y, x, c);
        nb += b.at(f, y, x, c) * b.at(f, y, x, c);
      }
      out.push_back(na == 0 || nb == 0 ? 0.0 : dot / std::sqrt(na * nb));
    }
  return out;
}

// Cumulative alpha with alpha_0 = 1.
inline std::vector<double> alphas(const std::vector<double>& betas) {
  std::vector<double> a{1.0};
  for (double b : betas) a.push_back(a.back() * (1.0 - b));
  return a;
}

// Coefficients of the DDIM move from alpha_from to alpha_to.
struct DdimCoef {
  double scale, noise;
};

inline DdimCoef ddim(double alpha_from, double alpha_to) {
  return {std::sqrt(alpha_to / alpha_from),
          std::sqrt(1.0 / alpha_to - 1.0) - std::sqrt(1.0 / alpha_from - 1.0)};
}

}  // namespace oracle
