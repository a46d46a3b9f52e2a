#include "stem/attention.hpp"

#include "stem/parallel.hpp"

#include <cmath>
#include <sstream>

namespace stem {

namespace {

// Bounds the score block held in memory to roughly 16 MB of floats.
constexpr Eigen::Index kScoreBlockElements = Eigen::Index{1} << 22;

void check_projection(const FeatureMap& x, const ProjectionWeights& w) {
  if (x.channels() != w.input_dim()) {
    std::ostringstream os;
    os << "projection expects " << w.input_dim() << " input channels, features have "
       << x.channels();
    throw ShapeError(os.str());
  }
}

Matrix gather_frames(const Matrix& rows, const std::vector<std::size_t>& frames, std::size_t hw) {
  const auto block = static_cast<Eigen::Index>(hw);
  Matrix out(block * static_cast<Eigen::Index>(frames.size()), rows.cols());
  for (std::size_t i = 0; i < frames.size(); ++i) {
    out.middleRows(static_cast<Eigen::Index>(i) * block, block) =
        rows.middleRows(static_cast<Eigen::Index>(frames[i] - 1) * block, block);
  }
  return out;
}

}  // namespace

std::string_view to_string(Variant variant) {
  switch (variant) {
    case Variant::kSelfOnly: return "self_only";
    case Variant::kTwoFrameFateZero: return "two_frame_fatezero";
    case Variant::kTwoFrameTuneAVideo: return "two_frame_tuneavideo";
    case Variant::kAllFrame: return "all_frame";
    case Variant::kStem: return "stem";
  }
  return "unknown";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::kSelfOnly, Variant::kTwoFrameFateZero, Variant::kTwoFrameTuneAVideo,
                    Variant::kAllFrame, Variant::kStem}) {
    if (name == to_string(v)) return v;
  }
  throw ParameterError("unknown attention variant '" + std::string(name) + "'");
}

ProjectionWeights::ProjectionWeights(Matrix q, Matrix k, Matrix v)
    : w_q(std::move(q)), w_k(std::move(k)), w_v(std::move(v)) {
  if (w_q.rows() < 1 || w_q.cols() < 1) throw ShapeError("projection weights must be non-empty");
  if (w_k.rows() != w_q.rows() || w_v.rows() != w_q.rows() || w_k.cols() != w_q.cols() ||
      w_v.cols() != w_q.cols()) {
    throw ShapeError("W_Q, W_K and W_V must share one C x d shape");
  }
}

ProjectionWeights ProjectionWeights::random(std::size_t channels, std::size_t head_dim,
                                            Seed seed) {
  Rng rng(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(channels));
  const auto c = static_cast<Eigen::Index>(channels);
  const auto d = static_cast<Eigen::Index>(head_dim);
  Matrix q = random_normal(rng, c, d, scale);
  Matrix k = random_normal(rng, c, d, scale);
  Matrix v = random_normal(rng, c, d, scale);
  return ProjectionWeights(std::move(q), std::move(k), std::move(v));
}

Matrix attend(const Eigen::Ref<const Matrix>& q, const Eigen::Ref<const Matrix>& k,
              const Eigen::Ref<const Matrix>& v) {
  if (k.rows() < 1) throw ShapeError("attention needs at least one key");
  if (q.cols() != k.cols() || k.rows() != v.rows()) {
    std::ostringstream os;
    os << "attention shapes disagree: q " << q.rows() << "x" << q.cols() << ", k " << k.rows()
       << "x" << k.cols() << ", v " << v.rows() << "x" << v.cols();
    throw ShapeError(os.str());
  }
  const Eigen::Index keys = k.rows();
  const float temperature = std::sqrt(static_cast<float>(q.cols()));
  const Matrix kt = k.transpose();
  const bool wide = keys >= kWideAccumulationThreshold;
  MatrixD v_wide;
  if (wide) v_wide = v.cast<double>();

  Matrix out(q.rows(), v.cols());
  const Eigen::Index block = std::max<Eigen::Index>(1, kScoreBlockElements / keys);
  for (Eigen::Index begin = 0; begin < q.rows(); begin += block) {
    const Eigen::Index rows = std::min(block, q.rows() - begin);
    Matrix scores(rows, keys);
    scores.noalias() = q.middleRows(begin, rows) * kt;
    const Matrix weights = softmax_dim(scores, Axis::kSecond, temperature);
    if (wide) {
      out.middleRows(begin, rows) = (weights.cast<double>() * v_wide).cast<float>();
    } else {
      out.middleRows(begin, rows).noalias() = weights * v;
    }
  }
  return out;
}

std::vector<std::size_t> frame_context(Variant variant, std::size_t n, std::size_t frames) {
  if (frames < 1 || n < 1 || n > frames) {
    std::ostringstream os;
    os << "frame index " << n << " outside 1.." << frames;
    throw ParameterError(os.str());
  }
  switch (variant) {
    case Variant::kSelfOnly: return {n};
    case Variant::kTwoFrameFateZero: return {n, (frames + 1) / 2};  // round half up
    case Variant::kTwoFrameTuneAVideo: return {1, n == 1 ? std::size_t{1} : n - 1};
    case Variant::kAllFrame: {
      std::vector<std::size_t> all(frames);
      for (std::size_t i = 0; i < frames; ++i) all[i] = i + 1;
      return all;
    }
    case Variant::kStem: break;
  }
  throw ParameterError("stem attention has no frame context; its keys come from the bases");
}

FeatureMap spatial_temporal_sa(const FeatureMap& x, const ProjectionWeights& w,
                               const AttentionConfig& cfg) {
  if (cfg.variant == Variant::kStem) {
    throw ParameterError("spatial_temporal_sa does not handle the stem variant");
  }
  check_projection(x, w);
  const std::size_t frames = x.frames();
  const std::size_t hw = x.pixels_per_frame();
  const auto block = static_cast<Eigen::Index>(hw);
  const Matrix q = matmul(x.flat(), w.w_q);
  const Matrix k = matmul(x.flat(), w.w_k);
  const Matrix v = matmul(x.flat(), w.w_v);

  Matrix out(q.rows(), q.cols());
  parallel_for(frames, [&](std::size_t n) {
    const auto query = q.middleRows(static_cast<Eigen::Index>(n) * block, block);
    auto dest = out.middleRows(static_cast<Eigen::Index>(n) * block, block);
    if (cfg.variant == Variant::kAllFrame) {
      dest = attend(query, k, v);
      return;
    }
    const auto context = frame_context(cfg.variant, n + 1, frames);
    dest = attend(query, gather_frames(k, context, hw), gather_frames(v, context, hw));
  });
  return FeatureMap::from_rows(out, frames, x.height(), x.width());
}

FeatureMap stem_sa_with_bases(const FeatureMap& x, const ProjectionWeights& w,
                              const BasisSet& bases) {
  check_projection(x, w);
  if (bases.channels() != x.channels()) throw ShapeError("bases and features differ in channels");
  const auto block = static_cast<Eigen::Index>(x.pixels_per_frame());
  const Matrix q = matmul(x.flat(), w.w_q);
  const Matrix k = matmul(bases.matrix(), w.w_k);
  const Matrix v = matmul(bases.matrix(), w.w_v);

  Matrix out(q.rows(), q.cols());
  parallel_for(x.frames(), [&](std::size_t n) {
    const Eigen::Index begin = static_cast<Eigen::Index>(n) * block;
    out.middleRows(begin, block) = attend(q.middleRows(begin, block), k, v);
  });
  return FeatureMap::from_rows(out, x.frames(), x.height(), x.width());
}

StemAttentionOutput stem_sa(const FeatureMap& x, const ProjectionWeights& w,
                            const AttentionConfig& cfg) {
  if (cfg.variant != Variant::kStem) throw ParameterError("stem_sa requires the stem variant");
  check_projection(x, w);
  BasisSet bases = estimate_bases(x, cfg.em);
  FeatureMap features = stem_sa_with_bases(x, w, bases);
  return StemAttentionOutput{std::move(features), std::move(bases)};
}

SelfAttentionResult self_attention(const FeatureMap& x, const ProjectionWeights& w,
                                   const AttentionConfig& cfg) {
  std::optional<FlopReport> flops;
  if (cfg.flop_counter_enabled) {
    flops = count_flops(cfg, x.frames(), x.height(), x.width(), x.channels(), w.head_dim());
  }
  if (cfg.variant == Variant::kStem) {
    auto result = stem_sa(x, w, cfg);
    return SelfAttentionResult{std::move(result.features), std::move(result.bases), flops};
  }
  return SelfAttentionResult{spatial_temporal_sa(x, w, cfg), std::nullopt, flops};
}

FlopReport count_flops(const AttentionConfig& cfg, std::size_t frames, std::size_t height,
                       std::size_t width, std::size_t channels, std::size_t head_dim) {
  FlopReport report;
  report.variant = cfg.variant;
  report.frames = frames;
  report.height = height;
  report.width = width;
  report.channels = channels;
  report.head_dim = head_dim;

  const std::uint64_t n = frames;
  const std::uint64_t hw = static_cast<std::uint64_t>(height) * width;
  const std::uint64_t m = n * hw;
  const std::uint64_t c = channels;
  const std::uint64_t d = head_dim;

  std::uint64_t keys = 0;
  switch (cfg.variant) {
    case Variant::kSelfOnly: keys = hw; break;
    case Variant::kTwoFrameFateZero:
    case Variant::kTwoFrameTuneAVideo: keys = 2 * hw; break;
    case Variant::kAllFrame: keys = n * hw; break;
    case Variant::kStem: keys = cfg.em.num_bases; break;
  }

  if (cfg.variant == Variant::kStem) {
    const std::uint64_t k = cfg.em.num_bases;
    const auto r = static_cast<std::uint64_t>(std::max(0, cfg.em.iterations));
    report.bases = cfg.em.num_bases;
    report.iterations = cfg.em.iterations;
    report.projection = m * c * d + 2 * k * c * d;
    report.em = r * 2 * m * k * c;
  } else {
    report.projection = 3 * m * c * d;
  }
  report.scores = n * hw * keys * d;
  report.mixing = n * hw * keys * d;
  return report;
}

}  // namespace stem
