#include "stem/diffusion.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace stem {

namespace {

struct StepCoefficients {
  double latent;
  double noise;
};

// Shared by both directions: moving from alpha_from to alpha_to.
StepCoefficients ddim_coefficients(double alpha_from, double alpha_to) {
  return {std::sqrt(alpha_to / alpha_from),
          std::sqrt(1.0 / alpha_to - 1.0) - std::sqrt(1.0 / alpha_from - 1.0)};
}

VideoLatent apply_step(const VideoLatent& z, const FeatureMap& eps, StepCoefficients coef,
                       int timestep) {
  if (!z.z.same_shape(eps)) {
    throw ShapeError("noise shape " + eps.shape_string() + " differs from latent shape " +
                     z.z.shape_string());
  }
  const auto src = z.z.data();
  const auto noise = eps.data();
  std::vector<float> out(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) {
    out[i] = static_cast<float>(coef.latent * static_cast<double>(src[i]) +
                                coef.noise * static_cast<double>(noise[i]));
  }
  const FeatureMap& f = z.z;
  return VideoLatent{FeatureMap(f.frames(), f.height(), f.width(), f.channels(), std::move(out)),
                     timestep};
}

void check_timestep(const DiffusionSchedule& sched, int t, const char* name) {
  if (t < 0 || t > sched.train_steps()) {
    std::ostringstream os;
    os << name << " = " << t << " outside [0, " << sched.train_steps() << "]";
    throw ParameterError(os.str());
  }
}

void check_predictor_attention(const NoisePredictor& pred, const AttentionConfig& attn) {
  const auto inner = pred.attention();
  if (inner && inner->variant != attn.variant) {
    throw ParameterError(std::string("predictor attention is ") +
                         std::string(to_string(inner->variant)) + ", run requested " +
                         std::string(to_string(attn.variant)));
  }
}

FeatureMap predict_noise(const NoisePredictor& pred, const FeatureMap& z, int t,
                         const InversionOptions& opts) {
  if (opts.guidance) return guided_eps(pred, z, t, *opts.guidance);
  return pred.predict(z, t, opts.condition);
}

FeatureMap zeros_like(const FeatureMap& z) {
  return FeatureMap(z.frames(), z.height(), z.width(), z.channels());
}

Matrix condition_bias(const Matrix& projection, std::span<const float> condition) {
  if (condition.empty()) return Matrix::Zero(1, projection.cols());
  if (static_cast<Eigen::Index>(condition.size()) != projection.rows()) {
    std::ostringstream os;
    os << "condition has " << condition.size() << " entries, predictor expects "
       << projection.rows();
    throw ShapeError(os.str());
  }
  const Eigen::Map<const Matrix> c(condition.data(), 1, static_cast<Eigen::Index>(condition.size()));
  return c * projection;
}

void check_latent(const FeatureMap& z, std::size_t channels) {
  if (z.channels() != channels) {
    std::ostringstream os;
    os << "predictor built for " << channels << " channels, latent has " << z.channels();
    throw ShapeError(os.str());
  }
}

class ZeroPredictor final : public NoisePredictor {
 public:
  FeatureMap predict(const FeatureMap& z, int, std::span<const float>) const override {
    return zeros_like(z);
  }
};

class LinearPredictor final : public NoisePredictor {
 public:
  LinearPredictor(Seed seed, const PredictorDims& dims) : channels_(dims.channels) {
    Rng rng(seed);
    const auto c = static_cast<Eigen::Index>(dims.channels);
    const Matrix raw = random_normal(rng, c, c);
    const double spectral = Eigen::JacobiSVD<MatrixD>(raw.cast<double>()).singularValues()(0);
    mix_t_ = (raw.cast<double>() * (0.5 / spectral)).transpose().cast<float>();
    cond_ = random_normal(rng, static_cast<Eigen::Index>(dims.cond_dim), c,
                          1.0 / std::sqrt(static_cast<double>(std::max<std::size_t>(1, dims.cond_dim))));
  }

  FeatureMap predict(const FeatureMap& z, int, std::span<const float> condition) const override {
    check_latent(z, channels_);
    Matrix eps = matmul(z.flat(), mix_t_);
    eps.rowwise() += condition_bias(cond_, condition).row(0);
    return FeatureMap::from_rows(eps, z.frames(), z.height(), z.width());
  }

 private:
  std::size_t channels_;
  Matrix mix_t_;  // A^T, so rows map as z_row * A^T
  Matrix cond_;   // cond_dim x C
};

class AttentionNetPredictor final : public NoisePredictor {
 public:
  AttentionNetPredictor(Seed seed, const PredictorDims& dims, const AttentionConfig& attn)
      : dims_(dims),
        attn_(attn),
        proj_(ProjectionWeights::random(dims.hidden, dims.hidden, Seed{seed.value ^ 0x5eedULL})) {
    Rng rng(seed);
    const auto c = static_cast<Eigen::Index>(dims.channels);
    const auto d = static_cast<Eigen::Index>(dims.hidden);
    const auto e = static_cast<Eigen::Index>(dims.cond_dim);
    embed_ = random_normal(rng, c, d, 1.0 / std::sqrt(static_cast<double>(c)));
    unembed_ = random_normal(rng, d, c, 0.1 / std::sqrt(static_cast<double>(d)));
    cond_ = random_normal(rng, e, d, 0.1 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(1, e))));
    freq_.resize(dims.hidden);
    phase_.resize(dims.hidden);
    for (std::size_t j = 0; j < dims.hidden; ++j) {
      freq_[j] = std::pow(10000.0, -static_cast<double>(j) / static_cast<double>(dims.hidden));
      phase_[j] = rng.uniform(0.0, 2.0 * std::numbers::pi);
    }
  }

  FeatureMap predict(const FeatureMap& z, int t, std::span<const float> condition) const override {
    check_latent(z, dims_.channels);
    Matrix h = matmul(z.flat(), embed_);
    Eigen::RowVectorXf bias = condition_bias(cond_, condition).row(0);
    for (std::size_t j = 0; j < dims_.hidden; ++j) {
      bias(static_cast<Eigen::Index>(j)) +=
          static_cast<float>(0.1 * std::sin(static_cast<double>(t) * freq_[j] + phase_[j]));
    }
    h.rowwise() += bias;
    const FeatureMap hidden = FeatureMap::from_rows(h, z.frames(), z.height(), z.width());
    const FeatureMap mixed = self_attention(hidden, proj_, attn_).features;
    h += mixed.flat();
    const Matrix eps = matmul(h, unembed_);
    return FeatureMap::from_rows(eps, z.frames(), z.height(), z.width());
  }

  std::optional<AttentionConfig> attention() const override { return attn_; }

 private:
  PredictorDims dims_;
  AttentionConfig attn_;
  ProjectionWeights proj_;
  Matrix embed_;    // C x d
  Matrix unembed_;  // d x C
  Matrix cond_;     // cond_dim x d
  std::vector<double> freq_;
  std::vector<double> phase_;
};

}  // namespace

std::string_view to_string(BetaSchedule kind) {
  return kind == BetaSchedule::kLinear ? "linear" : "scaled_linear";
}

BetaSchedule parse_beta_schedule(std::string_view name) {
  if (name == "linear") return BetaSchedule::kLinear;
  if (name == "scaled_linear") return BetaSchedule::kScaledLinear;
  throw ParameterError("unknown beta schedule '" + std::string(name) + "'");
}

DiffusionSchedule::DiffusionSchedule(std::vector<double> betas, std::vector<int> inference_timesteps)
    : betas_(std::move(betas)), timesteps_(std::move(inference_timesteps)) {
  if (betas_.empty()) throw ParameterError("schedule needs at least one training step");
  alphas_.resize(betas_.size() + 1);
  alphas_[0] = 1.0;
  for (std::size_t i = 0; i < betas_.size(); ++i) {
    if (!(betas_[i] > 0.0 && betas_[i] < 1.0)) throw ParameterError("beta values must lie in (0, 1)");
    alphas_[i + 1] = alphas_[i] * (1.0 - betas_[i]);
  }
  if (timesteps_.empty()) throw ParameterError("schedule needs at least one inference timestep");
  for (std::size_t i = 0; i < timesteps_.size(); ++i) {
    if (timesteps_[i] < 1 || timesteps_[i] > train_steps() ||
        (i > 0 && timesteps_[i] <= timesteps_[i - 1])) {
      throw ParameterError("inference timesteps must increase strictly within [1, T]");
    }
  }
}

double DiffusionSchedule::beta(int t) const {
  if (t < 1 || t > train_steps()) throw ParameterError("beta index out of range");
  return betas_[static_cast<std::size_t>(t - 1)];
}

double DiffusionSchedule::alpha(int t) const {
  if (t < 0 || t > train_steps()) throw ParameterError("alpha index out of range");
  return alphas_[static_cast<std::size_t>(t)];
}

std::vector<int> DiffusionSchedule::path() const {
  std::vector<int> p;
  p.reserve(timesteps_.size() + 1);
  p.push_back(0);
  p.insert(p.end(), timesteps_.begin(), timesteps_.end());
  return p;
}

DiffusionSchedule make_schedule(BetaSchedule kind, double beta_start, double beta_end,
                                int train_steps, int inference_steps) {
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw ParameterError("betas must satisfy 0 < beta_start <= beta_end < 1");
  }
  if (train_steps < 1) throw ParameterError("training step count must be positive");
  if (inference_steps < 1 || inference_steps > train_steps) {
    throw ParameterError("inference steps must lie in [1, training steps]");
  }
  std::vector<double> betas(static_cast<std::size_t>(train_steps));
  const double lo = kind == BetaSchedule::kLinear ? beta_start : std::sqrt(beta_start);
  const double hi = kind == BetaSchedule::kLinear ? beta_end : std::sqrt(beta_end);
  for (int i = 0; i < train_steps; ++i) {
    const double frac = train_steps == 1 ? 0.0 : static_cast<double>(i) / (train_steps - 1);
    const double value = lo + (hi - lo) * frac;
    betas[static_cast<std::size_t>(i)] = kind == BetaSchedule::kLinear ? value : value * value;
  }
  const int stride = train_steps / inference_steps;
  std::vector<int> timesteps(static_cast<std::size_t>(inference_steps));
  for (int i = 0; i < inference_steps; ++i) timesteps[static_cast<std::size_t>(i)] = 1 + i * stride;
  return DiffusionSchedule(std::move(betas), std::move(timesteps));
}

FeatureMap guided_eps(const NoisePredictor& pred, const FeatureMap& z, int t,
                      const GuidanceConfig& g) {
  if (!std::isfinite(g.scale)) throw ParameterError("guidance scale must be finite");
  const FeatureMap cond = pred.predict(z, t, g.cond);
  const FeatureMap uncond = pred.predict(z, t, g.uncond);
  const auto c = cond.data();
  const auto u = uncond.data();
  std::vector<float> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    out[i] = static_cast<float>((1.0 - g.scale) * static_cast<double>(u[i]) +
                                g.scale * static_cast<double>(c[i]));
  }
  return FeatureMap(z.frames(), z.height(), z.width(), z.channels(), std::move(out));
}

VideoLatent ddim_sample_step(const VideoLatent& z_t, const FeatureMap& eps, int t, int t_prev,
                             const DiffusionSchedule& sched) {
  check_timestep(sched, t, "t");
  check_timestep(sched, t_prev, "t_prev");
  if (t <= t_prev) throw ParameterError("sampling step needs t > t_prev");
  return apply_step(z_t, eps, ddim_coefficients(sched.alpha(t), sched.alpha(t_prev)), t_prev);
}

VideoLatent ddim_invert_step(const VideoLatent& z_t, const FeatureMap& eps, int t, int t_next,
                             const DiffusionSchedule& sched) {
  check_timestep(sched, t, "t");
  check_timestep(sched, t_next, "t_next");
  if (t_next <= t) throw ParameterError("inversion step needs t_next > t");
  return apply_step(z_t, eps, ddim_coefficients(sched.alpha(t), sched.alpha(t_next)), t_next);
}

InversionResult invert_video(const VideoLatent& z0, const NoisePredictor& pred,
                             const DiffusionSchedule& sched, const InversionOptions& opts,
                             const AttentionConfig& attn) {
  check_predictor_attention(pred, attn);
  const std::vector<int> path = sched.path();
  if (z0.timestep != 0) throw ParameterError("inversion starts from the clean latent (timestep 0)");

  InversionResult result{z0, {}, {}};
  const std::size_t stride = opts.trajectory_stride;
  if (stride > 0) result.trajectory.push_back(z0);
  for (std::size_t i = 0; i + 1 < path.size(); ++i) {
    FeatureMap eps = predict_noise(pred, result.final.z, path[i], opts);
    result.final = ddim_invert_step(result.final, eps, path[i], path[i + 1], sched);
    const bool last = i + 2 == path.size();
    if (stride > 0 && (i % stride == 0 || last)) result.noise.push_back(VideoLatent{std::move(eps), path[i]});
    if (stride > 0 && ((i + 1) % stride == 0 || last)) result.trajectory.push_back(result.final);
  }
  return result;
}

VideoLatent reconstruct_video(const VideoLatent& z_top, const NoisePredictor& pred,
                              const DiffusionSchedule& sched, const InversionOptions& opts,
                              const AttentionConfig& attn) {
  check_predictor_attention(pred, attn);
  const std::vector<int> path = sched.path();
  if (z_top.timestep != path.back()) {
    throw ParameterError("reconstruction must start at the last inference timestep");
  }
  VideoLatent z = z_top;
  for (std::size_t i = path.size() - 1; i > 0; --i) {
    const FeatureMap eps = predict_noise(pred, z.z, path[i], opts);
    z = ddim_sample_step(z, eps, path[i], path[i - 1], sched);
  }
  return z;
}

double temporal_instability(const std::vector<VideoLatent>& trajectory) {
  if (trajectory.empty()) return 0.0;
  double total = 0.0;
  for (const auto& latent : trajectory) {
    const FeatureMap& z = latent.z;
    const auto hw = static_cast<double>(z.pixels_per_frame());
    Eigen::MatrixXd means(z.frames(), z.channels());
    for (std::size_t n = 0; n < z.frames(); ++n) {
      means.row(static_cast<Eigen::Index>(n)) = z.frame(n).cast<double>().colwise().sum() / hw;
    }
    const Eigen::RowVectorXd centre = means.colwise().mean();
    total += (means.rowwise() - centre).array().square().sum() / static_cast<double>(z.frames());
  }
  return total / static_cast<double>(trajectory.size());
}

std::string_view to_string(PredictorKind kind) {
  switch (kind) {
    case PredictorKind::kZero: return "zero";
    case PredictorKind::kLinear: return "linear";
    case PredictorKind::kAttentionNet: return "attention_net";
  }
  return "unknown";
}

PredictorKind parse_predictor_kind(std::string_view name) {
  if (name == "zero") return PredictorKind::kZero;
  if (name == "linear") return PredictorKind::kLinear;
  if (name == "attention_net") return PredictorKind::kAttentionNet;
  throw ParameterError("unknown predictor kind '" + std::string(name) + "'");
}

std::unique_ptr<NoisePredictor> make_toy_predictor(PredictorKind kind, Seed seed,
                                                   const PredictorDims& dims,
                                                   const AttentionConfig& attn) {
  if (dims.channels == 0 || dims.hidden == 0) throw ParameterError("predictor dims must be positive");
  switch (kind) {
    case PredictorKind::kZero: return std::make_unique<ZeroPredictor>();
    case PredictorKind::kLinear: return std::make_unique<LinearPredictor>(seed, dims);
    case PredictorKind::kAttentionNet:
      return std::make_unique<AttentionNetPredictor>(seed, dims, attn);
  }
  throw ParameterError("unknown predictor kind");
}

}  // namespace stem
