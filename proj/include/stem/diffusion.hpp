// Deterministic DDIM sampling/inversion, classifier-free guidance and toy
// noise predictors.
//
// Timesteps are 1-based training indices; alpha(t) is the cumulative product
// prod_{i<=t} (1 - beta_i) with alpha(0) = 1 for the clean latent.
#pragma once

#include "stem/attention.hpp"
#include "stem/core.hpp"

#include <memory>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace stem {

enum class BetaSchedule { kLinear, kScaledLinear };

std::string_view to_string(BetaSchedule kind);
BetaSchedule parse_beta_schedule(std::string_view name);

class DiffusionSchedule {
 public:
  DiffusionSchedule(std::vector<double> betas, std::vector<int> inference_timesteps);

  int train_steps() const noexcept { return static_cast<int>(betas_.size()); }
  /// beta_t for t in [1, T].
  double beta(int t) const;
  /// alpha_t for t in [0, T]; alpha_0 = 1.
  double alpha(int t) const;
  const std::vector<double>& betas() const noexcept { return betas_; }
  /// alphas_cumprod[t - 1] = alpha_t.
  std::span<const double> alphas_cumprod() const noexcept {
    return std::span<const double>(alphas_.data() + 1, alphas_.size() - 1);
  }
  /// Strictly increasing subsequence of [1, T].
  const std::vector<int>& inference_timesteps() const noexcept { return timesteps_; }
  /// {0} followed by the inference timesteps: the inversion path.
  std::vector<int> path() const;

 private:
  std::vector<double> betas_;
  std::vector<double> alphas_;  // index 0 holds alpha_0 = 1
  std::vector<int> timesteps_;
};

/// Inference timesteps are 1 + i * (T / steps) for i in [0, steps).
DiffusionSchedule make_schedule(BetaSchedule kind, double beta_start, double beta_end,
                                int train_steps, int inference_steps);

struct VideoLatent {
  FeatureMap z;
  int timestep = 0;
};

/// epsilon_theta(z, t, condition). Implementations must be deterministic.
class NoisePredictor {
 public:
  virtual ~NoisePredictor() = default;
  /// An empty condition means "no conditioning".
  virtual FeatureMap predict(const FeatureMap& z, int t, std::span<const float> condition) const = 0;
  /// Attention configuration used internally, if the predictor has attention.
  virtual std::optional<AttentionConfig> attention() const { return std::nullopt; }
};

struct GuidanceConfig {
  double scale = 7.5;
  std::vector<float> cond;
  std::vector<float> uncond;
};

/// (1 - s) eps_uncond + s eps_cond, evaluated in double.
FeatureMap guided_eps(const NoisePredictor& pred, const FeatureMap& z, int t,
                      const GuidanceConfig& g);

/// z_{t_prev} = sqrt(a_prev / a_t) z_t + (sqrt(1/a_prev - 1) - sqrt(1/a_t - 1)) eps.
VideoLatent ddim_sample_step(const VideoLatent& z_t, const FeatureMap& eps, int t, int t_prev,
                             const DiffusionSchedule& sched);

/// z_{t_next} = sqrt(a_next / a_t) z_t + (sqrt(1/a_next - 1) - sqrt(1/a_t - 1)) eps.
VideoLatent ddim_invert_step(const VideoLatent& z_t, const FeatureMap& eps, int t, int t_next,
                             const DiffusionSchedule& sched);

struct InversionOptions {
  /// Classifier-free guidance; when absent the predictor sees `condition` only.
  std::optional<GuidanceConfig> guidance;
  std::vector<float> condition;
  /// Keep every n-th latent of the path (the final latent is always kept); 0 keeps none.
  std::size_t trajectory_stride = 1;
};

struct InversionResult {
  VideoLatent final;
  std::vector<VideoLatent> trajectory;
  /// Noise prediction consumed by each inversion step, tagged with the
  /// timestep it was evaluated at. Subsampled with the same stride.
  std::vector<VideoLatent> noise;
};

/// Walks the schedule path upward from z0 (timestep 0) with ddim_invert_step,
/// evaluating the predictor at the current timestep.
InversionResult invert_video(const VideoLatent& z0, const NoisePredictor& pred,
                             const DiffusionSchedule& sched, const InversionOptions& opts,
                             const AttentionConfig& attn);

/// Walks the same path back down to timestep 0 with ddim_sample_step.
VideoLatent reconstruct_video(const VideoLatent& z_top, const NoisePredictor& pred,
                              const DiffusionSchedule& sched, const InversionOptions& opts,
                              const AttentionConfig& attn);

/// Mean over the sequence of sum_c Var_n(frame-mean of channel c): how much
/// per-frame statistics drift apart along the path. Applied to
/// InversionResult::noise this measures the predictor's own features rather
/// than the latent, which is dominated by the input frames.
double temporal_instability(const std::vector<VideoLatent>& trajectory);

enum class PredictorKind { kZero, kLinear, kAttentionNet };

std::string_view to_string(PredictorKind kind);
PredictorKind parse_predictor_kind(std::string_view name);

struct PredictorDims {
  std::size_t channels = 4;   // latent channels C
  std::size_t hidden = 16;    // attention width d
  std::size_t cond_dim = 8;   // condition embedding length
};

/// zero:          eps = 0
/// linear:        eps = A z + B c, A a C x C channel mix with spectral norm 0.5
/// attention_net: embed C -> d, add timestep and condition biases, one
///                residual self-attention block (variant from `attn`), project d -> C
std::unique_ptr<NoisePredictor> make_toy_predictor(PredictorKind kind, Seed seed,
                                                   const PredictorDims& dims,
                                                   const AttentionConfig& attn);

}  // namespace stem
