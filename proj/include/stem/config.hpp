// Experiment configuration: a flat `key = value` file plus command-line
// overrides. Both routes go through ExperimentConfig::set so a key means the
// same thing everywhere.
#pragma once

#include "stem/attention.hpp"
#include "stem/core.hpp"
#include "stem/diffusion.hpp"
#include "stem/em.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace stem {

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error("config_error", what) {}
};

enum class SyntheticKind { kClusters, kPerturbedVideo, kMovingBlob };

std::string_view to_string(SyntheticKind kind);
SyntheticKind parse_synthetic_kind(std::string_view name);

struct ExperimentConfig {
  // Common
  std::uint64_t seed = 0;
  int threads = 1;
  std::filesystem::path out = ".";

  // Inputs
  std::filesystem::path input;       // em / invert / sweep-k input, metrics video under test
  std::filesystem::path reference;   // metrics reference video
  std::filesystem::path flow;        // metrics flow field
  std::filesystem::path features_a;  // metrics cosine-map pair
  std::filesystem::path features_b;
  bool warp = false;  // metrics: warp error requested

  // Attention and EM
  Variant variant = Variant::kStem;
  std::vector<std::size_t> k_list{256};
  float tau = 0.05f;
  int iters = 3;
  InitStrategy init = InitStrategy::kSamplePixels;
  bool normalize_bases = false;
  bool trailing_e_step = true;

  // Diffusion
  BetaSchedule schedule = BetaSchedule::kScaledLinear;
  double beta_start = 0.00085;
  double beta_end = 0.012;
  int train_steps = 1000;
  int steps = 50;
  std::optional<double> guidance;  // unset: unguided inversion
  PredictorKind predictor = PredictorKind::kAttentionNet;
  std::size_t hidden = 16;
  std::size_t cond_dim = 8;
  bool save_trajectory = false;
  std::size_t trajectory_stride = 1;
  double peak = 1.0;
  bool sweep_baseline = true;

  // Benchmark and synthetic data shapes
  std::size_t frames = 8;
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t channels = 64;
  std::size_t head_dim = 64;
  int repeats = 5;
  std::vector<Variant> bench_variants{Variant::kSelfOnly, Variant::kTwoFrameFateZero,
                                      Variant::kTwoFrameTuneAVideo, Variant::kAllFrame,
                                      Variant::kStem};

  // Synthetic generation
  SyntheticKind gen_kind = SyntheticKind::kClusters;
  std::size_t centers = 2;
  std::size_t points = 20;
  double sigma = 0.01;
  double separation = 10.0;
  double blob_radius = 2.0;

  /// Sets one key from its text form. Throws ConfigError for unknown keys or
  /// malformed values.
  void set(const std::string& key, const std::string& value);
  void apply(const std::map<std::string, std::string>& values);

  EmConfig em_config(std::size_t num_bases) const;
  AttentionConfig attention_config(Variant v, std::size_t num_bases) const;

  static const std::vector<std::string>& keys();
};

/// Parses `key = value` lines; '#' starts a comment, blank lines are ignored.
std::map<std::string, std::string> parse_config_text(const std::string& text);
std::map<std::string, std::string> load_config_file(const std::filesystem::path& path);

}  // namespace stem
