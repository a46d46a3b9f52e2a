// Subcommands behind the `stem` CLI. Each writes its outputs under cfg.out.
//
// Result files are a pure function of the configuration (and the inputs), so
// reruns with the same seed and one thread reproduce them byte for byte.
// Wall-clock measurements go to separate timing files (timing.json,
// bench_timing.csv) which are the only outputs allowed to differ between runs.
#pragma once

#include "stem/attention.hpp"
#include "stem/config.hpp"
#include "stem/diffusion.hpp"
#include "stem/metrics.hpp"

#include <json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace stem {

struct CommandResult {
  std::vector<std::filesystem::path> files;
  std::vector<std::filesystem::path> timing_files;
  nlohmann::json summary;
  std::vector<std::string> warnings;
};

CommandResult cmd_em(const ExperimentConfig& cfg);
CommandResult cmd_invert(const ExperimentConfig& cfg);
CommandResult cmd_bench(const ExperimentConfig& cfg);
CommandResult cmd_sweep_k(const ExperimentConfig& cfg);
CommandResult cmd_metrics(const ExperimentConfig& cfg);
CommandResult gen_synthetic(const ExperimentConfig& cfg);

// Building blocks, exposed for tests and for composing experiments.

struct InversionRun {
  VideoLatent top;
  VideoLatent reconstruction;
  std::vector<VideoLatent> trajectory;  // every step, z0 first
  MetricReport psnr;
  std::optional<MetricReport> ssim;     // absent when frames are smaller than the SSIM window
  double temporal_instability = 0.0;   // over the predicted-noise sequence
  double relative_error = 0.0;          // ||recon - z0|| / ||z0||
  FlopReport flops;                     // one attention call inside the predictor
};

/// Invert then reconstruct `video` with the configured predictor, using
/// attention `variant` with K = num_bases for the stem variant.
InversionRun run_inversion(const FeatureMap& video, const ExperimentConfig& cfg, Variant variant,
                           std::size_t num_bases);

/// Seeded conditional embedding; the unconditional embedding is all zeros.
std::vector<float> condition_embedding(const ExperimentConfig& cfg);

struct BenchRow {
  Variant variant;
  std::size_t num_bases = 0;
  FlopReport flops;
  double median_ms = 0.0;
  double min_ms = 0.0;
  double max_ms = 0.0;
  int runs = 0;
};

/// Times self_attention for every configured variant (stem once per K):
/// one discarded warm-up, then cfg.repeats timed runs.
std::vector<BenchRow> run_bench(const ExperimentConfig& cfg);

/// K values in first-seen order without duplicates; duplicates produce warnings.
std::vector<std::size_t> dedupe_k(const std::vector<std::size_t>& ks,
                                  std::vector<std::string>& warnings);

/// Scientific notation with 9 significant digits.
std::string format_real(double value);

}  // namespace stem
