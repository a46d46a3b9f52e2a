// Self-attention variants compared by STEM inversion, plus their FLOP budgets.
//
//   self_only              K/V from the query frame itself
//   two_frame_fatezero     K/V from frames [n, round(N/2)]
//   two_frame_tuneavideo   K/V from frames [1, n-1]  (n = 1 uses [1, 1])
//   all_frame              K/V from every frame
//   stem                   K/V from EM bases mu estimated over the whole video
#pragma once

#include "stem/core.hpp"
#include "stem/em.hpp"

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

namespace stem {

enum class Variant { kSelfOnly, kTwoFrameFateZero, kTwoFrameTuneAVideo, kAllFrame, kStem };

std::string_view to_string(Variant variant);
Variant parse_variant(std::string_view name);

/// Single-head projections shared across space and time.
struct ProjectionWeights {
  Matrix w_q;  // C x d
  Matrix w_k;  // C x d
  Matrix w_v;  // C x d

  ProjectionWeights(Matrix q, Matrix k, Matrix v);
  /// Gaussian weights with standard deviation 1/sqrt(C).
  static ProjectionWeights random(std::size_t channels, std::size_t head_dim, Seed seed);

  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(w_q.rows()); }
  std::size_t head_dim() const noexcept { return static_cast<std::size_t>(w_q.cols()); }
};

struct AttentionConfig {
  Variant variant = Variant::kSelfOnly;
  EmConfig em{};  // used only by Variant::kStem
  bool flop_counter_enabled = false;
};

/// Multiply-add counts, itemized.
struct FlopReport {
  Variant variant = Variant::kSelfOnly;
  std::uint64_t projection = 0;  // Q, K, V projections
  std::uint64_t em = 0;          // E-step logits + M-step products over R iterations
  std::uint64_t scores = 0;      // Q K^T
  std::uint64_t mixing = 0;      // softmax(.) V
  std::size_t frames = 0, height = 0, width = 0, channels = 0, head_dim = 0;
  std::size_t bases = 0;
  int iterations = 0;

  std::uint64_t attention() const noexcept { return scores + mixing; }
  std::uint64_t total() const noexcept { return projection + em + scores + mixing; }
};

/// softmax(q k^T / sqrt(d)) v, with the softmax over the key axis.
Matrix attend(const Eigen::Ref<const Matrix>& q, const Eigen::Ref<const Matrix>& k,
              const Eigen::Ref<const Matrix>& v);

/// 1-based context frame indices for query frame n of N. Not defined for kStem.
std::vector<std::size_t> frame_context(Variant variant, std::size_t n, std::size_t frames);

/// Frame-context attention (every variant except kStem). Output has d channels.
FeatureMap spatial_temporal_sa(const FeatureMap& x, const ProjectionWeights& w,
                               const AttentionConfig& cfg);

struct StemAttentionOutput {
  FeatureMap features;
  BasisSet bases;
};

/// Runs EM over all frames, then attends every frame's queries to mu W_K, mu W_V.
StemAttentionOutput stem_sa(const FeatureMap& x, const ProjectionWeights& w,
                            const AttentionConfig& cfg);

/// Same attention with bases supplied by the caller.
FeatureMap stem_sa_with_bases(const FeatureMap& x, const ProjectionWeights& w,
                              const BasisSet& bases);

struct SelfAttentionResult {
  FeatureMap features;
  std::optional<BasisSet> bases;
  std::optional<FlopReport> flops;
};

/// Dispatches on cfg.variant; fills `flops` when cfg.flop_counter_enabled.
SelfAttentionResult self_attention(const FeatureMap& x, const ProjectionWeights& w,
                                   const AttentionConfig& cfg);

FlopReport count_flops(const AttentionConfig& cfg, std::size_t frames, std::size_t height,
                       std::size_t width, std::size_t channels, std::size_t head_dim);

}  // namespace stem
