// Spatial-temporal EM: estimates a compact basis set for a video's features.
//
// The E-step assigns every feature row X_m a soft responsibility over the K
// bases, Z = softmax over bases of (mu X^T / tau). The M-step moves each basis
// to the Z-weighted mean of the rows, mu = Z X / rowsum(Z). As tau -> 0 the
// responsibilities become one-hot and the loop is K-means under dot-product
// similarity.
#pragma once

#include "stem/core.hpp"

#include <string_view>
#include <vector>

namespace stem {

enum class InitStrategy { kSamplePixels, kKmeansPlusPlus };

std::string_view to_string(InitStrategy init);
InitStrategy parse_init_strategy(std::string_view name);

struct EmConfig {
  std::size_t num_bases = 256;  // K
  float temperature = 0.05f;    // tau
  int iterations = 3;           // R
  InitStrategy init = InitStrategy::kSamplePixels;
  /// Rescale every basis to unit length after each M-step.
  bool normalize_bases = false;
  /// Run one more E-step after the last M-step so the returned
  /// responsibilities match the returned bases. When off, the Z of the last
  /// in-loop E-step is returned instead.
  bool trailing_e_step = true;
  Seed seed{};

  /// Throws ParameterError unless K in [1, rows], tau > 0 and R >= 0.
  void validate(std::size_t rows) const;
};

/// K x C bases living in the feature embedding space.
class BasisSet {
 public:
  explicit BasisSet(Matrix bases);
  const Matrix& matrix() const noexcept { return bases_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(bases_.rows()); }
  std::size_t channels() const noexcept { return static_cast<std::size_t>(bases_.cols()); }

 private:
  Matrix bases_;
};

/// K x M soft assignments; each column is a distribution over bases.
class Responsibility {
 public:
  explicit Responsibility(Matrix z);
  const Matrix& matrix() const noexcept { return z_; }
  std::size_t bases() const noexcept { return static_cast<std::size_t>(z_.rows()); }
  std::size_t pixels() const noexcept { return static_cast<std::size_t>(z_.cols()); }
  /// Largest |column sum - 1|, computed in double.
  double max_column_error() const;

 private:
  Matrix z_;
};

BasisSet init_bases(const FeatureMap& x, const EmConfig& cfg);

Responsibility e_step(const FeatureMap& x, const BasisSet& mu, float tau);

/// Weighted-mean update. A basis whose responsibility row sums below 1e-12 is
/// re-seeded with the feature row that the live bases reconstruct worst.
BasisSet m_step(const FeatureMap& x, const Responsibility& z);

struct EmResult {
  BasisSet initial;
  BasisSet bases;
  Responsibility responsibilities;
  /// Frobenius norm ||mu^r - mu^(r-1)|| for r = 1..R.
  std::vector<double> shifts;
};

EmResult run_em(const FeatureMap& x, const EmConfig& cfg);
/// Same loop starting from caller-supplied bases; cfg.init and cfg.seed are unused.
EmResult run_em(const FeatureMap& x, const EmConfig& cfg, BasisSet initial);

/// Bases after R iterations without computing trailing responsibilities.
BasisSet estimate_bases(const FeatureMap& x, const EmConfig& cfg);

/// argmax_k mu_k . X_m per row; ties go to the lowest k.
std::vector<std::size_t> hard_assign(const FeatureMap& x, const BasisSet& mu);

}  // namespace stem
