#include "stem/em.hpp"

#include "stem/parallel.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace stem {

namespace {

constexpr double kDeadBasisMass = 1e-12;

Matrix transposed(const Eigen::Ref<const Matrix>& m) { return m.transpose(); }

void check_channels(const FeatureMap& x, const BasisSet& mu) {
  if (x.channels() != mu.channels()) {
    std::ostringstream os;
    os << "bases have " << mu.channels() << " channels, features have " << x.channels();
    throw ShapeError(os.str());
  }
}

void normalize_rows(Matrix& bases) {
  for (Eigen::Index k = 0; k < bases.rows(); ++k) {
    const double norm = bases.row(k).cast<double>().norm();
    if (norm > 0.0) bases.row(k) = (bases.row(k).cast<double>() / norm).cast<float>();
  }
}

double frobenius_distance(const Matrix& a, const Matrix& b) {
  return (a.cast<double>() - b.cast<double>()).norm();
}

BasisSet sample_pixels(const ConstMatrixMap& rows, std::size_t k, Rng& rng) {
  const std::size_t m = static_cast<std::size_t>(rows.rows());
  std::vector<std::size_t> order(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.index(m - i));
    std::swap(order[i], order[j]);
  }
  Matrix bases(static_cast<Eigen::Index>(k), rows.cols());
  for (std::size_t i = 0; i < k; ++i) {
    bases.row(static_cast<Eigen::Index>(i)) = rows.row(static_cast<Eigen::Index>(order[i]));
  }
  return BasisSet(std::move(bases));
}

// D^2 seeding with the dot-product gap d(x, mu) = max(0, x.x - mu.x), which
// is zero when mu == x.
BasisSet kmeans_plus_plus(const ConstMatrixMap& rows, std::size_t k, Rng& rng) {
  const Eigen::Index m = rows.rows();
  const Eigen::VectorXd self = rows.cast<double>().rowwise().squaredNorm();
  std::vector<bool> chosen(static_cast<std::size_t>(m), false);
  Eigen::VectorXd gap = Eigen::VectorXd::Constant(m, std::numeric_limits<double>::infinity());
  Matrix bases(static_cast<Eigen::Index>(k), rows.cols());

  auto take = [&](Eigen::Index idx, Eigen::Index slot) {
    chosen[static_cast<std::size_t>(idx)] = true;
    bases.row(slot) = rows.row(idx);
    const Eigen::VectorXd dots = rows.cast<double>() * rows.row(idx).cast<double>().transpose();
    for (Eigen::Index i = 0; i < m; ++i) gap(i) = std::min(gap(i), std::max(0.0, self(i) - dots(i)));
  };

  take(static_cast<Eigen::Index>(rng.index(static_cast<std::uint64_t>(m))), 0);
  for (Eigen::Index slot = 1; slot < static_cast<Eigen::Index>(k); ++slot) {
    const double total = gap.array().square().sum();
    Eigen::Index pick = -1;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < m; ++i) {
        const double w = gap(i) * gap(i);
        if (w <= 0.0) continue;
        acc += w;
        pick = i;
        if (acc > target) break;
      }
    } else {
      // Every row is already represented exactly; fall back to a uniform
      // draw among the rows not taken yet.
      std::vector<Eigen::Index> free;
      for (Eigen::Index i = 0; i < m; ++i) {
        if (!chosen[static_cast<std::size_t>(i)]) free.push_back(i);
      }
      pick = free[static_cast<std::size_t>(rng.index(free.size()))];
    }
    take(pick, slot);
  }
  return BasisSet(std::move(bases));
}

struct LoopOutput {
  Matrix bases;
  Matrix last_z;
  bool has_z = false;
  std::vector<double> shifts;
};

LoopOutput em_loop(const FeatureMap& x, const EmConfig& cfg, const BasisSet& initial) {
  LoopOutput out{initial.matrix(), Matrix(), false, {}};
  out.shifts.reserve(static_cast<std::size_t>(std::max(0, cfg.iterations)));
  for (int r = 0; r < cfg.iterations; ++r) {
    Responsibility z = e_step(x, BasisSet(out.bases), cfg.temperature);
    Matrix updated = m_step(x, z).matrix();
    if (cfg.normalize_bases) normalize_rows(updated);
    out.shifts.push_back(frobenius_distance(updated, out.bases));
    out.bases = std::move(updated);
    out.last_z = z.matrix();
    out.has_z = true;
  }
  return out;
}

}  // namespace

std::string_view to_string(InitStrategy init) {
  return init == InitStrategy::kSamplePixels ? "sample_pixels" : "kmeans_pp";
}

InitStrategy parse_init_strategy(std::string_view name) {
  if (name == "sample_pixels") return InitStrategy::kSamplePixels;
  if (name == "kmeans_pp") return InitStrategy::kKmeansPlusPlus;
  throw ParameterError("unknown init strategy '" + std::string(name) + "'");
}

void EmConfig::validate(std::size_t rows) const {
  if (num_bases == 0) throw ParameterError("number of bases K must be positive");
  if (num_bases > rows) {
    std::ostringstream os;
    os << "K = " << num_bases << " exceeds the " << rows << " available feature rows";
    throw ParameterError(os.str());
  }
  if (!(temperature > 0.0f) || !std::isfinite(temperature)) {
    throw ParameterError("temperature must be positive");
  }
  if (iterations < 0) throw ParameterError("iteration count R must be non-negative");
}

BasisSet::BasisSet(Matrix bases) : bases_(std::move(bases)) {
  if (bases_.rows() < 1 || bases_.cols() < 1) throw ShapeError("basis set must be non-empty");
  if (!bases_.allFinite()) throw InputError("basis set contains non-finite values");
}

Responsibility::Responsibility(Matrix z) : z_(std::move(z)) {
  if (z_.rows() < 1 || z_.cols() < 1) throw ShapeError("responsibility matrix must be non-empty");
}

double Responsibility::max_column_error() const {
  const Eigen::RowVectorXd sums = z_.cast<double>().colwise().sum();
  return (sums.array() - 1.0).abs().maxCoeff();
}

BasisSet init_bases(const FeatureMap& x, const EmConfig& cfg) {
  cfg.validate(x.rows());
  Rng rng(cfg.seed);
  if (cfg.init == InitStrategy::kSamplePixels) return sample_pixels(x.flat(), cfg.num_bases, rng);
  return kmeans_plus_plus(x.flat(), cfg.num_bases, rng);
}

Responsibility e_step(const FeatureMap& x, const BasisSet& mu, float tau) {
  check_channels(x, mu);
  const Matrix logits = matmul(mu.matrix(), transposed(x.flat()));  // K x M
  const Eigen::Index m = logits.cols();
  const auto workers = static_cast<Eigen::Index>(std::max(1, num_threads()));
  if (workers == 1) return Responsibility(softmax_dim(logits, Axis::kFirst, tau));

  Matrix z(logits.rows(), m);
  const Eigen::Index chunk = (m + workers - 1) / workers;
  parallel_for(static_cast<std::size_t>(workers), [&](std::size_t w) {
    const Eigen::Index begin = static_cast<Eigen::Index>(w) * chunk;
    const Eigen::Index cols = std::min(chunk, m - begin);
    if (cols <= 0) return;
    z.middleCols(begin, cols) = softmax_dim(logits.middleCols(begin, cols), Axis::kFirst, tau);
  });
  return Responsibility(std::move(z));
}

BasisSet m_step(const FeatureMap& x, const Responsibility& z) {
  if (z.pixels() != x.rows()) {
    std::ostringstream os;
    os << "responsibilities cover " << z.pixels() << " pixels, features have " << x.rows();
    throw ShapeError(os.str());
  }
  const Matrix& zm = z.matrix();
  const ConstMatrixMap rows = x.flat();
  const Eigen::VectorXd mass = zm.cast<double>().rowwise().sum();

  Matrix bases = matmul(zm, rows);
  std::vector<Eigen::Index> dead;
  for (Eigen::Index k = 0; k < bases.rows(); ++k) {
    if (mass(k) < kDeadBasisMass) {
      dead.push_back(k);
      continue;
    }
    bases.row(k) = (bases.row(k).cast<double>() / mass(k)).cast<float>();
  }
  if (dead.empty()) return BasisSet(std::move(bases));

  // Residual of each row against its reconstruction from the live bases.
  MatrixD live_z = zm.cast<double>();
  for (Eigen::Index k : dead) live_z.row(k).setZero();
  const MatrixD recon = live_z.transpose() * bases.cast<double>();
  Eigen::VectorXd residual = (rows.cast<double>() - recon).rowwise().squaredNorm();
  for (Eigen::Index k : dead) {
    Eigen::Index worst = 0;
    residual.maxCoeff(&worst);
    bases.row(k) = rows.row(worst);
    residual(worst) = -1.0;
  }
  return BasisSet(std::move(bases));
}

EmResult run_em(const FeatureMap& x, const EmConfig& cfg) {
  return run_em(x, cfg, init_bases(x, cfg));
}

EmResult run_em(const FeatureMap& x, const EmConfig& cfg, BasisSet initial) {
  cfg.validate(x.rows());
  if (initial.size() != cfg.num_bases) throw ShapeError("initial bases do not match K");
  check_channels(x, initial);
  LoopOutput loop = em_loop(x, cfg, initial);
  BasisSet bases(std::move(loop.bases));
  Responsibility z = (cfg.trailing_e_step || !loop.has_z)
                         ? e_step(x, bases, cfg.temperature)
                         : Responsibility(std::move(loop.last_z));
  return EmResult{std::move(initial), std::move(bases), std::move(z), std::move(loop.shifts)};
}

BasisSet estimate_bases(const FeatureMap& x, const EmConfig& cfg) {
  BasisSet initial = init_bases(x, cfg);
  check_channels(x, initial);
  return BasisSet(em_loop(x, cfg, initial).bases);
}

std::vector<std::size_t> hard_assign(const FeatureMap& x, const BasisSet& mu) {
  check_channels(x, mu);
  const Matrix scores = matmul(x.flat(), transposed(mu.matrix()));  // M x K
  std::vector<std::size_t> assignment(static_cast<std::size_t>(scores.rows()));
  for (Eigen::Index m = 0; m < scores.rows(); ++m) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < scores.cols(); ++k) {
      if (scores(m, k) > scores(m, best)) best = k;
    }
    assignment[static_cast<std::size_t>(m)] = static_cast<std::size_t>(best);
  }
  return assignment;
}

}  // namespace stem
