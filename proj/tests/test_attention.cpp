#include "oracles.hpp"
#include "stem/attention.hpp"
#include "stem/parallel.hpp"

#include <doctest.h>

#include <cmath>

using namespace stem;

namespace {

FeatureMap random_video(std::uint64_t seed, std::size_t n, std::size_t h, std::size_t w, std::size_t c) {
  Rng rng(Seed{seed});
  return FeatureMap::from_rows(random_normal(rng, static_cast<Eigen::Index>(n * h * w),
                                             static_cast<Eigen::Index>(c)),
                               n, h, w);
}

AttentionConfig config(Variant v) {
  AttentionConfig cfg;
  cfg.variant = v;
  return cfg;
}

std::vector<std::vector<std::size_t>> contexts(Variant v, std::size_t frames) {
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t n = 1; n <= frames; ++n) out.push_back(frame_context(v, n, frames));
  return out;
}

}  // namespace

TEST_CASE("attend examples") {
  Matrix one(1, 2);
  one << 1, 0;
  CHECK(attend(one, one, one) == one);

  Matrix k = Matrix::Identity(3, 3) * 100.0f;
  Matrix v(3, 2);
  v << 1, 2, 3, 4, 5, 6;
  Matrix q(1, 3);
  q << 0, 100, 0;
  const Matrix out = attend(q, k, v);
  CHECK(out(0, 0) == doctest::Approx(3.0).epsilon(1e-6));
  CHECK(out(0, 1) == doctest::Approx(4.0).epsilon(1e-6));

  CHECK_THROWS_AS(attend(Matrix::Ones(2, 3), Matrix::Ones(4, 2), Matrix::Ones(4, 2)), ShapeError);
  CHECK_THROWS_AS(attend(Matrix::Ones(2, 3), Matrix::Ones(4, 3), Matrix::Ones(5, 3)), ShapeError);
}

TEST_CASE("attend matches scalar oracle and stays in the value box") {
  Rng rng(Seed{2});
  const Matrix q = random_normal(rng, 16, 8);
  const Matrix k = random_normal(rng, 24, 8);
  const Matrix v = random_normal(rng, 24, 8);
  const Matrix out = attend(q, k, v);
  CHECK(oracle::max_abs_diff(oracle::attend(oracle::from(q), oracle::from(k), oracle::from(v)), out) < 1e-5);
  for (Eigen::Index c = 0; c < 8; ++c) {
    CHECK(out.col(c).minCoeff() >= v.col(c).minCoeff() - 1e-6f);
    CHECK(out.col(c).maxCoeff() <= v.col(c).maxCoeff() + 1e-6f);
  }
}

TEST_CASE("attend with many keys uses the wide path accurately") {
  Rng rng(Seed{4});
  const Matrix q = random_normal(rng, 3, 4);
  const Matrix k = random_normal(rng, 5000, 4);
  const Matrix v = random_normal(rng, 5000, 4);
  CHECK(oracle::max_abs_diff(oracle::attend(oracle::from(q), oracle::from(k), oracle::from(v)),
                             attend(q, k, v)) < 1e-5);
}

TEST_CASE("frame_context policies") {
  CHECK(frame_context(Variant::kTwoFrameFateZero, 3, 8) == std::vector<std::size_t>{3, 4});
  CHECK(frame_context(Variant::kTwoFrameTuneAVideo, 5, 8) == std::vector<std::size_t>{1, 4});
  CHECK(frame_context(Variant::kAllFrame, 2, 4) == std::vector<std::size_t>{1, 2, 3, 4});
  CHECK(frame_context(Variant::kSelfOnly, 2, 4) == std::vector<std::size_t>{2});
  CHECK(frame_context(Variant::kTwoFrameTuneAVideo, 1, 8) == std::vector<std::size_t>{1, 1});
  CHECK(frame_context(Variant::kTwoFrameFateZero, 1, 7) == std::vector<std::size_t>{1, 4});  // 3.5 rounds up
  CHECK_THROWS_AS(frame_context(Variant::kSelfOnly, 0, 4), ParameterError);
  CHECK_THROWS_AS(frame_context(Variant::kSelfOnly, 5, 4), ParameterError);
  CHECK_THROWS_AS(frame_context(Variant::kStem, 1, 4), ParameterError);
}

TEST_CASE("variant names round trip") {
  for (Variant v : {Variant::kSelfOnly, Variant::kTwoFrameFateZero, Variant::kTwoFrameTuneAVideo,
                    Variant::kAllFrame, Variant::kStem}) {
    CHECK(parse_variant(to_string(v)) == v);
  }
  CHECK_THROWS_AS(parse_variant("three_frame"), ParameterError);
}

TEST_CASE("spatial_temporal_sa matches frame-wise oracle for every policy") {
  const FeatureMap x = random_video(3, 3, 4, 4, 8);
  const ProjectionWeights w = ProjectionWeights::random(8, 8, Seed{5});
  for (Variant v : {Variant::kSelfOnly, Variant::kTwoFrameFateZero, Variant::kTwoFrameTuneAVideo,
                    Variant::kAllFrame}) {
    const FeatureMap out = spatial_temporal_sa(x, w, config(v));
    const oracle::Mat ref = oracle::context_attention(oracle::from(x), 3, oracle::from(w.w_q),
                                                      oracle::from(w.w_k), oracle::from(w.w_v),
                                                      contexts(v, 3));
    CHECK(oracle::max_abs_diff(ref, Matrix(out.flat())) < 1e-5);
    CHECK(out.channels() == 8);
  }
}

TEST_CASE("duplicated keys do not change attention") {
  const FeatureMap x = random_video(6, 1, 4, 4, 6);
  const ProjectionWeights w = ProjectionWeights::random(6, 4, Seed{1});
  const FeatureMap self = spatial_temporal_sa(x, w, config(Variant::kSelfOnly));
  for (Variant v : {Variant::kTwoFrameFateZero, Variant::kTwoFrameTuneAVideo}) {
    const FeatureMap dup = spatial_temporal_sa(x, w, config(v));
    CHECK((Matrix(self.flat()) - Matrix(dup.flat())).cwiseAbs().maxCoeff() < 1e-6f);
  }
}

TEST_CASE("all_frame on two frames equals the two-frame context") {
  const FeatureMap x = random_video(8, 2, 3, 3, 5);
  const ProjectionWeights w = ProjectionWeights::random(5, 5, Seed{2});
  const FeatureMap all = spatial_temporal_sa(x, w, config(Variant::kAllFrame));
  const oracle::Mat ref = oracle::context_attention(oracle::from(x), 2, oracle::from(w.w_q),
                                                    oracle::from(w.w_k), oracle::from(w.w_v),
                                                    {{1, 2}, {1, 2}});
  CHECK(oracle::max_abs_diff(ref, Matrix(all.flat())) < 1e-5);
  CHECK_THROWS_AS(spatial_temporal_sa(x, w, config(Variant::kStem)), ParameterError);
}

TEST_CASE("stem_sa with K = M and R = 0 equals all_frame") {
  const FeatureMap x = random_video(10, 4, 8, 8, 16);
  const ProjectionWeights w = ProjectionWeights::random(16, 16, Seed{11});
  AttentionConfig cfg = config(Variant::kStem);
  cfg.em.num_bases = x.rows();
  cfg.em.iterations = 0;
  const StemAttentionOutput stem = stem_sa(x, w, cfg);
  const FeatureMap all = spatial_temporal_sa(x, w, config(Variant::kAllFrame));
  CHECK((Matrix(stem.features.flat()) - Matrix(all.flat())).cwiseAbs().maxCoeff() < 1e-5f);
}

TEST_CASE("stem_sa with one basis returns mu W_V everywhere") {
  const FeatureMap x = random_video(12, 2, 3, 3, 4);
  const ProjectionWeights w = ProjectionWeights::random(4, 3, Seed{3});
  AttentionConfig cfg = config(Variant::kStem);
  cfg.em.num_bases = 1;
  const StemAttentionOutput out = stem_sa(x, w, cfg);
  const Matrix expect = out.bases.matrix() * w.w_v;
  for (Eigen::Index i = 0; i < out.features.flat().rows(); ++i) {
    CHECK(out.features.flat().row(i) == expect.row(0));
  }
}

TEST_CASE("stem_sa matches composed EM and attention oracles") {
  const FeatureMap x = random_video(14, 4, 8, 8, 16);
  const ProjectionWeights w = ProjectionWeights::random(16, 16, Seed{15});
  AttentionConfig cfg = config(Variant::kStem);
  cfg.em.num_bases = 8;
  cfg.em.iterations = 3;
  cfg.em.temperature = 0.05f;
  const StemAttentionOutput out = stem_sa(x, w, cfg);

  const oracle::Mat ox = oracle::from(x);
  const oracle::Mat mu0 = oracle::from(init_bases(x, cfg.em).matrix());
  const oracle::Em em = oracle::run_em(ox, mu0, 0.05, 3);
  CHECK(oracle::max_abs_diff(em.bases, out.bases.matrix()) < 1e-5);
  const oracle::Mat k = oracle::matmul(em.bases, oracle::from(w.w_k));
  const oracle::Mat v = oracle::matmul(em.bases, oracle::from(w.w_v));
  const oracle::Mat ref = oracle::attend(oracle::matmul(ox, oracle::from(w.w_q)), k, v);
  CHECK(oracle::max_abs_diff(ref, Matrix(out.features.flat())) < 1e-5);
}

TEST_CASE("stem attention is invariant to basis order") {
  const FeatureMap x = random_video(16, 2, 4, 4, 6);
  const ProjectionWeights w = ProjectionWeights::random(6, 6, Seed{7});
  Rng rng(Seed{9});
  const Matrix mu = random_normal(rng, 5, 6);
  Matrix reversed = mu.colwise().reverse();
  const FeatureMap a = stem_sa_with_bases(x, w, BasisSet(mu));
  const FeatureMap b = stem_sa_with_bases(x, w, BasisSet(reversed));
  CHECK((Matrix(a.flat()) - Matrix(b.flat())).cwiseAbs().maxCoeff() < 1e-6f);
}

TEST_CASE("self_attention dispatch and flop reporting") {
  const FeatureMap x = random_video(18, 2, 4, 4, 6);
  const ProjectionWeights w = ProjectionWeights::random(6, 6, Seed{8});
  AttentionConfig cfg = config(Variant::kStem);
  cfg.em.num_bases = 4;
  cfg.flop_counter_enabled = true;
  const SelfAttentionResult r = self_attention(x, w, cfg);
  REQUIRE(r.bases.has_value());
  REQUIRE(r.flops.has_value());
  CHECK(r.flops->total() == count_flops(cfg, 2, 4, 4, 6, 6).total());
  const SelfAttentionResult s = self_attention(x, w, config(Variant::kSelfOnly));
  CHECK_FALSE(s.bases.has_value());
  CHECK_FALSE(s.flops.has_value());
}

TEST_CASE("count_flops formulas") {
  AttentionConfig stem = config(Variant::kStem);
  stem.em.num_bases = 256;
  stem.em.iterations = 3;
  const FlopReport s = count_flops(stem, 8, 64, 64, 64, 64);
  const FlopReport a = count_flops(config(Variant::kAllFrame), 8, 64, 64, 64, 64);
  CHECK(s.total() < a.total());
  CHECK(static_cast<double>(s.attention()) / static_cast<double>(a.attention()) ==
        doctest::Approx(256.0 / 32768.0));

  const std::uint64_t hw = 4096, n = 8, d = 64, c = 64, k = 256, m = n * hw;
  CHECK(a.attention() == n * (n * hw) * hw * 2 * d);
  CHECK(a.projection == 3 * m * c * d);
  CHECK(s.em == 3 * 2 * m * k * c);
  CHECK(s.attention() == n * hw * k * 2 * d);
  CHECK(s.projection == m * c * d + 2 * k * c * d);
  CHECK(count_flops(config(Variant::kSelfOnly), 8, 64, 64, 64, 64).attention() == n * hw * hw * 2 * d);
  CHECK(count_flops(config(Variant::kTwoFrameFateZero), 8, 64, 64, 64, 64).attention() ==
        n * 2 * hw * hw * 2 * d);

  AttentionConfig exhaustive = config(Variant::kStem);
  exhaustive.em.num_bases = 16;
  exhaustive.em.iterations = 0;
  CHECK(count_flops(exhaustive, 1, 4, 4, 8, 8).attention() ==
        count_flops(config(Variant::kSelfOnly), 1, 4, 4, 8, 8).attention());

  const auto self1 = count_flops(config(Variant::kSelfOnly), 2, 8, 8, 4, 4).attention();
  const auto self2 = count_flops(config(Variant::kSelfOnly), 2, 8, 16, 4, 4).attention();
  CHECK(self2 == 4 * self1);
  stem.em.num_bases = 16;
  CHECK(count_flops(stem, 2, 8, 16, 4, 4).attention() == 2 * count_flops(stem, 2, 8, 8, 4, 4).attention());

  AttentionConfig k128 = stem, k256 = stem;
  k128.em.num_bases = 128;
  k256.em.num_bases = 256;
  CHECK(count_flops(k128, 8, 64, 64, 64, 64).total() < count_flops(k256, 8, 64, 64, 64, 64).total());
}

TEST_CASE("projection weights validation") {
  CHECK_THROWS_AS(ProjectionWeights(Matrix::Ones(3, 2), Matrix::Ones(3, 2), Matrix::Ones(2, 2)), ShapeError);
  const ProjectionWeights w = ProjectionWeights::random(5, 3, Seed{1});
  CHECK(w.input_dim() == 5);
  CHECK(w.head_dim() == 3);
  CHECK_THROWS_AS(spatial_temporal_sa(random_video(1, 2, 2, 2, 4), w, config(Variant::kSelfOnly)), ShapeError);
}

TEST_CASE("threaded attention agrees with serial") {
  const FeatureMap x = random_video(20, 4, 8, 8, 8);
  const ProjectionWeights w = ProjectionWeights::random(8, 8, Seed{4});
  for (Variant v : {Variant::kTwoFrameFateZero, Variant::kAllFrame, Variant::kStem}) {
    AttentionConfig cfg = config(v);
    cfg.em.num_bases = 32;
    set_num_threads(1);
    const Matrix a = self_attention(x, w, cfg).features.flat();
    set_num_threads(4);
    const Matrix b = self_attention(x, w, cfg).features.flat();
    set_num_threads(1);
    CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-6f);
  }
}
