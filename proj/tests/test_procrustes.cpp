#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gaitid/procrustes.hpp"
#include "gaitid/synthgen.hpp"
#include "support.hpp"

using namespace gaitid;

namespace {

ShapeConfig random_shape(std::mt19937_64& rng, Eigen::Index k, Eigen::Index d) {
  return ShapeConfig(testing::random_matrix(rng, k, d));
}

Eigen::MatrixXd rotation2(double theta) {
  Eigen::MatrixXd r(2, 2);
  r << std::cos(theta), std::sin(theta), -std::sin(theta), std::cos(theta);
  return r;
}

GaitSequence sequence_from(std::mt19937_64& rng, std::size_t n) {
  std::vector<LandmarkFrame> frames;
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < n; ++t) {
    frames.push_back(testing::random_frame(rng));
    idx.push_back(t);
  }
  return GaitSequence({"P", 0.0, {}}, std::move(frames), std::move(idx));
}

GaitSequence transformed(const GaitSequence& seq, const SimilarityTransform& t) {
  std::vector<LandmarkFrame> frames;
  for (const auto& f : seq.frames()) {
    Eigen::MatrixXd m = t.scale * (f.coords() * t.rotation);
    m.rowwise() += t.translation.transpose();
    frames.emplace_back(FrameMatrix(m));
  }
  return GaitSequence(seq.meta(), std::move(frames), seq.source_indices());
}

double max_abs_diff(const GaitSequence& a, const GaitSequence& b) {
  double worst = 0.0;
  for (std::size_t t = 0; t < a.length(); ++t) {
    worst = std::max(worst, (a.frames()[t].coords() - b.frames()[t].coords()).cwiseAbs().maxCoeff());
  }
  return worst;
}

}  // namespace

TEST_CASE("identity transform leaves a shape unchanged") {
  std::mt19937_64 rng(31);
  const ShapeConfig x = random_shape(rng, 33, 3);
  CHECK(apply_transform(x, SimilarityTransform::identity(3)).points() == x.points());
}

TEST_CASE("scale two and a unit shift move the origin to (1, 0, 0)") {
  Eigen::MatrixXd pts(3, 3);
  pts << 0, 0, 0, 1, 0, 0, 0, 1, 0;
  SimilarityTransform t = SimilarityTransform::identity(3);
  t.scale = 2.0;
  t.translation << 1.0, 0.0, 0.0;
  const Eigen::MatrixXd out = apply_transform(ShapeConfig(pts), t).points();
  CHECK(out(0, 0) == 1.0);
  CHECK(out(0, 1) == 0.0);
  CHECK(out(0, 2) == 0.0);
  CHECK(out(1, 0) == 3.0);
  CHECK(out(2, 1) == 2.0);
}

TEST_CASE("applying a transform then its inverse restores the shape") {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 100; ++trial) {
    const int d = 2 + trial % 2;
    const ShapeConfig x = random_shape(rng, 12, d);
    const SimilarityTransform t = random_similarity(rng, d, 0.2, 5.0, 10.0);
    const SimilarityTransform inv = t.inverse();
    CHECK_NOTHROW(inv.validate());
    const Eigen::MatrixXd back = apply_transform(apply_transform(x, t), inv).points();
    CHECK((back - x.points()).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("dimension mismatch is rejected") {
  std::mt19937_64 rng(33);
  const ShapeConfig x = random_shape(rng, 5, 3);
  CHECK_THROWS_AS(apply_transform(x, SimilarityTransform::identity(2)), Error);
  CHECK_THROWS_AS(opa_fit(x, random_shape(rng, 6, 3)), Error);
}

TEST_CASE("shape invariants") {
  CHECK_THROWS_AS(ShapeConfig(Eigen::MatrixXd::Ones(5, 3)), Error);
  CHECK_THROWS_AS(ShapeConfig(Eigen::MatrixXd::Random(2, 3)), Error);
  CHECK_THROWS_AS(ShapeConfig(Eigen::MatrixXd::Random(5, 4)), Error);
  SimilarityTransform bad = SimilarityTransform::identity(3);
  bad.rotation(0, 0) = -1.0;  // reflection
  CHECK_THROWS_AS(bad.validate(), Error);
  bad = SimilarityTransform::identity(3);
  bad.scale = 0.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("aligning a shape to itself is the identity") {
  std::mt19937_64 rng(34);
  const ShapeConfig x = random_shape(rng, 33, 3);
  const OpaResult r = opa_fit(x, x);
  CHECK((r.transform.rotation - Eigen::MatrixXd::Identity(3, 3)).norm() < 1e-12);
  CHECK(r.transform.scale == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.transform.translation.norm() < 1e-12);
  CHECK(r.residual < 1e-24);
}

TEST_CASE("a known similarity is recovered") {
  std::mt19937_64 rng(35);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 2 + trial % 2;
    const ShapeConfig x = random_shape(rng, 33, d);
    const SimilarityTransform truth = random_similarity(rng, d, 0.5, 2.0, 3.0);
    const OpaResult r = opa_fit(x, apply_transform(x, truth));
    CHECK((r.transform.rotation - truth.rotation).norm() < 1e-9);
    CHECK(std::abs(r.transform.scale - truth.scale) / truth.scale < 1e-9);
    CHECK((r.transform.translation - truth.translation).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(r.residual < 1e-9);
    CHECK(r.transform.rotation.determinant() == doctest::Approx(1.0));
  }
}

TEST_CASE("rigid fit keeps unit scale") {
  std::mt19937_64 rng(36);
  const ShapeConfig x = random_shape(rng, 10, 3);
  SimilarityTransform truth = random_similarity(rng, 3);
  truth.scale = 3.0;
  const OpaResult r = opa_fit(x, apply_transform(x, truth), false);
  CHECK(r.transform.scale == 1.0);
  CHECK((r.transform.rotation - truth.rotation).norm() < 1e-9);
  CHECK(r.residual > 1.0);
}

TEST_CASE("mirror image of an equilateral triangle cannot be fitted by a rotation") {
  Eigen::MatrixXd tri(3, 2);
  for (int i = 0; i < 3; ++i) {
    const double a = 2.0 * std::numbers::pi * i / 3.0;
    tri.row(i) << std::cos(a), std::sin(a);
  }
  Eigen::MatrixXd mirror = tri;
  mirror.col(0) = -mirror.col(0);
  const ShapeConfig x(tri), y(mirror);

  const OpaResult r = opa_fit(x, y, false);
  // Exhaustive angle grid with the translation fixed by centroids (both are 0).
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 100000; ++i) {
    const double theta = 2.0 * std::numbers::pi * i / 100000.0;
    best = std::min(best, (tri * rotation2(theta) - mirror).squaredNorm());
  }
  CHECK(r.residual > 1.0);
  CHECK(r.residual == doctest::Approx(best).epsilon(1e-9));
  CHECK(r.transform.rotation.determinant() == doctest::Approx(1.0));

  // With scale, no positive factor correlates the two at all.
  CHECK_THROWS_AS(opa_fit(x, y, true), Error);
}

TEST_CASE("mirror image of a scalene triangle against an angle grid") {
  Eigen::MatrixXd tri(3, 2);
  tri << 0.0, 0.0, 3.0, 0.0, 0.5, 1.0;
  Eigen::MatrixXd mirror = tri;
  mirror.col(0) = -mirror.col(0);
  const OpaResult r = opa_fit(ShapeConfig(tri), ShapeConfig(mirror), true);

  const Eigen::MatrixXd xc = tri.rowwise() - tri.colwise().mean();
  const Eigen::MatrixXd yc = mirror.rowwise() - mirror.colwise().mean();
  double best = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 200000; ++i) {
    const Eigen::MatrixXd xr = xc * rotation2(2.0 * std::numbers::pi * i / 200000.0);
    const double c = std::max(0.0, (xr.array() * yc.array()).sum() / xc.squaredNorm());
    best = std::min(best, (c * xr - yc).squaredNorm());
  }
  CHECK(r.residual > 0.1);
  CHECK(r.residual <= best + 1e-12);
  CHECK(r.residual == doctest::Approx(best).epsilon(1e-6));
}

TEST_CASE("residual ignores a similarity applied to the source first") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 50; ++trial) {
    const ShapeConfig x = random_shape(rng, 20, 3);
    const ShapeConfig y = random_shape(rng, 20, 3);
    const double base = opa_fit(x, y).residual;
    const ShapeConfig moved = apply_transform(x, random_similarity(rng, 3, 0.1, 10.0, 5.0));
    CHECK(std::abs(opa_fit(moved, y).residual - base) < 1e-9);
  }
}

TEST_CASE("identical configurations converge at once") {
  std::mt19937_64 rng(38);
  const ShapeConfig x = random_shape(rng, 10, 3);
  const std::vector<ShapeConfig> configs(5, x);
  const GpaResult r = gpa_fit(configs);
  CHECK(r.converged);
  CHECK(r.iterations == 1);
  CHECK(r.history.back() < 1e-24);
  CHECK((r.mean.points() - MeanShape::normalize(x).points()).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("transformed noise-free copies collapse onto the base shape") {
  std::mt19937_64 rng(39);
  const ShapeConfig base = random_shape(rng, 33, 3);
  std::vector<ShapeConfig> configs;
  for (int i = 0; i < 30; ++i) configs.push_back(apply_transform(base, random_similarity(rng, 3)));
  const GpaResult r = gpa_fit(configs);
  CHECK(r.converged);
  CHECK(r.history.back() < 1e-12);
  // equal to the normalized base up to a rotation
  const OpaResult up_to_rotation = opa_fit(MeanShape::normalize(base).shape(), r.mean.shape(), false);
  CHECK(up_to_rotation.residual < 1e-12);
  for (std::size_t i = 0; i < configs.size(); ++i) {
    CHECK((apply_transform(configs[i], r.transforms[i]).points() - r.mean.points()).norm() < 1e-6);
  }
}

TEST_CASE("noisy copies: mean near the base and monotone history") {
  std::mt19937_64 rng(40);
  const double sigma = 0.01;
  const ShapeConfig base(MeanShape::normalize(random_shape(rng, 10, 3)).points());
  std::normal_distribution<double> noise(0.0, sigma);
  std::vector<ShapeConfig> configs;
  for (int i = 0; i < 50; ++i) {
    SimilarityTransform t = random_similarity(rng, 3);
    t.scale = 1.0;
    Eigen::MatrixXd p = apply_transform(base, t).points();
    for (Eigen::Index j = 0; j < p.size(); ++j) p.data()[j] += noise(rng);
    configs.emplace_back(p);
  }
  const GpaResult r = gpa_fit(configs);
  CHECK(r.converged);
  for (std::size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i] <= r.history[i - 1]);
  const double residual = opa_fit(base, r.mean.shape(), false).residual;
  const double rms = std::sqrt(residual / 30.0);
  CHECK(rms < 3.0 * sigma / std::sqrt(50.0));
}

TEST_CASE("GPA history is monotone on unrelated random shapes") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<ShapeConfig> configs;
    for (int i = 0; i < 20; ++i) configs.push_back(random_shape(rng, 8, 2 + trial % 2));
    GpaOptions opts;
    opts.allow_scale = trial % 3 != 0;
    const GpaResult r = gpa_fit(configs, opts);
    for (std::size_t i = 1; i < r.history.size(); ++i) CHECK(r.history[i] <= r.history[i - 1]);
    CHECK(std::abs(r.mean.points().colwise().mean().maxCoeff()) < 1e-10);
    CHECK(std::abs(r.mean.points().norm() - 1.0) < 1e-10);
  }
}

TEST_CASE("GPA preconditions") {
  std::mt19937_64 rng(42);
  const std::vector<ShapeConfig> one = {random_shape(rng, 5, 3)};
  CHECK_THROWS_AS(gpa_fit(one), Error);
  const std::vector<ShapeConfig> mixed = {random_shape(rng, 5, 3), random_shape(rng, 6, 3)};
  CHECK_THROWS_AS(gpa_fit(mixed), Error);
}

TEST_CASE("hitting the iteration cap is flagged") {
  std::mt19937_64 rng(43);
  std::vector<ShapeConfig> configs;
  for (int i = 0; i < 20; ++i) configs.push_back(random_shape(rng, 8, 3));
  GpaOptions opts;
  opts.max_iter = 1;
  opts.tol = 1e-15;
  const GpaResult r = gpa_fit(configs, opts);
  CHECK_FALSE(r.converged);
  CHECK(r.iterations == 1);
  CHECK(r.history.size() == 1);
}

TEST_CASE("frames equal to the mean are left in place") {
  std::mt19937_64 rng(44);
  const MeanShape mean = MeanShape::normalize(frame_shape(testing::random_frame(rng), LandmarkSubset::full(), 3));
  std::vector<LandmarkFrame> frames(4, LandmarkFrame(FrameMatrix(mean.points())));
  const GaitSequence seq({"P", 0.0, {}}, frames, {0, 1, 2, 3});
  CHECK(max_abs_diff(align_sequence(seq, mean, LandmarkSubset::full(), 3), seq) < 1e-10);
}

TEST_CASE("rotated, translated and rescaled twins align identically") {
  std::mt19937_64 rng(45);
  const GaitSequence seq = sequence_from(rng, 6);
  const LandmarkSubset full = LandmarkSubset::full();
  const MeanShape mean = fit_mean_shape(std::vector<GaitSequence>{seq}, full, 3).mean;
  const GaitSequence ref = align_sequence(seq, mean, full, 3);

  SimilarityTransform rot = axis_rotation(2, std::numbers::pi / 6.0);
  CHECK(max_abs_diff(align_sequence(transformed(seq, rot), mean, full, 3), ref) < 1e-8);

  SimilarityTransform shift = SimilarityTransform::identity(3);
  shift.translation << 5.0, 5.0, 5.0;
  CHECK(max_abs_diff(align_sequence(transformed(seq, shift), mean, full, 3), ref) < 1e-12);

  CHECK(max_abs_diff(align_sequence(transformed(seq, random_similarity(rng, 3)), mean, full, 3), ref) <
        1e-8);
}

TEST_CASE("alignment is idempotent") {
  std::mt19937_64 rng(46);
  const LandmarkSubset lower = LandmarkSubset::parse("11-32");
  std::vector<GaitSequence> seqs = {sequence_from(rng, 6), sequence_from(rng, 6)};
  for (int dims : {2, 3}) {
    const MeanShape mean = fit_mean_shape(seqs, lower, dims).mean;
    const GaitSequence once = align_sequence(seqs[1], mean, lower, dims);
    const GaitSequence twice = align_sequence(once, mean, lower, dims);
    CHECK(max_abs_diff(once, twice) < 1e-9);
  }
}

TEST_CASE("two-dimensional alignment zeroes depth of the subset only") {
  std::mt19937_64 rng(47);
  const LandmarkSubset lower = LandmarkSubset::parse("23-32");
  const GaitSequence seq = sequence_from(rng, 3);
  const MeanShape mean = fit_mean_shape(std::vector<GaitSequence>{seq}, lower, 2).mean;
  const GaitSequence out = align_sequence(seq, mean, lower, 2);
  for (std::size_t t = 0; t < out.length(); ++t) {
    for (int lm = 0; lm < kNumLandmarks; ++lm) {
      if (lm >= 23) {
        CHECK(out.frames()[t](lm, 2) == 0.0);
      } else {
        CHECK(out.frames()[t].coords().row(lm) == seq.frames()[t].coords().row(lm));
      }
    }
  }
  CHECK_THROWS_AS(align_sequence(seq, mean, lower, 3), Error);
  CHECK_THROWS_AS(align_sequence(seq, mean, LandmarkSubset::full(), 2), Error);
}
