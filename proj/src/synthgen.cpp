#include "gaitid/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>

#include <Eigen/Dense>

namespace gaitid {

namespace {

// x forward, y down (image convention), z toward the camera; hip-centered.
constexpr double kSkeleton[kNumLandmarks][3] = {
    {0.02, -0.80, 0.00},   // nose
    {0.01, -0.82, 0.02},   {0.00, -0.82, 0.03},  {-0.01, -0.82, 0.04},  // left eye
    {0.01, -0.82, -0.02},  {0.00, -0.82, -0.03}, {-0.01, -0.82, -0.04}, // right eye
    {-0.04, -0.80, 0.07},  {-0.04, -0.80, -0.07},                        // ears
    {0.01, -0.76, 0.02},   {0.01, -0.76, -0.02},                         // mouth
    {0.00, -0.58, 0.18},   {0.00, -0.58, -0.18},                         // shoulders
    {0.00, -0.32, 0.20},   {0.00, -0.32, -0.20},                         // elbows
    {0.02, -0.08, 0.20},   {0.02, -0.08, -0.20},                         // wrists
    {0.04, -0.04, 0.21},   {0.04, -0.04, -0.21},                         // pinkies
    {0.05, -0.03, 0.20},   {0.05, -0.03, -0.20},                         // index fingers
    {0.04, -0.05, 0.19},   {0.04, -0.05, -0.19},                         // thumbs
    {0.00, 0.00, 0.10},    {0.00, 0.00, -0.10},                          // hips
    {0.02, 0.25, 0.10},    {0.02, 0.25, -0.10},                          // knees
    {0.00, 0.50, 0.10},    {0.00, 0.50, -0.10},                          // ankles
    {-0.03, 0.52, 0.10},   {-0.03, 0.52, -0.10},                         // heels
    {0.08, 0.53, 0.10},    {0.08, 0.53, -0.10},                          // foot index
};

// Forward swing amplitude by landmark group; legs swing opposite to the
// arm on the same side.
struct Motion {
  double amp_x;
  double amp_y;
  double phase;
};

Motion canonical_motion(int l) {
  constexpr double pi = std::numbers::pi;
  const bool left = (l >= 11 && l % 2 == 1) || (l >= 1 && l <= 3) || l == 7 || l == 9;
  const double side = left ? 0.0 : pi;
  if (l <= 10) return {0.01, 0.01, 0.0};                   // head bob
  if (l <= 12) return {0.02, 0.01, side + pi};             // shoulders
  if (l <= 14) return {0.06, 0.01, side + pi};             // elbows
  if (l <= 22) return {0.10, 0.02, side + pi};             // hands
  if (l <= 24) return {0.02, 0.01, side};                  // hips
  if (l <= 26) return {0.10, 0.03, side};                  // knees
  return {0.20, 0.04, side};                               // ankles and feet
}

}  // namespace

FrameMatrix canonical_skeleton() {
  FrameMatrix m;
  for (int l = 0; l < kNumLandmarks; ++l) {
    for (int c = 0; c < 3; ++c) m(l, c) = kSkeleton[l][c];
  }
  return m;
}

SyntheticSubjectParams generate_subject(std::uint64_t seed, double separation, double noise_sigma) {
  if (!(separation > 0.0)) throw Error(ErrorKind::InvalidArgument, "separation must be > 0");
  if (!(noise_sigma >= 0.0)) throw Error(ErrorKind::InvalidArgument, "noise sigma must be >= 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SyntheticSubjectParams p;
  p.subject_id = "synth-" + std::to_string(seed);
  p.seed = seed;
  p.noise_sigma = noise_sigma;
  p.base = canonical_skeleton();
  for (int l = 0; l < kNumLandmarks; ++l) {
    const Motion m = canonical_motion(l);
    for (int c = 0; c < 3; ++c) p.base(l, c) += 0.02 * separation * gauss(rng);
    p.amplitude(l, 0) = m.amp_x + 0.02 * separation * gauss(rng);
    p.amplitude(l, 1) = m.amp_y + 0.01 * separation * gauss(rng);
    p.amplitude(l, 2) = 0.01 * separation * gauss(rng);
    p.phase(l) = m.phase + 0.2 * separation * gauss(rng);
  }
  // Keep the left-foot forward swing clearly non-zero for segmentation.
  if (std::abs(p.amplitude(31, 0)) < 0.05) p.amplitude(31, 0) = 0.05;
  p.frequency = 1.0 / std::clamp(30.0 + 2.0 * gauss(rng), 20.0, 40.0);
  return p;
}

SimilarityTransform random_similarity(std::mt19937_64& rng, int dims, double scale_lo,
                                      double scale_hi, double shift) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd g(dims, dims);
  for (Eigen::Index i = 0; i < g.size(); ++i) g.data()[i] = gauss(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ();
  // Sign-fix against R's diagonal for a Haar-uniform rotation.
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (int i = 0; i < dims; ++i) {
    if (r(i, i) < 0.0) q.col(i) = -q.col(i);
  }
  if (q.determinant() < 0.0) q.col(0) = -q.col(0);

  std::uniform_real_distribution<double> scale(scale_lo, scale_hi);
  std::uniform_real_distribution<double> offset(-shift, shift);
  SimilarityTransform t;
  t.rotation = q;
  t.scale = scale(rng);
  t.translation.resize(dims);
  for (int i = 0; i < dims; ++i) t.translation(i) = offset(rng);
  return t;
}

SimilarityTransform axis_rotation(int axis, double radians) {
  if (axis < 0 || axis > 2) throw Error(ErrorKind::InvalidArgument, "rotation axis must be 0, 1 or 2");
  const int a = (axis + 1) % 3;
  const int b = (axis + 2) % 3;
  SimilarityTransform t = SimilarityTransform::identity(3);
  t.rotation(a, a) = std::cos(radians);
  t.rotation(b, b) = std::cos(radians);
  t.rotation(a, b) = std::sin(radians);
  t.rotation(b, a) = -std::sin(radians);
  return t;
}

SimilarityTransform random_view_transform(std::mt19937_64& rng, double max_yaw_deg) {
  std::uniform_real_distribution<double> yaw(-max_yaw_deg, max_yaw_deg);
  std::uniform_real_distribution<double> scale(0.5, 2.0);
  std::uniform_real_distribution<double> offset(-1.0, 1.0);
  SimilarityTransform t = axis_rotation(1, yaw(rng) * std::numbers::pi / 180.0);
  t.scale = scale(rng);
  for (int i = 0; i < 3; ++i) t.translation(i) = offset(rng);
  return t;
}

SimilarityTransform random_axis_preserving_transform(std::mt19937_64& rng, int axis) {
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> scale(0.5, 2.0);
  std::uniform_real_distribution<double> offset(-5.0, 5.0);
  SimilarityTransform t = axis_rotation(axis, angle(rng));
  t.scale = scale(rng);
  for (int i = 0; i < 3; ++i) t.translation(i) = offset(rng);
  return t;
}

RawTrajectory generate_trajectory(const SyntheticSubjectParams& subject, std::size_t frames,
                                  double view_deg,
                                  const std::optional<SimilarityTransform>& global_transform,
                                  std::uint64_t seed, Condition condition) {
  if (frames < 2) throw Error(ErrorKind::InvalidArgument, "a synthetic trajectory needs T >= 2");
  if (global_transform) {
    global_transform->validate();
    if (global_transform->rotation.rows() != 3) {
      throw Error(ErrorKind::DimensionMismatch, "synthetic trajectories need a 3-D transform");
    }
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> start(0.0, 1.0 / subject.frequency);
  const double t0 = start(rng);
  std::normal_distribution<double> noise(0.0, 1.0);

  std::vector<LandmarkFrame> out;
  out.reserve(frames);
  const double omega = 2.0 * std::numbers::pi * subject.frequency;
  for (std::size_t t = 0; t < frames; ++t) {
    FrameMatrix m;
    for (int l = 0; l < kNumLandmarks; ++l) {
      const double s = std::sin(omega * (static_cast<double>(t) + t0) + subject.phase(l));
      for (int c = 0; c < 3; ++c) {
        m(l, c) = subject.base(l, c) + subject.amplitude(l, c) * s;
        if (subject.noise_sigma > 0.0) m(l, c) += subject.noise_sigma * noise(rng);
      }
    }
    if (global_transform) {
      Eigen::MatrixXd moved = global_transform->scale * (m * global_transform->rotation);
      moved.rowwise() += global_transform->translation.transpose();
      m = moved;
    }
    out.emplace_back(m);
  }
  return RawTrajectory(SequenceMeta{subject.subject_id, view_deg, std::move(condition)},
                       std::move(out));
}

std::vector<RawTrajectory> generate_dataset(const SynthConfig& cfg) {
  if (cfg.views.empty()) throw Error(ErrorKind::Config, "synthetic dataset needs at least one view");
  std::vector<RawTrajectory> out;
  out.reserve(cfg.subjects * cfg.per_subject);
  for (std::size_t s = 0; s < cfg.subjects; ++s) {
    SyntheticSubjectParams subject =
        generate_subject(derive_seed(cfg.seed, s), cfg.separation, cfg.noise_sigma);
    char id[16];
    std::snprintf(id, sizeof id, "S%03zu", s + 1);
    subject.subject_id = id;
    for (std::size_t k = 0; k < cfg.per_subject; ++k) {
      const std::uint64_t traj_seed = derive_seed(derive_seed(cfg.seed, s), 1000 + k);
      std::optional<SimilarityTransform> transform;
      if (cfg.random_transform) {
        std::mt19937_64 rng(derive_seed(traj_seed, 7));
        transform = random_view_transform(rng, cfg.max_yaw_deg);
      }
      out.push_back(generate_trajectory(subject, cfg.frames, cfg.views[k % cfg.views.size()],
                                        transform, traj_seed));
    }
  }
  return out;
}

}  // namespace gaitid
