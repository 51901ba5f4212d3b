#pragma once

// Deterministic synthetic walkers. Every landmark coordinate oscillates
// sinusoidally around a per-subject skeleton:
//   p[l][c](t) = base[l][c] + amp[l][c] * sin(2 pi f (t + t0) + phase[l]) + noise
// where t0 is a per-trajectory start offset in [0, 1/f).

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "gaitid/core.hpp"
#include "gaitid/procrustes.hpp"

namespace gaitid {

struct SyntheticSubjectParams {
  std::string subject_id;
  FrameMatrix base;
  FrameMatrix amplitude;
  Eigen::Matrix<double, kNumLandmarks, 1> phase;
  double frequency = 1.0 / 30.0;  // cycles per frame
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

/// The canonical side-view standing pose every subject perturbs.
FrameMatrix canonical_skeleton();

/// Parameter spread around the canonical walker grows linearly with
/// `separation`.
SyntheticSubjectParams generate_subject(std::uint64_t seed, double separation,
                                        double noise_sigma = 0.0);

RawTrajectory generate_trajectory(const SyntheticSubjectParams& subject, std::size_t frames,
                                  double view_deg,
                                  const std::optional<SimilarityTransform>& global_transform,
                                  std::uint64_t seed, Condition condition = {});

/// Uniformly random proper rotation, scale in [scale_lo, scale_hi] and
/// translation components in [-shift, shift].
SimilarityTransform random_similarity(std::mt19937_64& rng, int dims, double scale_lo = 0.5,
                                      double scale_hi = 2.0, double shift = 1.0);

/// Rotation by `radians` about coordinate axis 0, 1 or 2 (row-vector
/// convention), unit scale, zero translation.
SimilarityTransform axis_rotation(int axis, double radians);

/// Camera view change: yaw about the vertical (y) axis within
/// [-max_yaw_deg, max_yaw_deg], scale in [0.5, 2], shift in [-1, 1].
SimilarityTransform random_view_transform(std::mt19937_64& rng, double max_yaw_deg);

/// Any rotation about `axis`, scale in [0.5, 2], shift in [-5, 5]. The
/// coordinate along `axis` only undergoes a positive affine map, so
/// segmentation driven by that axis picks the same frames.
SimilarityTransform random_axis_preserving_transform(std::mt19937_64& rng, int axis);

struct SynthConfig {
  std::size_t subjects = 20;
  std::size_t per_subject = 8;
  std::size_t frames = 90;
  double separation = 1.0;
  double noise_sigma = 0.005;
  bool random_transform = true;
  double max_yaw_deg = 45.0;
  std::uint64_t seed = 0;
  std::vector<double> views = {54.0, 90.0, 126.0};
};

/// Subjects "S001", "S002", ... each with `per_subject` trajectories, views
/// cycling through `views`; trajectories of one subject are contiguous.
std::vector<RawTrajectory> generate_dataset(const SynthConfig& cfg);

}  // namespace gaitid
