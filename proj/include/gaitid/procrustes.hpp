#pragma once

// Ordinary and Generalized Procrustes Analysis over k x d landmark
// configurations (one point per row). Transforms act on row vectors:
//   X' = c * X * O + 1 * t^T
// Reflections are never fitted: every rotation has det(O) = +1.

#include <span>
#include <vector>

#include <Eigen/Core>

#include "gaitid/core.hpp"

namespace gaitid {

/// k x d point configuration with d in {2, 3}, k >= d, not all points equal.
class ShapeConfig {
 public:
  explicit ShapeConfig(Eigen::MatrixXd points);

  const Eigen::MatrixXd& points() const noexcept { return points_; }
  Eigen::Index landmarks() const noexcept { return points_.rows(); }
  Eigen::Index dims() const noexcept { return points_.cols(); }

 private:
  Eigen::MatrixXd points_;
};

struct SimilarityTransform {
  double scale = 1.0;
  Eigen::MatrixXd rotation;      // d x d, proper
  Eigen::VectorXd translation;   // d

  static SimilarityTransform identity(Eigen::Index dims);

  /// Throws InvalidArgument unless O^T O = I and det O = +1 within 1e-10
  /// and scale > 0.
  void validate() const;

  SimilarityTransform inverse() const;
};

/// Centered, unit Frobenius norm configuration.
class MeanShape {
 public:
  /// Validates the invariants (centroid and norm within 1e-10).
  explicit MeanShape(ShapeConfig shape);

  /// Centers and normalizes an arbitrary configuration.
  static MeanShape normalize(const ShapeConfig& shape);

  const ShapeConfig& shape() const noexcept { return shape_; }
  const Eigen::MatrixXd& points() const noexcept { return shape_.points(); }

 private:
  ShapeConfig shape_;
};

ShapeConfig apply_transform(const ShapeConfig& x, const SimilarityTransform& t);

struct OpaResult {
  SimilarityTransform transform;
  double residual = 0.0;  // ||apply_transform(X, T) - Y||_F^2
};

/// Least-squares similarity taking X onto Y. With allow_scale = false the
/// scale is pinned to 1.
OpaResult opa_fit(const ShapeConfig& x, const ShapeConfig& y, bool allow_scale = true);

struct GpaOptions {
  double tol = 1e-7;
  int max_iter = 100;
  bool allow_scale = true;
};

struct GpaResult {
  MeanShape mean;
  std::vector<SimilarityTransform> transforms;  // config i onto mean
  std::vector<double> history;                  // objective per iteration
  bool converged = false;
  int iterations = 0;
};

/// Iterative GPA. The mean starts as the first configuration, centered and
/// unit-normalized; each iteration aligns every configuration to the mean,
/// then re-averages, re-centers and re-normalizes it. Stops once the mean
/// moves less than `tol` (Frobenius) or after `max_iter` iterations; a run
/// that hits the cap is returned with converged = false.
GpaResult gpa_fit(std::span<const ShapeConfig> configs, const GpaOptions& opts = {});

/// Configuration of the subset landmarks in one frame, first `dims` axes.
ShapeConfig frame_shape(const LandmarkFrame& frame, const LandmarkSubset& subset, int dims);

/// GPA mean over every frame of every sequence.
GpaResult fit_mean_shape(std::span<const GaitSequence> sequences, const LandmarkSubset& subset,
                         int dims, const GpaOptions& opts = {});

/// OPA-aligns each frame's subset configuration to `mean` and writes the
/// aligned coordinates back. With dims = 2 the subset landmarks' z is zeroed.
/// Landmarks outside the subset are left as they were.
GaitSequence align_sequence(const GaitSequence& seq, const MeanShape& mean,
                            const LandmarkSubset& subset, int dims, bool allow_scale = true);

}  // namespace gaitid
