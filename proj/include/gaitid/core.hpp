#pragma once

// Canonical domain types shared by every module of the toolkit.
//
// All types validate their invariants on construction and are immutable
// afterwards. Reals are 64-bit throughout.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

namespace gaitid {

inline constexpr int kNumLandmarks = 33;
inline constexpr int kCoordsPerLandmark = 3;

enum class ErrorKind {
  InvalidArgument,
  DimensionMismatch,
  Schema,
  Io,
  TrajectoryTooShort,
  NoCycleFound,
  DegenerateShape,
  InsufficientData,
  NonFiniteLoss,
  Corruption,
  Version,
  Config,
};

std::string_view to_string(ErrorKind kind);

/// Every failure raised by the toolkit carries a machine-readable kind.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

using FrameMatrix =
    Eigen::Matrix<double, kNumLandmarks, kCoordsPerLandmark, Eigen::RowMajor>;

/// One pose-estimator frame: 33 landmarks, each (x, y, z).
class LandmarkFrame {
 public:
  explicit LandmarkFrame(const FrameMatrix& coords);

  static LandmarkFrame zeros();

  const FrameMatrix& coords() const noexcept { return coords_; }
  double operator()(int landmark, int axis) const { return coords_(landmark, axis); }

  friend bool operator==(const LandmarkFrame& a, const LandmarkFrame& b) {
    return a.coords_ == b.coords_;
  }

 private:
  FrameMatrix coords_;
};

/// Walking condition tag. NM / BG / CL are the standard ones, anything else
/// is kept verbatim as Other.
class Condition {
 public:
  enum class Kind { Normal, Bag, Coat, Other };

  Condition() = default;
  static Condition parse(std::string_view tag);

  Kind kind() const noexcept { return kind_; }
  std::string str() const;

  friend bool operator==(const Condition&, const Condition&) = default;

 private:
  Kind kind_ = Kind::Normal;
  std::string other_;
};

struct SequenceMeta {
  std::string subject_id;
  double view_deg = 0.0;
  Condition condition;

  friend bool operator==(const SequenceMeta&, const SequenceMeta&) = default;
};

/// A variable-length capture of landmark frames for one walk.
class RawTrajectory {
 public:
  RawTrajectory(SequenceMeta meta, std::vector<LandmarkFrame> frames,
                std::optional<double> fps = std::nullopt);

  const SequenceMeta& meta() const noexcept { return meta_; }
  const std::vector<LandmarkFrame>& frames() const noexcept { return frames_; }
  std::optional<double> fps() const noexcept { return fps_; }
  std::size_t length() const noexcept { return frames_.size(); }

  friend bool operator==(const RawTrajectory&, const RawTrajectory&) = default;

 private:
  SequenceMeta meta_;
  std::vector<LandmarkFrame> frames_;
  std::optional<double> fps_;
};

/// Exactly N frames spanning one gait cycle, with the indices they were
/// taken from in the originating trajectory.
class GaitSequence {
 public:
  GaitSequence(SequenceMeta meta, std::vector<LandmarkFrame> frames,
               std::vector<std::size_t> source_indices);

  const SequenceMeta& meta() const noexcept { return meta_; }
  const std::vector<LandmarkFrame>& frames() const noexcept { return frames_; }
  const std::vector<std::size_t>& source_indices() const noexcept {
    return source_indices_;
  }
  std::size_t length() const noexcept { return frames_.size(); }

  friend bool operator==(const GaitSequence&, const GaitSequence&) = default;

 private:
  SequenceMeta meta_;
  std::vector<LandmarkFrame> frames_;
  std::vector<std::size_t> source_indices_;
};

/// Strictly increasing, non-empty set of landmark indices in [0, 32].
class LandmarkSubset {
 public:
  explicit LandmarkSubset(std::vector<int> indices);

  static LandmarkSubset full();

  /// Accepts ranges and comma lists, e.g. "0-32", "23-32", "11,12,23-32".
  static LandmarkSubset parse(std::string_view text);

  const std::vector<int>& indices() const noexcept { return indices_; }
  std::size_t size() const noexcept { return indices_.size(); }

  /// Compact textual form that parse() accepts.
  std::string str() const;

  friend bool operator==(const LandmarkSubset&, const LandmarkSubset&) = default;

 private:
  std::vector<int> indices_;
};

/// N x F model input; row t is the feature vector of frame t.
class SequenceTensor {
 public:
  SequenceTensor(Eigen::MatrixXd values, SequenceMeta meta);

  const Eigen::MatrixXd& values() const noexcept { return values_; }
  const SequenceMeta& meta() const noexcept { return meta_; }
  Eigen::Index frames() const noexcept { return values_.rows(); }
  Eigen::Index features() const noexcept { return values_.cols(); }

 private:
  Eigen::MatrixXd values_;
  SequenceMeta meta_;
};

inline std::size_t feature_count(const LandmarkSubset& subset) {
  return subset.size() * kCoordsPerLandmark;
}

/// Row t holds the subset landmarks of frame t in ascending index order,
/// (x, y, z) per landmark.
SequenceTensor flatten_sequence(const GaitSequence& seq, const LandmarkSubset& subset);

/// Independent, reproducible sub-seed for a numbered random stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

/// Shortest decimal text that parses back to the same double.
std::string format_real(double value);

bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m);

}  // namespace gaitid
