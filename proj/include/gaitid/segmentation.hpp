#pragma once

// Gait-cycle segmentation: pick N frames spanning the first full ascent of
// the tracking landmark's coordinate (most negative to most positive).

#include <cstddef>
#include <vector>

#include "gaitid/core.hpp"

namespace gaitid {

struct SegmentationConfig {
  int tracking_landmark = 31;  // left foot index
  int axis = 0;                // 0 = x, 1 = y, 2 = z
  int smoothing_window = 5;    // odd
  double amplitude_fraction = 0.5;
  std::size_t n_frames = 6;

  void validate() const;
};

struct Ascent {
  std::size_t start = 0;  // i_min
  std::size_t end = 0;    // i_max
};

/// Centered moving average; windows are truncated at the edges.
std::vector<double> smooth_signal(const std::vector<double>& signal, int window);

/// First ascent of `smoothed` whose rise reaches `amplitude_fraction` of the
/// global range. An ascent is a maximal non-decreasing run starting at a
/// trough; a run that starts at index 0 only counts when it starts at the
/// global minimum, since the true trough may precede the capture. A flat top
/// resolves to its earliest index. Throws NoCycleFound.
Ascent find_first_ascent(const std::vector<double>& smoothed, double amplitude_fraction);

/// Evenly spaced indices from `start` to `end` inclusive, rounded half away
/// from zero; collisions shift forward by one.
std::vector<std::size_t> spread_indices(std::size_t start, std::size_t end, std::size_t n);

std::vector<double> tracking_signal(const RawTrajectory& traj, const SegmentationConfig& cfg);

GaitSequence segment_cycle(const RawTrajectory& traj, const SegmentationConfig& cfg = {});

}  // namespace gaitid
