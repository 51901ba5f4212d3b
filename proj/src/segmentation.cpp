#include "gaitid/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace gaitid {

void SegmentationConfig::validate() const {
  if (tracking_landmark < 0 || tracking_landmark >= kNumLandmarks) {
    throw Error(ErrorKind::Config, "tracking landmark must be in [0, 32]");
  }
  if (axis < 0 || axis >= kCoordsPerLandmark) {
    throw Error(ErrorKind::Config, "tracking axis must be x, y or z");
  }
  if (smoothing_window < 1 || smoothing_window % 2 == 0) {
    throw Error(ErrorKind::Config, "smoothing window must be an odd integer >= 1");
  }
  if (!(amplitude_fraction > 0.0 && amplitude_fraction <= 1.0)) {
    throw Error(ErrorKind::Config, "amplitude fraction must be in (0, 1]");
  }
  if (n_frames < 2) {
    throw Error(ErrorKind::Config, "a gait sequence needs at least 2 frames");
  }
}

std::vector<double> smooth_signal(const std::vector<double>& signal, int window) {
  const auto n = static_cast<std::ptrdiff_t>(signal.size());
  const std::ptrdiff_t half = window / 2;
  std::vector<double> out(signal.size());
  for (std::ptrdiff_t t = 0; t < n; ++t) {
    const std::ptrdiff_t lo = std::max<std::ptrdiff_t>(0, t - half);
    const std::ptrdiff_t hi = std::min<std::ptrdiff_t>(n - 1, t + half);
    double sum = 0.0;
    for (std::ptrdiff_t k = lo; k <= hi; ++k) sum += signal[static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(t)] = sum / static_cast<double>(hi - lo + 1);
  }
  return out;
}

Ascent find_first_ascent(const std::vector<double>& s, double amplitude_fraction) {
  if (s.empty()) throw Error(ErrorKind::NoCycleFound, "empty tracking signal");
  const auto [lo_it, hi_it] = std::minmax_element(s.begin(), s.end());
  const double range = *hi_it - *lo_it;
  if (!(range > 0.0)) {
    throw Error(ErrorKind::NoCycleFound, "tracking signal has zero range");
  }
  const double needed = amplitude_fraction * range;
  const double global_min = *lo_it;

  std::size_t i = 0;
  while (i < s.size()) {
    std::size_t j = i;
    while (j + 1 < s.size() && s[j + 1] >= s[j]) ++j;
    std::size_t top = j;
    while (top > i && s[top - 1] == s[top]) --top;
    const bool trough = i > 0 || s[0] == global_min;
    if (trough && s[top] - s[i] >= needed) return {i, top};
    i = j + 1;
  }
  throw Error(ErrorKind::NoCycleFound, "no ascent rises by " + std::to_string(needed) +
                                           " (amplitude fraction of the signal range)");
}

std::vector<std::size_t> spread_indices(std::size_t start, std::size_t end, std::size_t n) {
  if (n < 2 || end <= start) {
    throw Error(ErrorKind::InvalidArgument, "spread needs n >= 2 and end > start");
  }
  std::vector<std::size_t> idx(n);
  const double step = static_cast<double>(end - start) / static_cast<double>(n - 1);
  for (std::size_t j = 0; j < n; ++j) {
    auto v = static_cast<std::size_t>(std::round(static_cast<double>(start) + step * static_cast<double>(j)));
    if (j > 0 && v <= idx[j - 1]) v = idx[j - 1] + 1;
    if (v > end) {
      throw Error(ErrorKind::NoCycleFound, "ascent spans " + std::to_string(end - start + 1) +
                                               " frames, fewer than the " + std::to_string(n) +
                                               " requested");
    }
    idx[j] = v;
  }
  return idx;
}

std::vector<double> tracking_signal(const RawTrajectory& traj, const SegmentationConfig& cfg) {
  std::vector<double> out;
  out.reserve(traj.length());
  for (const auto& f : traj.frames()) out.push_back(f(cfg.tracking_landmark, cfg.axis));
  return out;
}

GaitSequence segment_cycle(const RawTrajectory& traj, const SegmentationConfig& cfg) {
  cfg.validate();
  if (traj.length() < cfg.n_frames) {
    throw Error(ErrorKind::TrajectoryTooShort,
                "trajectory has " + std::to_string(traj.length()) + " frames, need at least " +
                    std::to_string(cfg.n_frames));
  }
  const auto smoothed = smooth_signal(tracking_signal(traj, cfg), cfg.smoothing_window);
  const Ascent ascent = find_first_ascent(smoothed, cfg.amplitude_fraction);
  auto indices = spread_indices(ascent.start, ascent.end, cfg.n_frames);

  std::vector<LandmarkFrame> frames;
  frames.reserve(indices.size());
  for (std::size_t i : indices) frames.push_back(traj.frames()[i]);
  return GaitSequence(traj.meta(), std::move(frames), std::move(indices));
}

}  // namespace gaitid
