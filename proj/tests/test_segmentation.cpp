#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gaitid/segmentation.hpp"
#include "support.hpp"

using namespace gaitid;

namespace {

// Independent scan: the first strict local minimum (or index 0 when it holds
// the global minimum) followed by the top of its climb.
std::pair<std::size_t, std::size_t> brute_force_ascent(const std::vector<double>& s) {
  const double lo = *std::min_element(s.begin(), s.end());
  for (std::size_t t = 0; t + 1 < s.size(); ++t) {
    const bool is_trough = t == 0 ? s[0] == lo : (s[t] < s[t - 1] && s[t + 1] >= s[t]);
    if (!is_trough) continue;
    std::size_t peak = t;
    for (std::size_t u = t + 1; u < s.size() && s[u] >= s[u - 1]; ++u) {
      if (s[u] > s[peak]) peak = u;
    }
    if (peak > t) return {t, peak};
  }
  return {0, 0};
}

}  // namespace

TEST_CASE("linear ramp over 31 frames spreads to multiples of six") {
  std::vector<double> s(31);
  for (int t = 0; t < 31; ++t) s[t] = -1.0 + 2.0 * t / 30.0;
  const GaitSequence seq = segment_cycle(testing::signal_trajectory(s));
  CHECK(seq.source_indices() == std::vector<std::size_t>{0, 6, 12, 18, 24, 30});
}

TEST_CASE("constant signal has no cycle") {
  std::vector<double> s(40, 0.25);
  try {
    segment_cycle(testing::signal_trajectory(s));
    FAIL("expected NoCycleFound");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::NoCycleFound);
  }
}

TEST_CASE("too few frames") {
  std::vector<double> s = {0.0, 1.0, 2.0, 3.0, 4.0};
  try {
    segment_cycle(testing::signal_trajectory(s));
    FAIL("expected TrajectoryTooShort");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::TrajectoryTooShort);
  }
}

TEST_CASE("sinusoid picks the first trough-to-crest climb") {
  std::vector<double> s(80);
  for (int t = 0; t < 80; ++t) s[t] = std::sin(2.0 * std::numbers::pi * t / 40.0);
  const auto [lo, hi] = brute_force_ascent(s);
  CHECK(lo == 30);
  CHECK(hi == 50);

  SegmentationConfig cfg;
  cfg.smoothing_window = 1;
  const Ascent a = find_first_ascent(smooth_signal(s, 1), cfg.amplitude_fraction);
  CHECK(a.start == lo);
  CHECK(a.end == hi);
  const GaitSequence seq = segment_cycle(testing::signal_trajectory(s), cfg);
  CHECK(seq.source_indices() == std::vector<std::size_t>{30, 34, 38, 42, 46, 50});
}

TEST_CASE("frames come from the unsmoothed trajectory") {
  std::vector<double> s(60);
  for (int t = 0; t < 60; ++t) s[t] = std::sin(2.0 * std::numbers::pi * t / 30.0) + 0.05 * ((t * 7) % 5);
  const RawTrajectory traj = testing::signal_trajectory(s);
  const GaitSequence seq = segment_cycle(traj);
  for (std::size_t j = 0; j < seq.length(); ++j) {
    CHECK(seq.frames()[j] == traj.frames()[seq.source_indices()[j]]);
  }
}

TEST_CASE("smoothing truncates windows at the edges") {
  const std::vector<double> s = {1.0, 2.0, 3.0, 10.0, 5.0};
  const auto m = smooth_signal(s, 3);
  CHECK(m[0] == doctest::Approx(1.5));
  CHECK(m[1] == doctest::Approx(2.0));
  CHECK(m[2] == doctest::Approx(5.0));
  CHECK(m[3] == doctest::Approx(6.0));
  CHECK(m[4] == doctest::Approx(7.5));
  CHECK(smooth_signal(s, 1) == s);
}

TEST_CASE("flat tops resolve to their earliest index") {
  const std::vector<double> s = {0.0, -1.0, 0.0, 1.0, 1.0, 1.0, 0.0};
  const Ascent a = find_first_ascent(s, 0.5);
  CHECK(a.start == 1);
  CHECK(a.end == 3);
}

TEST_CASE("small wiggles below the amplitude fraction are skipped") {
  // a 0.2 wiggle, then a full swing of 2
  const std::vector<double> s = {0.0, -0.1, 0.1, 0.0, -1.0, -0.5, 0.0, 0.5, 1.0, 0.0};
  const Ascent a = find_first_ascent(s, 0.5);
  CHECK(a.start == 4);
  CHECK(a.end == 8);
}

TEST_CASE("even spacing rounds half away from zero") {
  CHECK(spread_indices(0, 5, 3) == std::vector<std::size_t>{0, 3, 5});
  CHECK(spread_indices(10, 15, 6) == std::vector<std::size_t>{10, 11, 12, 13, 14, 15});
  CHECK(spread_indices(2, 9, 4) == std::vector<std::size_t>{2, 4, 7, 9});
  CHECK_THROWS_AS(spread_indices(0, 4, 6), Error);
}

TEST_CASE("config validation") {
  SegmentationConfig c;
  c.smoothing_window = 4;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.tracking_landmark = 33;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.amplitude_fraction = 0.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.n_frames = 1;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("segmentation invariants on noisy periodic signals") {
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> period(18.0, 40.0), phase(0.0, 6.3), amp(0.05, 2.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  SegmentationConfig cfg;
  int segmented = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const double p = period(rng), ph = phase(rng), a = amp(rng), sigma = 0.1 * a * (trial % 3);
    std::vector<double> s(90);
    for (int t = 0; t < 90; ++t) s[t] = a * std::sin(2.0 * std::numbers::pi * t / p + ph) + sigma * noise(rng);
    const RawTrajectory traj = testing::signal_trajectory(s);
    GaitSequence seq = [&] {
      try {
        return segment_cycle(traj, cfg);
      } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::NoCycleFound);
        return GaitSequence({"none", 0.0, {}}, {LandmarkFrame::zeros()}, {0});
      }
    }();
    if (seq.meta().subject_id == "none") continue;
    ++segmented;
    const auto smoothed = smooth_signal(tracking_signal(traj, cfg), cfg.smoothing_window);
    const Ascent asc = find_first_ascent(smoothed, cfg.amplitude_fraction);
    const auto& idx = seq.source_indices();
    REQUIRE(idx.size() == cfg.n_frames);
    for (std::size_t j = 1; j < idx.size(); ++j) CHECK(idx[j] > idx[j - 1]);
    CHECK(idx.front() == asc.start);
    CHECK(idx.back() == asc.end);
    const auto [lo, hi] = std::minmax_element(smoothed.begin(), smoothed.end());
    CHECK(smoothed[asc.end] - smoothed[asc.start] >= cfg.amplitude_fraction * (*hi - *lo));
    CHECK(segment_cycle(traj, cfg) == seq);
  }
  CHECK(segmented > 250);
}
