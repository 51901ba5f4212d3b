#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <set>

#include "gaitid/core.hpp"
#include "support.hpp"

using namespace gaitid;

namespace {

GaitSequence random_sequence(std::mt19937_64& rng, std::size_t n) {
  std::vector<LandmarkFrame> frames;
  std::vector<std::size_t> idx;
  for (std::size_t t = 0; t < n; ++t) {
    frames.push_back(testing::random_frame(rng));
    idx.push_back(3 * t);
  }
  return GaitSequence({"P1", 90.0, {}}, std::move(frames), std::move(idx));
}

}  // namespace

TEST_CASE("full subset over six frames gives 594 values") {
  std::mt19937_64 rng(1);
  const SequenceTensor t = flatten_sequence(random_sequence(rng, 6), LandmarkSubset::full());
  CHECK(t.features() == 99);
  CHECK(t.frames() == 6);
  CHECK(t.values().size() == 594);
}

TEST_CASE("lower-body subset gives 180 values") {
  std::mt19937_64 rng(2);
  const SequenceTensor t = flatten_sequence(random_sequence(rng, 6), LandmarkSubset::parse("23-32"));
  CHECK(t.features() == 30);
  CHECK(t.values().size() == 180);
}

TEST_CASE("single landmark repeats its coordinates per row") {
  FrameMatrix m = FrameMatrix::Zero();
  m.row(31) << 0.1, 0.2, 0.3;
  std::vector<LandmarkFrame> frames(6, LandmarkFrame(m));
  const GaitSequence seq({"P", 0.0, {}}, frames, {0, 1, 2, 3, 4, 5});
  const SequenceTensor t = flatten_sequence(seq, LandmarkSubset({31}));
  REQUIRE(t.values().rows() == 6);
  REQUIRE(t.values().cols() == 3);
  for (int r = 0; r < 6; ++r) {
    CHECK(t.values()(r, 0) == 0.1);
    CHECK(t.values()(r, 1) == 0.2);
    CHECK(t.values()(r, 2) == 0.3);
  }
}

TEST_CASE("column j always maps to the same landmark and axis") {
  std::mt19937_64 rng(3);
  const GaitSequence seq = random_sequence(rng, 6);
  const LandmarkSubset subset = LandmarkSubset::parse("0,5,11-13,31");
  const SequenceTensor t = flatten_sequence(seq, subset);
  for (Eigen::Index r = 0; r < t.frames(); ++r) {
    Eigen::Index col = 0;
    for (int lm : subset.indices()) {
      for (int c = 0; c < 3; ++c) {
        CHECK(t.values()(r, col++) == seq.frames()[static_cast<std::size_t>(r)](lm, c));
      }
    }
  }
}

TEST_CASE("flattening is injective: one changed coordinate changes the tensor") {
  std::mt19937_64 rng(4);
  const GaitSequence base = random_sequence(rng, 6);
  const LandmarkSubset subset = LandmarkSubset::full();
  const SequenceTensor ref = flatten_sequence(base, subset);
  std::uniform_int_distribution<int> frame(0, 5), lm(0, 32), axis(0, 2);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<LandmarkFrame> frames = base.frames();
    const int f = frame(rng);
    FrameMatrix m = frames[f].coords();
    m(lm(rng), axis(rng)) += 1e-9;
    frames[f] = LandmarkFrame(m);
    const GaitSequence changed(base.meta(), frames, base.source_indices());
    CHECK(flatten_sequence(changed, subset).values() != ref.values());
  }
}

TEST_CASE("landmark frames reject non-finite coordinates") {
  FrameMatrix m = FrameMatrix::Zero();
  m(4, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(LandmarkFrame{m}, Error);
  m(4, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(LandmarkFrame{m}, Error);
}

TEST_CASE("trajectories need frames and a subject") {
  CHECK_THROWS_AS(RawTrajectory({"P", 0.0, {}}, {}), Error);
  CHECK_THROWS_AS(RawTrajectory({"", 0.0, {}}, {LandmarkFrame::zeros()}), Error);
  CHECK_NOTHROW(RawTrajectory({"P", 0.0, {}}, {LandmarkFrame::zeros()}));
}

TEST_CASE("gait sequence source indices must increase strictly") {
  std::vector<LandmarkFrame> frames(3, LandmarkFrame::zeros());
  CHECK_THROWS_AS(GaitSequence({"P", 0.0, {}}, frames, {0, 2, 2}), Error);
  CHECK_THROWS_AS(GaitSequence({"P", 0.0, {}}, frames, {0, 2}), Error);
  CHECK_NOTHROW(GaitSequence({"P", 0.0, {}}, frames, {0, 2, 7}));
}

TEST_CASE("landmark subset parsing") {
  CHECK(LandmarkSubset::parse("0-32").size() == 33);
  CHECK(LandmarkSubset::parse("11-32").size() == 22);
  CHECK(LandmarkSubset::parse("23-32").size() == 10);
  CHECK(LandmarkSubset::parse("11,12,23-32").indices() ==
        std::vector<int>{11, 12, 23, 24, 25, 26, 27, 28, 29, 30, 31, 32});
  CHECK(LandmarkSubset::parse("11,12,23-32").str() == "11-12,23-32");
  CHECK(LandmarkSubset::parse("0-32") == LandmarkSubset::full());

  CHECK_THROWS_AS(LandmarkSubset::parse(""), Error);
  CHECK_THROWS_AS(LandmarkSubset::parse("5,3"), Error);
  CHECK_THROWS_AS(LandmarkSubset::parse("3,3"), Error);
  CHECK_THROWS_AS(LandmarkSubset::parse("30-33"), Error);
  CHECK_THROWS_AS(LandmarkSubset::parse("7-2"), Error);
  CHECK_THROWS_AS(LandmarkSubset::parse("a"), Error);
}

TEST_CASE("subset text round-trips") {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution keep(0.4);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<int> idx;
    for (int i = 0; i < kNumLandmarks; ++i) {
      if (keep(rng)) idx.push_back(i);
    }
    if (idx.empty()) idx.push_back(7);
    const LandmarkSubset s(idx);
    CHECK(LandmarkSubset::parse(s.str()) == s);
  }
}

TEST_CASE("conditions") {
  CHECK(Condition::parse("NM").kind() == Condition::Kind::Normal);
  CHECK(Condition::parse("BG").kind() == Condition::Kind::Bag);
  CHECK(Condition::parse("CL").kind() == Condition::Kind::Coat);
  CHECK(Condition::parse("rain").kind() == Condition::Kind::Other);
  CHECK(Condition::parse("rain").str() == "rain");
  CHECK(Condition::parse("CL").str() == "CL");
}

TEST_CASE("shortest decimal form round-trips doubles") {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 1000; ++i) {
    const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    CHECK(std::stod(format_real(v)) == v);
  }
  CHECK(format_real(0.5) == "0.5");
}

TEST_CASE("derived seeds separate streams and are stable") {
  std::set<std::uint64_t> seen;
  for (std::uint64_t s = 0; s < 10; ++s) {
    for (std::uint64_t k = 0; k < 10; ++k) seen.insert(derive_seed(s, k));
  }
  CHECK(seen.size() == 100);
  CHECK(derive_seed(42, 1) == derive_seed(42, 1));
}

TEST_CASE("error kinds have stable names") {
  CHECK(to_string(ErrorKind::Schema) == "schema");
  CHECK(to_string(ErrorKind::NoCycleFound) == "no_cycle_found");
  CHECK(to_string(ErrorKind::TrajectoryTooShort) == "trajectory_too_short");
}
