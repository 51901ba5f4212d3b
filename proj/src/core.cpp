#include "gaitid/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace gaitid {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "invalid_argument";
    case ErrorKind::DimensionMismatch: return "dimension_mismatch";
    case ErrorKind::Schema: return "schema";
    case ErrorKind::Io: return "io";
    case ErrorKind::TrajectoryTooShort: return "trajectory_too_short";
    case ErrorKind::NoCycleFound: return "no_cycle_found";
    case ErrorKind::DegenerateShape: return "degenerate_shape";
    case ErrorKind::InsufficientData: return "insufficient_data";
    case ErrorKind::NonFiniteLoss: return "non_finite_loss";
    case ErrorKind::Corruption: return "corruption";
    case ErrorKind::Version: return "version";
    case ErrorKind::Config: return "config";
  }
  return "unknown";
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  // splitmix64 finalizer over (seed, stream)
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string format_real(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  if (ec != std::errc()) throw Error(ErrorKind::InvalidArgument, "cannot format value");
  return std::string(buf, ptr);
}

bool all_finite(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  return m.allFinite();
}

LandmarkFrame::LandmarkFrame(const FrameMatrix& coords) : coords_(coords) {
  if (!coords_.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "landmark frame contains non-finite coordinates");
  }
}

LandmarkFrame LandmarkFrame::zeros() { return LandmarkFrame(FrameMatrix::Zero()); }

Condition Condition::parse(std::string_view tag) {
  Condition c;
  if (tag == "NM") {
    c.kind_ = Kind::Normal;
  } else if (tag == "BG") {
    c.kind_ = Kind::Bag;
  } else if (tag == "CL") {
    c.kind_ = Kind::Coat;
  } else {
    c.kind_ = Kind::Other;
    c.other_ = std::string(tag);
  }
  return c;
}

std::string Condition::str() const {
  switch (kind_) {
    case Kind::Normal: return "NM";
    case Kind::Bag: return "BG";
    case Kind::Coat: return "CL";
    case Kind::Other: return other_;
  }
  return other_;
}

RawTrajectory::RawTrajectory(SequenceMeta meta, std::vector<LandmarkFrame> frames,
                             std::optional<double> fps)
    : meta_(std::move(meta)), frames_(std::move(frames)), fps_(fps) {
  if (meta_.subject_id.empty()) {
    throw Error(ErrorKind::InvalidArgument, "trajectory subject_id is empty");
  }
  if (frames_.empty()) {
    throw Error(ErrorKind::InvalidArgument, "trajectory has no frames");
  }
  if (!std::isfinite(meta_.view_deg) || (fps_ && !(std::isfinite(*fps_) && *fps_ > 0))) {
    throw Error(ErrorKind::InvalidArgument, "trajectory view_deg/fps must be finite (fps > 0)");
  }
}

GaitSequence::GaitSequence(SequenceMeta meta, std::vector<LandmarkFrame> frames,
                           std::vector<std::size_t> source_indices)
    : meta_(std::move(meta)), frames_(std::move(frames)),
      source_indices_(std::move(source_indices)) {
  if (frames_.empty()) {
    throw Error(ErrorKind::InvalidArgument, "gait sequence has no frames");
  }
  if (frames_.size() != source_indices_.size()) {
    throw Error(ErrorKind::InvalidArgument, "gait sequence frame/index count mismatch");
  }
  for (std::size_t i = 1; i < source_indices_.size(); ++i) {
    if (source_indices_[i] <= source_indices_[i - 1]) {
      throw Error(ErrorKind::InvalidArgument, "gait sequence source indices must be strictly increasing");
    }
  }
}

LandmarkSubset::LandmarkSubset(std::vector<int> indices) : indices_(std::move(indices)) {
  if (indices_.empty()) {
    throw Error(ErrorKind::InvalidArgument, "landmark subset is empty");
  }
  for (std::size_t i = 0; i < indices_.size(); ++i) {
    if (indices_[i] < 0 || indices_[i] >= kNumLandmarks) {
      throw Error(ErrorKind::InvalidArgument,
                  "landmark index " + std::to_string(indices_[i]) + " out of range [0, 32]");
    }
    if (i > 0 && indices_[i] <= indices_[i - 1]) {
      throw Error(ErrorKind::InvalidArgument, "landmark subset must be strictly increasing");
    }
  }
}

LandmarkSubset LandmarkSubset::full() {
  std::vector<int> all(kNumLandmarks);
  for (int i = 0; i < kNumLandmarks; ++i) all[i] = i;
  return LandmarkSubset(std::move(all));
}

namespace {

int parse_index(std::string_view s) {
  while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
  while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
  int value = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw Error(ErrorKind::InvalidArgument, "bad landmark index '" + std::string(s) + "'");
  }
  return value;
}

}  // namespace

LandmarkSubset LandmarkSubset::parse(std::string_view text) {
  std::vector<int> out;
  while (!text.empty()) {
    auto comma = text.find(',');
    std::string_view item = text.substr(0, comma);
    text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
    if (auto dash = item.find('-'); dash != std::string_view::npos) {
      int lo = parse_index(item.substr(0, dash));
      int hi = parse_index(item.substr(dash + 1));
      if (hi < lo) {
        throw Error(ErrorKind::InvalidArgument, "descending landmark range '" + std::string(item) + "'");
      }
      for (int i = lo; i <= hi; ++i) out.push_back(i);
    } else {
      out.push_back(parse_index(item));
    }
  }
  return LandmarkSubset(std::move(out));
}

std::string LandmarkSubset::str() const {
  std::string out;
  std::size_t i = 0;
  while (i < indices_.size()) {
    std::size_t j = i;
    while (j + 1 < indices_.size() && indices_[j + 1] == indices_[j] + 1) ++j;
    if (!out.empty()) out += ',';
    out += std::to_string(indices_[i]);
    if (j > i) out += '-' + std::to_string(indices_[j]);
    i = j + 1;
  }
  return out;
}

SequenceTensor::SequenceTensor(Eigen::MatrixXd values, SequenceMeta meta)
    : values_(std::move(values)), meta_(std::move(meta)) {
  if (values_.rows() < 1 || values_.cols() < 1) {
    throw Error(ErrorKind::InvalidArgument, "sequence tensor is empty");
  }
  if (!values_.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "sequence tensor contains non-finite values");
  }
}

SequenceTensor flatten_sequence(const GaitSequence& seq, const LandmarkSubset& subset) {
  const auto n = static_cast<Eigen::Index>(seq.length());
  const auto f = static_cast<Eigen::Index>(feature_count(subset));
  Eigen::MatrixXd values(n, f);
  for (Eigen::Index t = 0; t < n; ++t) {
    const auto& coords = seq.frames()[static_cast<std::size_t>(t)].coords();
    Eigen::Index col = 0;
    for (int lm : subset.indices()) {
      for (int c = 0; c < kCoordsPerLandmark; ++c) values(t, col++) = coords(lm, c);
    }
  }
  return SequenceTensor(std::move(values), seq.meta());
}

}  // namespace gaitid
