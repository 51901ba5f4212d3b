#pragma once

// Canonical landmark file I/O, dataset manifests and training-pair
// construction.
//
// Landmark files are UTF-8 JSON Lines, one trajectory per line:
//   {"subject_id": str, "view_deg": num, "condition": str, "fps": num?,
//    "frames": [[[x, y, z] x 33] x T]}
// Segmented-sequence files use the same record layout plus a
// "source_indices" array with one index per frame.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaitid/core.hpp"

namespace gaitid {

nlohmann::json trajectory_to_json(const RawTrajectory& traj);
RawTrajectory trajectory_from_json(const nlohmann::json& j);

nlohmann::json sequence_to_json(const GaitSequence& seq);
GaitSequence sequence_from_json(const nlohmann::json& j);

std::vector<RawTrajectory> read_landmark_file(const std::filesystem::path& path);
void write_landmark_file(std::span<const RawTrajectory> trajectories,
                         const std::filesystem::path& path);

std::vector<GaitSequence> read_sequence_file(const std::filesystem::path& path);
void write_sequence_file(std::span<const GaitSequence> sequences,
                         const std::filesystem::path& path);

enum class Split { Train, Test, Gallery, Probe };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

struct ManifestEntry {
  /// "<landmark file>#<zero-based record index>", file relative to the manifest.
  std::string record_id;
  std::string subject_id;
  double view_deg = 0.0;
  Condition condition;
};

class DatasetManifest {
 public:
  DatasetManifest(std::vector<ManifestEntry> entries, Split split);

  const std::vector<ManifestEntry>& entries() const noexcept { return entries_; }
  Split split() const noexcept { return split_; }

 private:
  std::vector<ManifestEntry> entries_;
  Split split_;
};

DatasetManifest read_manifest(const std::filesystem::path& path);
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Loads every record a manifest references, in manifest order. Relative
/// record paths resolve against `base_dir`. Metadata in the record must agree
/// with the manifest entry.
std::vector<RawTrajectory> resolve_manifest(const DatasetManifest& manifest,
                                            const std::filesystem::path& base_dir);

/// Two tensors of a PairSet's pool. label 0 = same subject, 1 = different.
struct SequencePair {
  std::size_t a = 0;
  std::size_t b = 0;
  int label = 0;

  friend bool operator==(const SequencePair&, const SequencePair&) = default;
};

struct PairRatio {
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

class PairSet {
 public:
  PairSet(std::vector<SequenceTensor> pool, std::vector<SequencePair> pairs,
          std::uint64_t seed, PairRatio ratio);

  const std::vector<SequenceTensor>& pool() const noexcept { return pool_; }
  const std::vector<SequencePair>& pairs() const noexcept { return pairs_; }
  std::uint64_t seed() const noexcept { return seed_; }
  PairRatio ratio() const noexcept { return ratio_; }
  std::size_t size() const noexcept { return pairs_.size(); }

  const SequenceTensor& first(std::size_t i) const { return pool_[pairs_[i].a]; }
  const SequenceTensor& second(std::size_t i) const { return pool_[pairs_[i].b]; }

 private:
  std::vector<SequenceTensor> pool_;
  std::vector<SequencePair> pairs_;
  std::uint64_t seed_;
  PairRatio ratio_;
};

/// Samples `n_positive` same-subject and `n_negative` cross-subject pairs
/// without replacement. Positives visit subjects round-robin in a seeded
/// order and pick two distinct sequences uniformly; negatives pick an
/// unordered subject pair uniformly, then one sequence from each.
PairSet build_pairs(std::span<const SequenceTensor> sequences, std::size_t n_positive,
                    std::size_t n_negative, std::uint64_t seed);

/// Pair-count regimes: CASIA-B/SZU keep one positive per eligible subject and
/// fill the rest of `total` with negatives; OU-MVLP is 1:1; Gait3D is 1:2.
enum class PairPreset { OnePositivePerSubject, Balanced, OneToTwo };

PairPreset parse_pair_preset(std::string_view text);
std::string_view to_string(PairPreset preset);

PairRatio pair_counts(PairPreset preset, std::span<const SequenceTensor> sequences,
                      std::size_t total);

}  // namespace gaitid
