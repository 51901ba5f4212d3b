#pragma once

// Verification and rank-1 identification metrics, distance matrices and the
// JSON / CSV report formats.

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaitid/ingestion.hpp"
#include "gaitid/network.hpp"

namespace gaitid {

struct LabeledEmbedding {
  SequenceMeta meta;
  Embedding embedding;
};

class GalleryIndex {
 public:
  explicit GalleryIndex(std::vector<LabeledEmbedding> entries);

  const std::vector<LabeledEmbedding>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }

 private:
  std::vector<LabeledEmbedding> entries_;
};

struct GalleryProbeSplit {
  std::vector<LabeledEmbedding> gallery;
  std::vector<LabeledEmbedding> probes;
};

/// First sequence of every subject (in input order) enrolls in the gallery;
/// the rest become probes.
GalleryProbeSplit split_first_as_gallery(std::span<const LabeledEmbedding> all);

struct BreakdownRow {
  double view_deg = 0.0;
  std::string condition;
  std::size_t probes = 0;
  std::size_t correct = 0;
  double rank1 = 0.0;
};

struct Rank1Result {
  double accuracy = 0.0;  // percent
  std::size_t correct = 0;
  std::size_t total = 0;
  std::vector<std::size_t> matches;      // gallery position chosen per probe
  std::vector<BreakdownRow> breakdown;   // per (probe view, probe condition)
};

/// Nearest gallery entry by Euclidean distance; ties go to the lowest
/// gallery position. accuracy = correct / total * 100.
Rank1Result rank1_identify(const GalleryIndex& gallery, std::span<const LabeledEmbedding> probes);

enum class VerificationMode { Distance, Head };

struct ThresholdPolicy {
  VerificationMode mode = VerificationMode::Distance;
  /// Distance mode: similar iff D < threshold. Defaults to margin / 2.
  std::optional<double> threshold;
};

struct VerificationResult {
  double accuracy = 0.0;   // percent
  double mean_loss = 0.0;  // contrastive, at the model margin
  std::size_t pairs = 0;
  std::size_t correct = 0;
};

/// Scores pairs whose pool embeddings are already computed.
VerificationResult verify_pairs(std::span<const Embedding> pool_embeddings,
                                std::span<const SequencePair> pairs, const HeadParams& head,
                                double margin, const ThresholdPolicy& policy);

VerificationResult pair_verification_accuracy(const SiameseModelParams& model, const PairSet& pairs,
                                              const ThresholdPolicy& policy);

struct DistanceMatrix {
  std::vector<std::string> ids;
  Eigen::MatrixXd values;
};

DistanceMatrix distance_matrix(std::span<const std::string> ids,
                               std::span<const Embedding> embeddings);

/// Header row "id,<id_0>,...", then one row per id; shortest round-trip
/// decimals.
std::string to_csv(const DistanceMatrix& m);

struct EvalReport {
  double rank1_accuracy = 0.0;
  std::optional<double> pair_accuracy;
  std::optional<double> mean_contrastive_loss;
  std::vector<BreakdownRow> breakdown;
  std::size_t gallery_size = 0;
  std::size_t probe_count = 0;
  std::size_t rank1_correct = 0;
  std::size_t pair_count = 0;
  std::size_t feature_dim = 0;
  std::string landmarks;
  std::string verification_mode;
  double threshold = 0.0;
};

nlohmann::json to_json(const EvalReport& report);
std::string breakdown_csv(std::span<const BreakdownRow> rows);

void write_text(const std::string& text, const std::filesystem::path& path);

}  // namespace gaitid
