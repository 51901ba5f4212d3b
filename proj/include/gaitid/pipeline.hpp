#pragma once

// End-to-end glue: dataset loading, preprocessing, training and evaluation
// runs shared by the command-line tool and the test suites.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gaitid/evaluation.hpp"
#include "gaitid/procrustes.hpp"
#include "gaitid/segmentation.hpp"
#include "gaitid/training.hpp"

namespace gaitid {

/// Accepts a manifest (JSON object), a segmented-sequence file or a raw
/// landmark file; raw trajectories are segmented with `seg`.
std::vector<GaitSequence> load_sequences(const std::filesystem::path& path,
                                         const SegmentationConfig& seg);

std::vector<GaitSequence> segment_all(const std::vector<RawTrajectory>& trajectories,
                                      const SegmentationConfig& seg);

/// Aligns (when a mean is given) and flattens; no standardization.
std::vector<SequenceTensor> prepare_tensors(const std::vector<GaitSequence>& sequences,
                                            const std::optional<MeanShape>& mean,
                                            const PreprocessConfig& preprocess);

struct TrainRequest {
  PreprocessConfig preprocess;
  TrainConfig train;
  bool align = true;
  GpaOptions gpa;
  /// Used instead of fitting one when set.
  std::optional<MeanShape> mean_shape;
  PairPreset preset = PairPreset::Balanced;
  std::size_t total_pairs = 400;
};

Checkpoint run_training(const std::vector<GaitSequence>& train_sequences, const TrainRequest& req);

std::vector<Embedding> embed_sequences(const SiameseModelParams& model,
                                       const std::vector<GaitSequence>& sequences);

/// "<subject>#<ordinal within subject>" in input order.
std::vector<std::string> sequence_ids(const std::vector<GaitSequence>& sequences);

struct EvalOptions {
  ThresholdPolicy policy;
  bool verification = true;
  std::uint64_t seed = 0;
};

struct EvalOutput {
  EvalReport report;
  DistanceMatrix distances;
  std::vector<Embedding> embeddings;
};

/// First sequence per subject is the gallery, the rest are probes. The
/// verification set holds every same-subject pair plus as many seeded
/// cross-subject pairs.
EvalOutput run_evaluation(const SiameseModelParams& model, const std::vector<GaitSequence>& sequences,
                          const EvalOptions& opts);

struct CompareResult {
  double distance = 0.0;
  double similarity = 0.0;
  bool accept = false;
  double threshold = 0.0;
};

CompareResult compare_sequences(const SiameseModelParams& model, const GaitSequence& a,
                                const GaitSequence& b, const ThresholdPolicy& policy);

nlohmann::json mean_shape_to_json(const GpaResult& gpa, const PreprocessConfig& preprocess);
/// Returns the mean and checks it matches `preprocess` (subset, dims).
MeanShape mean_shape_from_json(const nlohmann::json& j, const PreprocessConfig& preprocess);

}  // namespace gaitid
