#pragma once

// Contrastive training of the shared encoder with Adam, followed by a
// logistic fit of the similarity head on frozen embeddings, plus the binary
// checkpoint format.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "gaitid/ingestion.hpp"
#include "gaitid/network.hpp"

namespace gaitid {

struct AdamHyper {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  AdamHyper adam;
  std::size_t batch_size = 32;
  int epochs = 10;
  std::uint64_t seed = 0;
  double margin = 1.0;
  /// input_dim is taken from the data at train time.
  EncoderConfig encoder;
  int head_epochs = 300;
  double head_learning_rate = 1e-2;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const PreprocessConfig& cfg);
PreprocessConfig preprocess_from_json(const nlohmann::json& j);

/// First and second moments shaped like the parameters they track.
struct AdamMoments {
  std::vector<double> first;
  std::vector<double> second;
};

/// One bias-corrected Adam update; `step` counts from 1.
void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
               std::size_t step, const AdamHyper& hyper);

void adam_step(EncoderParams& params, const EncoderParams& grads, AdamMoments& moments,
               std::size_t step, const AdamHyper& hyper);

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  SiameseModelParams model;
  TrainConfig config;
  std::vector<double> epoch_losses;
  std::uint32_t version = kCheckpointVersion;
};

/// Preprocessing state fitted on training data only.
struct TrainArtifacts {
  FeatureStandardizer standardizer;
  std::optional<MeanShape> mean_shape;
  PreprocessConfig preprocess;
};

/// Pairs stay fixed for the run; only their order is reshuffled each epoch.
/// Batch gradients are arithmetic means. Throws NonFiniteLoss naming the
/// epoch and batch if a loss is not finite.
Checkpoint train(const PairSet& pairs, const TrainConfig& cfg, const TrainArtifacts& artifacts);

/// Logistic regression of [e_a, e_b] onto (1 - label), full batch, Adam.
HeadParams fit_head(const EncoderParams& encoder, const PairSet& pairs,
                    const FeatureStandardizer& standardizer, int epochs, double learning_rate);

// Layout: "GAITCKPT", u32 version, u64 length + UTF-8 JSON header, the
// parameter arrays as little-endian f64 (mean shape column-major,
// standardizer mean, stddev, encoder tensors in EncoderParams::tensors()
// order, head weights, head bias), then a CRC-32 of everything before it.
std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// "epoch,loss" CSV, one row per epoch, epochs counted from 1.
void write_loss_log(std::span<const double> losses, const std::filesystem::path& path);


}  // namespace gaitid
