#pragma once

// Siamese stacked bidirectional recurrent encoder.
//
// A single EncoderParams instance encodes both branches of a pair, so weight
// sharing is structural. Each layer runs a forward cell over t = 0..N-1 and
// a backward cell over t = N-1..0, both from a zero state, and emits
// [h_f(t), h_b(t)] per step. The embedding of a sequence is the final
// layer's pair of end-of-scan states [h_f(N-1), h_b(0)].
//
// Gate layout per cell kind, every gate weight is H x (H + F_in) acting on
// [h_prev, x_t] and every bias has length H:
//   GRU   z, r, candidate   (candidate sees [r . h_prev, x_t])
//   LSTM  i, f, o, candidate
//   RNN   candidate

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gaitid/core.hpp"
#include "gaitid/procrustes.hpp"
#include "gaitid/segmentation.hpp"

namespace gaitid {

enum class CellKind { Gru, Lstm, Rnn };
enum class Activation { Tanh, Relu };

CellKind parse_cell_kind(std::string_view text);
std::string_view to_string(CellKind kind);
Activation parse_activation(std::string_view text);
std::string_view to_string(Activation act);

int gate_count(CellKind kind);

using Embedding = Eigen::VectorXd;

struct RecurrentCellParams {
  CellKind kind = CellKind::Gru;
  int input_dim = 0;
  int hidden_dim = 0;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  static RecurrentCellParams zeros(CellKind kind, int input_dim, int hidden_dim);
  void validate() const;
};

struct BiLayerParams {
  RecurrentCellParams forward;
  std::optional<RecurrentCellParams> backward;  // absent in unidirectional ablations

  int output_dim() const { return forward.hidden_dim * (backward ? 2 : 1); }
};

struct EncoderConfig {
  CellKind cell = CellKind::Gru;
  int input_dim = 0;
  int hidden_dim = 128;
  int layers = 2;
  bool bidirectional = true;
  Activation activation = Activation::Tanh;

  void validate() const;
  int embedding_dim() const { return hidden_dim * (bidirectional ? 2 : 1); }
};

class EncoderParams {
 public:
  EncoderParams() = default;

  static EncoderParams zeros(const EncoderConfig& cfg);
  /// Weights uniform in (-1/sqrt(H), 1/sqrt(H)), biases zero.
  static EncoderParams random(const EncoderConfig& cfg, std::uint64_t seed);

  const EncoderConfig& config() const noexcept { return config_; }
  const std::vector<BiLayerParams>& layers() const noexcept { return layers_; }
  std::vector<BiLayerParams>& layers() noexcept { return layers_; }

  /// Every weight and bias in a fixed order: layer, direction (forward then
  /// backward), gate, weight before bias. Weights are column-major.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;
  std::size_t parameter_count() const;

  void set_zero();

 private:
  EncoderConfig config_;
  std::vector<BiLayerParams> layers_;
};

struct HeadParams {
  Eigen::RowVectorXd weights;  // 1 x (2 * embedding dim)
  double bias = 0.0;
};

/// Per-feature (column) standardization fitted on training tensors.
struct FeatureStandardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd stddev;  // zero-variance features get 1

  static FeatureStandardizer fit(std::span<const SequenceTensor> tensors);
  SequenceTensor apply(const SequenceTensor& t) const;
};

/// Everything needed to turn a raw trajectory into an embedding.
struct PreprocessConfig {
  SegmentationConfig segmentation;
  LandmarkSubset subset = LandmarkSubset::full();
  int dims = 3;
  bool allow_scale = true;
};

struct SiameseModelParams {
  EncoderParams encoder;
  HeadParams head;
  double margin = 1.0;
  std::optional<MeanShape> mean_shape;
  FeatureStandardizer standardizer;
  PreprocessConfig preprocess;
};

struct CellState {
  Eigen::VectorXd h;
  Eigen::VectorXd c;  // LSTM only
};

Eigen::VectorXd cell_step_gru(const RecurrentCellParams& cell, Activation act,
                              const Eigen::VectorXd& h_prev, const Eigen::VectorXd& x);

CellState cell_step(const RecurrentCellParams& cell, Activation act, const CellState& prev,
                    const Eigen::VectorXd& x);

/// N x F_in input to N x output_dim states.
Eigen::MatrixXd bilayer_forward(const BiLayerParams& layer, Activation act,
                                const Eigen::MatrixXd& x);

/// Expects an already standardized N x F input.
Embedding encode(const EncoderParams& encoder, const Eigen::MatrixXd& x);

/// Standardizes with the model statistics, then encodes.
Embedding embed(const SiameseModelParams& model, const SequenceTensor& tensor);

double pair_distance(const Embedding& a, const Embedding& b);

/// (1 - Y) D^2 + Y max(0, m - D)^2 with Y = 0 for same subject.
double contrastive_loss(double distance, int label, double margin);

double similarity_score(const HeadParams& head, const Embedding& a, const Embedding& b);

struct PairGradient {
  double loss = 0.0;
  double distance = 0.0;
  EncoderParams grad;
};

/// Exact reverse-mode gradient of the contrastive loss of one pair with
/// respect to every encoder parameter. The hinge is treated as inactive at
/// D = m, and a dissimilar pair at D = 0 gets a zero gradient.
PairGradient model_gradients(const EncoderParams& encoder, double margin, const Eigen::MatrixXd& a,
                             const Eigen::MatrixXd& b, int label);

}  // namespace gaitid
