#include "gaitid/training.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <string>

#include <zlib.h>

namespace gaitid {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(adam.learning_rate > 0.0)) throw Error(ErrorKind::Config, "learning rate must be > 0");
  if (batch_size < 1) throw Error(ErrorKind::Config, "batch size must be >= 1");
  if (epochs < 1) throw Error(ErrorKind::Config, "epochs must be >= 1");
  if (!(margin > 0.0)) throw Error(ErrorKind::Config, "margin must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0) ||
      !(adam.epsilon > 0.0)) {
    throw Error(ErrorKind::Config, "adam needs beta1, beta2 in [0, 1) and epsilon > 0");
  }
  if (encoder.hidden_dim < 1 || encoder.layers < 1) {
    throw Error(ErrorKind::Config, "encoder needs hidden >= 1 and at least one layer");
  }
  if (head_epochs < 0 || !(head_learning_rate > 0.0)) {
    throw Error(ErrorKind::Config, "head fit needs epochs >= 0 and learning rate > 0");
  }
}

json to_json(const TrainConfig& cfg) {
  return {
      {"learning_rate", cfg.adam.learning_rate},
      {"beta1", cfg.adam.beta1},
      {"beta2", cfg.adam.beta2},
      {"epsilon", cfg.adam.epsilon},
      {"batch_size", cfg.batch_size},
      {"epochs", cfg.epochs},
      {"seed", cfg.seed},
      {"margin", cfg.margin},
      {"cell", std::string(to_string(cfg.encoder.cell))},
      {"input_dim", cfg.encoder.input_dim},
      {"hidden", cfg.encoder.hidden_dim},
      {"stack", cfg.encoder.layers},
      {"bidirectional", cfg.encoder.bidirectional},
      {"activation", std::string(to_string(cfg.encoder.activation))},
      {"head_epochs", cfg.head_epochs},
      {"head_learning_rate", cfg.head_learning_rate},
  };
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig cfg;
  cfg.adam.learning_rate = j.at("learning_rate").get<double>();
  cfg.adam.beta1 = j.at("beta1").get<double>();
  cfg.adam.beta2 = j.at("beta2").get<double>();
  cfg.adam.epsilon = j.at("epsilon").get<double>();
  cfg.batch_size = j.at("batch_size").get<std::size_t>();
  cfg.epochs = j.at("epochs").get<int>();
  cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.margin = j.at("margin").get<double>();
  cfg.encoder.cell = parse_cell_kind(j.at("cell").get<std::string>());
  cfg.encoder.input_dim = j.at("input_dim").get<int>();
  cfg.encoder.hidden_dim = j.at("hidden").get<int>();
  cfg.encoder.layers = j.at("stack").get<int>();
  cfg.encoder.bidirectional = j.at("bidirectional").get<bool>();
  cfg.encoder.activation = parse_activation(j.at("activation").get<std::string>());
  cfg.head_epochs = j.at("head_epochs").get<int>();
  cfg.head_learning_rate = j.at("head_learning_rate").get<double>();
  return cfg;
}

json to_json(const PreprocessConfig& cfg) {
  const auto& s = cfg.segmentation;
  return {
      {"tracking_landmark", s.tracking_landmark},
      {"axis", s.axis},
      {"smoothing_window", s.smoothing_window},
      {"amplitude_fraction", s.amplitude_fraction},
      {"n_frames", s.n_frames},
      {"landmarks", cfg.subset.str()},
      {"dims", cfg.dims},
      {"allow_scale", cfg.allow_scale},
  };
}

PreprocessConfig preprocess_from_json(const json& j) {
  PreprocessConfig cfg;
  cfg.segmentation.tracking_landmark = j.at("tracking_landmark").get<int>();
  cfg.segmentation.axis = j.at("axis").get<int>();
  cfg.segmentation.smoothing_window = j.at("smoothing_window").get<int>();
  cfg.segmentation.amplitude_fraction = j.at("amplitude_fraction").get<double>();
  cfg.segmentation.n_frames = j.at("n_frames").get<std::size_t>();
  cfg.subset = LandmarkSubset::parse(j.at("landmarks").get<std::string>());
  cfg.dims = j.at("dims").get<int>();
  cfg.allow_scale = j.at("allow_scale").get<bool>();
  return cfg;
}

namespace {

void adam_update(std::span<double> params, std::span<const double> grads, double* m, double* v,
                 std::size_t step, const AdamHyper& h) {
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g;
    v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g * g;
    params[i] -= h.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + h.epsilon);
  }
}

void ensure_moments(AdamMoments& moments, std::size_t n) {
  if (moments.first.empty() && moments.second.empty()) {
    moments.first.assign(n, 0.0);
    moments.second.assign(n, 0.0);
  }
  if (moments.first.size() != n || moments.second.size() != n) {
    throw Error(ErrorKind::DimensionMismatch, "adam moments do not match the parameters");
  }
}

}  // namespace

void adam_step(std::span<double> params, std::span<const double> grads, AdamMoments& moments,
               std::size_t step, const AdamHyper& hyper) {
  if (params.size() != grads.size()) {
    throw Error(ErrorKind::DimensionMismatch, "adam parameter/gradient sizes differ");
  }
  if (step < 1) throw Error(ErrorKind::InvalidArgument, "adam step index starts at 1");
  ensure_moments(moments, params.size());
  adam_update(params, grads, moments.first.data(), moments.second.data(), step, hyper);
}

void adam_step(EncoderParams& params, const EncoderParams& grads, AdamMoments& moments,
               std::size_t step, const AdamHyper& hyper) {
  auto p = params.tensors();
  const auto g = grads.tensors();
  if (p.size() != g.size()) throw Error(ErrorKind::DimensionMismatch, "gradient layout differs");
  if (step < 1) throw Error(ErrorKind::InvalidArgument, "adam step index starts at 1");
  ensure_moments(moments, params.parameter_count());
  std::size_t offset = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i].size() != g[i].size()) throw Error(ErrorKind::DimensionMismatch, "gradient shape differs");
    adam_update(p[i], g[i], moments.first.data() + offset, moments.second.data() + offset, step, hyper);
    offset += p[i].size();
  }
}

namespace {

void accumulate(EncoderParams& dst, const EncoderParams& src) {
  auto d = dst.tensors();
  const auto s = src.tensors();
  for (std::size_t i = 0; i < d.size(); ++i) {
    for (std::size_t k = 0; k < d[i].size(); ++k) d[i][k] += s[i][k];
  }
}

void scale(EncoderParams& dst, double factor) {
  for (auto t : dst.tensors()) {
    for (double& x : t) x *= factor;
  }
}

}  // namespace

HeadParams fit_head(const EncoderParams& encoder, const PairSet& pairs,
                    const FeatureStandardizer& standardizer, int epochs, double learning_rate) {
  const int e_dim = encoder.config().embedding_dim();
  HeadParams head{Eigen::RowVectorXd::Zero(2 * e_dim), 0.0};
  if (pairs.size() == 0 || epochs == 0) return head;

  std::vector<Embedding> emb;
  emb.reserve(pairs.pool().size());
  for (const auto& t : pairs.pool()) emb.push_back(encode(encoder, standardizer.apply(t).values()));

  Eigen::MatrixXd features(static_cast<Eigen::Index>(pairs.size()), 2 * e_dim);
  Eigen::VectorXd target(static_cast<Eigen::Index>(pairs.size()));
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    features.row(r) << emb[pairs.pairs()[i].a].transpose(), emb[pairs.pairs()[i].b].transpose();
    target(r) = 1.0 - pairs.pairs()[i].label;
  }

  std::vector<double> params(static_cast<std::size_t>(2 * e_dim + 1), 0.0);
  std::vector<double> grads(params.size());
  AdamMoments moments;
  const AdamHyper hyper{learning_rate, 0.9, 0.999, 1e-8};
  const double inv_n = 1.0 / static_cast<double>(pairs.size());
  for (int epoch = 1; epoch <= epochs; ++epoch) {
    Eigen::Map<const Eigen::VectorXd> w(params.data(), 2 * e_dim);
    const Eigen::VectorXd logits = (features * w).array() + params.back();
    const Eigen::VectorXd residual =
        (1.0 + (-logits.array()).exp()).inverse().matrix() - target;
    Eigen::Map<Eigen::VectorXd>(grads.data(), 2 * e_dim) = features.transpose() * residual * inv_n;
    grads.back() = residual.sum() * inv_n;
    adam_step(params, grads, moments, static_cast<std::size_t>(epoch), hyper);
  }
  head.weights = Eigen::Map<const Eigen::RowVectorXd>(params.data(), 2 * e_dim);
  head.bias = params.back();
  return head;
}

Checkpoint train(const PairSet& pairs, const TrainConfig& cfg_in, const TrainArtifacts& artifacts) {
  if (pairs.size() == 0) throw Error(ErrorKind::InsufficientData, "training needs at least one pair");
  TrainConfig cfg = cfg_in;
  cfg.encoder.input_dim = static_cast<int>(pairs.pool().front().features());
  cfg.validate();
  if (artifacts.standardizer.mean.size() != cfg.encoder.input_dim) {
    throw Error(ErrorKind::DimensionMismatch, "standardizer does not match the pair tensors");
  }

  std::vector<Eigen::MatrixXd> inputs;
  inputs.reserve(pairs.pool().size());
  for (const auto& t : pairs.pool()) inputs.push_back(artifacts.standardizer.apply(t).values());

  EncoderParams encoder = EncoderParams::random(cfg.encoder, derive_seed(cfg.seed, 1));
  std::mt19937_64 shuffle_rng(derive_seed(cfg.seed, 2));
  AdamMoments moments;
  std::size_t step = 0;

  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> epoch_losses;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double total = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      EncoderParams batch_grad = EncoderParams::zeros(cfg.encoder);
      for (std::size_t k = start; k < stop; ++k) {
        const SequencePair& p = pairs.pairs()[order[k]];
        PairGradient pg = model_gradients(encoder, cfg.margin, inputs[p.a], inputs[p.b], p.label);
        if (!std::isfinite(pg.loss)) {
          throw Error(ErrorKind::NonFiniteLoss, "non-finite loss at epoch " + std::to_string(epoch) +
                                                    ", batch " + std::to_string(batch_index));
        }
        total += pg.loss;
        accumulate(batch_grad, pg.grad);
      }
      scale(batch_grad, 1.0 / static_cast<double>(stop - start));
      adam_step(encoder, batch_grad, moments, ++step, cfg.adam);
    }
    epoch_losses.push_back(total / static_cast<double>(pairs.size()));
  }

  Checkpoint ckpt;
  ckpt.config = cfg;
  ckpt.epoch_losses = std::move(epoch_losses);
  ckpt.model.head = fit_head(encoder, pairs, artifacts.standardizer, cfg.head_epochs,
                             cfg.head_learning_rate);
  ckpt.model.encoder = std::move(encoder);
  ckpt.model.margin = cfg.margin;
  ckpt.model.mean_shape = artifacts.mean_shape;
  ckpt.model.standardizer = artifacts.standardizer;
  ckpt.model.preprocess = artifacts.preprocess;
  return ckpt;
}

namespace {

constexpr char kMagic[8] = {'G', 'A', 'I', 'T', 'C', 'K', 'P', 'T'};

class ByteWriter {
 public:
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> vs) {
    for (double v : vs) f64(v);
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::span<const std::uint8_t> take(std::size_t n) {
    if (n > bytes_.size() - pos_) throw Error(ErrorKind::Corruption, "checkpoint is truncated");
    auto out = bytes_.subspan(pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() {
    auto b = take(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    auto b = take(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[static_cast<std::size_t>(i)]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  void f64s(std::span<double> out) {
    for (double& v : out) v = f64();
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc32_of(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < bytes.size()) {
    const auto chunk = static_cast<uInt>(std::min<std::size_t>(bytes.size() - done, 1u << 30));
    crc = crc32(crc, bytes.data() + done, chunk);
    done += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  const auto& m = ckpt.model;
  json header = {
      {"format", "gaitid-checkpoint"},
      {"train", to_json(ckpt.config)},
      {"preprocess", to_json(m.preprocess)},
      {"margin", m.margin},
      {"features", m.standardizer.mean.size()},
      {"mean_shape", m.mean_shape ? json{{"landmarks", m.mean_shape->shape().landmarks()},
                                         {"dims", m.mean_shape->shape().dims()}}
                                  : json(nullptr)},
      {"epoch_losses", ckpt.epoch_losses},
  };
  const std::string text = header.dump();

  ByteWriter w;
  w.raw(kMagic, sizeof kMagic);
  w.u32(ckpt.version);
  w.u64(text.size());
  w.raw(text.data(), text.size());
  if (m.mean_shape) {
    const auto& p = m.mean_shape->points();
    w.f64s({p.data(), static_cast<std::size_t>(p.size())});
  }
  w.f64s({m.standardizer.mean.data(), static_cast<std::size_t>(m.standardizer.mean.size())});
  w.f64s({m.standardizer.stddev.data(), static_cast<std::size_t>(m.standardizer.stddev.size())});
  for (auto t : m.encoder.tensors()) w.f64s(t);
  w.f64s({m.head.weights.data(), static_cast<std::size_t>(m.head.weights.size())});
  w.f64(m.head.bias);
  w.u32(crc32_of(w.bytes()));
  return std::move(w.bytes());
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  auto magic = r.take(sizeof kMagic);
  if (!std::equal(magic.begin(), magic.end(), kMagic)) {
    throw Error(ErrorKind::Corruption, "not a checkpoint file (bad magic)");
  }
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw Error(ErrorKind::Version, "unsupported checkpoint version " + std::to_string(version) +
                                        " (expected " + std::to_string(kCheckpointVersion) + ")");
  }
  if (bytes.size() < sizeof kMagic + 4 + 4) throw Error(ErrorKind::Corruption, "checkpoint is truncated");
  const auto body = bytes.first(bytes.size() - 4);
  ByteReader tail(bytes.last(4));
  if (crc32_of(body) != tail.u32()) {
    throw Error(ErrorKind::Corruption, "checkpoint checksum mismatch (truncated or corrupted)");
  }

  ByteReader in(body);
  in.take(sizeof kMagic + 4);
  const std::uint64_t len = in.u64();
  auto text = in.take(len);
  Checkpoint ckpt;
  ckpt.version = version;
  try {
    const json header = json::parse(text.begin(), text.end());
    ckpt.config = train_config_from_json(header.at("train"));
    ckpt.model.preprocess = preprocess_from_json(header.at("preprocess"));
    ckpt.model.margin = header.at("margin").get<double>();
    ckpt.epoch_losses = header.at("epoch_losses").get<std::vector<double>>();
    const auto features = header.at("features").get<Eigen::Index>();
    const json& ms = header.at("mean_shape");
    if (!ms.is_null()) {
      Eigen::MatrixXd pts(ms.at("landmarks").get<Eigen::Index>(), ms.at("dims").get<Eigen::Index>());
      in.f64s({pts.data(), static_cast<std::size_t>(pts.size())});
      ckpt.model.mean_shape = MeanShape(ShapeConfig(std::move(pts)));
    }
    ckpt.model.standardizer.mean.resize(features);
    ckpt.model.standardizer.stddev.resize(features);
    in.f64s({ckpt.model.standardizer.mean.data(), static_cast<std::size_t>(features)});
    in.f64s({ckpt.model.standardizer.stddev.data(), static_cast<std::size_t>(features)});
    ckpt.model.encoder = EncoderParams::zeros(ckpt.config.encoder);
    for (auto t : ckpt.model.encoder.tensors()) in.f64s(t);
    ckpt.model.head.weights.resize(2 * ckpt.config.encoder.embedding_dim());
    in.f64s({ckpt.model.head.weights.data(), static_cast<std::size_t>(ckpt.model.head.weights.size())});
    ckpt.model.head.bias = in.f64();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Corruption, std::string("checkpoint header is invalid: ") + e.what());
  } catch (const Error& e) {
    throw Error(ErrorKind::Corruption, std::string("checkpoint is inconsistent: ") + e.what());
  }
  if (in.remaining() != 0) throw Error(ErrorKind::Corruption, "checkpoint has trailing bytes");
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failure on '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open checkpoint '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

void write_loss_log(std::span<const double> losses, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out << "epoch,loss\n";
  for (std::size_t i = 0; i < losses.size(); ++i) out << (i + 1) << ',' << format_real(losses[i]) << '\n';
  if (!out) throw Error(ErrorKind::Io, "write failure on '" + path.string() + "'");
}

}  // namespace gaitid
