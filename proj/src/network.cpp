#include "gaitid/network.hpp"

#include <array>
#include <cmath>
#include <random>
#include <string>

namespace gaitid {

CellKind parse_cell_kind(std::string_view text) {
  if (text == "gru") return CellKind::Gru;
  if (text == "lstm") return CellKind::Lstm;
  if (text == "rnn") return CellKind::Rnn;
  throw Error(ErrorKind::Config, "unknown cell kind '" + std::string(text) + "' (rnn, lstm, gru)");
}

std::string_view to_string(CellKind kind) {
  switch (kind) {
    case CellKind::Gru: return "gru";
    case CellKind::Lstm: return "lstm";
    case CellKind::Rnn: return "rnn";
  }
  return "gru";
}

Activation parse_activation(std::string_view text) {
  if (text == "tanh") return Activation::Tanh;
  if (text == "relu") return Activation::Relu;
  throw Error(ErrorKind::Config, "unknown activation '" + std::string(text) + "' (tanh, relu)");
}

std::string_view to_string(Activation act) {
  return act == Activation::Tanh ? "tanh" : "relu";
}

int gate_count(CellKind kind) {
  switch (kind) {
    case CellKind::Gru: return 3;
    case CellKind::Lstm: return 4;
    case CellKind::Rnn: return 1;
  }
  return 0;
}

RecurrentCellParams RecurrentCellParams::zeros(CellKind kind, int input_dim, int hidden_dim) {
  RecurrentCellParams p;
  p.kind = kind;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  for (int g = 0; g < gate_count(kind); ++g) {
    p.weights.push_back(Eigen::MatrixXd::Zero(hidden_dim, hidden_dim + input_dim));
    p.biases.push_back(Eigen::VectorXd::Zero(hidden_dim));
  }
  return p;
}

void RecurrentCellParams::validate() const {
  const auto gates = static_cast<std::size_t>(gate_count(kind));
  if (input_dim < 1 || hidden_dim < 1 || weights.size() != gates || biases.size() != gates) {
    throw Error(ErrorKind::DimensionMismatch, "recurrent cell has the wrong number of gates");
  }
  for (std::size_t g = 0; g < gates; ++g) {
    if (weights[g].rows() != hidden_dim || weights[g].cols() != hidden_dim + input_dim ||
        biases[g].size() != hidden_dim) {
      throw Error(ErrorKind::DimensionMismatch, "recurrent cell gate shape mismatch");
    }
    if (!weights[g].allFinite() || !biases[g].allFinite()) {
      throw Error(ErrorKind::InvalidArgument, "recurrent cell has non-finite parameters");
    }
  }
}

void EncoderConfig::validate() const {
  if (input_dim < 1 || hidden_dim < 1 || layers < 1) {
    throw Error(ErrorKind::Config, "encoder needs input_dim, hidden_dim and layers >= 1");
  }
}

EncoderParams EncoderParams::zeros(const EncoderConfig& cfg) {
  cfg.validate();
  EncoderParams e;
  e.config_ = cfg;
  int in = cfg.input_dim;
  for (int l = 0; l < cfg.layers; ++l) {
    BiLayerParams layer{RecurrentCellParams::zeros(cfg.cell, in, cfg.hidden_dim), std::nullopt};
    if (cfg.bidirectional) layer.backward = RecurrentCellParams::zeros(cfg.cell, in, cfg.hidden_dim);
    in = layer.output_dim();
    e.layers_.push_back(std::move(layer));
  }
  return e;
}

EncoderParams EncoderParams::random(const EncoderConfig& cfg, std::uint64_t seed) {
  EncoderParams e = zeros(cfg);
  std::mt19937_64 rng(seed);
  const double bound = 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim));
  std::uniform_real_distribution<double> dist(-bound, bound);
  auto fill = [&](RecurrentCellParams& cell) {
    for (auto& w : cell.weights) {
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = dist(rng);
    }
  };
  for (auto& layer : e.layers_) {
    fill(layer.forward);
    if (layer.backward) fill(*layer.backward);
  }
  return e;
}

namespace {

template <typename Span, typename Encoder>
std::vector<Span> collect_tensors(Encoder& e) {
  std::vector<Span> out;
  auto add_cell = [&](auto& cell) {
    for (std::size_t g = 0; g < cell.weights.size(); ++g) {
      out.emplace_back(cell.weights[g].data(), static_cast<std::size_t>(cell.weights[g].size()));
      out.emplace_back(cell.biases[g].data(), static_cast<std::size_t>(cell.biases[g].size()));
    }
  };
  for (auto& layer : e.layers()) {
    add_cell(layer.forward);
    if (layer.backward) add_cell(*layer.backward);
  }
  return out;
}

}  // namespace

std::vector<std::span<double>> EncoderParams::tensors() {
  return collect_tensors<std::span<double>>(*this);
}

std::vector<std::span<const double>> EncoderParams::tensors() const {
  return collect_tensors<std::span<const double>>(*this);
}

std::size_t EncoderParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors()) n += t.size();
  return n;
}

void EncoderParams::set_zero() {
  for (auto t : tensors()) std::fill(t.begin(), t.end(), 0.0);
}

FeatureStandardizer FeatureStandardizer::fit(std::span<const SequenceTensor> tensors) {
  if (tensors.empty()) throw Error(ErrorKind::InsufficientData, "no tensors to standardize");
  const auto f = tensors[0].features();
  Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(f);
  double count = 0.0;
  for (const auto& t : tensors) {
    if (t.features() != f) {
      throw Error(ErrorKind::DimensionMismatch, "tensors disagree on feature count");
    }
    sum += t.values().colwise().sum();
    count += static_cast<double>(t.frames());
  }
  FeatureStandardizer s;
  s.mean = sum / count;
  Eigen::RowVectorXd sq = Eigen::RowVectorXd::Zero(f);
  for (const auto& t : tensors) {
    sq += (t.values().rowwise() - s.mean).array().square().colwise().sum().matrix();
  }
  s.stddev = (sq / count).cwiseSqrt();
  for (Eigen::Index j = 0; j < f; ++j) {
    // Below this, the spread is rounding noise around a constant feature.
    if (!(s.stddev(j) > 1e-12 * std::max(1.0, std::abs(s.mean(j))))) s.stddev(j) = 1.0;
  }
  return s;
}

SequenceTensor FeatureStandardizer::apply(const SequenceTensor& t) const {
  if (t.features() != mean.size()) {
    throw Error(ErrorKind::DimensionMismatch,
                "tensor has " + std::to_string(t.features()) + " features, model expects " +
                    std::to_string(mean.size()));
  }
  Eigen::MatrixXd v = (t.values().rowwise() - mean).array().rowwise() / stddev.array();
  return SequenceTensor(std::move(v), t.meta());
}

namespace {

Eigen::VectorXd sigmoid(const Eigen::VectorXd& a) {
  return (1.0 + (-a.array()).exp()).inverse().matrix();
}

double sigmoid(double a) { return 1.0 / (1.0 + std::exp(-a)); }

Eigen::VectorXd activate(Activation act, const Eigen::VectorXd& a) {
  if (act == Activation::Tanh) return a.array().tanh().matrix();
  return a.cwiseMax(0.0);
}

// d act / d pre, given the pre-activation and its image.
Eigen::VectorXd activation_slope(Activation act, const Eigen::VectorXd& pre,
                                 const Eigen::VectorXd& post) {
  if (act == Activation::Tanh) return (1.0 - post.array().square()).matrix();
  return (pre.array() > 0.0).cast<double>().matrix();
}

struct StepCache {
  Eigen::VectorXd v;  // [h_prev, x]
  Eigen::VectorXd u;  // GRU candidate input [r . h_prev, x]
  Eigen::VectorXd h_prev;
  Eigen::VectorXd c_prev;
  std::array<Eigen::VectorXd, 4> gate;  // post-nonlinearity
  Eigen::VectorXd cand_pre;
  Eigen::VectorXd tanh_c;
};

CellState step_impl(const RecurrentCellParams& p, Activation act, const CellState& prev,
                    const Eigen::VectorXd& x, StepCache* cache) {
  const int h_dim = p.hidden_dim;
  Eigen::VectorXd v(h_dim + p.input_dim);
  v << prev.h, x;
  CellState next;
  StepCache local;
  StepCache& s = cache ? *cache : local;
  switch (p.kind) {
    case CellKind::Gru: {
      s.gate[0] = sigmoid(p.weights[0] * v + p.biases[0]);
      s.gate[1] = sigmoid(p.weights[1] * v + p.biases[1]);
      s.u.resize(v.size());
      s.u << s.gate[1].cwiseProduct(prev.h), x;
      s.cand_pre = p.weights[2] * s.u + p.biases[2];
      s.gate[2] = activate(act, s.cand_pre);
      next.h = (1.0 - s.gate[0].array()).matrix().cwiseProduct(prev.h) +
               s.gate[0].cwiseProduct(s.gate[2]);
      break;
    }
    case CellKind::Lstm: {
      s.gate[0] = sigmoid(p.weights[0] * v + p.biases[0]);
      s.gate[1] = sigmoid(p.weights[1] * v + p.biases[1]);
      s.gate[2] = sigmoid(p.weights[2] * v + p.biases[2]);
      s.cand_pre = p.weights[3] * v + p.biases[3];
      s.gate[3] = activate(act, s.cand_pre);
      next.c = s.gate[1].cwiseProduct(prev.c) + s.gate[0].cwiseProduct(s.gate[3]);
      s.tanh_c = next.c.array().tanh().matrix();
      next.h = s.gate[2].cwiseProduct(s.tanh_c);
      break;
    }
    case CellKind::Rnn: {
      s.cand_pre = p.weights[0] * v + p.biases[0];
      s.gate[0] = activate(act, s.cand_pre);
      next.h = s.gate[0];
      break;
    }
  }
  if (cache) {
    s.v = std::move(v);
    s.h_prev = prev.h;
    s.c_prev = prev.c;
  }
  return next;
}

struct StepGrad {
  Eigen::VectorXd dh_prev;
  Eigen::VectorXd dc_prev;
  Eigen::VectorXd dx;
};

StepGrad step_backward(const RecurrentCellParams& p, Activation act, const StepCache& s,
                       const Eigen::VectorXd& dh, const Eigen::VectorXd& dc,
                       RecurrentCellParams& g) {
  const int h_dim = p.hidden_dim;
  const int f_dim = p.input_dim;
  Eigen::VectorXd dv = Eigen::VectorXd::Zero(h_dim + f_dim);
  StepGrad out;
  auto accumulate = [&](int gate, const Eigen::VectorXd& da, const Eigen::VectorXd& input) {
    g.weights[static_cast<std::size_t>(gate)].noalias() += da * input.transpose();
    g.biases[static_cast<std::size_t>(gate)] += da;
  };
  switch (p.kind) {
    case CellKind::Gru: {
      const auto& z = s.gate[0];
      const auto& r = s.gate[1];
      const auto& cand = s.gate[2];
      const Eigen::VectorXd dz = dh.cwiseProduct(cand - s.h_prev);
      const Eigen::VectorXd dcand = dh.cwiseProduct(z);
      out.dh_prev = dh.cwiseProduct((1.0 - z.array()).matrix());

      const Eigen::VectorXd da_h = dcand.cwiseProduct(activation_slope(act, s.cand_pre, cand));
      accumulate(2, da_h, s.u);
      const Eigen::VectorXd du = p.weights[2].transpose() * da_h;
      out.dh_prev += du.head(h_dim).cwiseProduct(r);
      const Eigen::VectorXd dr = du.head(h_dim).cwiseProduct(s.h_prev);
      dv.tail(f_dim) += du.tail(f_dim);

      const Eigen::VectorXd da_r = dr.cwiseProduct(r.cwiseProduct((1.0 - r.array()).matrix()));
      const Eigen::VectorXd da_z = dz.cwiseProduct(z.cwiseProduct((1.0 - z.array()).matrix()));
      accumulate(1, da_r, s.v);
      accumulate(0, da_z, s.v);
      dv.noalias() += p.weights[1].transpose() * da_r;
      dv.noalias() += p.weights[0].transpose() * da_z;
      break;
    }
    case CellKind::Lstm: {
      const auto& i = s.gate[0];
      const auto& f = s.gate[1];
      const auto& o = s.gate[2];
      const auto& cand = s.gate[3];
      const Eigen::VectorXd d_o = dh.cwiseProduct(s.tanh_c);
      const Eigen::VectorXd dcell =
          dc + dh.cwiseProduct(o).cwiseProduct((1.0 - s.tanh_c.array().square()).matrix());
      const Eigen::VectorXd d_i = dcell.cwiseProduct(cand);
      const Eigen::VectorXd d_f = dcell.cwiseProduct(s.c_prev);
      const Eigen::VectorXd d_cand = dcell.cwiseProduct(i);
      out.dc_prev = dcell.cwiseProduct(f);
      out.dh_prev = Eigen::VectorXd::Zero(h_dim);

      const std::array<Eigen::VectorXd, 4> da = {
          d_i.cwiseProduct(i.cwiseProduct((1.0 - i.array()).matrix())),
          d_f.cwiseProduct(f.cwiseProduct((1.0 - f.array()).matrix())),
          d_o.cwiseProduct(o.cwiseProduct((1.0 - o.array()).matrix())),
          d_cand.cwiseProduct(activation_slope(act, s.cand_pre, cand)),
      };
      for (int k = 0; k < 4; ++k) {
        accumulate(k, da[static_cast<std::size_t>(k)], s.v);
        dv.noalias() += p.weights[static_cast<std::size_t>(k)].transpose() * da[static_cast<std::size_t>(k)];
      }
      break;
    }
    case CellKind::Rnn: {
      const Eigen::VectorXd da = dh.cwiseProduct(activation_slope(act, s.cand_pre, s.gate[0]));
      accumulate(0, da, s.v);
      dv.noalias() += p.weights[0].transpose() * da;
      out.dh_prev = Eigen::VectorXd::Zero(h_dim);
      break;
    }
  }
  out.dh_prev += dv.head(h_dim);
  out.dx = dv.tail(f_dim);
  return out;
}

CellState zero_state(const RecurrentCellParams& p) {
  CellState s{Eigen::VectorXd::Zero(p.hidden_dim), Eigen::VectorXd()};
  if (p.kind == CellKind::Lstm) s.c = Eigen::VectorXd::Zero(p.hidden_dim);
  return s;
}

// steps[k] is the k-th processed step; time index is k (forward) or N-1-k.
struct DirectionTrace {
  std::vector<StepCache> steps;
};

Eigen::MatrixXd run_direction(const RecurrentCellParams& p, Activation act,
                              const Eigen::MatrixXd& x, bool reverse, DirectionTrace* trace) {
  const auto n = x.rows();
  Eigen::MatrixXd states(n, p.hidden_dim);
  CellState state = zero_state(p);
  if (trace) trace->steps.resize(static_cast<std::size_t>(n));
  for (Eigen::Index k = 0; k < n; ++k) {
    const Eigen::Index t = reverse ? n - 1 - k : k;
    state = step_impl(p, act, state, x.row(t).transpose(),
                      trace ? &trace->steps[static_cast<std::size_t>(k)] : nullptr);
    states.row(t) = state.h.transpose();
  }
  return states;
}

void backprop_direction(const RecurrentCellParams& p, Activation act, const DirectionTrace& trace,
                        const Eigen::MatrixXd& d_states, bool reverse, RecurrentCellParams& g,
                        Eigen::MatrixXd& dx) {
  const auto n = d_states.rows();
  Eigen::VectorXd dh_carry = Eigen::VectorXd::Zero(p.hidden_dim);
  Eigen::VectorXd dc_carry = Eigen::VectorXd::Zero(p.hidden_dim);
  for (Eigen::Index k = n - 1; k >= 0; --k) {
    const Eigen::Index t = reverse ? n - 1 - k : k;
    const Eigen::VectorXd dh = d_states.row(t).transpose() + dh_carry;
    StepGrad sg = step_backward(p, act, trace.steps[static_cast<std::size_t>(k)], dh, dc_carry, g);
    dh_carry = std::move(sg.dh_prev);
    if (p.kind == CellKind::Lstm) dc_carry = std::move(sg.dc_prev);
    dx.row(t) += sg.dx.transpose();
  }
}

struct LayerTrace {
  DirectionTrace forward;
  DirectionTrace backward;
};

Eigen::MatrixXd layer_forward(const BiLayerParams& layer, Activation act, const Eigen::MatrixXd& x,
                              LayerTrace* trace) {
  if (x.cols() != layer.forward.input_dim) {
    throw Error(ErrorKind::DimensionMismatch,
                "layer expects " + std::to_string(layer.forward.input_dim) + " input features, got " +
                    std::to_string(x.cols()));
  }
  const int h_dim = layer.forward.hidden_dim;
  Eigen::MatrixXd out(x.rows(), layer.output_dim());
  out.leftCols(h_dim) = run_direction(layer.forward, act, x, false, trace ? &trace->forward : nullptr);
  if (layer.backward) {
    out.rightCols(h_dim) =
        run_direction(*layer.backward, act, x, true, trace ? &trace->backward : nullptr);
  }
  return out;
}

struct EncoderTrace {
  std::vector<LayerTrace> layers;
  std::vector<Eigen::Index> frames;
};

Embedding encode_impl(const EncoderParams& e, const Eigen::MatrixXd& x, EncoderTrace* trace) {
  if (x.rows() < 1) throw Error(ErrorKind::DimensionMismatch, "cannot encode an empty sequence");
  const auto& layers = e.layers();
  if (trace) trace->layers.resize(layers.size());
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = layer_forward(layers[l], e.config().activation, h, trace ? &trace->layers[l] : nullptr);
  }
  const int h_dim = e.config().hidden_dim;
  Embedding emb(e.config().embedding_dim());
  emb.head(h_dim) = h.row(h.rows() - 1).head(h_dim).transpose();
  if (e.config().bidirectional) emb.tail(h_dim) = h.row(0).tail(h_dim).transpose();
  return emb;
}

void encode_backward(const EncoderParams& e, const EncoderTrace& trace, Eigen::Index n,
                     const Eigen::VectorXd& d_emb, EncoderParams& grad) {
  const int h_dim = e.config().hidden_dim;
  const auto& layers = e.layers();
  Eigen::MatrixXd d_out = Eigen::MatrixXd::Zero(n, layers.back().output_dim());
  d_out.row(n - 1).head(h_dim) = d_emb.head(h_dim).transpose();
  if (e.config().bidirectional) d_out.row(0).tail(h_dim) += d_emb.tail(h_dim).transpose();

  const Activation act = e.config().activation;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const BiLayerParams& layer = layers[l];
    BiLayerParams& g = grad.layers()[l];
    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(n, layer.forward.input_dim);
    backprop_direction(layer.forward, act, trace.layers[l].forward, d_out.leftCols(h_dim), false,
                       g.forward, dx);
    if (layer.backward) {
      backprop_direction(*layer.backward, act, trace.layers[l].backward, d_out.rightCols(h_dim),
                         true, *g.backward, dx);
    }
    d_out = std::move(dx);
  }
}

}  // namespace

Eigen::VectorXd cell_step_gru(const RecurrentCellParams& cell, Activation act,
                              const Eigen::VectorXd& h_prev, const Eigen::VectorXd& x) {
  if (cell.kind != CellKind::Gru) throw Error(ErrorKind::InvalidArgument, "cell is not a GRU");
  return cell_step(cell, act, CellState{h_prev, {}}, x).h;
}

CellState cell_step(const RecurrentCellParams& cell, Activation act, const CellState& prev,
                    const Eigen::VectorXd& x) {
  if (prev.h.size() != cell.hidden_dim || x.size() != cell.input_dim ||
      (cell.kind == CellKind::Lstm && prev.c.size() != cell.hidden_dim)) {
    throw Error(ErrorKind::DimensionMismatch, "cell step input dimensions do not match the cell");
  }
  return step_impl(cell, act, prev, x, nullptr);
}

Eigen::MatrixXd bilayer_forward(const BiLayerParams& layer, Activation act,
                                const Eigen::MatrixXd& x) {
  return layer_forward(layer, act, x, nullptr);
}

Embedding encode(const EncoderParams& encoder, const Eigen::MatrixXd& x) {
  return encode_impl(encoder, x, nullptr);
}

Embedding embed(const SiameseModelParams& model, const SequenceTensor& tensor) {
  return encode(model.encoder, model.standardizer.apply(tensor).values());
}

double pair_distance(const Embedding& a, const Embedding& b) {
  if (a.size() != b.size()) throw Error(ErrorKind::DimensionMismatch, "embedding lengths differ");
  return (a - b).norm();
}

double contrastive_loss(double distance, int label, double margin) {
  const double hinge = std::max(0.0, margin - distance);
  return (1 - label) * distance * distance + label * hinge * hinge;
}

double similarity_score(const HeadParams& head, const Embedding& a, const Embedding& b) {
  if (a.size() != b.size() || head.weights.size() != a.size() + b.size()) {
    throw Error(ErrorKind::DimensionMismatch, "head width does not match the embeddings");
  }
  const auto n = a.size();
  const double logit = head.weights.head(n).dot(a) + head.weights.tail(n).dot(b) + head.bias;
  return sigmoid(logit);
}

PairGradient model_gradients(const EncoderParams& encoder, double margin, const Eigen::MatrixXd& a,
                             const Eigen::MatrixXd& b, int label) {
  EncoderTrace ta;
  EncoderTrace tb;
  const Embedding ea = encode_impl(encoder, a, &ta);
  const Embedding eb = encode_impl(encoder, b, &tb);
  const Eigen::VectorXd diff = ea - eb;
  const double d = diff.norm();

  PairGradient out;
  out.distance = d;
  out.loss = contrastive_loss(d, label, margin);
  out.grad = EncoderParams::zeros(encoder.config());

  // dL/de_a; dL/de_b is its negation.
  Eigen::VectorXd d_ea;
  if (label == 0) {
    d_ea = 2.0 * diff;
  } else if (d < margin && d > 0.0) {
    d_ea = -2.0 * (margin - d) / d * diff;
  } else {
    return out;
  }
  if (d_ea.isZero(0.0)) return out;
  encode_backward(encoder, ta, a.rows(), d_ea, out.grad);
  encode_backward(encoder, tb, b.rows(), -d_ea, out.grad);
  return out;
}

}  // namespace gaitid
