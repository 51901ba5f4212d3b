#pragma once

// Fixtures and independent oracles shared by the unit tests and the
// acceptance runner.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "gaitid/core.hpp"
#include "gaitid/network.hpp"
#include "gaitid/procrustes.hpp"

namespace testing {

inline Eigen::MatrixXd random_matrix(std::mt19937_64& rng, Eigen::Index rows, Eigen::Index cols,
                                     double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = g(rng);
  return m;
}

inline gaitid::LandmarkFrame random_frame(std::mt19937_64& rng) {
  gaitid::FrameMatrix m;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return gaitid::LandmarkFrame(m);
}

inline gaitid::RawTrajectory random_trajectory(std::mt19937_64& rng, std::size_t frames,
                                               const std::string& subject = "P1") {
  std::vector<gaitid::LandmarkFrame> fs;
  for (std::size_t t = 0; t < frames; ++t) fs.push_back(random_frame(rng));
  return gaitid::RawTrajectory({subject, 90.0, gaitid::Condition::parse("NM")}, std::move(fs));
}

/// Trajectory whose tracking landmark (31) moves along x as `signal`; every
/// other coordinate is fixed.
inline gaitid::RawTrajectory signal_trajectory(const std::vector<double>& signal) {
  std::vector<gaitid::LandmarkFrame> fs;
  for (std::size_t t = 0; t < signal.size(); ++t) {
    gaitid::FrameMatrix m;
    for (int l = 0; l < gaitid::kNumLandmarks; ++l) {
      m(l, 0) = 0.01 * l + 0.001 * static_cast<double>(t);
      m(l, 1) = 0.02 * l;
      m(l, 2) = 0.0;
    }
    m(31, 0) = signal[t];
    fs.emplace_back(m);
  }
  return gaitid::RawTrajectory({"S", 0.0, {}}, std::move(fs));
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("gaitid-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline double pair_loss(const gaitid::EncoderParams& enc, double margin, const Eigen::MatrixXd& a,
                        const Eigen::MatrixXd& b, int label) {
  return gaitid::contrastive_loss(
      gaitid::pair_distance(gaitid::encode(enc, a), gaitid::encode(enc, b)), label, margin);
}

/// Independent long-double forward pass used as the finite-difference
/// oracle. Parameters follow the EncoderParams::tensors() order.
class ReferenceEncoder {
 public:
  using Real = long double;

  explicit ReferenceEncoder(const gaitid::EncoderParams& enc) : cfg_(enc.config()) {
    for (const auto& t : enc.tensors()) params.insert(params.end(), t.begin(), t.end());
  }

  std::vector<Real> params;

  std::vector<Real> encode(const Eigen::MatrixXd& x) const {
    const int n = static_cast<int>(x.rows());
    std::vector<std::vector<Real>> seq(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) {
      for (Eigen::Index j = 0; j < x.cols(); ++j) seq[t].push_back(x(t, j));
    }
    std::size_t cursor = 0;
    std::vector<Real> last;
    for (int layer = 0; layer < cfg_.layers; ++layer) {
      const int f_in = static_cast<int>(seq[0].size());
      const auto fwd = run(seq, f_in, cursor, false);
      std::vector<std::vector<Real>> out = fwd;
      last = fwd.back();
      if (cfg_.bidirectional) {
        const auto bwd = run(seq, f_in, cursor, true);
        for (int t = 0; t < n; ++t) out[t].insert(out[t].end(), bwd[t].begin(), bwd[t].end());
        last.insert(last.end(), bwd[0].begin(), bwd[0].end());
      }
      seq = std::move(out);
    }
    return last;
  }

  Real loss(Real margin, const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, int label) const {
    const auto ea = encode(a);
    const auto eb = encode(b);
    Real sq = 0;
    for (std::size_t i = 0; i < ea.size(); ++i) sq += (ea[i] - eb[i]) * (ea[i] - eb[i]);
    const Real d = std::sqrt(sq);
    if (label == 0) return sq;
    const Real gap = std::max<Real>(0, margin - d);
    return gap * gap;
  }

 private:
  static Real sigmoid(Real v) { return 1 / (1 + std::exp(-v)); }

  Real act(Real v) const {
    return cfg_.activation == gaitid::Activation::Tanh ? std::tanh(v) : std::max<Real>(0, v);
  }

  // row . [h, x] + bias, reading an H x (H + F) column-major block at w.
  Real affine(std::size_t w, std::size_t bias, int row, int width, const std::vector<Real>& h,
              const std::vector<Real>& x) const {
    const int hd = cfg_.hidden_dim;
    Real acc = params[bias + static_cast<std::size_t>(row)];
    for (int c = 0; c < width; ++c) {
      const Real v = c < hd ? h[c] : x[c - hd];
      acc += params[w + static_cast<std::size_t>(c) * hd + row] * v;
    }
    return acc;
  }

  std::vector<std::vector<Real>> run(const std::vector<std::vector<Real>>& seq, int f_in,
                                     std::size_t& cursor, bool reverse) const {
    const int hd = cfg_.hidden_dim;
    const int width = hd + f_in;
    const int gates = gaitid::gate_count(cfg_.cell);
    std::vector<std::size_t> w(gates), b(gates);
    for (int g = 0; g < gates; ++g) {
      w[g] = cursor;
      cursor += static_cast<std::size_t>(hd) * width;
      b[g] = cursor;
      cursor += hd;
    }
    const int n = static_cast<int>(seq.size());
    std::vector<std::vector<Real>> out(static_cast<std::size_t>(n));
    std::vector<Real> h(hd, 0), c(hd, 0);
    for (int step = 0; step < n; ++step) {
      const int t = reverse ? n - 1 - step : step;
      const auto& x = seq[t];
      std::vector<Real> next(hd);
      switch (cfg_.cell) {
        case gaitid::CellKind::Gru: {
          std::vector<Real> z(hd), rh(hd);
          for (int i = 0; i < hd; ++i) {
            z[i] = sigmoid(affine(w[0], b[0], i, width, h, x));
            rh[i] = sigmoid(affine(w[1], b[1], i, width, h, x)) * h[i];
          }
          for (int i = 0; i < hd; ++i) {
            next[i] = (1 - z[i]) * h[i] + z[i] * act(affine(w[2], b[2], i, width, rh, x));
          }
          break;
        }
        case gaitid::CellKind::Lstm: {
          std::vector<Real> cn(hd);
          for (int i = 0; i < hd; ++i) {
            const Real ig = sigmoid(affine(w[0], b[0], i, width, h, x));
            const Real fg = sigmoid(affine(w[1], b[1], i, width, h, x));
            const Real og = sigmoid(affine(w[2], b[2], i, width, h, x));
            const Real cand = act(affine(w[3], b[3], i, width, h, x));
            cn[i] = fg * c[i] + ig * cand;
            next[i] = og * std::tanh(cn[i]);
          }
          c = cn;
          break;
        }
        case gaitid::CellKind::Rnn:
          for (int i = 0; i < hd; ++i) next[i] = act(affine(w[0], b[0], i, width, h, x));
          break;
      }
      h = next;
      out[t] = h;
    }
    return out;
  }

  gaitid::EncoderConfig cfg_;
};

struct GradCheck {
  std::size_t parameters = 0;
  std::size_t failures = 0;
  double worst_relative = 0.0;  // over coordinates with |analytic| >= 1e-6
  double worst_absolute = 0.0;  // over coordinates with |analytic| < 1e-6
  double loss = 0.0;
};

/// Central differences with step h on every encoder parameter, evaluated by
/// the long-double reference. A coordinate passes when its relative error is
/// below rel_tol, or, for analytic values under 1e-6, when its absolute error
/// is below abs_tol.
inline GradCheck finite_difference_check(const gaitid::EncoderParams& enc, double margin,
                                         const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                                         int label, double h = 1e-6, double rel_tol = 1e-5,
                                         double abs_tol = 1e-8) {
  const gaitid::PairGradient analytic = gaitid::model_gradients(enc, margin, a, b, label);
  ReferenceEncoder ref(enc);
  std::vector<double> grads;
  for (const auto& t : analytic.grad.tensors()) grads.insert(grads.end(), t.begin(), t.end());
  GradCheck out;
  out.loss = analytic.loss;
  for (std::size_t k = 0; k < ref.params.size(); ++k) {
    const ReferenceEncoder::Real saved = ref.params[k];
    ref.params[k] = saved + h;
    const auto up = ref.loss(margin, a, b, label);
    ref.params[k] = saved - h;
    const auto down = ref.loss(margin, a, b, label);
    ref.params[k] = saved;
    const double numeric = static_cast<double>((up - down) / (2 * static_cast<ReferenceEncoder::Real>(h)));
    const double an = grads[k];
    const double abs_err = std::abs(an - numeric);
    ++out.parameters;
    if (std::abs(an) < 1e-6) {
      out.worst_absolute = std::max(out.worst_absolute, abs_err);
      if (abs_err >= abs_tol) ++out.failures;
    } else {
      const double rel = abs_err / std::max(std::abs(an), std::abs(numeric));
      out.worst_relative = std::max(out.worst_relative, rel);
      if (rel >= rel_tol) ++out.failures;
    }
  }
  return out;
}

/// Random model and inputs for the gradient suite: H=4, N=6, F=6, two
/// bidirectional layers. Biases are randomized too so every gate term is
/// exercised.
struct GradFixture {
  gaitid::EncoderParams encoder;
  Eigen::MatrixXd a;
  Eigen::MatrixXd b;
};

inline GradFixture grad_fixture(gaitid::CellKind kind, std::uint64_t seed,
                                gaitid::Activation act = gaitid::Activation::Tanh) {
  gaitid::EncoderConfig cfg;
  cfg.cell = kind;
  cfg.input_dim = 6;
  cfg.hidden_dim = 4;
  cfg.layers = 2;
  cfg.bidirectional = true;
  cfg.activation = act;
  GradFixture f{gaitid::EncoderParams::random(cfg, seed), {}, {}};
  std::mt19937_64 rng(seed ^ 0x9e37ULL);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& layer : f.encoder.layers()) {
    for (auto* cell : {&layer.forward, layer.backward ? &*layer.backward : nullptr}) {
      if (cell == nullptr) continue;
      for (auto& bias : cell->biases) {
        for (Eigen::Index i = 0; i < bias.size(); ++i) bias(i) = u(rng);
      }
    }
  }
  f.a = random_matrix(rng, 6, 6);
  f.b = random_matrix(rng, 6, 6);
  return f;
}

}  // namespace testing
