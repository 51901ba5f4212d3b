#include "gaitid/procrustes.hpp"

#include <cmath>
#include <string>

#include <Eigen/Dense>

namespace gaitid {

namespace {

Eigen::MatrixXd centered(const Eigen::MatrixXd& x) {
  return x.rowwise() - x.colwise().mean();
}

}  // namespace

ShapeConfig::ShapeConfig(Eigen::MatrixXd points) : points_(std::move(points)) {
  const auto d = points_.cols();
  if (d != 2 && d != 3) {
    throw Error(ErrorKind::InvalidArgument, "shape dimension must be 2 or 3");
  }
  if (points_.rows() < d) {
    throw Error(ErrorKind::InvalidArgument, "shape needs at least as many landmarks as dimensions");
  }
  if (!points_.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "shape contains non-finite coordinates");
  }
  if ((points_.rowwise() - points_.row(0)).isZero(0.0)) {
    throw Error(ErrorKind::DegenerateShape, "all landmarks of the shape coincide");
  }
}

SimilarityTransform SimilarityTransform::identity(Eigen::Index dims) {
  return {1.0, Eigen::MatrixXd::Identity(dims, dims), Eigen::VectorXd::Zero(dims)};
}

void SimilarityTransform::validate() const {
  const auto d = rotation.rows();
  if (rotation.cols() != d || translation.size() != d) {
    throw Error(ErrorKind::DimensionMismatch, "transform rotation/translation shapes disagree");
  }
  if (!(scale > 0.0) || !std::isfinite(scale)) {
    throw Error(ErrorKind::InvalidArgument, "transform scale must be positive");
  }
  const double ortho = (rotation.transpose() * rotation - Eigen::MatrixXd::Identity(d, d)).norm();
  if (!(ortho <= 1e-10) || !(std::abs(rotation.determinant() - 1.0) <= 1e-10)) {
    throw Error(ErrorKind::InvalidArgument, "transform rotation is not a proper rotation");
  }
}

SimilarityTransform SimilarityTransform::inverse() const {
  SimilarityTransform inv;
  inv.scale = 1.0 / scale;
  inv.rotation = rotation.transpose();
  inv.translation = -(rotation * translation) / scale;
  return inv;
}

MeanShape::MeanShape(ShapeConfig shape) : shape_(std::move(shape)) {
  const auto& p = shape_.points();
  const double centroid = p.colwise().mean().cwiseAbs().maxCoeff();
  if (!(centroid < 1e-10) || !(std::abs(p.norm() - 1.0) < 1e-10)) {
    throw Error(ErrorKind::InvalidArgument, "mean shape must be centered with unit norm");
  }
}

MeanShape MeanShape::normalize(const ShapeConfig& shape) {
  Eigen::MatrixXd c = centered(shape.points());
  const double n = c.norm();
  if (!(n > 0.0)) throw Error(ErrorKind::DegenerateShape, "cannot normalize a zero-size shape");
  return MeanShape(ShapeConfig(c / n));
}

ShapeConfig apply_transform(const ShapeConfig& x, const SimilarityTransform& t) {
  const auto d = x.dims();
  if (t.rotation.rows() != d || t.rotation.cols() != d || t.translation.size() != d) {
    throw Error(ErrorKind::DimensionMismatch, "transform dimension does not match shape");
  }
  Eigen::MatrixXd out = t.scale * x.points() * t.rotation;
  out.rowwise() += t.translation.transpose();
  return ShapeConfig(std::move(out));
}

OpaResult opa_fit(const ShapeConfig& x, const ShapeConfig& y, bool allow_scale) {
  if (x.landmarks() != y.landmarks() || x.dims() != y.dims()) {
    throw Error(ErrorKind::DimensionMismatch, "OPA needs configurations of equal shape");
  }
  const auto d = x.dims();
  const Eigen::RowVectorXd mx = x.points().colwise().mean();
  const Eigen::RowVectorXd my = y.points().colwise().mean();
  const Eigen::MatrixXd xc = x.points().rowwise() - mx;
  const Eigen::MatrixXd yc = y.points().rowwise() - my;
  const double xx = xc.squaredNorm();
  if (!(xx > 0.0)) throw Error(ErrorKind::DegenerateShape, "source configuration has no spread");

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(xc.transpose() * yc, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Eigen::MatrixXd& u = svd.matrixU();
  const Eigen::MatrixXd& v = svd.matrixV();
  Eigen::VectorXd signs = Eigen::VectorXd::Ones(d);
  if ((u * v.transpose()).determinant() < 0.0) signs(d - 1) = -1.0;

  OpaResult r;
  r.transform.rotation = u * signs.asDiagonal() * v.transpose();
  r.transform.scale = 1.0;
  if (allow_scale) {
    const double trace = signs.dot(svd.singularValues());
    // Zero up to rounding means no positive scale brings X closer to Y.
    if (!(trace > 1e-12 * svd.singularValues().sum())) {
      throw Error(ErrorKind::DegenerateShape, "no positive scale aligns the configurations");
    }
    r.transform.scale = trace / xx;
  }
  r.transform.translation = (my - r.transform.scale * mx * r.transform.rotation).transpose();
  r.residual = (apply_transform(x, r.transform).points() - y.points()).squaredNorm();
  return r;
}

GpaResult gpa_fit(std::span<const ShapeConfig> configs, const GpaOptions& opts) {
  if (configs.size() < 2) {
    throw Error(ErrorKind::InvalidArgument, "GPA needs at least two configurations");
  }
  for (const auto& c : configs) {
    if (c.landmarks() != configs[0].landmarks() || c.dims() != configs[0].dims()) {
      throw Error(ErrorKind::DimensionMismatch, "GPA configurations must share (k, d)");
    }
  }
  if (opts.max_iter < 1 || !(opts.tol > 0.0)) {
    throw Error(ErrorKind::Config, "GPA needs max_iter >= 1 and tol > 0");
  }

  MeanShape mean = MeanShape::normalize(configs[0]);
  std::vector<double> history;
  bool converged = false;
  int it = 0;
  const auto k = configs[0].landmarks();
  const auto d = configs[0].dims();
  std::vector<Eigen::MatrixXd> aligned(configs.size());

  while (it < opts.max_iter && !converged) {
    ++it;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(k, d);
    for (std::size_t i = 0; i < configs.size(); ++i) {
      const OpaResult fit = opa_fit(configs[i], mean.shape(), opts.allow_scale);
      aligned[i] = apply_transform(configs[i], fit.transform).points();
      sum += aligned[i];
    }
    Eigen::MatrixXd next = centered(sum / static_cast<double>(configs.size()));
    const double n = next.norm();
    if (!(n > 0.0)) throw Error(ErrorKind::DegenerateShape, "GPA mean collapsed to a point");
    next /= n;

    double objective = 0.0;
    for (const auto& a : aligned) objective += (a - next).squaredNorm();
    history.push_back(objective);

    converged = (next - mean.points()).norm() < opts.tol;
    mean = MeanShape(ShapeConfig(std::move(next)));
  }

  std::vector<SimilarityTransform> transforms;
  transforms.reserve(configs.size());
  for (const auto& c : configs) transforms.push_back(opa_fit(c, mean.shape(), opts.allow_scale).transform);
  return GpaResult{std::move(mean), std::move(transforms), std::move(history), converged, it};
}

ShapeConfig frame_shape(const LandmarkFrame& frame, const LandmarkSubset& subset, int dims) {
  if (dims != 2 && dims != 3) throw Error(ErrorKind::InvalidArgument, "dims must be 2 or 3");
  Eigen::MatrixXd pts(static_cast<Eigen::Index>(subset.size()), dims);
  Eigen::Index row = 0;
  for (int lm : subset.indices()) {
    for (int c = 0; c < dims; ++c) pts(row, c) = frame(lm, c);
    ++row;
  }
  return ShapeConfig(std::move(pts));
}

GpaResult fit_mean_shape(std::span<const GaitSequence> sequences, const LandmarkSubset& subset,
                         int dims, const GpaOptions& opts) {
  std::vector<ShapeConfig> shapes;
  for (const auto& seq : sequences) {
    for (const auto& f : seq.frames()) shapes.push_back(frame_shape(f, subset, dims));
  }
  return gpa_fit(shapes, opts);
}

GaitSequence align_sequence(const GaitSequence& seq, const MeanShape& mean,
                            const LandmarkSubset& subset, int dims, bool allow_scale) {
  if (mean.shape().landmarks() != static_cast<Eigen::Index>(subset.size()) ||
      mean.shape().dims() != dims) {
    throw Error(ErrorKind::DimensionMismatch,
                "mean shape is " + std::to_string(mean.shape().landmarks()) + "x" +
                    std::to_string(mean.shape().dims()) + ", subset/dims ask for " +
                    std::to_string(subset.size()) + "x" + std::to_string(dims));
  }
  std::vector<LandmarkFrame> frames;
  frames.reserve(seq.length());
  for (const auto& frame : seq.frames()) {
    const ShapeConfig shape = frame_shape(frame, subset, dims);
    const OpaResult fit = opa_fit(shape, mean.shape(), allow_scale);
    const Eigen::MatrixXd aligned = apply_transform(shape, fit.transform).points();
    FrameMatrix coords = frame.coords();
    Eigen::Index row = 0;
    for (int lm : subset.indices()) {
      for (int c = 0; c < dims; ++c) coords(lm, c) = aligned(row, c);
      if (dims == 2) coords(lm, 2) = 0.0;
      ++row;
    }
    frames.emplace_back(coords);
  }
  return GaitSequence(seq.meta(), std::move(frames), seq.source_indices());
}

}  // namespace gaitid
