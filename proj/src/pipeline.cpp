#include "gaitid/pipeline.hpp"

#include <fstream>
#include <map>
#include <string>

namespace gaitid {

using nlohmann::json;

namespace {

enum class InputKind { Manifest, Sequences, Landmarks };

InputKind sniff_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) {
      // A pretty-printed manifest spans several lines.
      in.clear();
      in.seekg(0);
      std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
      j = json::parse(all, nullptr, false);
      if (j.is_object() && j.contains("entries")) return InputKind::Manifest;
      throw Error(ErrorKind::Schema, path.string() + ":1: not valid JSON");
    }
    if (j.is_object() && j.contains("entries")) return InputKind::Manifest;
    if (j.is_object() && j.contains("source_indices")) return InputKind::Sequences;
    return InputKind::Landmarks;
  }
  throw Error(ErrorKind::InsufficientData, "'" + path.string() + "' holds no records");
}

}  // namespace

std::vector<GaitSequence> segment_all(const std::vector<RawTrajectory>& trajectories,
                                      const SegmentationConfig& seg) {
  std::vector<GaitSequence> out;
  out.reserve(trajectories.size());
  for (std::size_t i = 0; i < trajectories.size(); ++i) {
    try {
      out.push_back(segment_cycle(trajectories[i], seg));
    } catch (const Error& e) {
      throw Error(e.kind(), "record " + std::to_string(i) + " (" + trajectories[i].meta().subject_id +
                                "): " + e.what());
    }
  }
  return out;
}

std::vector<GaitSequence> load_sequences(const std::filesystem::path& path,
                                         const SegmentationConfig& seg) {
  switch (sniff_input(path)) {
    case InputKind::Manifest: {
      const DatasetManifest manifest = read_manifest(path);
      return segment_all(resolve_manifest(manifest, path.parent_path()), seg);
    }
    case InputKind::Sequences:
      return read_sequence_file(path);
    case InputKind::Landmarks:
      return segment_all(read_landmark_file(path), seg);
  }
  return {};
}

std::vector<SequenceTensor> prepare_tensors(const std::vector<GaitSequence>& sequences,
                                            const std::optional<MeanShape>& mean,
                                            const PreprocessConfig& preprocess) {
  std::vector<SequenceTensor> out;
  out.reserve(sequences.size());
  for (const auto& seq : sequences) {
    if (mean) {
      out.push_back(flatten_sequence(
          align_sequence(seq, *mean, preprocess.subset, preprocess.dims, preprocess.allow_scale),
          preprocess.subset));
    } else {
      out.push_back(flatten_sequence(seq, preprocess.subset));
    }
  }
  return out;
}

Checkpoint run_training(const std::vector<GaitSequence>& train_sequences, const TrainRequest& req) {
  if (train_sequences.empty()) throw Error(ErrorKind::InsufficientData, "no training sequences");
  req.train.validate();
  if (req.preprocess.dims != 2 && req.preprocess.dims != 3) {
    throw Error(ErrorKind::Config, "dims must be 2 or 3");
  }

  TrainArtifacts artifacts;
  artifacts.preprocess = req.preprocess;
  if (req.mean_shape) {
    artifacts.mean_shape = req.mean_shape;
  } else if (req.align) {
    GpaOptions gpa = req.gpa;
    gpa.allow_scale = req.preprocess.allow_scale;
    artifacts.mean_shape =
        fit_mean_shape(train_sequences, req.preprocess.subset, req.preprocess.dims, gpa).mean;
  }
  if (artifacts.mean_shape) {
    const auto& pts = artifacts.mean_shape->points();
    if (pts.rows() != static_cast<Eigen::Index>(req.preprocess.subset.size()) ||
        pts.cols() != req.preprocess.dims) {
      throw Error(ErrorKind::DimensionMismatch, "mean shape does not match the landmark subset and dims");
    }
  }

  std::vector<SequenceTensor> tensors =
      prepare_tensors(train_sequences, artifacts.mean_shape, req.preprocess);
  artifacts.standardizer = FeatureStandardizer::fit(tensors);

  const PairRatio counts = pair_counts(req.preset, tensors, req.total_pairs);
  const PairSet pairs = build_pairs(tensors, counts.positives, counts.negatives,
                                    derive_seed(req.train.seed, 3));
  return train(pairs, req.train, artifacts);
}

std::vector<Embedding> embed_sequences(const SiameseModelParams& model,
                                       const std::vector<GaitSequence>& sequences) {
  const std::vector<SequenceTensor> tensors =
      prepare_tensors(sequences, model.mean_shape, model.preprocess);
  std::vector<Embedding> out;
  out.reserve(tensors.size());
  for (const auto& t : tensors) {
    if (static_cast<int>(t.features()) != model.encoder.config().input_dim) {
      throw Error(ErrorKind::DimensionMismatch, "sequence has " + std::to_string(t.features()) +
                                                    " features, the model expects " +
                                                    std::to_string(model.encoder.config().input_dim));
    }
    out.push_back(embed(model, t));
  }
  return out;
}

std::vector<std::string> sequence_ids(const std::vector<GaitSequence>& sequences) {
  std::map<std::string, std::size_t> seen;
  std::vector<std::string> ids;
  ids.reserve(sequences.size());
  for (const auto& s : sequences) {
    const std::string& subject = s.meta().subject_id;
    ids.push_back(subject + "#" + std::to_string(seen[subject]++));
  }
  return ids;
}

EvalOutput run_evaluation(const SiameseModelParams& model, const std::vector<GaitSequence>& sequences,
                          const EvalOptions& opts) {
  if (sequences.empty()) throw Error(ErrorKind::InsufficientData, "no evaluation sequences");
  EvalOutput out;
  out.embeddings = embed_sequences(model, sequences);

  std::vector<LabeledEmbedding> labeled;
  labeled.reserve(sequences.size());
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    labeled.push_back({sequences[i].meta(), out.embeddings[i]});
  }
  const GalleryProbeSplit split = split_first_as_gallery(labeled);
  const GalleryIndex gallery(split.gallery);
  const Rank1Result rank1 = rank1_identify(gallery, split.probes);

  EvalReport& r = out.report;
  r.rank1_accuracy = rank1.accuracy;
  r.rank1_correct = rank1.correct;
  r.breakdown = rank1.breakdown;
  r.gallery_size = gallery.size();
  r.probe_count = split.probes.size();
  r.feature_dim = feature_count(model.preprocess.subset);
  r.landmarks = model.preprocess.subset.str();
  r.verification_mode = opts.policy.mode == VerificationMode::Distance ? "distance" : "head";
  r.threshold = opts.policy.threshold.value_or(model.margin / 2.0);

  if (opts.verification) {
    std::map<std::string, std::size_t> per_subject;
    for (const auto& s : sequences) per_subject[s.meta().subject_id] += 1;
    std::size_t positives = 0;
    for (const auto& [id, n] : per_subject) positives += n * (n - 1) / 2;
    if (positives > 0 && per_subject.size() > 1) {
      // The pairs only index tensors, so metadata-only stand-ins suffice.
      std::vector<SequenceTensor> stubs;
      stubs.reserve(sequences.size());
      for (const auto& s : sequences) stubs.emplace_back(Eigen::MatrixXd::Zero(1, 1), s.meta());
      std::size_t negatives = 0;
      for (auto it = per_subject.begin(); it != per_subject.end(); ++it) {
        for (auto jt = std::next(it); jt != per_subject.end(); ++jt) negatives += it->second * jt->second;
      }
      const PairSet pairs = build_pairs(stubs, positives, std::min(positives, negatives),
                                        derive_seed(opts.seed, 4));
      const VerificationResult v =
          verify_pairs(out.embeddings, pairs.pairs(), model.head, model.margin, opts.policy);
      r.pair_accuracy = v.accuracy;
      r.mean_contrastive_loss = v.mean_loss;
      r.pair_count = v.pairs;
    }
  }

  out.distances = distance_matrix(sequence_ids(sequences), out.embeddings);
  return out;
}

CompareResult compare_sequences(const SiameseModelParams& model, const GaitSequence& a,
                                const GaitSequence& b, const ThresholdPolicy& policy) {
  const std::vector<Embedding> e = embed_sequences(model, {a, b});
  CompareResult r;
  r.distance = pair_distance(e[0], e[1]);
  r.similarity = similarity_score(model.head, e[0], e[1]);
  r.threshold = policy.threshold.value_or(model.margin / 2.0);
  r.accept = policy.mode == VerificationMode::Distance ? r.distance < r.threshold : r.similarity > 0.5;
  return r;
}

json mean_shape_to_json(const GpaResult& gpa, const PreprocessConfig& preprocess) {
  const Eigen::MatrixXd& pts = gpa.mean.points();
  json points = json::array();
  for (Eigen::Index i = 0; i < pts.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index c = 0; c < pts.cols(); ++c) row.push_back(pts(i, c));
    points.push_back(std::move(row));
  }
  return {
      {"landmarks", preprocess.subset.str()},
      {"dims", preprocess.dims},
      {"allow_scale", preprocess.allow_scale},
      {"points", std::move(points)},
      {"history", gpa.history},
      {"converged", gpa.converged},
      {"iterations", gpa.iterations},
  };
}

MeanShape mean_shape_from_json(const json& j, const PreprocessConfig& preprocess) {
  try {
    const auto subset = LandmarkSubset::parse(j.at("landmarks").get<std::string>());
    const int dims = j.at("dims").get<int>();
    if (subset != preprocess.subset || dims != preprocess.dims) {
      throw Error(ErrorKind::Config, "mean shape was fitted for landmarks " + subset.str() + " in " +
                                         std::to_string(dims) + "-D, but the run uses " +
                                         preprocess.subset.str() + " in " +
                                         std::to_string(preprocess.dims) + "-D");
    }
    const auto& rows = j.at("points");
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(rows.size()), dims);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != static_cast<std::size_t>(dims)) {
        throw Error(ErrorKind::Schema, "mean shape row " + std::to_string(i) + " has the wrong width");
      }
      for (int c = 0; c < dims; ++c) pts(static_cast<Eigen::Index>(i), c) = rows[i][c].get<double>();
    }
    return MeanShape(ShapeConfig(std::move(pts)));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Schema, std::string("mean shape file: ") + e.what());
  }
}

}  // namespace gaitid
