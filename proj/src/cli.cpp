#include "gaitid/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gaitid/ingestion.hpp"
#include "gaitid/pipeline.hpp"
#include "gaitid/synthgen.hpp"

namespace gaitid::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct PreprocessFlags {
  std::string landmarks = "0-32";
  int dims = 3;
  bool allow_scale = true;
};

struct NetworkFlags {
  std::string cell = "gru";
  int hidden = 128;
  int stack = 2;
  bool bidirectional = true;
  std::string activation = "tanh";
  double margin = 1.0;
  double lr = 1e-4;
  std::size_t batch = 32;
  int epochs = 10;
  int head_epochs = 300;
  double head_lr = 1e-2;
};

struct VerifyFlags {
  std::optional<double> threshold;
  std::string mode = "distance";
};

void add_segmentation(CLI::App* app, SegmentationConfig& seg) {
  app->add_option("--n-frames", seg.n_frames, "frames kept per gait cycle")
      ->check(CLI::Range(std::size_t{2}, std::size_t{10000}));
  app->add_option("--tracking-landmark", seg.tracking_landmark, "landmark whose motion drives segmentation")
      ->check(CLI::Range(0, kNumLandmarks - 1));
  app->add_option("--axis", seg.axis, "tracking axis (0 = x, 1 = y, 2 = z)")->check(CLI::Range(0, 2));
  app->add_option("--smoothing", seg.smoothing_window, "moving-average window (odd)");
  app->add_option("--amplitude-fraction", seg.amplitude_fraction,
                  "minimum ascent rise as a fraction of the signal range");
}

void add_preprocess(CLI::App* app, PreprocessFlags& pre) {
  app->add_option("--landmarks", pre.landmarks, "landmark subset, e.g. 0-32, 11-32, 23-32, 11,12,23-32");
  app->add_option("--dims", pre.dims, "Procrustes dimensionality")->check(CLI::IsMember({2, 3}));
  app->add_flag("--allow-scale,!--no-allow-scale", pre.allow_scale, "fit a scale factor during alignment (on by default)");
}

void add_network(CLI::App* app, NetworkFlags& net) {
  app->add_option("--cell", net.cell, "recurrent cell")->check(CLI::IsMember({"rnn", "lstm", "gru"}));
  app->add_option("--hidden", net.hidden, "hidden units per direction")->check(CLI::PositiveNumber);
  app->add_option("--stack", net.stack, "recurrent layers")->check(CLI::IsMember({1, 2}));
  app->add_flag("--bidirectional,!--unidirectional", net.bidirectional, "bidirectional layers (on by default)");
  app->add_option("--activation", net.activation, "candidate activation")
      ->check(CLI::IsMember({"tanh", "relu"}));
  app->add_option("--margin", net.margin, "contrastive margin")->check(CLI::PositiveNumber);
  app->add_option("--lr", net.lr, "Adam learning rate")->check(CLI::PositiveNumber);
  app->add_option("--batch", net.batch, "pairs per batch")->check(CLI::PositiveNumber);
  app->add_option("--epochs", net.epochs, "training epochs")->check(CLI::PositiveNumber);
  app->add_option("--head-epochs", net.head_epochs, "similarity-head fitting epochs")
      ->check(CLI::NonNegativeNumber);
  app->add_option("--head-lr", net.head_lr, "similarity-head learning rate")->check(CLI::PositiveNumber);
}

void add_verify(CLI::App* app, VerifyFlags& v) {
  app->add_option("--threshold", v.threshold, "distance threshold (default: margin / 2)");
  app->add_option("--mode", v.mode, "verification rule")->check(CLI::IsMember({"distance", "head"}));
}

PreprocessConfig to_preprocess(const PreprocessFlags& f, const SegmentationConfig& seg) {
  PreprocessConfig p;
  p.segmentation = seg;
  p.subset = LandmarkSubset::parse(f.landmarks);
  p.dims = f.dims;
  p.allow_scale = f.allow_scale;
  return p;
}

ThresholdPolicy to_policy(const VerifyFlags& v) {
  ThresholdPolicy p;
  p.mode = v.mode == "head" ? VerificationMode::Head : VerificationMode::Distance;
  p.threshold = v.threshold;
  return p;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw Error(ErrorKind::Schema, "'" + path.string() + "' is not valid JSON");
  return j;
}

void write_json_file(const json& j, const fs::path& path) { write_text(j.dump(2) + "\n", path); }

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

// ---------------------------------------------------------------- commands

struct SynthFlags {
  fs::path out_dir = "synth";
  SynthConfig cfg;
  std::size_t train_subjects = 12;
  bool no_transform = false;
};

void cmd_synth(const SynthFlags& f, std::uint64_t seed, std::ostream& out) {
  SynthConfig cfg = f.cfg;
  cfg.seed = seed;
  cfg.random_transform = !f.no_transform;
  if (f.train_subjects > cfg.subjects) {
    throw Error(ErrorKind::Config, "--train-subjects exceeds --subjects");
  }
  const std::vector<RawTrajectory> data = generate_dataset(cfg);
  fs::create_directories(f.out_dir);
  const std::string file = "landmarks.jsonl";
  write_landmark_file(data, f.out_dir / file);

  std::vector<ManifestEntry> train_entries;
  std::vector<ManifestEntry> test_entries;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& m = data[i].meta();
    ManifestEntry e{file + "#" + std::to_string(i), m.subject_id, m.view_deg, m.condition};
    (i / cfg.per_subject < f.train_subjects ? train_entries : test_entries).push_back(std::move(e));
  }
  if (!train_entries.empty()) {
    write_manifest(DatasetManifest(std::move(train_entries), Split::Train), f.out_dir / "train.json");
  }
  if (!test_entries.empty()) {
    write_manifest(DatasetManifest(std::move(test_entries), Split::Test), f.out_dir / "test.json");
  }
  out << json{{"trajectories", data.size()},
              {"subjects", cfg.subjects},
              {"train_subjects", f.train_subjects},
              {"out_dir", f.out_dir.string()}}
             .dump()
      << "\n";
}

void cmd_segment(const fs::path& input, const fs::path& output, const SegmentationConfig& seg,
                 std::ostream& out) {
  seg.validate();
  const std::vector<GaitSequence> seqs = load_sequences(input, seg);
  ensure_parent(output);
  write_sequence_file(seqs, output);
  out << json{{"sequences", seqs.size()}, {"n_frames", seg.n_frames}, {"out", output.string()}}.dump()
      << "\n";
}

void cmd_fit_align(const fs::path& input, const fs::path& output, const PreprocessConfig& pre,
                   const GpaOptions& gpa_in, std::ostream& out) {
  const std::vector<GaitSequence> seqs = load_sequences(input, pre.segmentation);
  GpaOptions gpa = gpa_in;
  gpa.allow_scale = pre.allow_scale;
  const GpaResult fit = fit_mean_shape(seqs, pre.subset, pre.dims, gpa);
  ensure_parent(output);
  write_json_file(mean_shape_to_json(fit, pre), output);
  out << json{{"frames", fit.transforms.size()},
              {"iterations", fit.iterations},
              {"converged", fit.converged},
              {"objective", fit.history.empty() ? 0.0 : fit.history.back()},
              {"out", output.string()}}
             .dump()
      << "\n";
}

struct TrainFlags {
  fs::path input;
  fs::path output = "model.ckpt";
  std::optional<fs::path> loss_log;
  std::optional<fs::path> mean;
  bool no_align = false;
  std::size_t pairs = 400;
  std::string preset = "balanced";
};

void cmd_train(const TrainFlags& f, const PreprocessConfig& pre, const NetworkFlags& net,
               std::uint64_t seed, std::ostream& out) {
  TrainRequest req;
  req.preprocess = pre;
  req.align = !f.no_align;
  req.preset = parse_pair_preset(f.preset);
  req.total_pairs = f.pairs;
  req.train.seed = seed;
  req.train.adam.learning_rate = net.lr;
  req.train.batch_size = net.batch;
  req.train.epochs = net.epochs;
  req.train.margin = net.margin;
  req.train.head_epochs = net.head_epochs;
  req.train.head_learning_rate = net.head_lr;
  req.train.encoder.cell = parse_cell_kind(net.cell);
  req.train.encoder.hidden_dim = net.hidden;
  req.train.encoder.layers = net.stack;
  req.train.encoder.bidirectional = net.bidirectional;
  req.train.encoder.activation = parse_activation(net.activation);
  if (f.mean) {
    if (f.no_align) throw Error(ErrorKind::Config, "--mean and --no-align are mutually exclusive");
    req.mean_shape = mean_shape_from_json(read_json_file(*f.mean), pre);
  }

  const std::vector<GaitSequence> seqs = load_sequences(f.input, pre.segmentation);
  const Checkpoint ckpt = run_training(seqs, req);
  ensure_parent(f.output);
  save_checkpoint(ckpt, f.output);
  if (f.loss_log) {
    ensure_parent(*f.loss_log);
    write_loss_log(ckpt.epoch_losses, *f.loss_log);
  }
  out << json{{"sequences", seqs.size()},
              {"features", ckpt.config.encoder.input_dim},
              {"parameters", ckpt.model.encoder.parameter_count()},
              {"final_loss", ckpt.epoch_losses.back()},
              {"checkpoint", f.output.string()}}
             .dump()
      << "\n";
}

struct EvalFlags {
  fs::path checkpoint;
  fs::path input;
  fs::path report = "report.json";
  std::optional<fs::path> distances;
  std::optional<fs::path> breakdown;
  std::optional<std::string> landmarks;
  bool no_verification = false;
};

void cmd_eval(const EvalFlags& f, const VerifyFlags& v, std::uint64_t seed, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(f.checkpoint);
  const auto& pre = ckpt.model.preprocess;
  if (f.landmarks && LandmarkSubset::parse(*f.landmarks) != pre.subset) {
    throw Error(ErrorKind::Config, "--landmarks " + *f.landmarks + " does not match the checkpoint's " +
                                       pre.subset.str());
  }
  const std::vector<GaitSequence> seqs = load_sequences(f.input, pre.segmentation);
  EvalOptions opts;
  opts.policy = to_policy(v);
  opts.verification = !f.no_verification;
  opts.seed = seed;
  const EvalOutput result = run_evaluation(ckpt.model, seqs, opts);

  ensure_parent(f.report);
  write_json_file(to_json(result.report), f.report);
  if (f.distances) {
    ensure_parent(*f.distances);
    write_text(to_csv(result.distances), *f.distances);
  }
  if (f.breakdown) {
    ensure_parent(*f.breakdown);
    write_text(breakdown_csv(result.report.breakdown), *f.breakdown);
  }
  out << json{{"rank1_accuracy", result.report.rank1_accuracy},
              {"pair_accuracy", result.report.pair_accuracy ? json(*result.report.pair_accuracy) : json()},
              {"feature_dim", result.report.feature_dim},
              {"report", f.report.string()}}
             .dump()
      << "\n";
}

GaitSequence pick_sequence(const fs::path& path, std::size_t index, const SegmentationConfig& seg) {
  const std::vector<GaitSequence> seqs = load_sequences(path, seg);
  if (index >= seqs.size()) {
    throw Error(ErrorKind::InvalidArgument, "'" + path.string() + "' has " + std::to_string(seqs.size()) +
                                                " records; index " + std::to_string(index) +
                                                " is out of range");
  }
  return seqs[index];
}

void cmd_compare(const fs::path& checkpoint, const fs::path& a, std::size_t a_index, const fs::path& b,
                 std::size_t b_index, const VerifyFlags& v, std::ostream& out) {
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  const auto& seg = ckpt.model.preprocess.segmentation;
  const GaitSequence sa = pick_sequence(a, a_index, seg);
  const GaitSequence sb = pick_sequence(b, b_index, seg);
  const ThresholdPolicy policy = to_policy(v);
  const CompareResult r = compare_sequences(ckpt.model, sa, sb, policy);
  out << json{{"distance", r.distance},
              {"similarity", r.similarity},
              {"accept", r.accept},
              {"threshold", r.threshold},
              {"mode", v.mode},
              {"subjects", {sa.meta().subject_id, sb.meta().subject_id}}}
             .dump()
      << "\n";
}

void print_error(std::ostream& err, std::string_view kind, std::string_view message) {
  err << json{{"error", kind}, {"message", message}}.dump() << "\n";
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Skeleton-based gait recognition with a siamese recurrent encoder", "gaitid"};
  app.option_defaults()->always_capture_default();
  app.set_config("--config", "", "TOML/INI file with option values; command-line flags take precedence");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  std::uint64_t seed = 0;
  app.add_option("--seed", seed, "seed for every random choice");

  SynthFlags synth;
  CLI::App* synth_cmd = app.add_subcommand("synth", "generate a synthetic landmark dataset and manifests");
  synth_cmd->add_option("--out-dir", synth.out_dir, "output directory");
  synth_cmd->add_option("--subjects", synth.cfg.subjects, "number of subjects")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--per-subject", synth.cfg.per_subject, "trajectories per subject")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--frames", synth.cfg.frames, "frames per trajectory")
      ->check(CLI::Range(std::size_t{2}, std::size_t{100000}));
  synth_cmd->add_option("--separation", synth.cfg.separation, "inter-subject parameter spread")
      ->check(CLI::PositiveNumber);
  synth_cmd->add_option("--noise", synth.cfg.noise_sigma, "per-coordinate Gaussian noise sigma")
      ->check(CLI::NonNegativeNumber);
  synth_cmd->add_option("--max-yaw", synth.cfg.max_yaw_deg, "largest random camera yaw in degrees");
  synth_cmd->add_flag("--no-transform", synth.no_transform, "skip the random per-trajectory similarity");
  synth_cmd->add_option("--train-subjects", synth.train_subjects,
                        "subjects listed in train.json; the rest go to test.json");

  SegmentationConfig seg;
  fs::path seg_input;
  fs::path seg_output = "sequences.jsonl";
  CLI::App* segment_cmd = app.add_subcommand("segment", "cut one gait cycle of N frames per trajectory");
  segment_cmd->add_option("--input", seg_input, "landmark JSONL or manifest")->required();
  segment_cmd->add_option("--out", seg_output, "segmented-sequence JSONL");
  add_segmentation(segment_cmd, seg);

  SegmentationConfig align_seg;
  PreprocessFlags align_pre;
  GpaOptions gpa;
  fs::path align_input;
  fs::path align_output = "mean.json";
  CLI::App* align_cmd = app.add_subcommand("fit-align", "fit the Procrustes mean shape on training data");
  align_cmd->add_option("--input", align_input, "landmark JSONL, sequence JSONL or manifest")->required();
  align_cmd->add_option("--out", align_output, "mean-shape JSON");
  align_cmd->add_option("--tol", gpa.tol, "GPA convergence tolerance")->check(CLI::PositiveNumber);
  align_cmd->add_option("--max-iter", gpa.max_iter, "GPA iteration cap")->check(CLI::PositiveNumber);
  add_preprocess(align_cmd, align_pre);
  add_segmentation(align_cmd, align_seg);

  SegmentationConfig train_seg;
  PreprocessFlags train_pre;
  NetworkFlags net;
  TrainFlags train_flags;
  CLI::App* train_cmd = app.add_subcommand("train", "train the siamese encoder and similarity head");
  train_cmd->add_option("--input", train_flags.input, "landmark JSONL, sequence JSONL or manifest")
      ->required();
  train_cmd->add_option("--out", train_flags.output, "checkpoint path");
  train_cmd->add_option("--loss-log", train_flags.loss_log, "per-epoch loss CSV");
  train_cmd->add_option("--mean", train_flags.mean, "mean shape from fit-align (fitted here otherwise)");
  train_cmd->add_flag("--no-align", train_flags.no_align, "skip Procrustes alignment");
  train_cmd->add_option("--pairs", train_flags.pairs, "total training pairs")->check(CLI::PositiveNumber);
  train_cmd->add_option("--pair-preset", train_flags.preset, "positive/negative split of the pairs")
      ->check(CLI::IsMember({"balanced", "one-per-subject", "one-to-two"}));
  add_network(train_cmd, net);
  add_preprocess(train_cmd, train_pre);
  add_segmentation(train_cmd, train_seg);

  EvalFlags eval_flags;
  VerifyFlags eval_verify;
  CLI::App* eval_cmd = app.add_subcommand("eval", "rank-1 identification and pair verification");
  eval_cmd->add_option("--checkpoint", eval_flags.checkpoint, "trained checkpoint")->required();
  eval_cmd->add_option("--input", eval_flags.input, "landmark JSONL, sequence JSONL or manifest")
      ->required();
  eval_cmd->add_option("--report", eval_flags.report, "report JSON");
  eval_cmd->add_option("--distances", eval_flags.distances, "distance-matrix CSV");
  eval_cmd->add_option("--breakdown", eval_flags.breakdown, "per-view/condition rank-1 CSV");
  eval_cmd->add_option("--landmarks", eval_flags.landmarks, "expected landmark subset (checked)");
  eval_cmd->add_flag("--no-verification", eval_flags.no_verification, "skip pair verification");
  add_verify(eval_cmd, eval_verify);

  fs::path cmp_ckpt;
  fs::path cmp_a;
  fs::path cmp_b;
  std::size_t cmp_a_index = 0;
  std::size_t cmp_b_index = 0;
  VerifyFlags cmp_verify;
  CLI::App* compare_cmd = app.add_subcommand("compare", "distance, similarity and decision for two walks");
  compare_cmd->add_option("--checkpoint", cmp_ckpt, "trained checkpoint")->required();
  compare_cmd->add_option("--a", cmp_a, "first landmark or sequence file")->required();
  compare_cmd->add_option("--b", cmp_b, "second landmark or sequence file")->required();
  compare_cmd->add_option("--a-index", cmp_a_index, "record index within --a");
  compare_cmd->add_option("--b-index", cmp_b_index, "record index within --b");
  add_verify(compare_cmd, cmp_verify);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    print_error(err, "usage", e.what());
    return 2;
  }

  try {
    if (synth_cmd->parsed()) {
      cmd_synth(synth, seed, out);
    } else if (segment_cmd->parsed()) {
      cmd_segment(seg_input, seg_output, seg, out);
    } else if (align_cmd->parsed()) {
      cmd_fit_align(align_input, align_output, to_preprocess(align_pre, align_seg), gpa, out);
    } else if (train_cmd->parsed()) {
      train_seg.validate();
      cmd_train(train_flags, to_preprocess(train_pre, train_seg), net, seed, out);
    } else if (eval_cmd->parsed()) {
      cmd_eval(eval_flags, eval_verify, seed, out);
    } else if (compare_cmd->parsed()) {
      cmd_compare(cmp_ckpt, cmp_a, cmp_a_index, cmp_b, cmp_b_index, cmp_verify, out);
    }
  } catch (const Error& e) {
    print_error(err, to_string(e.kind()), e.what());
    return 1;
  } catch (const json::exception& e) {
    print_error(err, "schema", e.what());
    return 1;
  } catch (const fs::filesystem_error& e) {
    print_error(err, "io", e.what());
    return 1;
  }
  return 0;
}

}  // namespace gaitid::cli
