#include "gaitid/ingestion.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace gaitid {

using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& what) { throw Error(ErrorKind::Schema, what); }

const json& require(const json& j, const char* field) {
  auto it = j.find(field);
  if (it == j.end()) schema_error(std::string("missing field '") + field + "'");
  return *it;
}

double require_number(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_number()) schema_error(std::string("field '") + field + "' must be a number");
  return v.get<double>();
}

std::string require_string(const json& j, const char* field) {
  const json& v = require(j, field);
  if (!v.is_string()) schema_error(std::string("field '") + field + "' must be a string");
  return v.get<std::string>();
}

SequenceMeta meta_from_json(const json& j) {
  SequenceMeta meta;
  meta.subject_id = require_string(j, "subject_id");
  if (meta.subject_id.empty()) schema_error("field 'subject_id' must be non-empty");
  meta.view_deg = require_number(j, "view_deg");
  meta.condition = Condition::parse(require_string(j, "condition"));
  return meta;
}

void meta_to_json(const SequenceMeta& meta, json& j) {
  j["subject_id"] = meta.subject_id;
  j["view_deg"] = meta.view_deg;
  j["condition"] = meta.condition.str();
}

std::vector<LandmarkFrame> frames_from_json(const json& j) {
  const json& frames = require(j, "frames");
  if (!frames.is_array()) schema_error("field 'frames' must be an array");
  std::vector<LandmarkFrame> out;
  out.reserve(frames.size());
  for (std::size_t t = 0; t < frames.size(); ++t) {
    const json& frame = frames[t];
    if (!frame.is_array() || frame.size() != kNumLandmarks) {
      schema_error("field 'frames' [" + std::to_string(t) + "] must hold exactly 33 landmarks");
    }
    FrameMatrix coords;
    for (int l = 0; l < kNumLandmarks; ++l) {
      const json& point = frame[static_cast<std::size_t>(l)];
      if (!point.is_array() || point.size() != kCoordsPerLandmark) {
        schema_error("field 'frames' [" + std::to_string(t) + "][" + std::to_string(l) +
                     "] must be [x, y, z]");
      }
      for (int c = 0; c < kCoordsPerLandmark; ++c) {
        const json& v = point[static_cast<std::size_t>(c)];
        if (!v.is_number()) {
          schema_error("field 'frames' [" + std::to_string(t) + "][" + std::to_string(l) +
                       "] has a non-numeric coordinate");
        }
        coords(l, c) = v.get<double>();
      }
    }
    out.emplace_back(coords);
  }
  if (out.empty()) schema_error("field 'frames' must be non-empty");
  return out;
}

json frames_to_json(const std::vector<LandmarkFrame>& frames) {
  json out = json::array();
  for (const auto& frame : frames) {
    json f = json::array();
    for (int l = 0; l < kNumLandmarks; ++l) {
      f.push_back({frame(l, 0), frame(l, 1), frame(l, 2)});
    }
    out.push_back(std::move(f));
  }
  return out;
}

template <typename Parse>
auto read_jsonl(const std::filesystem::path& path, Parse parse) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
  std::vector<decltype(parse(json{}))> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      json j = json::parse(line);
      if (!j.is_object()) schema_error("record must be a JSON object");
      out.push_back(parse(j));
    } catch (const json::parse_error& e) {
      throw Error(ErrorKind::Schema, path.string() + ":" + std::to_string(lineno) +
                                         ": malformed JSON: " + e.what());
    } catch (const Error& e) {
      throw Error(e.kind() == ErrorKind::InvalidArgument ? ErrorKind::Schema : e.kind(),
                  path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (in.bad()) throw Error(ErrorKind::Io, "read failure on '" + path.string() + "'");
  return out;
}

void write_lines(const std::vector<std::string>& lines, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  for (const auto& l : lines) out << l << '\n';
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "write failure on '" + path.string() + "'");
}

}  // namespace

json trajectory_to_json(const RawTrajectory& traj) {
  json j = json::object();
  meta_to_json(traj.meta(), j);
  if (traj.fps()) j["fps"] = *traj.fps();
  j["frames"] = frames_to_json(traj.frames());
  return j;
}

RawTrajectory trajectory_from_json(const json& j) {
  SequenceMeta meta = meta_from_json(j);
  std::optional<double> fps;
  if (auto it = j.find("fps"); it != j.end() && !it->is_null()) {
    if (!it->is_number()) schema_error("field 'fps' must be a number");
    fps = it->get<double>();
  }
  return RawTrajectory(std::move(meta), frames_from_json(j), fps);
}

json sequence_to_json(const GaitSequence& seq) {
  json j = json::object();
  meta_to_json(seq.meta(), j);
  j["frames"] = frames_to_json(seq.frames());
  j["source_indices"] = seq.source_indices();
  return j;
}

GaitSequence sequence_from_json(const json& j) {
  SequenceMeta meta = meta_from_json(j);
  const json& idx = require(j, "source_indices");
  if (!idx.is_array()) schema_error("field 'source_indices' must be an array");
  std::vector<std::size_t> indices;
  for (const auto& v : idx) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      schema_error("field 'source_indices' must hold non-negative integers");
    }
    indices.push_back(v.get<std::size_t>());
  }
  return GaitSequence(std::move(meta), frames_from_json(j), std::move(indices));
}

std::vector<RawTrajectory> read_landmark_file(const std::filesystem::path& path) {
  return read_jsonl(path, [](const json& j) { return trajectory_from_json(j); });
}

void write_landmark_file(std::span<const RawTrajectory> trajectories,
                         const std::filesystem::path& path) {
  std::vector<std::string> lines;
  lines.reserve(trajectories.size());
  for (const auto& t : trajectories) lines.push_back(trajectory_to_json(t).dump());
  write_lines(lines, path);
}

std::vector<GaitSequence> read_sequence_file(const std::filesystem::path& path) {
  return read_jsonl(path, [](const json& j) { return sequence_from_json(j); });
}

void write_sequence_file(std::span<const GaitSequence> sequences,
                         const std::filesystem::path& path) {
  std::vector<std::string> lines;
  lines.reserve(sequences.size());
  for (const auto& s : sequences) lines.push_back(sequence_to_json(s).dump());
  write_lines(lines, path);
}

std::string_view to_string(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Test: return "test";
    case Split::Gallery: return "gallery";
    case Split::Probe: return "probe";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::Train;
  if (text == "test") return Split::Test;
  if (text == "gallery") return Split::Gallery;
  if (text == "probe") return Split::Probe;
  throw Error(ErrorKind::Schema, "unknown split '" + std::string(text) + "'");
}

DatasetManifest::DatasetManifest(std::vector<ManifestEntry> entries, Split split)
    : entries_(std::move(entries)), split_(split) {
  std::set<std::string> seen;
  for (const auto& e : entries_) {
    if (e.subject_id.empty()) throw Error(ErrorKind::Schema, "manifest entry with empty subject_id");
    if (!seen.insert(e.record_id).second) {
      throw Error(ErrorKind::Schema, "duplicate record id '" + e.record_id + "' in manifest");
    }
  }
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open manifest '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::Schema, path.string() + ": malformed JSON: " + e.what());
  }
  try {
    if (!j.is_object()) schema_error("manifest must be a JSON object");
    Split split = parse_split(require_string(j, "split"));
    const json& entries = require(j, "entries");
    if (!entries.is_array()) schema_error("field 'entries' must be an array");
    std::vector<ManifestEntry> out;
    for (const auto& e : entries) {
      ManifestEntry entry;
      entry.record_id = require_string(e, "record_id");
      SequenceMeta meta = meta_from_json(e);
      entry.subject_id = meta.subject_id;
      entry.view_deg = meta.view_deg;
      entry.condition = meta.condition;
      out.push_back(std::move(entry));
    }
    return DatasetManifest(std::move(out), split);
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  json entries = json::array();
  for (const auto& e : manifest.entries()) {
    json je = {{"record_id", e.record_id}};
    meta_to_json({e.subject_id, e.view_deg, e.condition}, je);
    entries.push_back(std::move(je));
  }
  json j = {{"split", std::string(to_string(manifest.split()))}, {"entries", entries}};
  write_lines({j.dump(2)}, path);
}

std::vector<RawTrajectory> resolve_manifest(const DatasetManifest& manifest,
                                            const std::filesystem::path& base_dir) {
  std::map<std::filesystem::path, std::vector<RawTrajectory>> cache;
  std::vector<RawTrajectory> out;
  for (const auto& e : manifest.entries()) {
    auto hash = e.record_id.rfind('#');
    if (hash == std::string::npos || hash + 1 == e.record_id.size()) {
      throw Error(ErrorKind::Schema, "record id '" + e.record_id + "' is not '<file>#<index>'");
    }
    std::filesystem::path file = e.record_id.substr(0, hash);
    if (file.is_relative()) file = base_dir / file;
    std::size_t index = 0;
    try {
      index = std::stoul(e.record_id.substr(hash + 1));
    } catch (const std::exception&) {
      throw Error(ErrorKind::Schema, "record id '" + e.record_id + "' has a bad index");
    }
    auto it = cache.find(file);
    if (it == cache.end()) it = cache.emplace(file, read_landmark_file(file)).first;
    if (index >= it->second.size()) {
      throw Error(ErrorKind::Schema, "record id '" + e.record_id + "' out of range");
    }
    const RawTrajectory& traj = it->second[index];
    if (traj.meta().subject_id != e.subject_id) {
      throw Error(ErrorKind::Schema, "record '" + e.record_id + "' subject_id disagrees with manifest");
    }
    out.push_back(traj);
  }
  return out;
}

PairSet::PairSet(std::vector<SequenceTensor> pool, std::vector<SequencePair> pairs,
                 std::uint64_t seed, PairRatio ratio)
    : pool_(std::move(pool)), pairs_(std::move(pairs)), seed_(seed), ratio_(ratio) {
  std::size_t pos = 0;
  for (const auto& p : pairs_) {
    if (p.a >= pool_.size() || p.b >= pool_.size() || p.a == p.b) {
      throw Error(ErrorKind::InvalidArgument, "pair references an invalid pool entry");
    }
    const bool same = pool_[p.a].meta().subject_id == pool_[p.b].meta().subject_id;
    if (p.label != (same ? 0 : 1)) {
      throw Error(ErrorKind::InvalidArgument, "pair label disagrees with subject ids");
    }
    pos += same ? 1 : 0;
  }
  if (pos != ratio_.positives || pairs_.size() - pos != ratio_.negatives) {
    throw Error(ErrorKind::InvalidArgument, "pair counts disagree with declared ratio");
  }
}

namespace {

std::size_t draw_index(std::mt19937_64& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

struct SubjectGroups {
  std::vector<std::string> ids;
  std::vector<std::vector<std::size_t>> members;
};

SubjectGroups group_by_subject(std::span<const SequenceTensor> sequences) {
  SubjectGroups g;
  std::unordered_map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& id = sequences[i].meta().subject_id;
    auto [it, inserted] = slot.emplace(id, g.ids.size());
    if (inserted) {
      g.ids.push_back(id);
      g.members.emplace_back();
    }
    g.members[it->second].push_back(i);
  }
  return g;
}

using IndexPair = std::pair<std::size_t, std::size_t>;

IndexPair ordered(std::size_t a, std::size_t b) { return a < b ? IndexPair{a, b} : IndexPair{b, a}; }

}  // namespace

PairSet build_pairs(std::span<const SequenceTensor> sequences, std::size_t n_positive,
                    std::size_t n_negative, std::uint64_t seed) {
  const SubjectGroups groups = group_by_subject(sequences);
  const std::size_t n_subjects = groups.ids.size();

  std::size_t positive_capacity = 0;
  for (const auto& m : groups.members) positive_capacity += m.size() * (m.size() - 1) / 2;
  std::size_t negative_capacity = 0;
  {
    std::size_t seen = 0;
    for (const auto& m : groups.members) {
      negative_capacity += seen * m.size();
      seen += m.size();
    }
  }
  if (n_positive > positive_capacity) {
    throw Error(ErrorKind::InsufficientData,
                "requested " + std::to_string(n_positive) + " positive pairs but only " +
                    std::to_string(positive_capacity) + " same-subject pairs exist");
  }
  if (n_negative > negative_capacity) {
    throw Error(ErrorKind::InsufficientData,
                "requested " + std::to_string(n_negative) + " negative pairs but only " +
                    std::to_string(negative_capacity) + " cross-subject pairs exist");
  }

  std::mt19937_64 rng(seed);
  std::vector<SequencePair> pairs;
  pairs.reserve(n_positive + n_negative);

  // Positives: round-robin over eligible subjects in a seeded order.
  std::vector<std::size_t> eligible;
  for (std::size_t s = 0; s < n_subjects; ++s) {
    if (groups.members[s].size() >= 2) eligible.push_back(s);
  }
  std::shuffle(eligible.begin(), eligible.end(), rng);
  std::vector<std::vector<IndexPair>> unused(n_subjects);
  for (std::size_t s : eligible) {
    const auto& m = groups.members[s];
    for (std::size_t i = 0; i < m.size(); ++i) {
      for (std::size_t j = i + 1; j < m.size(); ++j) unused[s].push_back(ordered(m[i], m[j]));
    }
  }
  while (pairs.size() < n_positive) {
    for (std::size_t s : eligible) {
      if (pairs.size() == n_positive) break;
      auto& cand = unused[s];
      if (cand.empty()) continue;
      std::size_t k = draw_index(rng, cand.size());
      pairs.push_back({cand[k].first, cand[k].second, 0});
      cand.erase(cand.begin() + static_cast<std::ptrdiff_t>(k));
    }
  }

  // Negatives: uniform unordered subject pair, then uniform sequences.
  std::set<IndexPair> used;
  constexpr int kMaxRejections = 1000;
  int rejections = 0;
  while (pairs.size() < n_positive + n_negative && rejections < kMaxRejections) {
    std::size_t s = draw_index(rng, n_subjects);
    std::size_t u = draw_index(rng, n_subjects - 1);
    if (u >= s) ++u;
    const auto& ms = groups.members[s];
    const auto& mu = groups.members[u];
    IndexPair p = ordered(ms[draw_index(rng, ms.size())], mu[draw_index(rng, mu.size())]);
    if (!used.insert(p).second) {
      ++rejections;
      continue;
    }
    rejections = 0;
    pairs.push_back({p.first, p.second, 1});
  }
  if (pairs.size() < n_positive + n_negative) {
    // Near exhaustion: sample the remainder from the explicit candidate list.
    std::vector<IndexPair> remaining;
    for (std::size_t i = 0; i < sequences.size(); ++i) {
      for (std::size_t j = i + 1; j < sequences.size(); ++j) {
        if (sequences[i].meta().subject_id != sequences[j].meta().subject_id &&
            !used.count({i, j})) {
          remaining.emplace_back(i, j);
        }
      }
    }
    while (pairs.size() < n_positive + n_negative) {
      std::size_t k = draw_index(rng, remaining.size());
      pairs.push_back({remaining[k].first, remaining[k].second, 1});
      remaining[k] = remaining.back();
      remaining.pop_back();
    }
  }

  return PairSet(std::vector<SequenceTensor>(sequences.begin(), sequences.end()), std::move(pairs),
                 seed, PairRatio{n_positive, n_negative});
}

PairPreset parse_pair_preset(std::string_view text) {
  if (text == "one-per-subject") return PairPreset::OnePositivePerSubject;
  if (text == "balanced") return PairPreset::Balanced;
  if (text == "one-to-two") return PairPreset::OneToTwo;
  throw Error(ErrorKind::Config, "unknown pair preset '" + std::string(text) +
                                     "' (one-per-subject, balanced, one-to-two)");
}

std::string_view to_string(PairPreset preset) {
  switch (preset) {
    case PairPreset::OnePositivePerSubject: return "one-per-subject";
    case PairPreset::Balanced: return "balanced";
    case PairPreset::OneToTwo: return "one-to-two";
  }
  return "balanced";
}

PairRatio pair_counts(PairPreset preset, std::span<const SequenceTensor> sequences,
                      std::size_t total) {
  PairRatio r;
  switch (preset) {
    case PairPreset::OnePositivePerSubject: {
      const SubjectGroups groups = group_by_subject(sequences);
      for (const auto& m : groups.members) r.positives += m.size() >= 2 ? 1 : 0;
      r.positives = std::min(r.positives, total);
      break;
    }
    case PairPreset::Balanced:
      r.positives = total / 2;
      break;
    case PairPreset::OneToTwo:
      r.positives = (total + 1) / 3;
      break;
  }
  r.negatives = total - r.positives;
  return r;
}

}  // namespace gaitid
