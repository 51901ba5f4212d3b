#include "gaitid/evaluation.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace gaitid {

GalleryIndex::GalleryIndex(std::vector<LabeledEmbedding> entries) : entries_(std::move(entries)) {
  if (entries_.empty()) throw Error(ErrorKind::InsufficientData, "gallery is empty");
  for (const auto& e : entries_) {
    if (e.embedding.size() != entries_.front().embedding.size()) {
      throw Error(ErrorKind::DimensionMismatch, "gallery embeddings differ in length");
    }
  }
}

GalleryProbeSplit split_first_as_gallery(std::span<const LabeledEmbedding> all) {
  GalleryProbeSplit out;
  std::set<std::string> enrolled;
  for (const auto& e : all) {
    if (enrolled.insert(e.meta.subject_id).second) {
      out.gallery.push_back(e);
    } else {
      out.probes.push_back(e);
    }
  }
  return out;
}

Rank1Result rank1_identify(const GalleryIndex& gallery, std::span<const LabeledEmbedding> probes) {
  if (probes.empty()) throw Error(ErrorKind::InsufficientData, "no probes to identify");
  Rank1Result r;
  r.total = probes.size();
  // keyed by (view, condition) so rows come out sorted
  std::map<std::pair<double, std::string>, std::pair<std::size_t, std::size_t>> groups;
  for (const auto& probe : probes) {
    std::size_t best = 0;
    double best_d = pair_distance(probe.embedding, gallery.entries()[0].embedding);
    for (std::size_t g = 1; g < gallery.size(); ++g) {
      const double d = pair_distance(probe.embedding, gallery.entries()[g].embedding);
      if (d < best_d) {
        best_d = d;
        best = g;
      }
    }
    r.matches.push_back(best);
    const bool hit = gallery.entries()[best].meta.subject_id == probe.meta.subject_id;
    r.correct += hit ? 1 : 0;
    auto& cell = groups[{probe.meta.view_deg, probe.meta.condition.str()}];
    cell.first += 1;
    cell.second += hit ? 1 : 0;
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.total) * 100.0;
  for (const auto& [key, counts] : groups) {
    r.breakdown.push_back({key.first, key.second, counts.first, counts.second,
                           static_cast<double>(counts.second) / static_cast<double>(counts.first) * 100.0});
  }
  return r;
}

VerificationResult verify_pairs(std::span<const Embedding> pool_embeddings,
                                std::span<const SequencePair> pairs, const HeadParams& head,
                                double margin, const ThresholdPolicy& policy) {
  if (pairs.empty()) throw Error(ErrorKind::InsufficientData, "no pairs to verify");
  const double tau = policy.threshold.value_or(margin / 2.0);
  VerificationResult r;
  r.pairs = pairs.size();
  double loss = 0.0;
  for (const auto& p : pairs) {
    const Embedding& a = pool_embeddings[p.a];
    const Embedding& b = pool_embeddings[p.b];
    const double d = pair_distance(a, b);
    loss += contrastive_loss(d, p.label, margin);
    const bool similar = policy.mode == VerificationMode::Distance
                             ? d < tau
                             : similarity_score(head, a, b) > 0.5;
    r.correct += similar == (p.label == 0) ? 1 : 0;
  }
  r.accuracy = static_cast<double>(r.correct) / static_cast<double>(r.pairs) * 100.0;
  r.mean_loss = loss / static_cast<double>(r.pairs);
  return r;
}

VerificationResult pair_verification_accuracy(const SiameseModelParams& model, const PairSet& pairs,
                                              const ThresholdPolicy& policy) {
  std::vector<Embedding> emb;
  emb.reserve(pairs.pool().size());
  for (const auto& t : pairs.pool()) emb.push_back(embed(model, t));
  return verify_pairs(emb, pairs.pairs(), model.head, model.margin, policy);
}

DistanceMatrix distance_matrix(std::span<const std::string> ids,
                               std::span<const Embedding> embeddings) {
  if (ids.size() != embeddings.size()) {
    throw Error(ErrorKind::DimensionMismatch, "distance matrix needs one id per embedding");
  }
  const auto n = static_cast<Eigen::Index>(embeddings.size());
  DistanceMatrix m{std::vector<std::string>(ids.begin(), ids.end()), Eigen::MatrixXd::Zero(n, n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double d = pair_distance(embeddings[static_cast<std::size_t>(i)],
                                     embeddings[static_cast<std::size_t>(j)]);
      m.values(i, j) = d;
      m.values(j, i) = d;
    }
  }
  return m;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string to_csv(const DistanceMatrix& m) {
  std::ostringstream out;
  out << "id";
  for (const auto& id : m.ids) out << ',' << csv_field(id);
  out << '\n';
  for (Eigen::Index i = 0; i < m.values.rows(); ++i) {
    out << csv_field(m.ids[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m.values.cols(); ++j) out << ',' << format_real(m.values(i, j));
    out << '\n';
  }
  return out.str();
}

nlohmann::json to_json(const EvalReport& report) {
  nlohmann::json breakdown = nlohmann::json::array();
  for (const auto& row : report.breakdown) {
    breakdown.push_back({{"view_deg", row.view_deg},
                         {"condition", row.condition},
                         {"probes", row.probes},
                         {"correct", row.correct},
                         {"rank1_accuracy", row.rank1}});
  }
  nlohmann::json j = {
      {"rank1_accuracy", report.rank1_accuracy},
      {"pair_accuracy", report.pair_accuracy ? nlohmann::json(*report.pair_accuracy) : nlohmann::json(nullptr)},
      {"mean_contrastive_loss", report.mean_contrastive_loss
                                    ? nlohmann::json(*report.mean_contrastive_loss)
                                    : nlohmann::json(nullptr)},
      {"breakdown", breakdown},
      {"counts",
       {{"gallery", report.gallery_size},
        {"probes", report.probe_count},
        {"rank1_correct", report.rank1_correct},
        {"pairs", report.pair_count}}},
      {"feature_dim", report.feature_dim},
      {"landmarks", report.landmarks},
      {"verification_mode", report.verification_mode},
      {"threshold", report.threshold},
  };
  return j;
}

std::string breakdown_csv(std::span<const BreakdownRow> rows) {
  std::ostringstream out;
  out << "view_deg,condition,probes,correct,rank1_accuracy\n";
  for (const auto& r : rows) {
    out << format_real(r.view_deg) << ',' << csv_field(r.condition) << ',' << r.probes << ','
        << r.correct << ',' << format_real(r.rank1) << '\n';
  }
  return out.str();
}

void write_text(const std::string& text, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error(ErrorKind::Io, "write failure on '" + path.string() + "'");
}

}  // namespace gaitid
