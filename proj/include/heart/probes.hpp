#pragma once

#include <heart/error.hpp>
#include <heart/sequence.hpp>
#include <heart/sphere.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace heart
{

/// Magnitude scales used for the direction-vs-magnitude experiment.
inline constexpr std::array<double, 6> kMagnitudeScales{0.5, 0.75, 1.0, 1.25, 1.5, 2.0};

struct ThinnessReport {
  std::string encoder_tag;
  double mean_norm = 0.0;
  double std_norm = 0.0;  ///< population standard deviation
  double thinness = 0.0;  ///< std_norm / mean_norm
  long long token_count = 0;
};

/// Coefficient of variation of row norms over all sequences; specials only when asked.
inline ThinnessReport thinness(std::span<const EmbeddingSequence> sequences, bool include_special = false,
                               std::optional<std::string> encoder_tag = std::nullopt)
{
  constexpr const char* op = "thinness";
  std::vector<double> norms;
  for (const auto& seq : sequences) {
    for (Index p = 0; p < seq.length(); ++p) {
      if (include_special || !seq.is_special(p)) {
        norms.push_back(seq.row(p).norm());
      }
    }
  }
  if (norms.size() < 2) {
    throw Error(ErrorCode::EmptyInput, op, "need at least 2 token rows, got " + std::to_string(norms.size()));
  }
  const double n = static_cast<double>(norms.size());
  const double mean = std::accumulate(norms.begin(), norms.end(), 0.0) / n;
  double var = 0.0;
  for (double x : norms) {
    var += (x - mean) * (x - mean);
  }
  ThinnessReport r;
  r.encoder_tag = encoder_tag.value_or(sequences.empty() ? std::string{} : sequences.front().model_tag);
  r.mean_norm = mean;
  r.std_norm = std::sqrt(var / n);
  r.thinness = r.std_norm / r.mean_norm;
  r.token_count = static_cast<long long>(norms.size());
  return r;
}

/// One copy of seq per scale, every row multiplied by that scale.
inline std::vector<EmbeddingSequence> magnitude_variants(const EmbeddingSequence& seq, std::span<const double> scales)
{
  for (double s : scales) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw Error(ErrorCode::NonPositiveScale, "magnitude_variants", "scale " + std::to_string(s));
    }
  }
  std::vector<EmbeddingSequence> out;
  out.reserve(scales.size());
  for (double s : scales) {
    EmbeddingSequence v = seq;
    if (s != 1.0) {
      v.data = (seq.data.cast<double>() * s).cast<float>();
    }
    v.annotations["magnitude_scale"] = s;
    out.push_back(std::move(v));
  }
  return out;
}

struct NnEntry {
  std::string token;
  std::size_t index = 0;  ///< position in the vocabulary
  double score = 0.0;     ///< distance (linear) or cosine (angular)
};

struct NnReport {
  std::string query;
  std::vector<NnEntry> linear_top_k;   ///< ascending distance
  std::vector<NnEntry> angular_top_k;  ///< descending cosine
};

using VocabEntry = std::pair<std::string, Vector>;

/**
 * Exact top-k neighbors of a query by Euclidean distance and by cosine.
 * Ties go to the lower vocabulary index. Zero vectors have no direction
 * and are left out of the angular ranking.
 */
inline NnReport nearest_neighbors(const Vector& query, std::span<const VocabEntry> vocab, std::size_t k,
                                  const std::string& query_name = "")
{
  constexpr const char* op = "nearest_neighbors";
  if (vocab.empty()) {
    throw Error(ErrorCode::EmptyVocab, op, "vocabulary is empty");
  }
  if (k < 1) {
    throw Error(ErrorCode::PreconditionViolated, op, "k must be >= 1");
  }
  const Direction q = normalize(query).direction;
  std::vector<NnEntry> lin;
  std::vector<NnEntry> ang;
  for (std::size_t i = 0; i < vocab.size(); ++i) {
    const auto& [token, v] = vocab[i];
    detail::require_same_dim(query.size(), v.size(), op);
    lin.push_back({token, i, (v - query).norm()});
    const double n = v.norm();
    if (n > kDefaultNormEps) {
      ang.push_back({token, i, q.coords().dot(v / n)});
    }
  }
  auto by_distance = [](const NnEntry& a, const NnEntry& b) {
    return a.score != b.score ? a.score < b.score : a.index < b.index;
  };
  auto by_cosine = [](const NnEntry& a, const NnEntry& b) {
    return a.score != b.score ? a.score > b.score : a.index < b.index;
  };
  const std::size_t kl = std::min(k, lin.size());
  const std::size_t ka = std::min(k, ang.size());
  std::partial_sort(lin.begin(), lin.begin() + static_cast<std::ptrdiff_t>(kl), lin.end(), by_distance);
  std::partial_sort(ang.begin(), ang.begin() + static_cast<std::ptrdiff_t>(ka), ang.end(), by_cosine);
  lin.resize(kl);
  ang.resize(ka);
  return {query_name, std::move(lin), std::move(ang)};
}

enum class Region { bos, upstream, concept_token, downstream, eot, pad };

inline std::string to_string(Region r)
{
  switch (r) {
    case Region::bos: return "bos";
    case Region::upstream: return "upstream";
    case Region::concept_token: return "concept";
    case Region::downstream: return "downstream";
    case Region::eot: return "eot";
    case Region::pad: return "pad";
  }
  return "?";
}

struct ContaminationReport {
  std::vector<double> angles;  ///< theta(p) for every position
  std::vector<std::string> tokens;
  std::vector<Region> regions;
  Index concept_index = 0;
  /// NaN when the sequences have no EOT.
  double eot_angle = std::numeric_limits<double>::quiet_NaN();
  /// Means over the region; NaN when it is empty.
  double upstream_mean = std::numeric_limits<double>::quiet_NaN();
  double downstream_mean = std::numeric_limits<double>::quiet_NaN();
  double asymmetry = std::numeric_limits<double>::quiet_NaN();
};

/**
 * Per-position angle between two token-aligned sequences that differ in one
 * concept token. The concept position is the shared subject_index, or else
 * the single position whose tokens differ. Upstream and downstream exclude
 * BOS, the concept, EOT and padding.
 */
inline ContaminationReport contamination(const EmbeddingSequence& a, const EmbeddingSequence& b)
{
  constexpr const char* op = "contamination";
  if (a.length() != b.length() || a.dim() != b.dim()) {
    throw Error(ErrorCode::MisalignedSequences, op,
                "shapes " + std::to_string(a.length()) + "x" + std::to_string(a.dim()) + " vs " +
                  std::to_string(b.length()) + "x" + std::to_string(b.dim()));
  }
  if (a.subject_index != b.subject_index || a.eot_index != b.eot_index || a.bos_index != b.bos_index ||
      a.pad_start != b.pad_start) {
    throw Error(ErrorCode::MisalignedSequences, op, "special-token indices differ");
  }
  std::vector<Index> mismatched;
  for (Index p = 0; p < a.length(); ++p) {
    if (a.tokens[static_cast<std::size_t>(p)] != b.tokens[static_cast<std::size_t>(p)]) {
      mismatched.push_back(p);
    }
  }
  Index concept_pos = 0;
  if (a.subject_index) {
    concept_pos = *a.subject_index;
    if (!mismatched.empty() && !(mismatched.size() == 1 && mismatched.front() == concept_pos)) {
      throw Error(ErrorCode::MisalignedSequences, op, "tokens differ outside the concept position");
    }
  } else if (mismatched.size() == 1) {
    concept_pos = mismatched.front();
  } else {
    throw Error(ErrorCode::MisalignedSequences, op,
                "cannot locate the concept: " + std::to_string(mismatched.size()) + " token mismatches");
  }

  ContaminationReport r;
  r.concept_index = concept_pos;
  r.tokens = a.tokens;
  double up = 0.0;
  double down = 0.0;
  int n_up = 0;
  int n_down = 0;
  for (Index p = 0; p < a.length(); ++p) {
    const Direction da = normalize(a.row(p)).direction;
    const Direction db = normalize(b.row(p)).direction;
    const double theta = geodesic_distance(da, db);
    r.angles.push_back(theta);
    Region region = Region::upstream;
    if (a.bos_index && p == *a.bos_index) {
      region = Region::bos;
    } else if (p == concept_pos) {
      region = Region::concept_token;
    } else if (a.eot_index && p == *a.eot_index) {
      region = Region::eot;
      r.eot_angle = theta;
    } else if (a.pad_start && p >= *a.pad_start) {
      region = Region::pad;
    } else if (p > concept_pos) {
      region = Region::downstream;
      down += theta;
      ++n_down;
    } else {
      up += theta;
      ++n_up;
    }
    r.regions.push_back(region);
  }
  if (n_up > 0) {
    r.upstream_mean = up / n_up;
  }
  if (n_down > 0) {
    r.downstream_mean = down / n_down;
  }
  r.asymmetry = r.downstream_mean - r.upstream_mean;
  return r;
}

namespace csv
{

/// Shortest decimal text that reads back to the same double.
inline std::string number(double v)
{
  if (std::isnan(v)) {
    return "nan";
  }
  if (std::isinf(v)) {
    return v > 0 ? "inf" : "-inf";
  }
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

/// Quotes a field when it holds a comma, quote or line break.
inline std::string field(const std::string& s)
{
  if (s.find_first_of(",\"\r\n") == std::string::npos) {
    return s;
  }
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') {
      out += '"';
    }
    out += c;
  }
  out += '"';
  return out;
}

}  // namespace csv

inline std::string thinness_csv(std::span<const ThinnessReport> reports)
{
  std::string out = "encoder,mean,std,thinness\n";
  for (const auto& r : reports) {
    out += csv::field(r.encoder_tag) + ',' + csv::number(r.mean_norm) + ',' + csv::number(r.std_norm) + ',' +
           csv::number(r.thinness) + '\n';
  }
  return out;
}

inline std::string contamination_csv(const ContaminationReport& r)
{
  std::string out = "position,token,theta,region\n";
  for (std::size_t p = 0; p < r.angles.size(); ++p) {
    out += std::to_string(p) + ',' + csv::field(r.tokens[p]) + ',' + csv::number(r.angles[p]) + ',' +
           to_string(r.regions[p]) + '\n';
  }
  return out;
}

inline std::string nn_csv(const NnReport& r)
{
  std::string out = "rank,token,score,metric\n";
  auto rows = [&out](const std::vector<NnEntry>& list, const char* metric) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      out += std::to_string(i + 1) + ',' + csv::field(list[i].token) + ',' + csv::number(list[i].score) + ',' +
             metric + '\n';
    }
  };
  rows(r.linear_top_k, "linear");
  rows(r.angular_top_k, "angular");
  return out;
}

}  // namespace heart
