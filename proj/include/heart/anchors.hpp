#pragma once

#include <heart/error.hpp>
#include <heart/file_io.hpp>
#include <heart/kent.hpp>
#include <heart/sequence.hpp>
#include <heart/sphere.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace heart
{

/// Token position an anchor is estimated at.
enum class Role { subject, eot, pad };

inline std::string to_string(Role r)
{
  switch (r) {
    case Role::subject: return "subject";
    case Role::eot: return "eot";
    case Role::pad: return "pad";
  }
  return "?";
}

inline Role role_from_string(std::string_view s)
{
  if (s == "subject") {
    return Role::subject;
  }
  if (s == "eot") {
    return Role::eot;
  }
  if (s == "pad") {
    return Role::pad;
  }
  throw Error(ErrorCode::SchemaViolation, "role_from_string", "unknown role '" + std::string(s) + "'");
}

inline constexpr std::string_view kTemplateSlot = "{}";
/// Pools smaller than this are rejected by estimate_anchor.
inline constexpr std::size_t kMinPoolSize = 5;
/// Pools smaller than this still fit but deserve a warning.
inline constexpr std::size_t kRecommendedPoolSize = 20;
/// The PAD role averages at most this many pad rows per sequence.
inline constexpr Index kPadPositions = 8;

/// Twelve of the CLIP zero-shot ImageNet templates.
inline std::vector<std::string> default_templates()
{
  return {
    "a photo of a {}.",
    "a bad photo of a {}.",
    "a photo of many {}.",
    "a sculpture of a {}.",
    "a rendering of a {}.",
    "a cropped photo of the {}.",
    "a bright photo of a {}.",
    "a drawing of a {}.",
    "a close-up photo of a {}.",
    "a painting of the {}.",
    "a photo of the large {}.",
    "a photo of the small {}.",
  };
}

struct PromptPool {
  std::string concept_name;
  std::vector<std::string> templates;
  std::vector<std::string> prompts;
  Role role = Role::subject;
};

/// Renders the concept into every template, in template order.
inline PromptPool build_pool(const std::string& concept_name, const std::vector<std::string>& templates,
                             Role role = Role::subject)
{
  constexpr const char* op = "build_pool";
  if (templates.empty()) {
    throw Error(ErrorCode::BadTemplate, op, "template list is empty");
  }
  PromptPool pool{concept_name, templates, {}, role};
  pool.prompts.reserve(templates.size());
  for (const auto& t : templates) {
    const auto first = t.find(kTemplateSlot);
    if (first == std::string::npos || t.find(kTemplateSlot, first + kTemplateSlot.size()) != std::string::npos) {
      throw Error(ErrorCode::BadTemplate, op, "template needs exactly one {} slot: '" + t + "'");
    }
    std::string p = t;
    p.replace(first, kTemplateSlot.size(), concept_name);
    pool.prompts.push_back(std::move(p));
  }
  return pool;
}

/// One template per line; blank lines are skipped.
inline std::vector<std::string> load_templates(const std::filesystem::path& path)
{
  std::istringstream in(io::read_file(path));
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (!line.empty()) {
      out.push_back(line);
    }
  }
  return out;
}

struct NormStats {
  double mean = 0.0;
  double std = 0.0;  ///< population standard deviation
};

/// Kent fit of a concept's embeddings at one token role.
struct ConceptAnchor {
  std::string concept_name;
  Role role = Role::subject;
  KentModel model;
  NormStats source_norm_stats;
  long long sample_count = 0;

  /// The anchor direction (the Kent mean).
  const Direction& mu() const noexcept { return model.mu; }
};

struct AnchorOptions {
  std::size_t min_pool_size = kMinPoolSize;
  KentFitOptions kent{};
};

/// The raw (un-normalized) embedding a sequence contributes for a role.
inline Vector role_embedding(const EmbeddingSequence& seq, Role role)
{
  constexpr const char* op = "estimate_anchor";
  switch (role) {
    case Role::subject:
      if (!seq.subject_index) {
        throw Error(ErrorCode::MissingRoleIndex, op, "sequence '" + seq.prompt + "' has no subject_index");
      }
      return seq.row(*seq.subject_index);
    case Role::eot:
      if (!seq.eot_index) {
        throw Error(ErrorCode::MissingRoleIndex, op, "sequence '" + seq.prompt + "' has no eot_index");
      }
      return seq.row(*seq.eot_index);
    case Role::pad: {
      if (!seq.pad_start) {
        throw Error(ErrorCode::MissingRoleIndex, op, "sequence '" + seq.prompt + "' has no pad_start");
      }
      const Index begin = *seq.pad_start;
      const Index end = std::min(seq.length(), begin + kPadPositions);
      Vector sum = Vector::Zero(seq.dim());
      for (Index p = begin; p < end; ++p) {
        sum += seq.row(p);
      }
      return sum / static_cast<double>(end - begin);
    }
  }
  throw Error(ErrorCode::PreconditionViolated, op, "unknown role");
}

/**
 * Fits a Kent distribution to the normalized role embeddings of a prompt
 * pool. Norms are recorded before normalization so edits can rescale.
 */
inline ConceptAnchor estimate_anchor(std::span<const EmbeddingSequence> sequences, Role role,
                                     const std::string& concept_name = "", const AnchorOptions& options = {})
{
  constexpr const char* op = "estimate_anchor";
  if (sequences.size() < std::max<std::size_t>(options.min_pool_size, 4)) {
    throw Error(ErrorCode::PreconditionViolated, op,
                "pool has " + std::to_string(sequences.size()) + " sequences, need " +
                  std::to_string(std::max<std::size_t>(options.min_pool_size, 4)));
  }
  std::vector<Direction> dirs;
  dirs.reserve(sequences.size());
  std::vector<double> norms;
  norms.reserve(sequences.size());
  for (const auto& seq : sequences) {
    detail::require_same_dim(sequences.front().dim(), seq.dim(), op);
    auto [dir, norm] = normalize(role_embedding(seq, role));
    dirs.push_back(std::move(dir));
    norms.push_back(norm);
  }
  // sorted so the statistics do not depend on pool order
  std::sort(norms.begin(), norms.end());
  double mean = 0.0;
  for (double n : norms) {
    mean += n;
  }
  mean /= static_cast<double>(norms.size());
  double var = 0.0;
  for (double n : norms) {
    var += (n - mean) * (n - mean);
  }
  var /= static_cast<double>(norms.size());

  return ConceptAnchor{concept_name, role, fit_kent(dirs, options.kent).model, {mean, std::sqrt(var)},
                       static_cast<long long>(dirs.size())};
}

struct AttributePair {
  std::string concept_name;
  std::string negative;  ///< a-
  std::string positive;  ///< a+
  ConceptAnchor anchor_neg;
  ConceptAnchor anchor_pos;
};

/// Unit tangent direction at the negative anchor pointing toward the positive one.
struct AttributeDirection {
  Direction base;         ///< mu of a-
  Direction d_a;          ///< unit tangent at base
  Vector raw_delta;       ///< mu(a+) - mu(a-)
  Vector tangent_delta;   ///< raw_delta with its base component removed
  double theta_to_target = 0.0;
  std::string concept_name;
  std::string negative;
  std::string positive;
};

inline AttributeDirection attribute_direction(const Direction& mu_neg, const Direction& mu_pos)
{
  constexpr const char* op = "attribute_direction";
  detail::require_same_dim(mu_neg.dim(), mu_pos.dim(), op);
  const double theta = geodesic_distance(mu_neg, mu_pos);
  if (theta < kCoincidentAngle) {
    throw Error(ErrorCode::CoincidentAnchors, op, "anchors are " + std::to_string(theta) + " rad apart");
  }
  Vector delta = mu_pos.coords() - mu_neg.coords();
  Vector tangent = tangent_project(mu_neg, delta);
  const double n = tangent.norm();
  if (!(n > 1e-12)) {
    throw Error(ErrorCode::CoincidentAnchors, op, "attribute direction vanishes after projection");
  }
  return AttributeDirection{mu_neg, detail::renormalized(tangent / n), std::move(delta), std::move(tangent), theta,
                            "", "", ""};
}

inline AttributeDirection attribute_direction(const AttributePair& pair)
{
  detail::require_same_dim(pair.anchor_neg.mu().dim(), pair.anchor_pos.mu().dim(), "attribute_direction");
  AttributeDirection out = attribute_direction(pair.anchor_neg.mu(), pair.anchor_pos.mu());
  out.concept_name = pair.concept_name;
  out.negative = pair.negative;
  out.positive = pair.positive;
  return out;
}

}  // namespace heart
