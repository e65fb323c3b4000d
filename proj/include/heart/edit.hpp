#pragma once

#include <heart/anchors.hpp>
#include <heart/error.hpp>
#include <heart/sequence.hpp>
#include <heart/sphere.hpp>

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace heart
{

/// How strongly and where an edit is applied.
struct EditPlan {
  double lambda = 1.0;
  /// Decay scale (radians) of w(p) = exp(-theta_p / tau).
  double tau = 0.5;
  /// Explicit w(p) values that replace the computed ones.
  std::map<Index, double> per_token_weight;
  /// Fraction of denoising steps run before injection, in [0, 0.5].
  double inject_fraction = 0.10;
  bool edit_eot = true;
  bool edit_pad = true;
  bool propagate_downstream = true;
  bool propagate_upstream = false;
  /// Per-role strengths; unset means lambda.
  std::optional<double> subject_lambda;
  std::optional<double> eot_lambda;
  std::optional<double> pad_lambda;
};

inline void validate(const EditPlan& plan, const char* op = "validate")
{
  auto fail = [op](const std::string& what) { throw Error(ErrorCode::InvalidPlan, op, what); };
  if (!std::isfinite(plan.lambda)) {
    fail("lambda must be finite");
  }
  if (!(plan.tau > 0.0) || !std::isfinite(plan.tau)) {
    fail("tau must be > 0");
  }
  if (!(plan.inject_fraction >= 0.0 && plan.inject_fraction <= 0.5)) {
    fail("inject_fraction must lie in [0, 0.5]");
  }
  for (const auto& [p, w] : plan.per_token_weight) {
    if (p < 0 || !(w >= 0.0 && w <= 1.0)) {
      fail("per_token_weight[" + std::to_string(p) + "] must lie in [0, 1]");
    }
  }
  for (const auto* l : {&plan.subject_lambda, &plan.eot_lambda, &plan.pad_lambda}) {
    if (*l && !std::isfinite(**l)) {
      fail("role lambda must be finite");
    }
  }
}

struct SubjectDecomposition {
  double alpha = 0.0;
  Vector aligned;   ///< alpha * mu_s
  Vector residual;  ///< unit direction minus aligned; orthogonal to mu_s
  double original_norm = 0.0;
};

/// Splits the direction of h into its mu_s component and the orthogonal rest.
inline SubjectDecomposition decompose_subject(const Vector& h, const Direction& mu_s)
{
  detail::require_same_dim(h.size(), mu_s.dim(), "decompose_subject");
  const auto [dir, norm] = normalize(h);
  SubjectDecomposition out;
  out.alpha = dir.coords().dot(mu_s.coords());
  out.aligned = out.alpha * mu_s.coords();
  out.residual = dir.coords() - out.aligned;
  out.original_norm = norm;
  return out;
}

/**
 * Moves the mu_s-aligned part of h a fraction lambda along the geodesic to
 * mu_t, keeps the residual, renormalizes and restores the original norm.
 */
inline Vector edit_subject_token(const Vector& h, const Direction& mu_s, const Direction& mu_t, double lambda)
{
  detail::require_same_dim(mu_s.dim(), mu_t.dim(), "edit_subject_token");
  const SubjectDecomposition parts = decompose_subject(h, mu_s);
  const Direction moved = slerp(mu_s, mu_t, lambda);
  const Vector combined = parts.alpha * moved.coords() + parts.residual;
  return normalize(combined).direction.coords() * parts.original_norm;
}

/**
 * w(p) = exp(-theta_p / tau), theta_p the angle between token p and the
 * subject token. The subject gets 1 and BOS 0; zero rows get 0.
 */
inline std::vector<double> contamination_weights(const EmbeddingSequence& seq, double tau)
{
  constexpr const char* op = "contamination_weights";
  if (!seq.subject_index) {
    throw Error(ErrorCode::MissingRoleIndex, op, "sequence has no subject_index");
  }
  if (!(tau > 0.0)) {
    throw Error(ErrorCode::InvalidPlan, op, "tau must be > 0");
  }
  const Index star = *seq.subject_index;
  const Direction subject = normalize(seq.row(star)).direction;
  std::vector<double> w(static_cast<std::size_t>(seq.length()), 0.0);
  for (Index p = 0; p < seq.length(); ++p) {
    const Vector row = seq.row(p);
    if (p == star) {
      w[static_cast<std::size_t>(p)] = 1.0;
    } else if ((seq.bos_index && p == *seq.bos_index) || !(row.norm() > kDefaultNormEps)) {
      w[static_cast<std::size_t>(p)] = 0.0;
    } else {
      const double theta = geodesic_distance(normalize(row).direction, subject);
      w[static_cast<std::size_t>(p)] = std::exp(-theta / tau);
    }
  }
  return w;
}

struct EditResult {
  EmbeddingSequence edited;
  /// Angle each row turned by; 0 for untouched rows.
  std::vector<double> per_token_angle_moved;
  /// The plan with per_token_weight filled in for every position.
  EditPlan plan_used;
};

/// Source and target anchor directions per role. Missing EOT/PAD anchors fall back to the subject pair.
struct SubjectAnchors {
  Direction subject_source;
  Direction subject_target;
  std::optional<Direction> eot_source;
  std::optional<Direction> eot_target;
  std::optional<Direction> pad_source;
  std::optional<Direction> pad_target;
};

namespace detail
{

/// Weights from contamination_weights overridden by the plan's explicit entries.
inline std::vector<double> plan_weights(const EmbeddingSequence& seq, const EditPlan& plan, const char* op)
{
  std::vector<double> w = contamination_weights(seq, plan.tau);
  const Index star = *seq.subject_index;
  for (const auto& [p, value] : plan.per_token_weight) {
    if (p >= seq.length()) {
      throw Error(ErrorCode::InvalidPlan, op, "per_token_weight position " + std::to_string(p) + " >= T");
    }
    if (p == star && value != 1.0) {
      throw Error(ErrorCode::InvalidPlan, op, "weight at the subject position must be 1");
    }
    w[static_cast<std::size_t>(p)] = value;
  }
  return w;
}

/// Row p's edit strength per plan flags, or nullopt when the row is left alone.
struct RowTarget {
  enum class Kind { subject, eot, pad } kind;
  double strength;
};

inline std::optional<RowTarget> row_target(const EmbeddingSequence& seq, const EditPlan& plan,
                                           const std::vector<double>& w, Index p, bool allow_pad)
{
  const Index star = *seq.subject_index;
  const double lambda = plan.lambda;
  const double wp = w[static_cast<std::size_t>(p)];
  if (seq.bos_index && p == *seq.bos_index) {
    return std::nullopt;
  }
  if (p == star) {
    return RowTarget{RowTarget::Kind::subject, plan.subject_lambda.value_or(lambda)};
  }
  if (seq.eot_index && p == *seq.eot_index) {
    if (!plan.edit_eot) {
      return std::nullopt;
    }
    return RowTarget{RowTarget::Kind::eot, plan.eot_lambda.value_or(lambda) * wp};
  }
  if (seq.pad_start && p >= *seq.pad_start) {
    if (!allow_pad || !plan.edit_pad) {
      return std::nullopt;
    }
    return RowTarget{RowTarget::Kind::pad, plan.pad_lambda.value_or(lambda) * wp};
  }
  if (p > star && plan.propagate_downstream) {
    return RowTarget{RowTarget::Kind::subject, lambda * wp};
  }
  if (p < star && plan.propagate_upstream) {
    return RowTarget{RowTarget::Kind::subject, lambda * wp};
  }
  return std::nullopt;
}

inline double row_angle(const Vector& before, const Vector& after)
{
  if (!(before.norm() > kDefaultNormEps) || !(after.norm() > kDefaultNormEps)) {
    return 0.0;
  }
  return geodesic_distance(normalize(before).direction, normalize(after).direction);
}

inline EditResult start_edit(const EmbeddingSequence& seq, const EditPlan& plan, const char* op)
{
  validate(seq, op);
  validate(plan, op);
  if (!seq.subject_index) {
    throw Error(ErrorCode::MissingRoleIndex, op, "sequence has no subject_index");
  }
  EditResult result{seq, std::vector<double>(static_cast<std::size_t>(seq.length()), 0.0), plan};
  const std::vector<double> w = plan_weights(seq, plan, op);
  result.plan_used.per_token_weight.clear();
  for (Index p = 0; p < seq.length(); ++p) {
    result.plan_used.per_token_weight[p] = w[static_cast<std::size_t>(p)];
  }
  return result;
}

}  // namespace detail

/**
 * Subject replacement over a whole sequence.
 *
 * The subject row moves with the subject anchors at full strength. EOT and
 * PAD rows use their role anchors when edit_eot / edit_pad are set;
 * downstream rows (between subject and EOT) and, if enabled, upstream rows
 * use the subject anchors at lambda * w(p). BOS is never touched, and rows
 * whose strength is exactly zero are copied unchanged.
 */
inline EditResult edit_subject_sequence(const EmbeddingSequence& seq, const SubjectAnchors& anchors,
                                        const EditPlan& plan)
{
  constexpr const char* op = "edit_subject_sequence";
  const Index d = seq.dim();
  for (const auto* a : {&anchors.subject_source, &anchors.subject_target}) {
    detail::require_same_dim(d, a->dim(), op);
  }
  for (const auto* a : {&anchors.eot_source, &anchors.eot_target, &anchors.pad_source, &anchors.pad_target}) {
    if (*a) {
      detail::require_same_dim(d, (*a)->dim(), op);
    }
  }
  EditResult result = detail::start_edit(seq, plan, op);
  std::vector<double> w(static_cast<std::size_t>(seq.length()));
  for (const auto& [p, value] : result.plan_used.per_token_weight) {
    w[static_cast<std::size_t>(p)] = value;
  }

  for (Index p = 0; p < seq.length(); ++p) {
    const auto target = detail::row_target(seq, plan, w, p, true);
    if (!target || target->strength == 0.0) {
      continue;
    }
    const Direction* src = &anchors.subject_source;
    const Direction* dst = &anchors.subject_target;
    if (target->kind == detail::RowTarget::Kind::eot && anchors.eot_source && anchors.eot_target) {
      src = &*anchors.eot_source;
      dst = &*anchors.eot_target;
    } else if (target->kind == detail::RowTarget::Kind::pad && anchors.pad_source && anchors.pad_target) {
      src = &*anchors.pad_source;
      dst = &*anchors.pad_target;
    }
    const Vector before = seq.row(p);
    if (!(before.norm() > kDefaultNormEps)) {
      continue;
    }
    const Vector after = edit_subject_token(before, *src, *dst, target->strength);
    result.edited.set_row(p, after);
    result.per_token_angle_moved[static_cast<std::size_t>(p)] = detail::row_angle(before, after);
  }
  return result;
}

/**
 * Attribute traversal over a whole sequence.
 *
 * d_a is only tangent at its base, so each row receives its own projection
 * of d_a onto the row's tangent space, renormalized, and moves along it by
 * lambda * w(p). Rows where that projection is shorter than 1e-6 are
 * skipped. Positions follow the subject plan except that PAD is never
 * edited.
 */
inline EditResult edit_attribute_sequence(const EmbeddingSequence& seq, const AttributeDirection& dir,
                                          const EditPlan& plan)
{
  constexpr const char* op = "edit_attribute_sequence";
  detail::require_same_dim(seq.dim(), dir.d_a.dim(), op);
  EditResult result = detail::start_edit(seq, plan, op);
  std::vector<double> w(static_cast<std::size_t>(seq.length()));
  for (const auto& [p, value] : result.plan_used.per_token_weight) {
    w[static_cast<std::size_t>(p)] = value;
  }

  for (Index p = 0; p < seq.length(); ++p) {
    const auto target = detail::row_target(seq, plan, w, p, false);
    if (!target || target->strength == 0.0) {
      continue;
    }
    const Vector before = seq.row(p);
    if (!(before.norm() > kDefaultNormEps)) {
      continue;
    }
    const auto [here, norm] = normalize(before);
    const Vector moved_dir = tangent_project(here, dir.d_a.coords());
    const double len = moved_dir.norm();
    if (len < 1e-6) {
      continue;
    }
    const Direction out = exp_map(here, Vector(target->strength * moved_dir / len));
    const Vector after = out.coords() * norm;
    result.edited.set_row(p, after);
    result.per_token_angle_moved[static_cast<std::size_t>(p)] = detail::row_angle(before, after);
  }
  return result;
}

/**
 * First denoising step that sees the edited embeddings:
 * ceil(inject_fraction * total_steps), 0 meaning from the start.
 */
inline int injection_schedule(const EditPlan& plan, int total_steps)
{
  constexpr const char* op = "injection_schedule";
  if (total_steps < 1) {
    throw Error(ErrorCode::PreconditionViolated, op, "total_steps must be >= 1");
  }
  validate(plan, op);
  // 0.1 * 30 evaluates to 3.0000000000000004; shave rounding noise before ceil
  const double raw = plan.inject_fraction * static_cast<double>(total_steps);
  return static_cast<int>(std::ceil(raw - 1e-9));
}

}  // namespace heart
