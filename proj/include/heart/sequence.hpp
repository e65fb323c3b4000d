#pragma once

#include <heart/error.hpp>
#include <heart/sphere.hpp>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace heart
{

using RowMatrixF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = std::int64_t;

/**
 * Token-level text-encoder states for one prompt: a T x D float matrix plus
 * token strings and the positions of the special tokens.
 *
 * Positions: BOS < EOT < PAD start. The subject index, when set, points at a
 * regular (non-special) token.
 */
struct EmbeddingSequence {
  RowMatrixF data;
  std::vector<std::string> tokens;
  std::optional<Index> bos_index;
  std::optional<Index> eot_index;
  std::optional<Index> pad_start;
  std::optional<Index> subject_index;
  std::string model_tag;
  std::string prompt;
  /// Free-form provenance (layer, scale, subword split, ...). Must be a JSON object.
  nlohmann::json annotations = nlohmann::json::object();

  Index length() const noexcept { return data.rows(); }
  Index dim() const noexcept { return data.cols(); }

  /// Row p widened to double precision.
  Vector row(Index p) const { return data.row(p).transpose().cast<double>(); }

  void set_row(Index p, const Vector& v) { data.row(p) = v.transpose().cast<float>(); }

  bool is_special(Index p) const noexcept
  {
    return (bos_index && p == *bos_index) || (eot_index && p == *eot_index) || (pad_start && p >= *pad_start);
  }

  friend bool operator==(const EmbeddingSequence& a, const EmbeddingSequence& b)
  {
    return a.data.rows() == b.data.rows() && a.data.cols() == b.data.cols() && a.data == b.data &&
           a.tokens == b.tokens && a.bos_index == b.bos_index && a.eot_index == b.eot_index &&
           a.pad_start == b.pad_start && a.subject_index == b.subject_index && a.model_tag == b.model_tag &&
           a.prompt == b.prompt && a.annotations == b.annotations;
  }
};

/// Checks every EmbeddingSequence invariant; throws with the violated one.
inline void validate(const EmbeddingSequence& seq, const char* op = "validate")
{
  const Index t = seq.length();
  const Index d = seq.dim();
  if (t < 1 || d < 2) {
    throw Error(ErrorCode::DimensionMismatch, op, "T=" + std::to_string(t) + " D=" + std::to_string(d));
  }
  if (static_cast<Index>(seq.tokens.size()) != t) {
    throw Error(ErrorCode::DimensionMismatch, op,
                "tokens=" + std::to_string(seq.tokens.size()) + " but T=" + std::to_string(t));
  }
  if (!seq.data.allFinite()) {
    throw Error(ErrorCode::NonFiniteData, op, "non-finite entry in data");
  }
  if (!seq.annotations.is_object()) {
    throw Error(ErrorCode::SchemaViolation, op, "annotations must be an object");
  }
  auto in_range = [t](const std::optional<Index>& i) { return !i || (*i >= 0 && *i < t); };
  if (!in_range(seq.bos_index) || !in_range(seq.eot_index) || !in_range(seq.pad_start) ||
      !in_range(seq.subject_index)) {
    throw Error(ErrorCode::InvalidIndices, op, "special-token index out of [0, T)");
  }
  if (seq.bos_index && seq.eot_index && !(*seq.bos_index < *seq.eot_index)) {
    throw Error(ErrorCode::InvalidIndices, op, "eot_index must follow bos_index");
  }
  if (seq.pad_start) {
    if (seq.eot_index && !(*seq.pad_start > *seq.eot_index)) {
      throw Error(ErrorCode::InvalidIndices, op, "pad_start must follow eot_index");
    }
    if (seq.bos_index && !(*seq.pad_start > *seq.bos_index)) {
      throw Error(ErrorCode::InvalidIndices, op, "pad_start must follow bos_index");
    }
  }
  if (seq.subject_index && seq.is_special(*seq.subject_index)) {
    throw Error(ErrorCode::InvalidIndices, op, "subject_index points at a special token");
  }
}

}  // namespace heart
