#pragma once

// Fixtures and brute-force oracles shared by the unit tests and the
// acceptance runner. Nothing here calls into the library's math; the
// oracles are written out longhand so they can disagree with it.

#include <heart/heart.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace heart::testing
{

inline Vector gaussian_vector(Eigen::Index dim, std::mt19937_64& rng)
{
  std::normal_distribution<double> n;
  Vector v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) {
    v(i) = n(rng);
  }
  return v;
}

inline Direction random_direction(Eigen::Index dim, std::mt19937_64& rng)
{
  for (;;) {
    Vector v = gaussian_vector(dim, rng);
    const double n = v.norm();
    if (n > 1e-3) {
      return Direction{v / n};
    }
  }
}

/// A random unit vector orthogonal to u.
inline Direction random_orthogonal(const Direction& u, std::mt19937_64& rng)
{
  for (;;) {
    Vector v = gaussian_vector(u.dim(), rng);
    v -= v.dot(u.coords()) * u.coords();
    const double n = v.norm();
    if (n > 1e-3) {
      return Direction{v / n};
    }
  }
}

/// Angle via acos of the clamped dot product; fine away from 0 and pi.
inline double acos_angle(const Vector& a, const Vector& b)
{
  return std::acos(std::clamp(a.normalized().dot(b.normalized()), -1.0, 1.0));
}

inline double degrees(double rad) { return rad * 180.0 / std::numbers::pi; }

/**
 * A CLIP-like prompt layout: BOS, `words` content tokens, EOT, then PAD up
 * to `length`. Rows are random with norms spread around 28. The subject sits
 * at content position `subject_offset`.
 */
inline EmbeddingSequence fuzz_sequence(std::mt19937_64& rng, Eigen::Index dim, Index words, Index length,
                                       Index subject_offset)
{
  EmbeddingSequence s;
  s.data.resize(length, dim);
  std::uniform_real_distribution<double> norm(20.0, 36.0);
  for (Index p = 0; p < length; ++p) {
    s.set_row(p, random_direction(dim, rng).coords() * norm(rng));
  }
  s.bos_index = 0;
  s.eot_index = words + 1;
  if (words + 2 < length) {
    s.pad_start = words + 2;
  }
  s.subject_index = 1 + subject_offset;
  s.tokens.push_back("<|startoftext|>");
  for (Index i = 0; i < words; ++i) {
    s.tokens.push_back("w" + std::to_string(i));
  }
  s.tokens.push_back("<|endoftext|>");
  while (static_cast<Index>(s.tokens.size()) < length) {
    s.tokens.push_back("<pad>");
  }
  s.model_tag = "fuzz";
  s.prompt = "fuzzed";
  return s;
}

/// Relative row-wise distance max_p |a_p - b_p| / |a_p|.
inline double max_relative_row_change(const EmbeddingSequence& a, const EmbeddingSequence& b)
{
  double worst = 0.0;
  for (Index p = 0; p < a.length(); ++p) {
    const Vector ra = a.row(p);
    worst = std::max(worst, (ra - b.row(p)).norm() / std::max(ra.norm(), 1e-300));
  }
  return worst;
}

inline double max_relative_norm_change(const EmbeddingSequence& a, const EmbeddingSequence& b)
{
  double worst = 0.0;
  for (Index p = 0; p < a.length(); ++p) {
    const double na = a.row(p).norm();
    worst = std::max(worst, std::abs(b.row(p).norm() - na) / na);
  }
  return worst;
}

inline int rows_differing(const EmbeddingSequence& a, const EmbeddingSequence& b)
{
  int n = 0;
  for (Index p = 0; p < a.length(); ++p) {
    n += (a.data.row(p).array() != b.data.row(p).array()).any() ? 1 : 0;
  }
  return n;
}

inline bool same_bits(const RowMatrixF& a, const RowMatrixF& b)
{
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(float)) == 0;
}

inline const char* const kTokenPool[] = {"cat", "ÿ", "ünïcödé", "猫", "🐈", "a,b", "\"q\"", "</w>", "", " ", "tab\t", "Ω≈ç"};

/// Arbitrary finite bit patterns, odd shapes and awkward UTF-8 tokens.
inline EmbeddingSequence fuzz_hemb(std::mt19937_64& rng)
{
  std::uniform_int_distribution<int> len(1, 20);
  std::uniform_int_distribution<int> dim(2, 12);
  std::uniform_int_distribution<int> pick(0, std::size(kTokenPool) - 1);
  std::uniform_int_distribution<std::uint32_t> bits;
  EmbeddingSequence s;
  s.data.resize(len(rng), dim(rng));
  for (Index i = 0; i < s.data.size(); ++i) {
    float f;
    do {
      f = std::bit_cast<float>(bits(rng));
    } while (!std::isfinite(f));
    s.data.data()[i] = f;
  }
  for (Index p = 0; p < s.length(); ++p) {
    s.tokens.push_back(std::string(kTokenPool[pick(rng)]) + kTokenPool[pick(rng)]);
  }
  if (s.length() >= 3) {
    s.bos_index = 0;
    s.eot_index = s.length() - 1;
    s.subject_index = 1;
  }
  s.model_tag = kTokenPool[pick(rng)];
  s.prompt = kTokenPool[pick(rng)];
  s.annotations = {{"layer", -1}, {"note", kTokenPool[pick(rng)]}};
  return s;
}

/// Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.
struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

inline KsResult ks_two_sample(std::vector<double> a, std::vector<double> b)
{
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0;
  std::size_t j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= x) {
      ++i;
    }
    while (j < b.size() && b[j] <= x) {
      ++j;
    }
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double en = std::sqrt(na * nb / (na + nb));
  const double lambda = (en + 0.12 + 0.11 / en) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    p += 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  }
  return {d, std::clamp(p, 0.0, 1.0)};
}

/// Scratch directory removed on scope exit.
class TempDir
{
public:
  explicit TempDir(const std::string& tag)
  {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("heart_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir()
  {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }
  const std::filesystem::path& path() const noexcept { return path_; }

private:
  std::filesystem::path path_;
};

}  // namespace heart::testing
