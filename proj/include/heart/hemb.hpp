#pragma once

// HEMB1 container: one embedding sequence per file.
//
//   bytes 0..4   magic "HEMB1"
//   bytes 5..8   u32 little-endian metadata length L
//   next L       UTF-8 JSON metadata (sorted keys, compact)
//   rest         T*D float32 little-endian, row-major
//
// A batch is a directory of such files plus a manifest: one relative path
// per line.

#include <heart/error.hpp>
#include <heart/file_io.hpp>
#include <heart/sequence.hpp>

#include <nlohmann/json.hpp>

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace heart
{

inline constexpr std::array<char, 5> kHembMagic{'H', 'E', 'M', 'B', '1'};
/// Refuse headers that would allocate more than 16 GiB of payload.
inline constexpr std::uint64_t kMaxPayloadBytes = std::uint64_t{1} << 34;

namespace detail
{

inline void put_u32_le(std::string& out, std::uint32_t v)
{
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  }
}

inline std::uint32_t get_u32_le(const unsigned char* p)
{
  return std::uint32_t{p[0]} | (std::uint32_t{p[1]} << 8) | (std::uint32_t{p[2]} << 16) | (std::uint32_t{p[3]} << 24);
}

inline nlohmann::json optional_index(const std::optional<Index>& i)
{
  return i ? nlohmann::json(*i) : nlohmann::json(nullptr);
}

inline std::optional<Index> read_optional_index(const nlohmann::json& meta, const char* key)
{
  if (!meta.contains(key) || meta.at(key).is_null()) {
    return std::nullopt;
  }
  const auto& v = meta.at(key);
  if (!v.is_number_integer()) {
    throw Error(ErrorCode::SchemaViolation, "read_sequence", std::string(key) + " must be an integer");
  }
  return v.get<Index>();
}

inline std::string read_exact(std::istream& in, std::size_t n)
{
  std::string buf(n, '\0');
  in.read(buf.data(), static_cast<std::streamsize>(n));
  buf.resize(static_cast<std::size_t>(in.gcount()));
  return buf;
}

}  // namespace detail

inline nlohmann::json sequence_metadata(const EmbeddingSequence& seq)
{
  nlohmann::json meta;
  meta["T"] = seq.length();
  meta["D"] = seq.dim();
  meta["tokens"] = seq.tokens;
  meta["bos_index"] = detail::optional_index(seq.bos_index);
  meta["eot_index"] = detail::optional_index(seq.eot_index);
  meta["pad_start"] = detail::optional_index(seq.pad_start);
  meta["subject_index"] = detail::optional_index(seq.subject_index);
  meta["model_tag"] = seq.model_tag;
  meta["prompt"] = seq.prompt;
  meta["annotations"] = seq.annotations;
  return meta;
}

/// Serializes seq to HEMB1 bytes. Deterministic for equal inputs.
inline std::string encode_sequence(const EmbeddingSequence& seq)
{
  validate(seq, "write_sequence");
  std::string meta;
  try {
    meta = sequence_metadata(seq).dump();
  } catch (const nlohmann::json::exception& e) {
    // token or prompt text that is not valid UTF-8
    throw Error(ErrorCode::SchemaViolation, "write_sequence", std::string("metadata: ") + e.what());
  }
  const std::size_t payload = static_cast<std::size_t>(seq.length() * seq.dim()) * 4;
  std::string out;
  out.reserve(kHembMagic.size() + 4 + meta.size() + payload);
  out.append(kHembMagic.data(), kHembMagic.size());
  detail::put_u32_le(out, static_cast<std::uint32_t>(meta.size()));
  out += meta;
  const float* src = seq.data.data();
  for (std::size_t i = 0, n = payload / 4; i < n; ++i) {
    detail::put_u32_le(out, std::bit_cast<std::uint32_t>(src[i]));
  }
  return out;
}

/// Writes seq to sink and returns the number of bytes emitted.
inline std::size_t write_sequence(const EmbeddingSequence& seq, std::ostream& sink)
{
  const std::string bytes = encode_sequence(seq);
  sink.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!sink) {
    throw Error(ErrorCode::SinkFailure, "write_sequence", "stream rejected write");
  }
  return bytes.size();
}

/// Parses and validates one HEMB1 sequence; the stream must end after the payload.
inline EmbeddingSequence read_sequence(std::istream& source)
{
  constexpr const char* op = "read_sequence";
  const std::string magic = detail::read_exact(source, kHembMagic.size());
  if (magic.size() != kHembMagic.size() || std::memcmp(magic.data(), kHembMagic.data(), kHembMagic.size()) != 0) {
    throw Error(ErrorCode::BadMagic, op, "expected HEMB1");
  }
  const std::string len_bytes = detail::read_exact(source, 4);
  if (len_bytes.size() != 4) {
    throw Error(ErrorCode::TruncatedPayload, op, "missing metadata length");
  }
  const std::uint32_t meta_len = detail::get_u32_le(reinterpret_cast<const unsigned char*>(len_bytes.data()));
  const std::string meta_text = detail::read_exact(source, meta_len);
  if (meta_text.size() != meta_len) {
    throw Error(ErrorCode::TruncatedPayload, op,
                "metadata has " + std::to_string(meta_text.size()) + " of " + std::to_string(meta_len) + " bytes");
  }

  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(meta_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, op, std::string("metadata: ") + e.what());
  }

  EmbeddingSequence seq;
  std::int64_t t = 0;
  std::int64_t d = 0;
  try {
    if (!meta.is_object() || !meta.at("T").is_number_integer() || !meta.at("D").is_number_integer()) {
      throw Error(ErrorCode::SchemaViolation, op, "T and D must be integers");
    }
    t = meta.at("T").get<std::int64_t>();
    d = meta.at("D").get<std::int64_t>();
    seq.tokens = meta.at("tokens").get<std::vector<std::string>>();
    seq.model_tag = meta.at("model_tag").get<std::string>();
    seq.prompt = meta.at("prompt").get<std::string>();
    if (meta.contains("annotations")) {
      seq.annotations = meta.at("annotations");
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, op, std::string("metadata: ") + e.what());
  }
  seq.bos_index = detail::read_optional_index(meta, "bos_index");
  seq.eot_index = detail::read_optional_index(meta, "eot_index");
  seq.pad_start = detail::read_optional_index(meta, "pad_start");
  seq.subject_index = detail::read_optional_index(meta, "subject_index");

  if (t < 1 || d < 2 || static_cast<std::uint64_t>(t) * static_cast<std::uint64_t>(d) * 4 > kMaxPayloadBytes) {
    throw Error(ErrorCode::DimensionMismatch, op, "declared T=" + std::to_string(t) + " D=" + std::to_string(d));
  }
  const std::size_t payload = static_cast<std::size_t>(t * d) * 4;
  const std::string bytes = detail::read_exact(source, payload);
  if (bytes.size() != payload) {
    throw Error(ErrorCode::TruncatedPayload, op,
                "payload has " + std::to_string(bytes.size()) + " of " + std::to_string(payload) + " bytes");
  }
  if (source.peek() != std::char_traits<char>::eof()) {
    throw Error(ErrorCode::DimensionMismatch, op, "payload longer than declared T*D");
  }

  seq.data.resize(t, d);
  float* dst = seq.data.data();
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0, n = payload / 4; i < n; ++i) {
    dst[i] = std::bit_cast<float>(detail::get_u32_le(p + 4 * i));
  }
  validate(seq, op);
  return seq;
}

inline EmbeddingSequence decode_sequence(const std::string& bytes)
{
  std::istringstream in(bytes, std::ios::binary);
  return read_sequence(in);
}

inline void write_sequence_file(const EmbeddingSequence& seq, const std::filesystem::path& path)
{
  io::write_file_atomic(path, encode_sequence(seq));
}

inline EmbeddingSequence read_sequence_file(const std::filesystem::path& path)
{
  return decode_sequence(io::read_file(path));
}

/// Relative paths listed in a manifest, one per line; blank lines are skipped.
inline std::vector<std::filesystem::path> read_manifest(const std::filesystem::path& manifest)
{
  std::istringstream in(io::read_file(manifest));
  std::vector<std::filesystem::path> out;
  const auto base = manifest.parent_path();
  for (std::string line; std::getline(in, line);) {
    if (!line.empty() && line.back() == '\r') {
      line.pop_back();
    }
    if (line.empty()) {
      continue;
    }
    out.push_back(base / std::filesystem::u8path(line));
  }
  return out;
}

inline void write_manifest(const std::filesystem::path& manifest, const std::vector<std::string>& relative_paths)
{
  std::string text;
  for (const auto& p : relative_paths) {
    text += p;
    text += '\n';
  }
  io::write_file_atomic(manifest, text);
}

inline std::vector<EmbeddingSequence> read_manifest_sequences(const std::filesystem::path& manifest)
{
  std::vector<EmbeddingSequence> out;
  for (const auto& p : read_manifest(manifest)) {
    out.push_back(read_sequence_file(p));
  }
  return out;
}

}  // namespace heart
