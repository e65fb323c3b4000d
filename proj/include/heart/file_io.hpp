#pragma once

#include <heart/error.hpp>

#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <system_error>

namespace heart::io
{

inline std::string read_file(const std::filesystem::path& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::SourceFailure, "read_file", "cannot open " + path.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) {
    throw Error(ErrorCode::SourceFailure, "read_file", "read error on " + path.string());
  }
  return std::move(buf).str();
}

/// Writes to "<path>.tmp" and renames over path, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes)
{
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(ErrorCode::SinkFailure, "write_file", "cannot open " + tmp.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      throw Error(ErrorCode::SinkFailure, "write_file", "write error on " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw Error(ErrorCode::SinkFailure, "write_file", "cannot rename onto " + path.string());
  }
}

}  // namespace heart::io
