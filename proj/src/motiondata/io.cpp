#include "mmm/motiondata/io.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "mmm/error.hpp"

namespace mmm::data {

std::string float_str(float v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::string format_motion(const Motion& m, const std::vector<std::string>& comments) {
  m.validate("save_motion");
  std::string out = "mmot 1 frames=" + std::to_string(m.frames) + " dims=" + std::to_string(m.dims) + " fps=" + float_str(m.fps) + "\n";
  for (const auto& c : comments) {
    if (c.find('\n') != std::string::npos) {
      throw Error(ErrorKind::value, "save_motion", "comment lines cannot contain newlines");
    }
    out += "# " + c + "\n";
  }
  for (int t = 0; t < m.frames; ++t) {
    for (int d = 0; d < m.dims; ++d) {
      if (d) {
        out.push_back(' ');
      }
      out += float_str(m.at(t, d));
    }
    out.push_back('\n');
  }
  return out;
}

namespace {

int header_int(const std::string& token, const std::string& key, const std::string& origin) {
  if (token.rfind(key + "=", 0) != 0) {
    throw Error(ErrorKind::format, "load_motion", origin + ": expected '" + key + "=' in header, got '" + token + "'");
  }
  int v = 0;
  const char* b = token.data() + key.size() + 1;
  const char* e = token.data() + token.size();
  const auto res = std::from_chars(b, e, v);
  if (res.ec != std::errc() || res.ptr != e) {
    throw Error(ErrorKind::format, "load_motion", origin + ": bad integer in '" + token + "'");
  }
  return v;
}

}  // namespace

Motion parse_motion(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.empty()) {
    throw Error(ErrorKind::format, "load_motion", origin + ": empty file");
  }
  std::istringstream head(line);
  std::string magic, version, frames_tok, dims_tok, fps_tok, extra;
  head >> magic >> version >> frames_tok >> dims_tok >> fps_tok;
  if (magic != "mmot" || version != "1" || fps_tok.empty() || (head >> extra)) {
    throw Error(ErrorKind::format, "load_motion", origin + ": malformed header '" + line + "'");
  }
  const int frames = header_int(frames_tok, "frames", origin);
  const int dims = header_int(dims_tok, "dims", origin);
  if (fps_tok.rfind("fps=", 0) != 0) {
    throw Error(ErrorKind::format, "load_motion", origin + ": expected 'fps=' in header");
  }
  float fps = 0.0f;
  {
    const char* b = fps_tok.data() + 4;
    const char* e = fps_tok.data() + fps_tok.size();
    const auto res = std::from_chars(b, e, fps);
    if (res.ec != std::errc() || res.ptr != e || !(fps > 0.0f)) {
      throw Error(ErrorKind::format, "load_motion", origin + ": bad fps '" + fps_tok + "'");
    }
  }
  if (frames < 1 || dims < 1) {
    throw Error(ErrorKind::format, "load_motion", origin + ": frames and dims must be positive");
  }
  Motion m(frames, dims, fps);
  int row = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') {
      if (row == 0) {
        continue;  // provenance comments directly after the header
      }
      throw Error(ErrorKind::format, "load_motion", origin + ": comment inside the data block");
    }
    if (line.empty() || line == "\r") {
      continue;
    }
    if (row >= frames) {
      throw Error(ErrorKind::format, "load_motion", origin + ": more rows than frames=" + std::to_string(frames));
    }
    const char* p = line.data();
    const char* end = line.data() + line.size();
    for (int d = 0; d < dims; ++d) {
      while (p < end && *p == ' ') {
        ++p;
      }
      float v = 0.0f;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) {
        throw Error(ErrorKind::format, "load_motion", origin + ": row " + std::to_string(row) + " has " + std::to_string(d) +
                                                          " values, header says dims=" + std::to_string(dims));
      }
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::value, "load_motion", origin + ": non-finite value in row " + std::to_string(row));
      }
      m.at(row, d) = v;
      p = res.ptr;
    }
    while (p < end && (*p == ' ' || *p == '\r')) {
      ++p;
    }
    if (p != end) {
      throw Error(ErrorKind::format, "load_motion", origin + ": row " + std::to_string(row) + " has more than dims=" +
                                                        std::to_string(dims) + " values");
    }
    ++row;
  }
  if (row != frames) {
    throw Error(ErrorKind::format, "load_motion", origin + ": header says frames=" + std::to_string(frames) + ", found " +
                                                      std::to_string(row) + " rows");
  }
  return m;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) {
    throw Error(ErrorKind::io, "read", "cannot open " + path.string());
  }
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) {
    throw Error(ErrorKind::io, "write", "cannot open " + path.string() + " for writing");
  }
  f.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!f) {
    throw Error(ErrorKind::io, "write", "write to " + path.string() + " failed");
  }
}

void save_motion(const std::filesystem::path& path, const Motion& m, const std::vector<std::string>& comments) {
  write_file(path, format_motion(m, comments));
}

Motion load_motion(const std::filesystem::path& path) { return parse_motion(read_file(path), path.string()); }

}  // namespace mmm::data
