#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mmm/motiondata/motion.hpp"

namespace mmm::data {

/// `.mmot` text format:
///   mmot 1 frames=<N> dims=<D> fps=<F>
///   # optional comment lines (provenance), ignored by the reader
///   N lines of D space-separated floats, shortest round-trip form
std::string format_motion(const Motion& m, const std::vector<std::string>& comments = {});
Motion parse_motion(const std::string& text, const std::string& origin = "<memory>");

void save_motion(const std::filesystem::path& path, const Motion& m, const std::vector<std::string>& comments = {});
Motion load_motion(const std::filesystem::path& path);

/// Shortest decimal form that parses back to the same float.
std::string float_str(float v);

/// Whole-file helpers shared by the manifest and CLI writers.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

}  // namespace mmm::data
