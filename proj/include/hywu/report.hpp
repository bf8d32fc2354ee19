#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

// Run artifacts: deterministic CSV/JSON writers, FNV-1a digests, the run
// manifest, and simple SVG line plots. Every writer emits '\n' newlines and
// '.' decimal points regardless of locale; the manifest is the only artifact
// that contains a timestamp.
namespace hywu {

struct ReportError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Shortest text that round-trips the exact double ("%.17g" fallback).
std::string format_double(double v);

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

// Header row then one row per entry; all cells formatted with
// format_double. Row widths must match the header.
std::string csv_table(const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows);
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);

// Sorted-key JSON with 2-space indentation and a trailing newline.
void write_json(const std::string& path, const nlohmann::json& value);

struct RunManifest {
  std::string command;                 // subcommand that produced the run
  std::string config_text;             // resolved config, hashed into the manifest
  std::uint64_t seed = 0;
  std::vector<std::string> output_files;  // digested by path
};

// Writes <dir>/manifest.json: command, seed, config FNV-1a hash, an ISO-8601
// UTC creation time, and size + digest for each listed output file.
void write_manifest(const std::string& dir, const RunManifest& manifest);

// Log-scale line plot of one curve per series; series shorter than the
// longest are drawn to their own length. Returns the SVG document.
std::string svg_line_plot(const std::vector<std::vector<double>>& series,
                          const std::vector<std::string>& labels, const std::string& title);

}  // namespace hywu
