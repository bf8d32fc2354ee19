#include "hywu/report.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace hywu {

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string format_double(double v) {
  if (v == std::floor(v) && std::fabs(v) < 1e15) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.0f", v);
    return buf;
  }
  // Try increasing precision until the text round-trips exactly.
  for (int prec = 1; prec <= 17; ++prec) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v || v != v) return buf;
  }
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ReportError("cannot open '" + path + "' for writing");
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  out.flush();
  if (!out) throw ReportError("write to '" + path + "' failed");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ReportError("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string csv_table(const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
  std::string out;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) out += ',';
    out += header[c];
  }
  out += '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != header.size())
      throw ReportError("csv row " + std::to_string(r) + " has " +
                        std::to_string(rows[r].size()) + " cells, header has " +
                        std::to_string(header.size()));
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      if (c) out += ',';
      out += format_double(rows[r][c]);
    }
    out += '\n';
  }
  return out;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  write_text_file(path, csv_table(header, rows));
}

void write_json(const std::string& path, const nlohmann::json& value) {
  write_text_file(path, value.dump(2) + "\n");
}

void write_manifest(const std::string& dir, const RunManifest& manifest) {
  nlohmann::json j;
  j["command"] = manifest.command;
  j["seed"] = manifest.seed;
  j["config_fnv1a"] = hex64(fnv1a64(manifest.config_text));
  const std::time_t now = std::time(nullptr);
  std::tm utc{};
  gmtime_r(&now, &utc);
  char stamp[32];
  std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", &utc);
  j["created"] = stamp;
  j["outputs"] = nlohmann::json::object();
  for (const auto& path : manifest.output_files) {
    const std::string bytes = read_text_file(path);
    const auto slash = path.find_last_of('/');
    const std::string name = slash == std::string::npos ? path : path.substr(slash + 1);
    j["outputs"][name] = {{"bytes", bytes.size()}, {"fnv1a", hex64(fnv1a64(bytes))}};
  }
  write_json(dir + "/manifest.json", j);
}

std::string svg_line_plot(const std::vector<std::vector<double>>& series,
                          const std::vector<std::string>& labels, const std::string& title) {
  if (series.size() != labels.size())
    throw ReportError("svg plot: " + std::to_string(series.size()) + " series but " +
                      std::to_string(labels.size()) + " labels");
  const double width = 640, height = 400, ml = 60, mr = 150, mt = 40, mb = 40;
  const double px = width - ml - mr, py = height - mt - mb;
  const double floor_val = 1e-12;
  std::size_t max_len = 1;
  double lo = 0.0, hi = 0.0;
  bool any = false;
  for (const auto& s : series) {
    max_len = std::max(max_len, s.size());
    for (double v : s) {
      const double lv = std::log10(std::max(v, floor_val));
      lo = any ? std::min(lo, lv) : lv;
      hi = any ? std::max(hi, lv) : lv;
      any = true;
    }
  }
  if (!any) lo = -1, hi = 1;
  if (hi - lo < 1e-9) hi = lo + 1.0;

  static const std::array<const char*, 6> palette = {"#1f77b4", "#d62728", "#2ca02c",
                                                     "#9467bd", "#ff7f0e", "#17becf"};
  std::string out;
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"400\" "
         "viewBox=\"0 0 640 400\">\n";
  out += "<rect width=\"640\" height=\"400\" fill=\"white\"/>\n";
  out += "<text x=\"320\" y=\"24\" text-anchor=\"middle\" font-family=\"monospace\" "
         "font-size=\"14\">" + title + "</text>\n";
  char buf[160];
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", ml,
                mt + py, ml + px, mt + py);
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", ml,
                mt, ml, mt + py);
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" font-family=\"monospace\" font-size=\"11\" "
                "text-anchor=\"end\">1e%d</text>\n",
                ml - 6, mt + 10, static_cast<int>(std::ceil(hi)));
  out += buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" font-family=\"monospace\" font-size=\"11\" "
                "text-anchor=\"end\">1e%d</text>\n",
                ml - 6, mt + py, static_cast<int>(std::floor(lo)));
  out += buf;
  for (std::size_t s = 0; s < series.size(); ++s) {
    if (series[s].empty()) continue;
    out += "<polyline fill=\"none\" stroke=\"";
    out += palette[s % palette.size()];
    out += "\" stroke-width=\"1.5\" points=\"";
    const std::size_t n = series[s].size();
    for (std::size_t i = 0; i < n; ++i) {
      const double fx = n > 1 ? static_cast<double>(i) / static_cast<double>(max_len - 1) : 0.0;
      const double lv = std::log10(std::max(series[s][i], floor_val));
      const double fy = (lv - lo) / (hi - lo);
      std::snprintf(buf, sizeof buf, "%.1f,%.1f ", ml + fx * px, mt + (1.0 - fy) * py);
      out += buf;
    }
    out += "\"/>\n";
    std::snprintf(buf, sizeof buf,
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"monospace\" font-size=\"11\" "
                  "fill=\"%s\">",
                  ml + px + 10, mt + 14 + 16.0 * static_cast<double>(s),
                  palette[s % palette.size()]);
    out += buf;
    out += labels[s] + "</text>\n";
  }
  out += "</svg>\n";
  return out;
}

}  // namespace hywu
