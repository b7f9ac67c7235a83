#pragma once

// Artifact I/O: atomic file writes with a JSON config sidecar, numeric CSV
// point sets, discrete model JSON, and a dependency-free SVG tradeoff chart.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "prlab/analytics.hpp"
#include "prlab/error.hpp"
#include "prlab/model.hpp"
#include "prlab/transport.hpp"

namespace prlab {

/// Writes `content` to a temporary sibling and renames it over `path`, so a
/// reader never sees a partial file.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + tmp.string() + " for writing");
    os << content;
    os.flush();
    if (!os) throw Error("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& artifact) {
  std::filesystem::path p = artifact;
  p += ".config.json";
  return p;
}

/// The artifact plus `<artifact>.config.json` holding the resolved config.
inline void write_artifact(const std::filesystem::path& path, const std::string& content,
                           const nlohmann::json& config) {
  write_atomic(path, content);
  nlohmann::json side;
  side["artifact"] = path.filename().string();
  side["config"] = config;
  write_atomic(sidecar_path(path), side.dump(2) + "\n");
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InvalidParameter("cannot read " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

inline double parse_number(const std::string& s, const std::string& where) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  while (used < s.size() && (s[used] == ' ' || s[used] == '\t')) ++used;
  if (s.empty() || used != s.size()) throw InvalidParameter("not a number '" + s + "' at " + where);
  return v;
}

}  // namespace detail

/// Numeric CSV with a header row. Every column is a coordinate except an
/// optional one named `weight`; without it the points get equal weights.
/// Weights are normalized to sum to 1.
inline WeightedPointSet read_points_csv(std::istream& is, const std::string& name = "csv") {
  std::string line;
  if (!std::getline(is, line)) throw InvalidParameter(name + ": empty file");
  const auto header = detail::split(line, ',');
  std::ptrdiff_t weight_col = -1;
  for (std::size_t c = 0; c < header.size(); ++c)
    if (header[c] == "weight") weight_col = static_cast<std::ptrdiff_t>(c);
  const std::size_t dim = header.size() - (weight_col >= 0 ? 1 : 0);
  if (dim == 0) throw InvalidParameter(name + ": no coordinate columns");
  std::vector<double> pts;
  std::vector<double> w;
  std::size_t row = 1;
  while (std::getline(is, line)) {
    ++row;
    if (line.empty() || line == "\r") continue;
    const auto cells = detail::split(line, ',');
    if (cells.size() != header.size()) {
      throw InvalidParameter(name + ": row " + std::to_string(row) + " has " + std::to_string(cells.size()) +
                             " fields, expected " + std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      const double v = detail::parse_number(cells[c], name + " row " + std::to_string(row));
      if (static_cast<std::ptrdiff_t>(c) == weight_col) {
        w.push_back(v);
      } else {
        pts.push_back(v);
      }
    }
  }
  if (pts.empty()) throw InvalidParameter(name + ": no data rows");
  if (weight_col < 0) return WeightedPointSet::uniform(dim, std::move(pts));
  double total = 0.0;
  for (double v : w) {
    if (!std::isfinite(v) || v < 0.0) throw InvalidParameter(name + ": weights must be finite and nonnegative");
    total += v;
  }
  if (!(total > 0.0)) throw InvalidParameter(name + ": weights sum to zero");
  for (double& v : w) v /= total;
  return {dim, std::move(pts), std::move(w)};
}

inline WeightedPointSet read_points_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw InvalidParameter("cannot read " + path.string());
  return read_points_csv(is, path.string());
}

/// {"x_vals": [...], "y_vals": [...], "pmf": [[...], ...]} with pmf rows
/// indexed by x.
inline DiscreteJointModel discrete_model_from_json(const nlohmann::json& j) {
  try {
    return DiscreteJointModel(j.at("x_vals").get<std::vector<double>>(), j.at("y_vals").get<std::vector<double>>(),
                              j.at("pmf").get<std::vector<std::vector<double>>>());
  } catch (const nlohmann::json::exception& e) {
    throw InvalidParameter(std::string("model JSON: ") + e.what());
  }
}

inline nlohmann::json to_json(const DiscreteJointModel& m) {
  nlohmann::json pmf = nlohmann::json::array();
  for (std::size_t i = 0; i < m.x_size(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (std::size_t j = 0; j < m.y_size(); ++j) row.push_back(m.mass(i, j));
    pmf.push_back(row);
  }
  return {{"x_vals", m.x_vals()}, {"y_vals", m.y_vals()}, {"pmf", pmf}};
}

// ---------------------------------------------------------------------------
// SVG

struct SvgOptions {
  bool log_log = false;
  bool timestamp = true;  // a comment line; the only non-reproducible byte range
  std::string title = "K-bar vs JEMD";
};

/// Line chart of seed-averaged K-bar against JEMD, one marker per grid value
/// labelled with its control value.
inline std::string tradeoff_svg(const SweepResult& r, const SvgOptions& opt = {}) {
  struct P {
    double x, y, c;
  };
  std::vector<P> pts;
  for (const auto& a : r.aggregated) {
    if (a.status == "failed") continue;
    if (opt.log_log && !(a.point.jemd > 0.0 && a.point.kbar > 0.0)) continue;
    pts.push_back({a.point.jemd, a.point.kbar, a.point.control});
  }
  const double W = 640, H = 440, L = 70, R = 20, T = 40, B = 55;
  auto tx = [&](double v) { return opt.log_log ? std::log10(v) : v; };
  double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
  for (const auto& p : pts) {
    x0 = std::min(x0, tx(p.x));
    x1 = std::max(x1, tx(p.x));
    y0 = std::min(y0, tx(p.y));
    y1 = std::max(y1, tx(p.y));
  }
  if (pts.empty()) x0 = y0 = 0.0, x1 = y1 = 1.0;
  const double px = x1 > x0 ? 0.05 * (x1 - x0) : 0.5;
  const double py = y1 > y0 ? 0.05 * (y1 - y0) : 0.5;
  x0 -= px, x1 += px, y0 -= py, y1 += py;
  auto sx = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
  auto sy = [&](double v) { return H - B - (tx(v) - y0) / (y1 - y0) * (H - T - B); };

  std::ostringstream os;
  char buf[256];
  os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  if (opt.timestamp) {
    std::time_t now = std::time(nullptr);
    char ts[32];
    std::strftime(ts, sizeof ts, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    os << "<!-- generated " << ts << " -->\n";
  }
  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" viewBox=\"0 0 %.0f %.0f\">\n",
                W, H, W, H);
  os << buf;
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" "
                "text-anchor=\"middle\">%s (%s)</text>\n", W / 2, opt.title.c_str(), r.family.c_str());
  os << buf;
  std::snprintf(buf, sizeof buf, "<g stroke=\"black\" fill=\"none\"><line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\"/>"
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\"/></g>\n",
                L, H - B, W - R, H - B, L, H - B, L, T);
  os << buf;
  for (int i = 0; i <= 4; ++i) {
    const double fx = x0 + (x1 - x0) * i / 4.0;
    const double fy = y0 + (y1 - y0) * i / 4.0;
    const double lx = opt.log_log ? std::pow(10.0, fx) : fx;
    const double ly = opt.log_log ? std::pow(10.0, fy) : fy;
    const double gx = L + (W - L - R) * i / 4.0;
    const double gy = H - B - (H - T - B) * i / 4.0;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\" "
                  "text-anchor=\"middle\">%.3g</text>\n", gx, H - B + 16, lx);
    os << buf;
    std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"11\" "
                  "text-anchor=\"end\">%.3g</text>\n", L - 6, gy + 4, ly);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"13\" "
                "text-anchor=\"middle\">JEMD%s</text>\n", (L + W - R) / 2, H - 14, opt.log_log ? " (log)" : "");
  os << buf;
  std::snprintf(buf, sizeof buf, "<text x=\"18\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"13\" "
                "text-anchor=\"middle\" transform=\"rotate(-90 18 %.1f)\">K-bar%s</text>\n",
                (T + H - B) / 2, (T + H - B) / 2, opt.log_log ? " (log)" : "");
  os << buf;
  if (!pts.empty()) {
    os << "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < pts.size(); ++i) {
      std::snprintf(buf, sizeof buf, "%s%.2f,%.2f", i ? " " : "", sx(pts[i].x), sy(pts[i].y));
      os << buf;
    }
    os << "\"/>\n";
  }
  for (const auto& p : pts) {
    std::snprintf(buf, sizeof buf, "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"4\" fill=\"#1f5fa8\"/>"
                  "<text x=\"%.2f\" y=\"%.2f\" font-family=\"sans-serif\" font-size=\"10\">%.4g</text>\n",
                  sx(p.x), sy(p.y), sx(p.x) + 6, sy(p.y) - 6, p.c);
    os << buf;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace prlab
