#pragma once

// CSV and JSON writers for trajectories, manifolds, target level sets and
// region maps, plus the readers needed for round trips and sweep resumption.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "canard/control.hpp"
#include "canard/error.hpp"
#include "canard/integrator.hpp"
#include "canard/manifold.hpp"
#include "canard/sweep.hpp"

namespace canard {

/// Round-trip exact decimal form (17 significant digits).
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError("cannot parse " + what + " from '" + s + "'");
  }
}

inline std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  return os;
}

inline void close_checked(std::ofstream& os, const std::filesystem::path& path) {
  os.close();
  if (!os) throw IoError("write to '" + path.string() + "' failed");
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

// ---------------------------------------------------------------------------
// Trajectories

inline void write_trajectory_csv(const std::filesystem::path& path, const Trajectory& tr) {
  std::ofstream os = open_out(path);
  os << "t,x,y,u,v,H\n";
  const auto opt = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  for (std::size_t i = 0; i < tr.size(); ++i) {
    os << fmt(tr.times[i]) << ',' << fmt(tr.states[i].x) << ',' << fmt(tr.states[i].y);
    if (i < tr.extras.size())
      os << ',' << opt(tr.extras[i].u) << ',' << opt(tr.extras[i].v) << ',' << opt(tr.extras[i].H);
    else
      os << ",,,";
    os << '\n';
  }
  close_checked(os, path);
}

inline Trajectory read_trajectory_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(is, line) || line != "t,x,y,u,v,H")
    throw IoError("'" + path.string() + "' is not a trajectory CSV");
  Trajectory tr;
  const auto opt = [](const std::string& s) -> std::optional<double> {
    if (s.empty()) return std::nullopt;
    return parse_double(s, "trajectory column");
  };
  while (std::getline(is, line)) {
    const auto f = split(line, ',');
    if (f.size() != 6) throw IoError("bad trajectory row '" + line + "'");
    tr.times.push_back(parse_double(f[0], "t"));
    tr.states.push_back({parse_double(f[1], "x"), parse_double(f[2], "y")});
    tr.extras.push_back({opt(f[3]), opt(f[4]), opt(f[5])});
  }
  return tr;
}

inline nlohmann::json to_json(const Event& e) {
  return {{"t", e.t}, {"kind", e.kind}, {"detail", e.detail}};
}

/// Final state, y range and event log of a run.
inline nlohmann::json trajectory_summary(const Trajectory& tr) {
  nlohmann::json j;
  j["status"] = to_string(tr.status);
  if (!tr.message.empty()) j["message"] = tr.message;
  j["samples"] = tr.size();
  if (tr.size() > 0) {
    double lo = tr.states.front().y, hi = lo;
    for (const State& s : tr.states) {
      lo = std::min(lo, s.y);
      hi = std::max(hi, s.y);
    }
    j["final"] = {{"t", tr.times.back()}, {"x", tr.states.back().x}, {"y", tr.states.back().y}};
    j["y_min"] = lo;
    j["y_max"] = hi;
  }
  j["events"] = nlohmann::json::array();
  for (const Event& e : tr.events) j["events"].push_back(to_json(e));
  return j;
}

// ---------------------------------------------------------------------------
// Manifold and target level set

/// Columns y,x,dfdx,stability, ordered along the manifold.
inline void write_manifold_csv(const std::filesystem::path& path,
                               const std::vector<TracePoint>& trace) {
  std::ofstream os = open_out(path);
  os << "y,x,dfdx,stability\n";
  for (const TracePoint& p : trace)
    os << fmt(p.y) << ',' << fmt(p.x) << ',' << fmt(p.dfdx) << ','
       << to_string(p.dfdx < 0.0 ? Stability::attracting : Stability::repelling) << '\n';
  close_checked(os, path);
}

/// Points of {H = h} around one target, from the closed form
///   a dx^{2k} = 2 eps sigma h e^{-2 dy/(sigma eps)} - b dy + sigma b eps / 2,
/// as a polyline: right branch upwards in y, then left branch back down.
/// The x offset is 1/r when the target is used by the shifted fast-only law.
struct LevelPoint {
  double x = 0.0;
  double y = 0.0;
};

inline std::vector<LevelPoint> target_level_curve(const ControlTarget& tg, double x_centre,
                                                  std::size_t samples = 4001) {
  const NormalFormParams& nf = tg.nf;
  // The orbit reaches |dy| ~ c/2 with c = -eps log|h|; scan a margin beyond.
  const double reach = std::isfinite(tg.h.log_abs) ? -nf.epsilon * tg.h.log_abs : 1.0;
  const double span = 1.5 * std::max(reach, 10.0 * nf.epsilon);
  std::vector<LevelPoint> right, left;
  for (std::size_t i = 0; i < samples; ++i) {
    const double dy = -span + 2.0 * span * static_cast<double>(i) / static_cast<double>(samples - 1);
    double rhs = -nf.b_c * dy + nf.sigma * nf.b_c * nf.epsilon / 2.0;
    if (tg.h.sign != 0) {
      const double ex = tg.h.log_abs - 2.0 * dy / (nf.sigma * nf.epsilon);
      if (ex > kExpLimit) continue;
      rhs += 2.0 * nf.epsilon * nf.sigma * tg.h.sign * std::exp(ex);
    }
    const double q = rhs / nf.a_c;
    if (!(q >= 0.0) || !std::isfinite(q)) continue;
    const double dx = std::pow(q, 1.0 / (2.0 * nf.k));
    right.push_back({x_centre + dx, tg.fold.y + dy});
    left.push_back({x_centre - dx, tg.fold.y + dy});
  }
  right.insert(right.end(), left.rbegin(), left.rend());
  return right;
}

/// Columns target,x,y; one closed polyline per target.
inline void write_target_level_csv(const std::filesystem::path& path,
                                   const std::vector<std::vector<LevelPoint>>& curves) {
  std::ofstream os = open_out(path);
  os << "target,x,y\n";
  for (std::size_t t = 0; t < curves.size(); ++t)
    for (const LevelPoint& p : curves[t]) os << t << ',' << fmt(p.x) << ',' << fmt(p.y) << '\n';
  close_checked(os, path);
}

// ---------------------------------------------------------------------------
// Region maps

inline std::string fold_data(const CellResult& c) {
  std::string s;
  for (std::size_t i = 0; i < c.folds.size(); ++i) {
    if (i) s += ';';
    s += fmt(c.folds[i].first) + ':' + fmt(c.folds[i].second);
  }
  return s;
}

inline constexpr const char* kRegionHeader = "ix,iy,px,py,class,n_folds,fold_data";

inline std::string region_row(const CellResult& c) {
  return std::to_string(c.ix) + ',' + std::to_string(c.iy) + ',' + fmt(c.px) + ',' + fmt(c.py) +
         ',' + to_string(c.cls) + ',' + std::to_string(c.n_folds) + ',' + fold_data(c);
}

inline CellResult parse_region_row(const std::string& line) {
  const auto f = split(line, ',');
  if (f.size() != 7) throw IoError("bad region row '" + line + "'");
  CellResult c;
  try {
    c.ix = std::stoul(f[0]);
    c.iy = std::stoul(f[1]);
    c.n_folds = std::stoul(f[5]);
  } catch (const std::exception&) {
    throw IoError("bad index in region row '" + line + "'");
  }
  c.px = parse_double(f[2], "px");
  c.py = parse_double(f[3], "py");
  c.cls = cell_class_from_string(f[4]);
  if (!f[6].empty())
    for (const std::string& pair : split(f[6], ';')) {
      const auto xy = split(pair, ':');
      if (xy.size() != 2) throw IoError("bad fold_data '" + f[6] + "'");
      c.folds.emplace_back(parse_double(xy[0], "fold x"), parse_double(xy[1], "fold y"));
    }
  return c;
}

inline void write_region_csv(const std::filesystem::path& path, const RegionMap& map) {
  std::ofstream os = open_out(path);
  os << kRegionHeader << '\n';
  for (const CellResult& c : map.cells) os << region_row(c) << '\n';
  close_checked(os, path);
}

/// Rows of a region CSV in file order.
inline std::vector<CellResult> read_region_rows(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  std::string line;
  if (!std::getline(is, line) || line != kRegionHeader)
    throw IoError("'" + path.string() + "' is not a region CSV");
  std::vector<CellResult> out;
  while (std::getline(is, line))
    if (!line.empty()) out.push_back(parse_region_row(line));
  return out;
}

inline RegionMap read_region_csv(const std::filesystem::path& path, const Axis& x, const Axis& y) {
  RegionMap map;
  map.x = x;
  map.y = y;
  map.cells.resize(x.n * y.n);
  std::vector<char> seen(map.cells.size(), 0);
  for (CellResult& c : read_region_rows(path)) {
    if (c.ix >= x.n || c.iy >= y.n) throw IoError("region cell index out of range");
    const std::size_t idx = c.iy * x.n + c.ix;
    seen[idx] = 1;
    map.cells[idx] = std::move(c);
  }
  for (char s : seen)
    if (!s) throw IoError("'" + path.string() + "' does not cover the whole grid");
  return map;
}

inline nlohmann::json to_json(const Axis& a) {
  return {{"param", a.param}, {"lo", a.lo}, {"hi", a.hi}, {"n", a.n}};
}

/// Class histogram, boundary cells and error messages.
inline nlohmann::json region_summary(const RegionMap& map) {
  nlohmann::json j;
  j["schema_version"] = 1;
  j["x"] = to_json(map.x);
  j["y"] = to_json(map.y);
  nlohmann::json hist = nlohmann::json::object();
  for (CellClass c : {CellClass::folds0, CellClass::folds2, CellClass::folds4,
                      CellClass::invalid_negative_y, CellClass::error})
    if (const std::size_t n = map.count(c); n > 0) hist[to_string(c)] = n;
  j["histogram"] = hist;
  j["boundary_cells"] = nlohmann::json::array();
  for (const auto& [ix, iy] : map.boundary_cells()) j["boundary_cells"].push_back({ix, iy});
  j["errors"] = nlohmann::json::array();
  for (const CellResult& c : map.cells)
    if (c.cls == CellClass::error)
      j["errors"].push_back({{"ix", c.ix}, {"iy", c.iy}, {"message", c.message}});
  return j;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream os = open_out(path);
  os << j.dump(2) << '\n';
  close_checked(os, path);
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

}  // namespace canard
