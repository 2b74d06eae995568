#pragma once

// Two-parameter sweeps of the reduced model classifying each grid cell by
// its number of folds.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "canard/dynamics.hpp"
#include "canard/error.hpp"
#include "canard/manifold.hpp"

namespace canard {

enum class CellClass { folds0, folds2, folds4, invalid_negative_y, error };

inline const char* to_string(CellClass c) {
  switch (c) {
    case CellClass::folds0: return "0";
    case CellClass::folds2: return "2";
    case CellClass::folds4: return "4";
    case CellClass::invalid_negative_y: return "invalid";
    case CellClass::error: return "error";
  }
  return "error";
}

inline CellClass cell_class_from_string(const std::string& s) {
  if (s == "0") return CellClass::folds0;
  if (s == "2") return CellClass::folds2;
  if (s == "4") return CellClass::folds4;
  if (s == "invalid") return CellClass::invalid_negative_y;
  if (s == "error") return CellClass::error;
  throw IoError("unknown cell class '" + s + "'");
}

struct CellResult {
  std::size_t ix = 0;
  std::size_t iy = 0;
  double px = 0.0;
  double py = 0.0;
  CellClass cls = CellClass::error;
  std::size_t n_folds = 0;
  std::vector<std::pair<double, double>> folds;  // (x*, y*)
  std::string message;                            // error detail, not exported

  friend bool operator==(const CellResult& a, const CellResult& b) {
    return a.ix == b.ix && a.iy == b.iy && a.px == b.px && a.py == b.py && a.cls == b.cls &&
           a.n_folds == b.n_folds && a.folds == b.folds;
  }
};

struct Axis {
  std::string param;
  double lo = 0.0;
  double hi = 1.0;
  std::size_t n = 60;

  double at(std::size_t i) const {
    if (n == 1) return lo;
    return i + 1 == n ? hi : lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
  }
};

struct SweepSpec {
  Axis x{"alpha", 0.0, 3.0, 60};
  Axis y{"gamma", 0.0, 6.0, 60};
  DecisionParamsReduced base;
  double y_scan_lo = 0.0;
  double y_scan_hi = 60.0;
  double y_floor = -1e6;  // folds in [y_floor, y_scan_lo) make a cell invalid
  std::size_t x_cells = 2000;

  void validate() const;
};

inline double& param_ref(DecisionParamsReduced& p, const std::string& name) {
  if (name == "alpha") return p.alpha;
  if (name == "beta") return p.beta;
  if (name == "gamma") return p.gamma;
  if (name == "b") return p.b;
  if (name == "c") return p.c;
  if (name == "d") return p.d;
  if (name == "r") return p.r;
  if (name == "epsilon") return p.epsilon;
  throw ConfigError("sweep.param", "unknown parameter '" + name + "'");
}

inline void SweepSpec::validate() const {
  for (const Axis* a : {&x, &y}) {
    DecisionParamsReduced probe;
    (void)param_ref(probe, a->param);
    if (a->n < 1) throw ConfigError("sweep." + a->param, "resolution must be >= 1");
    if (!std::isfinite(a->lo) || !std::isfinite(a->hi))
      throw ConfigError("sweep." + a->param, "range must be finite");
    if (a->n > 1 && !(a->hi > a->lo))
      throw ConfigError("sweep." + a->param, "range must be non-degenerate for n > 1");
  }
  if (x.param == y.param) throw ConfigError("sweep", "the two swept parameters must differ");
  if (!(y_scan_hi > y_scan_lo)) throw ConfigError("sweep.y_scan", "range must be non-degenerate");
  if (!(y_floor <= y_scan_lo)) throw ConfigError("sweep.y_floor", "must not exceed y_scan_lo");
  if (x_cells < 2) throw ConfigError("sweep.x_cells", "must be >= 2");
  canard::validate(base, false);
}

inline DecisionParamsReduced cell_params(const SweepSpec& spec, std::size_t ix, std::size_t iy) {
  DecisionParamsReduced p = spec.base;
  param_ref(p, spec.x.param) = spec.x.at(ix);
  param_ref(p, spec.y.param) = spec.y.at(iy);
  return p;
}

/// Classifies one parameter set. The cell is invalid when part of the
/// S-shaped manifold lies at y < y_scan_lo: some fold sits below it, or the
/// branch that should rise towards x_R ends below it (the cost pole at x = d
/// has swallowed the lower fold).
inline CellResult classify_cell(const DecisionParamsReduced& p, const SweepSpec& spec) {
  CellResult cell;
  try {
    validate(p, false);
    const DecisionField field(p);
    const ScanDomain dom = scan_domain(p, spec.x_cells);
    FoldSearch opt;
    opt.y_lo = spec.y_floor;
    opt.y_hi = spec.y_scan_hi;
    FoldReport rep = find_folds(field, dom, opt);
    // F is nondecreasing in y, so F > 0 here puts the right end below y_scan_lo.
    const bool right_end_low = field.value(dom.hi, spec.y_scan_lo) > 0.0;
    const bool invalid = right_end_low ||
                         std::any_of(rep.folds.begin(), rep.folds.end(),
                                     [&](const FoldPoint& f) { return f.y_star < spec.y_scan_lo; });
    if (invalid) {
      cell.cls = CellClass::invalid_negative_y;
      return cell;
    }
    cell.n_folds = rep.folds.size();
    for (const auto& f : rep.folds) cell.folds.emplace_back(f.x_star, f.y_star);
    switch (cell.n_folds) {
      case 0: cell.cls = CellClass::folds0; break;
      case 2: cell.cls = CellClass::folds2; break;
      case 4: cell.cls = CellClass::folds4; break;
      default:
        cell.cls = CellClass::error;
        cell.message = "fold count " + std::to_string(cell.n_folds) + " not in {0, 2, 4}";
    }
    if (!rep.converged && cell.cls != CellClass::error) {
      cell.cls = CellClass::error;
      cell.message = "fold refinement did not converge";
    }
  } catch (const std::exception& e) {
    cell.cls = CellClass::error;
    cell.message = e.what();
  }
  return cell;
}

struct RegionMap {
  Axis x;
  Axis y;
  std::vector<CellResult> cells;  // row-major: index = iy * x.n + ix

  const CellResult& at(std::size_t ix, std::size_t iy) const { return cells[iy * x.n + ix]; }

  std::size_t count(CellClass c) const {
    return static_cast<std::size_t>(
        std::count_if(cells.begin(), cells.end(), [c](const CellResult& r) { return r.cls == c; }));
  }

  /// Cells with at least one 4-neighbour of a different class.
  std::vector<std::pair<std::size_t, std::size_t>> boundary_cells() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t iy = 0; iy < y.n; ++iy)
      for (std::size_t ix = 0; ix < x.n; ++ix) {
        const CellClass c = at(ix, iy).cls;
        const bool edge = (ix > 0 && at(ix - 1, iy).cls != c) ||
                          (ix + 1 < x.n && at(ix + 1, iy).cls != c) ||
                          (iy > 0 && at(ix, iy - 1).cls != c) ||
                          (iy + 1 < y.n && at(ix, iy + 1).cls != c);
        if (edge) out.emplace_back(ix, iy);
      }
    return out;
  }
};

struct SweepOptions {
  std::size_t workers = 1;
  /// Cells already computed (e.g. read from a resume cache); skipped.
  std::vector<CellResult> done;
  /// Called once per newly computed cell, serialized by an internal mutex.
  std::function<void(const CellResult&)> on_cell;
};

/// Runs the sweep. Every cell is computed from its own parameters only, so the
/// result does not depend on the number of workers or on resumption.
inline RegionMap sweep(const SweepSpec& spec, const SweepOptions& opt = {}) {
  spec.validate();
  RegionMap map;
  map.x = spec.x;
  map.y = spec.y;
  const std::size_t total = spec.x.n * spec.y.n;
  map.cells.resize(total);
  std::vector<char> have(total, 0);
  for (const CellResult& c : opt.done) {
    if (c.ix >= spec.x.n || c.iy >= spec.y.n) continue;
    const std::size_t idx = c.iy * spec.x.n + c.ix;
    map.cells[idx] = c;
    have[idx] = 1;
  }
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < total; ++i)
    if (!have[i]) todo.push_back(i);

  std::atomic<std::size_t> next{0};
  std::mutex mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= todo.size()) return;
      const std::size_t idx = todo[k];
      const std::size_t ix = idx % spec.x.n;
      const std::size_t iy = idx / spec.x.n;
      CellResult c = classify_cell(cell_params(spec, ix, iy), spec);
      c.ix = ix;
      c.iy = iy;
      c.px = spec.x.at(ix);
      c.py = spec.y.at(iy);
      map.cells[idx] = c;
      if (opt.on_cell) {
        std::lock_guard<std::mutex> lock(mu);
        opt.on_cell(map.cells[idx]);
      }
    }
  };
  const std::size_t n_workers = std::clamp<std::size_t>(opt.workers, 1, 256);
  if (n_workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  return map;
}

}  // namespace canard
