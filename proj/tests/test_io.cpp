#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "canard/analysis.hpp"
#include "canard/io.hpp"

using namespace canard;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "canard_test_io";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  return {std::istreambuf_iterator<char>(is), {}};
}

}  // namespace

TEST(Format, SeventeenDigitsRoundTrip) {
  for (double v : {0.1, 1.0 / 3.0, -2.46492e-305, 28.665365130123064, 1e300}) {
    EXPECT_EQ(parse_double(fmt(v), "v"), v);
  }
  EXPECT_THROW(parse_double("1.5x", "v"), IoError);
}

TEST(TrajectoryCsv, HeaderOnlyForEmptyRun) {
  const fs::path p = scratch("empty.csv");
  write_trajectory_csv(p, Trajectory{});
  EXPECT_EQ(slurp(p), "t,x,y,u,v,H\n");
}

TEST(TrajectoryCsv, RoundTripWithAndWithoutControls) {
  Trajectory tr;
  tr.times = {0.0, 0.1, 0.2};
  tr.states = {{0.1, 28.0}, {1.0 / 3.0, 28.1}, {0.7, -1e-300}};
  tr.extras = {{}, {0.5, -0.25, 1e-20}, {std::nullopt, 0.0, std::nullopt}};
  const fs::path p = scratch("traj.csv");
  write_trajectory_csv(p, tr);
  const Trajectory back = read_trajectory_csv(p);
  ASSERT_EQ(back.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(back.times[i], tr.times[i]);
    EXPECT_EQ(back.states[i].x, tr.states[i].x);
    EXPECT_EQ(back.states[i].y, tr.states[i].y);
    EXPECT_EQ(back.extras[i].u, tr.extras[i].u);
    EXPECT_EQ(back.extras[i].v, tr.extras[i].v);
    EXPECT_EQ(back.extras[i].H, tr.extras[i].H);
  }
  EXPECT_NE(slurp(p).find("\n0,0.10000000000000001,28,,,\n"), std::string::npos);
}

TEST(ManifoldCsv, StabilityColumn) {
  const fs::path p = scratch("manifold.csv");
  write_manifold_csv(p, {{0.5, 28.0, -0.1}, {0.7, 27.0, 0.2}});
  EXPECT_EQ(slurp(p), "y,x,dfdx,stability\n28,0.5,-0.10000000000000001,attracting\n"
                      "27,0.69999999999999996,0.20000000000000001,repelling\n");
}

TEST(TargetLevel, CurveLiesOnTheLevelSet) {
  const NormalFormParams nf = NormalFormParams::make(1.64, 0.1, 1, 0.01);
  const ControlTarget tg = make_target({0.6, 28.6}, nf, 3.0);
  const auto curve = target_level_curve(tg, 0.6, 801);
  ASSERT_GT(curve.size(), 10u);
  for (const LevelPoint& p : curve) {
    const double dy = p.y - 28.6;
    const double e = detail::scaled_error(nf, tg.h, p.x - 0.6, dy);
    EXPECT_NEAR(e, 0.0, 1e-9 * (1.0 + std::abs(nf.b_c * dy)));
  }
}

TEST(RegionCsv, TwoByTwoAllZeroMap) {
  RegionMap map;
  map.x = {"alpha", 0.0, 1.0, 2};
  map.y = {"gamma", 0.0, 1.0, 2};
  for (std::size_t iy = 0; iy < 2; ++iy)
    for (std::size_t ix = 0; ix < 2; ++ix) {
      CellResult c;
      c.ix = ix;
      c.iy = iy;
      c.px = map.x.at(ix);
      c.py = map.y.at(iy);
      c.cls = CellClass::folds0;
      map.cells.push_back(c);
    }
  const fs::path p = scratch("regions.csv");
  write_region_csv(p, map);
  const std::string text = slurp(p);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
  EXPECT_EQ(text.substr(0, text.find('\n')), "ix,iy,px,py,class,n_folds,fold_data");
  const nlohmann::json s = region_summary(map);
  EXPECT_EQ(s["histogram"], nlohmann::json({{"0", 4}}));
  EXPECT_TRUE(s["boundary_cells"].empty());
}

TEST(RegionCsv, RoundTripEqualsInMemoryMap) {
  RegionMap map;
  map.x = {"alpha", 0.0, 3.0, 2};
  map.y = {"beta", 0.0, 3.0, 2};
  const CellClass cls[] = {CellClass::folds2, CellClass::folds4, CellClass::invalid_negative_y,
                           CellClass::error};
  for (std::size_t i = 0; i < 4; ++i) {
    CellResult c;
    c.ix = i % 2;
    c.iy = i / 2;
    c.px = map.x.at(c.ix);
    c.py = map.y.at(c.iy);
    c.cls = cls[i];
    if (c.cls == CellClass::folds2) c.folds = {{0.61, 28.6}, {0.97, 25.59}};
    if (c.cls == CellClass::folds4) c.folds = {{0.1, 1.0 / 3.0}, {0.2, 2.0}, {0.3, 3.0}, {0.4, 4.0}};
    c.n_folds = c.folds.size();
    map.cells.push_back(c);
  }
  const fs::path p = scratch("regions_rt.csv");
  write_region_csv(p, map);
  const RegionMap back = read_region_csv(p, map.x, map.y);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(back.cells[i], map.cells[i]);
  const nlohmann::json s = region_summary(map);
  EXPECT_EQ(s["histogram"].size(), 4u);
  EXPECT_EQ(s["boundary_cells"].size(), 4u);
}

TEST(RegionCsv, IncompleteFileIsRejected) {
  const fs::path p = scratch("partial.csv");
  std::ofstream(p) << "ix,iy,px,py,class,n_folds,fold_data\n0,0,0,0,0,0,\n";
  EXPECT_THROW(read_region_csv(p, {"alpha", 0, 1, 2}, {"beta", 0, 1, 2}), IoError);
  EXPECT_THROW(parse_region_row("0,0,0,0,seven,0,"), IoError);
}

TEST(Json, UnwritablePathIsAnIoError) {
  EXPECT_THROW(write_json("/nonexistent_dir/x.json", nlohmann::json::object()), IoError);
  EXPECT_THROW(read_json("/nonexistent_dir/x.json"), IoError);
}

TEST(Analysis, TimeWeightedMeanIgnoresSampleDensity) {
  Trajectory tr;
  // x = 1 on [0, 1] sampled densely, x = 0 on [1, 2] sampled once.
  for (int i = 0; i <= 100; ++i) {
    tr.times.push_back(i * 0.01);
    tr.states.push_back({1.0, 0.0});
  }
  tr.times.push_back(1.0 + 1e-9);
  tr.states.push_back({0.0, 0.0});
  tr.times.push_back(2.0);
  tr.states.push_back({0.0, 0.0});
  EXPECT_NEAR(*time_mean_x(tr, 0.0, 2.0), 0.5, 1e-6);
}

TEST(Analysis, CycleCentreOfASinusoid) {
  Trajectory tr;
  for (int i = 0; i <= 20000; ++i) {
    const double t = i * 1e-3;
    tr.times.push_back(t);
    tr.states.push_back({0.6 + 0.1 * std::cos(t), 28.0 + std::sin(t)});
  }
  const auto w = last_period(tr, 0.0);
  ASSERT_TRUE(w.has_value());
  EXPECT_NEAR(w->t1 - w->t0, 2.0 * M_PI, 1e-5);
  EXPECT_NEAR(*cycle_centre_x(tr, 0.0), 0.6, 1e-8);
}
