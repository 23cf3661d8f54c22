#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "tipcast/defaults.hpp"
#include "tipcast/ensemble.hpp"
#include "tipcast/error.hpp"

using namespace tipcast;
using namespace tipcast::ens;

namespace {

const Defaults& defaults() {
  static const Defaults d = load_defaults();
  return d;
}

}  // namespace

TEST_CASE("sample_params") {
  ParamBounds b = defaults().four_box.bounds;
  Rng r1(5), r2(5);
  CHECK(sample_params(b, r1).fw_base == sample_params(b, r2).fw_base);

  b.covariates = {{"m_ek", 2e7, 2e7}};
  Rng r3(1);
  CHECK(sample_params(b, r3).m_ek == 2e7);

  b.covariates = {{"fw_north", 1e5, 3e5}};
  Rng r4(17);
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = sample_params(b, r4).fw_base[0];
    CHECK(v >= 1e5);
    CHECK(v <= 3e5);
    sum += v;
  }
  CHECK(std::abs(sum / n - 2e5) / 2e5 < 0.01);

  b.covariates = {{"fw_north", 3e5, 1e5}};
  CHECK_THROWS_AS(b.validate(), InvalidParams);
  b.covariates = {{"not_a_covariate", 0.0, 1.0}};
  CHECK_THROWS_AS(b.validate(), InvalidParams);
}

TEST_CASE("collapse_stats examples") {
  SUBCASE("identical times") {
    const auto s = collapse_stats({100.0, 100.0, 100.0}, 3);
    CHECK(s.n_collapsed == 3);
    CHECK(*s.mean == 100.0);
    CHECK(*s.std == 0.0);
    CHECK(*s.p2_5 == 100.0);
    CHECK(*s.p50 == 100.0);
    CHECK(*s.p97_5 == 100.0);
  }
  SUBCASE("no collapse") {
    const auto s = collapse_stats({std::nullopt, std::nullopt}, 2);
    CHECK(s.n_members == 2);
    CHECK(s.n_collapsed == 0);
    CHECK(s.fraction_collapsed == 0.0);
    CHECK_FALSE(s.mean.has_value());
    CHECK_FALSE(s.std.has_value());
  }
  SUBCASE("two points") {
    const auto s = collapse_stats({100.0, 200.0, std::nullopt}, 3);
    CHECK(*s.mean == 150.0);
    CHECK(*s.std == doctest::Approx(70.71067811865476).epsilon(1e-12));
    CHECK(*s.p50 == 150.0);
    CHECK(*s.p2_5 == doctest::Approx(102.5));
    CHECK(*s.p97_5 == doctest::Approx(197.5));
    CHECK(s.fraction_collapsed == doctest::Approx(2.0 / 3.0));
  }
  SUBCASE("single collapsed member has no spread") {
    const auto s = collapse_stats({42.0}, 1);
    CHECK(*s.mean == 42.0);
    CHECK_FALSE(s.std.has_value());
  }
  SUBCASE("normal sample recovers its moments") {
    Rng rng(2024);
    std::vector<std::optional<double>> t;
    for (int i = 0; i < 100000; ++i) t.emplace_back(500.0 + 30.0 * rng.normal());
    const auto s = collapse_stats(t, t.size());
    CHECK(std::abs(*s.mean - 500.0) < 0.5);
    CHECK(std::abs(*s.std - 30.0) < 0.5);
    CHECK(std::abs(*s.p2_5 - (500.0 - 1.959964 * 30.0)) < 1.5);
    CHECK(std::abs(*s.p97_5 - (500.0 + 1.959964 * 30.0)) < 1.5);
  }
  SUBCASE("permutation invariant") {
    std::vector<std::optional<double>> t = {3.0, std::nullopt, 9.5, 1.25, 7.0, std::nullopt, 2.0};
    const auto ref = collapse_stats(t, t.size());
    std::reverse(t.begin(), t.end());
    CHECK(collapse_stats(t, t.size()) == ref);
    std::rotate(t.begin(), t.begin() + 3, t.end());
    CHECK(collapse_stats(t, t.size()) == ref);
  }
}

TEST_CASE("percentile interpolation") {
  CHECK(percentile({1.0, 2.0, 3.0, 4.0}, 0.5) == 2.5);
  CHECK(percentile({1.0, 2.0, 3.0, 4.0}, 0.0) == 1.0);
  CHECK(percentile({1.0, 2.0, 3.0, 4.0}, 1.0) == 4.0);
}

TEST_CASE("run_ensemble") {
  const auto& p = defaults().four_box.params;
  EnsembleOptions opt;
  opt.n_members = 4;
  opt.n_steps = 200;
  opt.sigma = 0.0;
  const auto calm = run_ensemble(p, opt);
  for (const auto& m : calm.members) {
    REQUIRE(m.trajectory.has_value());
    CHECK(m.trajectory->channels == calm.members[0].trajectory->channels);
  }
  opt.sigma = 1e5;
  opt.workers = 2;
  const auto a = run_ensemble(p, opt);
  opt.workers = 1;
  const auto b = run_ensemble(p, opt);
  for (std::size_t k = 0; k < opt.n_members; ++k) {
    CHECK(a.members[k].seed == split_seed(0, k));
    CHECK(a.members[k].trajectory->channels == b.members[k].trajectory->channels);
  }
  CHECK(a.members[0].trajectory->channels != a.members[1].trajectory->channels);
  CHECK_FALSE(a.pacific.has_value());
  opt.n_members = 0;
  CHECK_THROWS_AS(run_ensemble(p, opt), InvalidArgument);
}

TEST_CASE("bifurcation sweep: on-state and hysteresis") {
  const auto& vd = defaults().four_box;
  const auto single = bifurcation_sweep(vd.params, "fw_north", {1e5}, SweepDirection::Up, 3000.0);
  REQUIRE(single.points.size() == 1);
  CHECK(single.points[0].converged);
  CHECK(single.points[0].m_n_sv[0] > 10.0);
  CHECK(single.points[0].m_n_sv[0] < 25.0);

  std::vector<double> grid;
  for (int i = 0; i <= 12; ++i) grid.push_back(1e5 * i);
  const auto h = hysteresis_sweep(vd.params, "fw_north", grid, 3000.0);
  REQUIRE(h.up.points.size() == grid.size());
  // Up-branch strength is non-increasing while on the on-branch.
  double width = 0.0;
  std::optional<double> f_up, f_down;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double up = h.up.points[i].m_n_sv[0], down = h.down.points[i].m_n_sv[0];
    CHECK(h.down.points[i].flux == grid[i]);
    width = std::max(width, up - down);
    if (!f_up && up < 0.0) f_up = grid[i];
    if (i > 0 && up > 0.0) CHECK(up <= h.up.points[i - 1].m_n_sv[0] + 1e-9);
  }
  for (std::size_t i = grid.size(); i-- > 0;) {
    if (h.down.points[i].m_n_sv[0] > 0.0) {
      f_down = grid[i];
      break;
    }
  }
  CHECK(width > 5.0);
  REQUIRE(f_up.has_value());
  if (f_down) CHECK(*f_down <= *f_up);
}

TEST_CASE("bifurcation sweep: mono-stable range gives identical branches") {
  const auto& vd = defaults().four_box;
  const std::vector<double> grid = {0.0, 0.5e5, 1e5, 1.5e5};
  const auto h = hysteresis_sweep(vd.params, "fw_north", grid, 3000.0);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(h.up.points[i].m_n_sv[0] == doctest::Approx(h.down.points[i].m_n_sv[0]).epsilon(1e-6));
  }
}

TEST_CASE("defaults load and validate") {
  const auto& d = defaults();
  CHECK(d.version == 1);
  CHECK_NOTHROW(d.four_box.params.validate());
  CHECK_NOTHROW(d.six_box.params.validate());
  CHECK_NOTHROW(d.four_box.bounds.validate());
  CHECK_NOTHROW(d.six_box.bounds.validate());
  CHECK(d.six_box.bounds.varying().size() == 22);
  CHECK_THROWS_AS(load_defaults("/nonexistent/defaults.json"), Error);
}
