#include <cmath>

#include "doctest.h"
#include "tipcast/defaults.hpp"
#include "tipcast/error.hpp"
#include "tipcast/rollout.hpp"

using namespace tipcast;
using namespace tipcast::rollout;

namespace {

io::Archive simulated(const std::string& id, std::uint64_t seed, double fw_north, std::size_t steps) {
  const auto& d = load_defaults().four_box;
  Rng rng(seed, 5);
  box::BoxParams p = ens::sample_params(d.bounds, rng);
  box::set_covariate(p, "fw_north", fw_north);
  return io::from_trajectory(box::simulate(p, box::make_noise(seed, 1e5, steps, 2), steps), id);
}

tft::TftConfig tiny_model_config(const data::Standardizer& s, std::size_t h, std::size_t l) {
  tft::TftConfig c;
  c.d_model = 8;
  c.n_lstm_layers = 1;
  c.dropout = 0.0;
  c.history = h;
  c.horizon = l;
  c.n_channels = s.channel_names.size();
  c.n_known = s.known_names.size();
  c.n_statics = s.static_names.size();
  c.n_targets = c.n_channels;
  c.seed = 3;
  return c;
}

data::Standardizer fit_on(const io::Archive& a, data::Mode mode, const std::vector<std::string>& statics) {
  const io::Archive x = simulated("x", 101, 2.0e5, 300), y = simulated("y", 102, 6.0e5, 300);
  return data::fit_standardizer({&a, &x, &y}, mode, statics);
}

}  // namespace

TEST_CASE("oracle rollout reproduces the simulator") {
  const io::Archive truth = simulated("truth", 7, 1.0e6, 1100);
  REQUIRE(truth.trajectory.collapse_time_atlantic.has_value());
  const auto s = fit_on(truth, data::Mode::Stochastic, data::static_names_for(box::Variant::FourBox));
  OracleForecaster oracle(100, 50, s, {{"truth", truth.trajectory.channels}});
  RolloutSetup setup{box::Variant::FourBox, data::Mode::Stochastic, &s, 20};
  const RolloutResult r = autoregressive_rollout(oracle, setup, input_from_archive(truth, s, 100));
  REQUIRE(r.channels.rows == 1100);
  CHECK(r.block_starts.size() == 20);
  CHECK(r.block_starts.front() == 100);
  CHECK(r.block_starts.back() == 1050);
  double worst = 0.0;
  for (std::size_t i = 0; i < r.channels.data.size(); ++i) {
    worst = std::max(worst, std::abs(r.channels.data[i] - truth.trajectory.channels.data[i]));
  }
  CHECK(worst < 1e-8);
  CHECK(r.collapse_atlantic == box::detect_collapse(truth.trajectory, "atlantic"));

  setup.n_blocks = 0;
  const RolloutResult seed_only = autoregressive_rollout(oracle, setup, input_from_archive(truth, s, 100));
  CHECK(seed_only.channels.rows == 100);
  for (std::size_t i = 0; i < seed_only.channels.data.size(); ++i) {
    CHECK(seed_only.channels.data[i] == truth.trajectory.channels.data[i]);
  }
}

TEST_CASE("persistence rollout and input validation") {
  const io::Archive truth = simulated("p", 8, 1.0e5, 300);
  const auto s = fit_on(truth, data::Mode::Deterministic, {"fw_north"});
  PersistenceForecaster persist(100, 50);
  const RolloutSetup setup{box::Variant::FourBox, data::Mode::Deterministic, &s, 4};
  const RolloutResult r = autoregressive_rollout(persist, setup, input_from_archive(truth, s, 100));
  for (std::size_t t = 100; t < 300; ++t) {
    for (std::size_t c = 0; c < r.channels.cols; ++c) CHECK(std::abs(r.channels(t, c) - truth.trajectory.channels(99, c)) < 1e-9);
  }
  RolloutInput bad = input_from_archive(truth, s, 100);
  bad.seed_window = Matrix(99, r.channels.cols);
  CHECK_THROWS_AS(autoregressive_rollout(persist, setup, bad), ShapeError);
  const RolloutSetup stochastic{box::Variant::FourBox, data::Mode::Stochastic, &s, 10};
  CHECK_THROWS_AS(autoregressive_rollout(persist, stochastic, input_from_archive(truth, s, 100)), InvalidArgument);
}

TEST_CASE("surrogate ensemble forecasts") {
  const io::Archive truth = simulated("e", 9, 4.0e5, 400);
  const auto s = fit_on(truth, data::Mode::Stochastic, data::static_names_for(box::Variant::FourBox));
  const tft::TftModel model(tiny_model_config(s, 20, 10));
  TftForecaster f(model);
  const RolloutSetup setup{box::Variant::FourBox, data::Mode::Stochastic, &s, 6};
  RolloutInput base = input_from_archive(truth, s, 20);

  EnsembleForecastOptions opt;
  opt.n_members = 5;
  opt.sigma = 0.0;
  opt.base_seed = 4;
  const EnsembleForecast calm = ensemble_forecast(f, setup, base, opt);
  for (const auto& m : calm.members) CHECK(m.channels.data == calm.members[0].channels.data);

  opt.sigma = 1e5;
  opt.n_members = 6;
  const EnsembleForecast a = ensemble_forecast(f, setup, base, opt);
  opt.workers = 3;
  opt.max_batch = 2;
  const EnsembleForecast b = ensemble_forecast(f, setup, base, opt);
  REQUIRE(a.members.size() == 6);
  CHECK(a.members[0].channels.data != a.members[1].channels.data);
  CHECK(a.atlantic == b.atlantic);
  for (std::size_t k = 0; k < 6; ++k) {
    CHECK(a.members[k].noise.seed == split_seed(4, k));
    // batching and threading leave each member unchanged to roundoff
    double worst = 0.0;
    for (std::size_t i = 0; i < a.members[k].channels.data.size(); ++i) {
      worst = std::max(worst, std::abs(a.members[k].channels.data[i] - b.members[k].channels.data[i]));
    }
    CHECK(worst < 1e-9);
  }

  const io::Archive arch = to_archive(a.members[2], box::Variant::FourBox, truth.trajectory.params);
  CHECK(arch.source == "surrogate");
  CHECK(arch.trajectory.channels.rows == 20 + 60);
  CHECK(arch.trajectory.noise.values.rows == 80);
}
