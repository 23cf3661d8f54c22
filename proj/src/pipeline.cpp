#include "tipcast/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "tipcast/defaults.hpp"
#include "tipcast/error.hpp"
#include "tipcast/kernels.hpp"
#include "tipcast/parallel.hpp"
#include "tipcast/rollout.hpp"

namespace tipcast::pipeline {

using nlohmann::json;

namespace {

Defaults defaults_for(const Context& ctx) {
  return ctx.cfg.defaults_file.empty() ? load_defaults() : load_defaults(ctx.cfg.defaults_file);
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::string opt_cell(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

json stats_json(const ens::CollapseStats& s) {
  auto o = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  return {{"n_members", s.n_members}, {"n_collapsed", s.n_collapsed}, {"fraction_collapsed", s.fraction_collapsed},
          {"mean", o(s.mean)},        {"std", o(s.std)},                 {"p2_5", o(s.p2_5)},
          {"p50", o(s.p50)},          {"p97_5", o(s.p97_5)}};
}

std::ofstream open_out(const fs::path& file) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + file.string());
  return out;
}

data::SplitSpec split_spec(const config::RunConfig& cfg) {
  data::SplitSpec spec;
  spec.n_train = cfg.dataset.n_train;
  spec.n_val = cfg.dataset.n_val;
  spec.n_test = cfg.dataset.n_test;
  spec.f_train = cfg.dataset.f_train;
  spec.f_val = cfg.dataset.f_val;
  spec.f_test = cfg.dataset.f_test;
  spec.filter = cfg.dataset.filter == "balanced"        ? data::SplitSpec::Filter::Balanced
                : cfg.dataset.filter == "collapse_only" ? data::SplitSpec::Filter::CollapseOnly
                                                        : data::SplitSpec::Filter::None;
  spec.seed = cfg.seed;
  spec.history = cfg.dataset.history;
  spec.horizon = cfg.dataset.horizon;
  spec.stride = cfg.dataset.stride;
  spec.mode = cfg.mode;
  return spec;
}

std::string mode_tag(data::Mode m) {
  return m == data::Mode::Stochastic ? "with_known_covariates" : "time_encoding_only";
}

std::vector<rollout::RolloutResult> parallel_rollouts(const rollout::Forecaster& f, const rollout::RolloutSetup& setup,
                                                      const std::vector<rollout::RolloutInput>& inputs,
                                                      std::size_t workers) {
  const std::size_t chunk = std::clamp<std::size_t>((inputs.size() + workers - 1) / workers, 1, 64);
  const std::size_t n_chunks = (inputs.size() + chunk - 1) / chunk;
  std::vector<rollout::RolloutResult> out(inputs.size());
  parallel_for(n_chunks, workers, [&](std::size_t c) {
    const std::size_t lo = c * chunk, hi = std::min(inputs.size(), lo + chunk);
    auto part = rollout::rollout_batch(f, setup,
                                       std::vector<rollout::RolloutInput>(inputs.begin() + static_cast<std::ptrdiff_t>(lo),
                                                                          inputs.begin() + static_cast<std::ptrdiff_t>(hi)),
                                       true);
    for (std::size_t i = 0; i < part.size(); ++i) out[lo + i] = std::move(part[i]);
  });
  return out;
}

}  // namespace

void write_run_manifest(const fs::path& out, const std::string& command, const Context& ctx, const json& inputs) {
  fs::create_directories(out);
  const json m = {{"command", command},
                  {"argv", ctx.argv},
                  {"config", ctx.cfg.to_json()},
                  {"config_hash", ctx.cfg.hash()},
                  {"seed", ctx.cfg.seed},
                  {"inputs", inputs},
                  {"versions",
                   {{"tipcast", kVersion},
                    {"defaults", defaults_for(ctx).version},
                    {"archive_format", io::kArchiveVersion},
                    {"model_format", io::kModelVersion},
                    {"simd", std::string(kernels::to_string(kernels::active_level()))}}}};
  io::write_json(out / "run-manifest.json", m);
}

box::BoxParams params_with(const Context& ctx, box::Variant v, const json& overrides) {
  box::BoxParams p = defaults_for(ctx)[v].params;
  for (const auto& [name, value] : overrides.items()) {
    if (!value.is_number()) throw ConfigError("override '" + name + "' must be a number");
    box::set_covariate(p, name, value.get<double>());
  }
  p.validate();
  return p;
}

fs::path simulate(const Context& ctx, const fs::path& out) {
  const auto& cfg = ctx.cfg;
  const box::BoxParams p = params_with(ctx, cfg.variant, cfg.simulate.params);
  const auto noise = box::make_noise(cfg.seed, cfg.simulate.sigma, cfg.simulate.n_steps, box::n_fluxes(cfg.variant));
  const auto traj = box::simulate(p, noise, cfg.simulate.n_steps);
  const std::string id = "sim-" + std::to_string(cfg.seed);
  io::write_archive(out / id, io::from_trajectory(traj, id));
  write_run_manifest(out, "simulate", ctx);
  ctx.log("wrote " + (out / id).string());
  return out / id;
}

ens::Hysteresis sweep(const Context& ctx, const fs::path& out) {
  const auto& cfg = ctx.cfg;
  const auto d = defaults_for(ctx)[cfg.variant];
  const std::string flux = cfg.sweep.flux.empty() ? d.sweep.flux : cfg.sweep.flux;
  const std::size_t points = cfg.sweep.points ? cfg.sweep.points : d.sweep.points;
  const double low = cfg.sweep.points ? cfg.sweep.low : d.sweep.low;
  const double high = cfg.sweep.points ? cfg.sweep.high : d.sweep.high;
  const double settle = cfg.sweep.settle_years > 0.0 ? cfg.sweep.settle_years : d.sweep.settle_years;
  if (points < 2) throw ConfigError("sweep needs at least two grid points");
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) grid[i] = low + (high - low) * static_cast<double>(i) / static_cast<double>(points - 1);
  const ens::Hysteresis h = ens::hysteresis_sweep(params_with(ctx, cfg.variant, cfg.simulate.params), flux, grid, settle);

  fs::create_directories(out);
  auto csv = open_out(out / "sweep.csv");
  const auto basins = box::basin_names(cfg.variant);
  csv << flux;
  for (const char* dir : {"up", "down"}) {
    for (const auto& b : basins) csv << ",m_n_" << b << "_" << dir << "_sv";
  }
  csv << ",up_converged,down_converged\n";
  double width = 0.0;
  std::optional<double> lo, hi;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& u = h.up.points[i];
    const auto& dn = h.down.points[i];
    csv << fmt(grid[i]);
    for (const auto* pt : {&u, &dn}) {
      for (std::size_t b = 0; b < basins.size(); ++b) csv << ',' << (pt->error.empty() ? fmt(pt->m_n_sv[b]) : "");
    }
    csv << ',' << u.converged << ',' << dn.converged << '\n';
    if (u.error.empty() && dn.error.empty()) {
      const double gap = std::abs(u.m_n_sv[0] - dn.m_n_sv[0]);
      width = std::max(width, gap);
      if (gap > 5.0) {
        lo = lo ? std::min(*lo, grid[i]) : grid[i];
        hi = hi ? std::max(*hi, grid[i]) : grid[i];
      }
    }
  }
  io::write_json(out / "hysteresis.json",
                 {{"flux", flux},
                  {"max_branch_gap_sv", width},
                  {"bistable_interval", lo ? json{*lo, *hi} : json(nullptr)},
                  {"settle_years", settle}});
  write_run_manifest(out, "sweep", ctx);
  return h;
}

GenDataSummary gen_data(const Context& ctx, const fs::path& out) {
  const auto& cfg = ctx.cfg;
  if (cfg.gen_data.n_trajectories == 0 || cfg.gen_data.n_steps == 0) throw ConfigError("gen_data needs trajectories and steps");
  const auto bounds = defaults_for(ctx)[cfg.variant].bounds;
  const std::size_t n = cfg.gen_data.n_trajectories;
  const fs::path root = out / "archives";
  fs::create_directories(root);
  std::vector<int> status(n, 0);  // 1 collapsed, 2 faulted
  parallel_for(n, cfg.effective_workers(), [&](std::size_t k) {
    const std::uint64_t seed = split_seed(cfg.seed, k);
    Rng rng(seed, 0xA11CE);
    const box::BoxParams p = ens::sample_params(bounds, rng);
    char id[32];
    std::snprintf(id, sizeof id, "traj-%06zu", k);
    try {
      const auto traj = box::simulate(p, box::make_noise(seed, cfg.gen_data.sigma, cfg.gen_data.n_steps,
                                                         box::n_fluxes(cfg.variant)), cfg.gen_data.n_steps);
      io::write_archive(root / id, io::from_trajectory(traj, id));
      status[k] = traj.collapse_time_atlantic || traj.collapse_time_pacific ? 1 : 0;
    } catch (const SimulationFault&) {
      status[k] = 2;
    }
  });
  GenDataSummary s;
  for (int v : status) {
    s.faulted += v == 2;
    s.collapsed += v == 1;
  }
  s.generated = n - s.faulted;
  ctx.log("generated " + std::to_string(s.generated) + " trajectories (" + std::to_string(s.collapsed) +
          " collapsing, " + std::to_string(s.faulted) + " faulted)");
  s.dataset = data::build_dataset(root, split_spec(cfg), out / "dataset");
  io::write_json(out / "gen_data.json",
                 {{"generated", s.generated}, {"collapsed", s.collapsed}, {"faulted", s.faulted},
                  {"train", s.dataset.train_ids.size()}, {"val", s.dataset.val_ids.size()},
                  {"test", s.dataset.test_ids.size()}, {"train_examples", s.dataset.n_train_examples}});
  write_run_manifest(out, "gen-data", ctx);
  return s;
}

void write_selection_weights(const fs::path& file, const tft::TftModel& model, const data::Standardizer& s,
                             const std::vector<data::WindowedExample>& examples) {
  if (examples.empty()) throw EmptySplit("no examples for selection weights");
  const std::size_t bs = model.config().batch_size;
  std::vector<double> st(s.static_names.size()), past(s.channel_names.size() + s.known_names.size()),
      fut(s.known_names.size());
  double n_st = 0, n_past = 0, n_fut = 0;
  auto add = [](std::vector<double>& acc, const Matrix& w, double& count) {
    for (std::size_t r = 0; r < w.rows; ++r) {
      for (std::size_t c = 0; c < w.cols; ++c) acc[c] += w(r, c);
    }
    count += static_cast<double>(w.rows);
  };
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < examples.size(); start += bs) {
    idx.clear();
    for (std::size_t i = start; i < std::min(examples.size(), start + bs); ++i) idx.push_back(i);
    ad::Tape tape(false);
    const auto out = model.forward(tape, tft::make_batch(examples, idx));
    add(st, out.static_weights.value(), n_st);
    add(past, out.past_weights.value(), n_past);
    add(fut, out.future_weights.value(), n_fut);
  }
  auto csv = open_out(file);
  csv << "block,variable,mean_weight\n";
  for (std::size_t j = 0; j < st.size(); ++j) csv << "static," << s.static_names[j] << ',' << fmt(st[j] / n_st) << '\n';
  for (std::size_t j = 0; j < past.size(); ++j) {
    const std::string& name = j < s.channel_names.size() ? s.channel_names[j] : s.known_names[j - s.channel_names.size()];
    csv << "past," << name << ',' << fmt(past[j] / n_past) << '\n';
  }
  for (std::size_t j = 0; j < fut.size(); ++j) csv << "future," << s.known_names[j] << ',' << fmt(fut[j] / n_fut) << '\n';
}

TrainOutcome train(const Context& ctx, const fs::path& dataset_dir, const fs::path& out) {
  const data::DatasetInfo info = data::read_dataset_info(dataset_dir);
  tft::TftConfig mc = ctx.cfg.model;
  mc.history = info.history;
  mc.horizon = info.horizon;
  mc.n_channels = info.n_channels();
  mc.n_known = info.n_known();
  mc.n_statics = info.n_statics();
  mc.n_targets = info.n_channels();
  mc.seed = ctx.cfg.seed;
  mc.workers = ctx.cfg.effective_workers();
  const auto train_set = data::load_split(dataset_dir, info, "train");
  const auto val_set = data::load_split(dataset_dir, info, "val");
  ctx.log("training on " + std::to_string(train_set.size()) + " windows, validating on " +
          std::to_string(val_set.size()));
  io::ModelBundle bundle{tft::TftModel(mc), info.variant, info.mode, info.standardizer};
  train::TrainOptions opts;
  opts.on_epoch = [&](const train::EpochRecord& r) {
    char line[160];
    std::snprintf(line, sizeof line, "epoch %zu train %.6f val %.6f (%.1fs)", r.epoch, r.train_loss, r.val_loss,
                  r.wall_seconds);
    ctx.log(line);
  };
  TrainOutcome o;
  o.result = train::train(bundle.model, train_set, val_set, opts);
  fs::create_directories(out);
  o.model_file = out / "model.bin";
  io::save_model(o.model_file, bundle);
  train::write_history_csv(out / "history.csv", o.result.history);
  write_selection_weights(out / "selection_weights.csv", bundle.model, info.standardizer, val_set);
  write_run_manifest(out, "train", ctx, {{"dataset", fs::absolute(dataset_dir).string()}});
  return o;
}

fs::path rollout_split(const Context& ctx, const fs::path& dataset_dir, const std::optional<fs::path>& model_file,
                       const std::string& split, const fs::path& out, const std::string& label) {
  const data::DatasetInfo info = data::read_dataset_info(dataset_dir);
  const auto archives = data::load_split_archives(info, split);
  std::optional<io::ModelBundle> bundle;
  std::unique_ptr<rollout::Forecaster> f;
  if (model_file) {
    bundle.emplace(io::load_model(*model_file, &info.standardizer.channel_names));
    if (bundle->variant != info.variant || bundle->mode != info.mode) {
      throw ManifestMismatch("model variant or mode differs from the dataset");
    }
    f = std::make_unique<rollout::TftForecaster>(bundle->model);
  } else {
    f = std::make_unique<rollout::PersistenceForecaster>(info.history, info.horizon);
  }
  const data::Standardizer& s = info.standardizer;
  const rollout::RolloutSetup setup{info.variant, info.mode, &s, ctx.cfg.rollout.n_blocks};
  std::vector<rollout::RolloutInput> inputs;
  for (const auto& a : archives) {
    if (a.trajectory.channels.rows < info.history + setup.n_blocks * info.horizon) {
      throw TrajectoryTooShort("archive '" + a.id + "' is shorter than the rollout horizon");
    }
    inputs.push_back(rollout::input_from_archive(a, s, info.history));
  }
  const auto results = parallel_rollouts(*f, setup, inputs, ctx.cfg.effective_workers());
  const fs::path dir = out / label;
  fs::create_directories(dir);
  std::size_t failed = 0;
  for (std::size_t i = 0; i < results.size(); ++i) {
    failed += !results[i].error.empty();
    io::write_archive(dir / results[i].id, rollout::to_archive(results[i], info.variant, archives[i].trajectory.params));
  }
  ctx.log("rolled out " + std::to_string(results.size()) + " " + split + " trajectories with " + label +
          (failed ? " (" + std::to_string(failed) + " diverged)" : ""));
  write_run_manifest(out, "rollout", ctx,
                     {{"dataset", fs::absolute(dataset_dir).string()},
                      {"model", model_file ? fs::absolute(*model_file).string() : "persistence"},
                      {"split", split}});
  return dir;
}

std::vector<eval::MetricReport> evaluate(const Context& ctx, const fs::path& dataset_dir,
                                         const std::vector<Prediction>& preds, const std::string& split,
                                         const fs::path& out) {
  if (preds.empty()) throw InvalidArgument("nothing to evaluate");
  const data::DatasetInfo info = data::read_dataset_info(dataset_dir);
  const auto truth = data::load_split_archives(info, split);
  std::vector<std::string> ids;
  for (const auto& a : truth) ids.push_back(a.id);
  const eval::EvalSetup setup{info.variant, &info.standardizer, info.history, info.horizon, 1.0};
  std::vector<eval::MetricReport> rows;
  fs::create_directories(out);
  json inputs = json::array();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto archives = eval::ingest_external_predictions(preds[i].dir, info.variant, ids);
    eval::CollapseMetrics detail;
    rows.push_back(eval::evaluate(preds[i].model, preds[i].training_loss, setup, truth, archives, &detail));
    rows.back().mode = mode_tag(info.mode);
    if (i == 0 && rows.back().valid) {
      eval::write_parity_csv(out / "parity_atlantic.csv", detail);
      eval::write_histogram_csv(out / "collapse_histogram.csv", detail, 10.0);
    }
    inputs.push_back({{"model", preds[i].model}, {"dir", fs::absolute(preds[i].dir).string()}});
  }
  eval::write_report(out, rows);
  write_run_manifest(out, "eval", ctx, {{"dataset", fs::absolute(dataset_dir).string()}, {"predictions", inputs}});
  return rows;
}

std::vector<eval::MetricReport> bench(const Context& ctx, const fs::path& dataset_dir, const std::vector<fs::path>& models,
                                      const std::string& split, const fs::path& out) {
  std::vector<Prediction> preds;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const io::ModelBundle b = io::load_model(models[i]);
    const std::string label = "tft-" + std::to_string(i);
    preds.push_back({"TFT-lite", std::string(tft::to_string(b.model.config().loss)),
                     rollout_split(ctx, dataset_dir, models[i], split, out / "rollouts", label)});
  }
  preds.push_back({"Persistence", "-", rollout_split(ctx, dataset_dir, std::nullopt, split, out / "rollouts", "persistence")});
  auto rows = evaluate(ctx, dataset_dir, preds, split, out);
  write_run_manifest(out, "bench", ctx, {{"dataset", fs::absolute(dataset_dir).string()}, {"split", split}});
  return rows;
}

EnsembleOutcome ensemble(const Context& ctx, const std::optional<fs::path>& model_file, const fs::path& out,
                         bool keep_members) {
  const auto& cfg = ctx.cfg;
  const box::BoxParams p = params_with(ctx, cfg.variant, cfg.ensemble.params);
  ens::EnsembleOptions o;
  o.n_members = cfg.ensemble.n_members;
  o.sigma = cfg.ensemble.sigma;
  o.base_seed = cfg.seed;
  o.n_steps = cfg.ensemble.n_steps;
  o.workers = cfg.effective_workers();
  o.keep_trajectories = true;
  EnsembleOutcome r;
  r.simulator = ens::run_ensemble(p, o);
  fs::create_directories(out);
  auto csv = open_out(out / "collapse_times.csv");
  csv << "member,seed,atlantic_years,pacific_years,error\n";
  for (std::size_t k = 0; k < r.simulator.members.size(); ++k) {
    const auto& m = r.simulator.members[k];
    csv << k << ',' << m.seed << ',';
    if (m.trajectory) csv << opt_cell(m.trajectory->collapse_time_atlantic) << ',' << opt_cell(m.trajectory->collapse_time_pacific);
    else csv << ',';
    csv << ',' << m.error << '\n';
    if (keep_members && m.trajectory) {
      char id[32];
      std::snprintf(id, sizeof id, "member-%05zu", k);
      io::write_archive(out / "members" / id, io::from_trajectory(*m.trajectory, id));
    }
  }
  json stats = {{"atlantic", stats_json(r.simulator.atlantic)}};
  if (r.simulator.pacific) stats["pacific"] = stats_json(*r.simulator.pacific);

  if (model_file) {
    const io::ModelBundle b = io::load_model(*model_file);
    if (b.variant != cfg.variant) throw ManifestMismatch("model variant differs from the ensemble variant");
    const auto& first = r.simulator.members.at(0);
    if (!first.trajectory) throw SimulationFault("member 0 faulted; no seed window for the surrogate");
    io::Archive seed_arch = io::from_trajectory(*first.trajectory, "ensemble");
    const std::size_t h = b.model.config().history, l = b.model.config().horizon;
    const rollout::RolloutSetup setup{cfg.variant, b.mode, &b.standardizer, (cfg.ensemble.n_steps - h + l - 1) / l};
    rollout::TftForecaster f(b.model);
    rollout::EnsembleForecastOptions fo;
    fo.n_members = cfg.ensemble.n_members;
    fo.sigma = cfg.ensemble.sigma;
    fo.base_seed = cfg.seed;
    fo.workers = cfg.effective_workers();
    r.surrogate = rollout::ensemble_forecast(f, setup, rollout::input_from_archive(seed_arch, b.standardizer, h), fo);
    auto scsv = open_out(out / "surrogate_collapse_times.csv");
    scsv << "member,seed,atlantic_years,pacific_years,error\n";
    for (std::size_t k = 0; k < r.surrogate->members.size(); ++k) {
      const auto& m = r.surrogate->members[k];
      scsv << k << ',' << m.noise.seed << ',' << opt_cell(m.collapse_atlantic) << ',' << opt_cell(m.collapse_pacific)
           << ',' << m.error << '\n';
    }
    stats["surrogate_atlantic"] = stats_json(r.surrogate->atlantic);
    if (r.surrogate->pacific) stats["surrogate_pacific"] = stats_json(*r.surrogate->pacific);
  }
  io::write_json(out / "stats.json", stats);
  write_run_manifest(out, "ensemble", ctx, {{"model", model_file ? fs::absolute(*model_file).string() : ""}});
  return r;
}

eval::SpeedReport speed(const Context& ctx, const std::optional<fs::path>& model_file, const fs::path& out,
                        bool simulator_only) {
  const auto& cfg = ctx.cfg;
  const box::Variant v = cfg.speed.variant;
  const auto bounds = defaults_for(ctx)[v].bounds;
  std::vector<box::BoxParams> params;
  Rng rng(cfg.seed, 0x5BEED);
  for (std::size_t i = 0; i < cfg.speed.n_sims; ++i) params.push_back(ens::sample_params(bounds, rng));

  std::optional<io::ModelBundle> bundle;
  if (model_file) {
    bundle.emplace(io::load_model(*model_file));
    if (bundle->variant != v) throw ManifestMismatch("model variant differs from the speed benchmark variant");
  } else if (!simulator_only) {
    // Standardizer from a handful of short runs; timing is independent of the weights.
    const std::size_t h = data::default_history(v), l = data::default_horizon(v);
    std::vector<io::Archive> probes;
    for (std::size_t i = 0; i < 4; ++i) {
      probes.push_back(io::from_trajectory(
          box::simulate(params[i % params.size()], box::make_noise(split_seed(cfg.seed, i), 1e5, h + l, box::n_fluxes(v)), h + l),
          "probe"));
    }
    std::vector<const io::Archive*> ptrs;
    for (const auto& a : probes) ptrs.push_back(&a);
    std::vector<std::string> statics;
    for (const auto& name : data::static_names_for(v)) {
      double lo = 1e300, hi = -1e300;
      for (const auto& a : probes) {
        lo = std::min(lo, box::get_covariate(a.trajectory.params, name));
        hi = std::max(hi, box::get_covariate(a.trajectory.params, name));
      }
      if (hi > lo) statics.push_back(name);
    }
    const data::Standardizer s = data::fit_standardizer(ptrs, cfg.mode, statics);
    tft::TftConfig mc = cfg.model;
    mc.history = h;
    mc.horizon = l;
    mc.n_channels = s.channel_names.size();
    mc.n_known = s.known_names.size();
    mc.n_statics = s.static_names.size();
    mc.n_targets = mc.n_channels;
    bundle.emplace(io::ModelBundle{tft::TftModel(mc), v, cfg.mode, s});
  }
  eval::SpeedReport rep;
  if (bundle) {
    rollout::TftForecaster f(bundle->model);
    const rollout::RolloutSetup setup{v, bundle->mode, &bundle->standardizer, cfg.speed.n_blocks};
    rep = eval::speed_benchmark(&f, setup, params, 1e5, cfg.seed, cfg.effective_workers());
    const auto& mc = bundle->model.config();
    rep.note = "surrogate d_model " + std::to_string(mc.d_model) + ", " + std::to_string(mc.n_lstm_layers) +
               " LSTM layer(s)" + (model_file ? "" : ", untrained weights");
  } else {
    const rollout::RolloutSetup setup{v, cfg.mode, nullptr, cfg.speed.n_blocks};
    rep = eval::speed_benchmark(nullptr, setup, params, 1e5, cfg.seed, cfg.effective_workers());
  }
  fs::create_directories(out);
  io::write_json(out / "speed.json", rep.to_json());
  write_run_manifest(out, "speed", ctx, {{"model", model_file ? fs::absolute(*model_file).string() : ""}});
  return rep;
}

}  // namespace tipcast::pipeline
