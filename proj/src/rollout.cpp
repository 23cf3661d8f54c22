#include "tipcast/rollout.hpp"

#include <cmath>

#include "tipcast/error.hpp"
#include "tipcast/parallel.hpp"

namespace tipcast::rollout {

std::vector<Matrix> TftForecaster::predict(const std::vector<data::WindowedExample>& queries) const {
  if (queries.empty()) return {};
  std::vector<std::size_t> idx(queries.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  const Matrix pred = model_.predict(tft::make_batch(queries, idx));
  std::vector<Matrix> out;
  out.reserve(queries.size());
  for (std::size_t b = 0; b < queries.size(); ++b) out.push_back(tft::unstack(pred, queries.size(), b));
  return out;
}

OracleForecaster::OracleForecaster(std::size_t history, std::size_t horizon, const data::Standardizer& s,
                                   std::map<std::string, Matrix> raw_truth)
    : h_(history), l_(horizon), s_(s), truth_(std::move(raw_truth)) {}

std::vector<Matrix> OracleForecaster::predict(const std::vector<data::WindowedExample>& queries) const {
  std::vector<Matrix> out;
  for (const auto& q : queries) {
    const auto it = truth_.find(q.trajectory_id);
    if (it == truth_.end()) throw InvalidArgument("oracle has no truth for '" + q.trajectory_id + "'");
    const Matrix& truth = it->second;
    const std::size_t start = q.offset + h_;
    if (start + l_ > truth.rows) throw InvalidArgument("oracle truth for '" + q.trajectory_id + "' is too short");
    Matrix block(l_, truth.cols);
    for (std::size_t t = 0; t < l_; ++t) {
      std::copy(truth.row(start + t).begin(), truth.row(start + t).end(), block.row(t).begin());
    }
    out.push_back(s_.transform_channels(block));
  }
  return out;
}

std::vector<Matrix> PersistenceForecaster::predict(const std::vector<data::WindowedExample>& queries) const {
  std::vector<Matrix> out;
  for (const auto& q : queries) {
    if (q.history.rows == 0) throw InvalidArgument("persistence needs a nonempty history");
    Matrix block(l_, q.history.cols);
    const auto last = q.history.row(q.history.rows - 1);
    for (std::size_t t = 0; t < l_; ++t) std::copy(last.begin(), last.end(), block.row(t).begin());
    out.push_back(std::move(block));
  }
  return out;
}

namespace {

Matrix rows_of(const Matrix& m, std::size_t begin, std::size_t count) {
  Matrix out(count, m.cols);
  for (std::size_t t = 0; t < count; ++t) std::copy(m.row(begin + t).begin(), m.row(begin + t).end(), out.row(t).begin());
  return out;
}

bool all_finite(const Matrix& m) {
  for (double v : m.data) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace

std::vector<RolloutResult> rollout_batch(const Forecaster& f, const RolloutSetup& setup,
                                         const std::vector<RolloutInput>& inputs, bool isolate) {
  if (setup.standardizer == nullptr) throw InvalidArgument("rollout needs a standardizer");
  const data::Standardizer& s = *setup.standardizer;
  const std::size_t h = f.history(), l = f.horizon();
  const std::size_t total = h + setup.n_blocks * l;
  const std::size_t n_ch = s.channel_names.size();

  std::vector<RolloutResult> results(inputs.size());
  std::vector<std::vector<double>> statics(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const RolloutInput& in = inputs[i];
    if (in.seed_window.rows != h || in.seed_window.cols != n_ch) {
      throw ShapeError("seed window is [" + std::to_string(in.seed_window.rows) + " x " +
                       std::to_string(in.seed_window.cols) + "], expected [" + std::to_string(h) + " x " +
                       std::to_string(n_ch) + "]");
    }
    if (setup.mode == data::Mode::Stochastic && setup.n_blocks > 0 && in.noise.values.rows + 1 < total) {
      throw InvalidArgument("rollout '" + in.id + "' needs " + std::to_string(total - 1) + " noise rows, has " +
                            std::to_string(in.noise.values.rows));
    }
    RolloutResult& r = results[i];
    r.id = in.id;
    r.noise = in.noise;
    r.channels = Matrix(total, n_ch);
    std::copy(in.seed_window.data.begin(), in.seed_window.data.end(), r.channels.data.begin());
    statics[i] = s.transform_statics(in.statics);
  }

  for (std::size_t k = 0; k < setup.n_blocks; ++k) {
    const std::size_t begin = k * l;
    std::vector<data::WindowedExample> queries;
    std::vector<std::size_t> live;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      if (!results[i].error.empty()) continue;
      data::WindowedExample q;
      q.history = s.transform_channels(rows_of(results[i].channels, begin, h));
      q.past_known = s.transform_known(data::known_rows(setup.mode, inputs[i].noise.values, begin, h));
      q.future_known = s.transform_known(data::known_rows(setup.mode, inputs[i].noise.values, begin + h, l));
      q.target = Matrix(l, n_ch);
      q.statics = statics[i];
      q.trajectory_id = inputs[i].id;
      q.offset = begin;
      queries.push_back(std::move(q));
      live.push_back(i);
    }
    if (live.empty()) break;
    std::vector<Matrix> preds;
    try {
      preds = f.predict(queries);
    } catch (const NumericalError& e) {
      if (!isolate || live.size() == 1) {
        if (isolate) {
          results[live[0]].error = std::string(e.what()) + " in block " + std::to_string(k);
          continue;
        }
        throw NumericalError(std::string(e.what()) + " in block " + std::to_string(k));
      }
      // find the offending members one at a time
      preds.clear();
      for (std::size_t j = 0; j < queries.size(); ++j) {
        try {
          preds.push_back(f.predict({queries[j]}).at(0));
        } catch (const NumericalError& e2) {
          preds.emplace_back(l, n_ch, std::nan(""));
        }
      }
    }
    for (std::size_t j = 0; j < live.size(); ++j) {
      RolloutResult& r = results[live[j]];
      const Matrix raw = s.inverse_channels(preds[j]);
      if (!all_finite(raw)) {
        const std::string msg = "non-finite prediction in block " + std::to_string(k);
        if (!isolate) throw NumericalError(msg + " of rollout '" + r.id + "'");
        r.error = msg;
        continue;
      }
      std::copy(raw.data.begin(), raw.data.end(), r.channels.row(h + begin).begin());
      r.block_starts.push_back(h + begin);
    }
  }

  for (auto& r : results) {
    if (!r.error.empty()) continue;
    r.collapse_atlantic = box::detect_collapse(r.channels, setup.variant, "atlantic", box::kDtYears);
    if (box::n_basins(setup.variant) > 1) {
      r.collapse_pacific = box::detect_collapse(r.channels, setup.variant, "pacific", box::kDtYears);
    }
  }
  return results;
}

RolloutResult autoregressive_rollout(const Forecaster& f, const RolloutSetup& setup, const RolloutInput& input) {
  return std::move(rollout_batch(f, setup, {input}).front());
}

RolloutInput input_from_archive(const io::Archive& a, const data::Standardizer& s, std::size_t history) {
  if (a.trajectory.channels.rows < history) throw TrajectoryTooShort("archive '" + a.id + "' is shorter than the history");
  RolloutInput in;
  in.id = a.id;
  in.seed_window = rows_of(a.trajectory.channels, 0, history);
  for (const auto& name : s.static_names) in.statics.push_back(box::get_covariate(a.trajectory.params, name));
  in.noise = a.trajectory.noise;
  return in;
}

EnsembleForecast ensemble_forecast(const Forecaster& f, const RolloutSetup& setup, const RolloutInput& base,
                                   const EnsembleForecastOptions& options) {
  if (options.n_members == 0) throw InvalidArgument("ensemble needs at least one member");
  const std::size_t total = f.history() + setup.n_blocks * f.horizon();
  const std::size_t n_flux = box::n_fluxes(setup.variant);
  std::vector<RolloutInput> inputs(options.n_members);
  for (std::size_t k = 0; k < options.n_members; ++k) {
    inputs[k].id = base.id + "/member-" + std::to_string(k);
    inputs[k].seed_window = base.seed_window;
    inputs[k].statics = base.statics;
    inputs[k].noise = box::make_noise(split_seed(options.base_seed, k), options.sigma, total, n_flux);
  }
  const std::size_t chunk = std::max<std::size_t>(1, std::min(options.max_batch,
      (options.n_members + options.workers - 1) / std::max<std::size_t>(1, options.workers)));
  const std::size_t n_chunks = (options.n_members + chunk - 1) / chunk;
  EnsembleForecast out;
  out.members.resize(options.n_members);
  parallel_for(n_chunks, options.workers, [&](std::size_t c) {
    const std::size_t lo = c * chunk, hi = std::min(options.n_members, lo + chunk);
    const std::vector<RolloutInput> part(inputs.begin() + static_cast<std::ptrdiff_t>(lo),
                                         inputs.begin() + static_cast<std::ptrdiff_t>(hi));
    auto res = rollout_batch(f, setup, part, true);
    for (std::size_t i = 0; i < res.size(); ++i) out.members[lo + i] = std::move(res[i]);
  });
  std::vector<std::optional<double>> atl, pac;
  std::size_t ok = 0;
  for (const auto& m : out.members) {
    if (!m.error.empty()) continue;
    ++ok;
    atl.push_back(m.collapse_atlantic);
    pac.push_back(m.collapse_pacific);
  }
  out.atlantic = ens::collapse_stats(atl, ok);
  if (box::n_basins(setup.variant) > 1) out.pacific = ens::collapse_stats(pac, ok);
  return out;
}

io::Archive to_archive(const RolloutResult& r, box::Variant v, const box::BoxParams& params) {
  io::Archive a;
  a.id = r.id;
  a.source = "surrogate";
  a.trajectory.variant = v;
  a.trajectory.params = params;
  a.trajectory.channels = r.channels;
  a.trajectory.noise = r.noise;
  const std::size_t n_flux = box::n_fluxes(v);
  if (a.trajectory.noise.values.rows != r.channels.rows) {
    Matrix noise(r.channels.rows, n_flux);
    for (std::size_t t = 0; t < std::min(noise.rows, r.noise.values.rows); ++t) {
      std::copy(r.noise.values.row(t).begin(), r.noise.values.row(t).end(), noise.row(t).begin());
    }
    a.trajectory.noise.values = std::move(noise);
  }
  a.trajectory.collapse_time_atlantic = r.collapse_atlantic;
  a.trajectory.collapse_time_pacific = r.collapse_pacific;
  a.channel_names = box::channel_names(v);
  for (const auto& f : box::flux_names(v)) a.noise_names.push_back("xi_" + f);
  if (!r.error.empty()) a.extra["error"] = r.error;
  return a;
}

}  // namespace tipcast::rollout
