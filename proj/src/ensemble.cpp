#include "tipcast/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tipcast/error.hpp"
#include "tipcast/parallel.hpp"

namespace tipcast::ens {

void ParamBounds::validate() const {
  const auto names = box::covariate_names(base.variant);
  for (const auto& c : covariates) {
    if (std::find(names.begin(), names.end(), c.name) == names.end()) {
      throw InvalidParams("unknown covariate '" + c.name + "' in bounds");
    }
    if (!(c.low <= c.high) || !std::isfinite(c.low) || !std::isfinite(c.high)) {
      throw InvalidParams("bounds for '" + c.name + "' must satisfy low <= high");
    }
  }
}

std::vector<std::string> ParamBounds::varying() const {
  std::vector<std::string> out;
  for (const auto& c : covariates) {
    if (c.low < c.high) out.push_back(c.name);
  }
  return out;
}

box::BoxParams sample_params(const ParamBounds& bounds, Rng& rng) {
  box::BoxParams p = bounds.base;
  for (const auto& c : bounds.covariates) {
    const double u = rng.uniform();
    box::set_covariate(p, c.name, c.low == c.high ? c.low : c.low + (c.high - c.low) * u);
  }
  return p;
}

double percentile(std::vector<double> v, double q) {
  if (v.empty()) throw InvalidArgument("percentile of an empty sample");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

CollapseStats collapse_stats(const std::vector<std::optional<double>>& times,
                             std::size_t n_members) {
  CollapseStats s;
  s.n_members = n_members;
  std::vector<double> hit;
  for (const auto& t : times) {
    if (t) hit.push_back(*t);
  }
  s.n_collapsed = hit.size();
  s.fraction_collapsed =
      n_members == 0 ? 0.0 : static_cast<double>(hit.size()) / static_cast<double>(n_members);
  if (hit.empty()) return s;
  // Sorting first makes the moments independent of member order.
  std::sort(hit.begin(), hit.end());
  const double n = static_cast<double>(hit.size());
  const double mean = std::accumulate(hit.begin(), hit.end(), 0.0) / n;
  s.mean = mean;
  if (hit.size() >= 2) {
    double ss = 0.0;
    for (double t : hit) ss += (t - mean) * (t - mean);
    s.std = std::sqrt(ss / (n - 1.0));
  }
  s.p2_5 = percentile(hit, 0.025);
  s.p50 = percentile(hit, 0.5);
  s.p97_5 = percentile(hit, 0.975);
  return s;
}

EnsembleResult run_ensemble(const box::BoxParams& params, const EnsembleOptions& opt) {
  if (opt.n_members < 1) throw InvalidArgument("n_members must be at least 1");
  params.validate();
  EnsembleResult result;
  result.members.resize(opt.n_members);
  const std::size_t nf = box::n_fluxes(params.variant);
  std::vector<std::optional<double>> atl(opt.n_members), pac(opt.n_members);

  parallel_for(opt.n_members, opt.workers, [&](std::size_t k) {
    Member& m = result.members[k];
    m.seed = split_seed(opt.base_seed, k);
    try {
      const auto noise = box::make_noise(m.seed, opt.sigma, opt.n_steps, nf);
      box::Trajectory traj = box::simulate(params, noise, opt.n_steps);
      atl[k] = traj.collapse_time_atlantic;
      pac[k] = traj.collapse_time_pacific;
      if (opt.keep_trajectories) m.trajectory = std::move(traj);
    } catch (const Error& e) {
      m.error = e.what();
    }
  });

  // Faulted members count toward n_members but contribute no collapse time.
  result.atlantic = collapse_stats(atl, opt.n_members);
  if (params.variant == box::Variant::SixBox) result.pacific = collapse_stats(pac, opt.n_members);
  return result;
}

double relative_tendency(const box::BoxState& state, const box::BoxParams& p) {
  const std::vector<double> zeros(box::n_fluxes(p.variant), 0.0);
  const box::Tendency t = box::tendencies(state, p, zeros);
  double worst = 0.0;
  for (std::size_t i = 0; i < t.dq_salt.size(); ++i) {
    worst = std::max(worst, std::abs(t.dq_salt[i]) / std::abs(state.q_salt[i]));
    const double dtemp = t.dt_advect[i] + t.dt_restore[i];
    worst = std::max(worst, std::abs(dtemp) / std::max(1.0, std::abs(state.t_box[i])));
  }
  for (std::size_t b = 0; b < t.dd_pyc.size(); ++b) {
    worst = std::max(worst, std::abs(t.dd_pyc[b]) / state.d_pyc[b]);
  }
  return worst;
}

BranchTable bifurcation_sweep(const box::BoxParams& params, const std::string& flux_name,
                              std::vector<double> grid, SweepDirection direction,
                              double settle_years, const box::BoxState* start) {
  if (!(settle_years > 0.0)) throw InvalidArgument("settle_years must be positive");
  std::sort(grid.begin(), grid.end());
  if (direction == SweepDirection::Down) std::reverse(grid.begin(), grid.end());
  const auto settle_steps = static_cast<std::size_t>(std::llround(settle_years / box::kDtYears));

  BranchTable table;
  table.flux_name = flux_name;
  table.direction = direction;
  box::BoxParams p = params;
  box::BoxState state = start != nullptr ? *start : box::initial_state(params);
  for (double value : grid) {
    box::set_covariate(p, flux_name, value);
    BranchPoint pt;
    pt.flux = value;
    try {
      state = box::integrate(state, p, nullptr, settle_steps);
      const auto fluxes = box::compute_fluxes(state, p);
      for (double m : fluxes.m_n) pt.m_n_sv.push_back(m / box::kSverdrup);
      pt.residual = relative_tendency(state, p);
      pt.converged = pt.residual < kEquilibriumTolerance;
    } catch (const Error& e) {
      pt.error = e.what();
      // Restart the continuation from the nominal initial state.
      state = box::initial_state(params);
    }
    table.points.push_back(std::move(pt));
  }
  table.final_state = state;
  return table;
}

Hysteresis hysteresis_sweep(const box::BoxParams& params, const std::string& flux_name,
                            const std::vector<double>& grid, double settle_years) {
  Hysteresis h;
  h.up = bifurcation_sweep(params, flux_name, grid, SweepDirection::Up, settle_years);
  h.down = bifurcation_sweep(params, flux_name, grid, SweepDirection::Down, settle_years,
                             &h.up.final_state);
  std::reverse(h.down.points.begin(), h.down.points.end());
  return h;
}

}  // namespace tipcast::ens
