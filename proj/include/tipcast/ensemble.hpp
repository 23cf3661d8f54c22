// Parameter sampling, stochastic ensembles, collapse-time statistics and
// quasi-static bifurcation sweeps.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tipcast/boxmodel.hpp"
#include "tipcast/rng.hpp"

namespace tipcast::ens {

struct CovariateBound {
  std::string name;
  double low = 0.0;
  double high = 0.0;
};

/// Uniform sampling box around a base parameter set. Covariates not listed
/// keep their base value.
struct ParamBounds {
  box::BoxParams base;
  std::vector<CovariateBound> covariates;
  std::uint64_t seed = 0;

  /// Throws InvalidParams if any low > high or a name is unknown.
  void validate() const;
  /// Names of covariates with low < high, in declaration order. These are the
  /// static covariates exposed to the surrogate.
  std::vector<std::string> varying() const;
};

box::BoxParams sample_params(const ParamBounds& bounds, Rng& rng);

struct CollapseStats {
  std::size_t n_members = 0;
  std::size_t n_collapsed = 0;
  double fraction_collapsed = 0.0;
  // Absent when no member collapsed; std additionally needs two members.
  std::optional<double> mean;
  std::optional<double> std;
  std::optional<double> p2_5;
  std::optional<double> p50;
  std::optional<double> p97_5;

  bool operator==(const CollapseStats&) const = default;
};

/// Linear interpolation between order statistics (position q * (n - 1)).
double percentile(std::vector<double> sorted_values, double q);

/// Statistics over collapsed members only; std uses the (n - 1) convention.
CollapseStats collapse_stats(const std::vector<std::optional<double>>& times, std::size_t n_members);

struct Member {
  std::uint64_t seed = 0;
  std::optional<box::Trajectory> trajectory;
  std::string error;  // non-empty when the member faulted
};

struct EnsembleResult {
  std::vector<Member> members;
  CollapseStats atlantic;
  std::optional<CollapseStats> pacific;
};

struct EnsembleOptions {
  std::size_t n_members = 1;
  double sigma = 1.0e5;
  std::uint64_t base_seed = 0;
  std::size_t n_steps = 4000;
  std::size_t workers = 1;
  bool keep_trajectories = true;
};

/// Member k is driven by NoiseSeq(split_seed(base_seed, k), sigma). Faulting
/// members are reported, not fatal.
EnsembleResult run_ensemble(const box::BoxParams& params, const EnsembleOptions& options);

enum class SweepDirection { Up, Down };

struct BranchPoint {
  double flux = 0.0;
  std::vector<double> m_n_sv;  // equilibrium overturning per basin
  double residual = 0.0;       // max relative tendency, 1/s
  bool converged = false;
  std::string error;
};

struct BranchTable {
  std::string flux_name;
  SweepDirection direction = SweepDirection::Up;
  std::vector<BranchPoint> points;  // in sweep order
  box::BoxState final_state;
};

/// Equilibrium tolerance: max_i |dx_i/dt| / scale_i < kEquilibriumTolerance (1/s).
inline constexpr double kEquilibriumTolerance = 1e-10;

/// Max over prognostic variables of |tendency| / state scale (1/s).
double relative_tendency(const box::BoxState& state, const box::BoxParams& p);

/// Quasi-static continuation in the named covariate (usually fw_north or
/// fw_north_atlantic). The grid is visited in increasing order for Up and
/// decreasing order for Down; each point integrates settle_years with sigma = 0
/// from the previous equilibrium (or from `start`, when given, for the first
/// point; otherwise from the parameters' initial state).
BranchTable bifurcation_sweep(const box::BoxParams& params, const std::string& flux_name,
                              std::vector<double> grid, SweepDirection direction,
                              double settle_years, const box::BoxState* start = nullptr);

struct Hysteresis {
  BranchTable up;
  BranchTable down;  // reported in increasing flux order, like `up`
};

/// Up-sweep from the initial state, then down-sweep starting from the final
/// up-sweep equilibrium.
Hysteresis hysteresis_sweep(const box::BoxParams& params, const std::string& flux_name,
                            const std::vector<double>& grid, double settle_years);

}  // namespace tipcast::ens
