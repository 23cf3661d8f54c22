// Four-box (Atlantic only) and six-box (Atlantic + Pacific) overturning
// models in flux form, with additive white-noise freshwater forcing.
//
// Box indices: 0 = south, 1 + 2b = low-latitude box of basin b,
// 2 + 2b = high-latitude (north) box of basin b, last = deep.
// Basin 0 is the Atlantic, basin 1 (six-box only) the Pacific.
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tipcast/matrix.hpp"

namespace tipcast::box {

inline constexpr double kSecondsPerYear = 365.25 * 86400.0;
inline constexpr double kDtYears = 0.25;
inline constexpr double kSverdrup = 1.0e6;

enum class Variant { FourBox, SixBox };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);

std::size_t n_basins(Variant v);
std::size_t n_boxes(Variant v);
std::size_t n_fluxes(Variant v);
std::size_t n_channels(Variant v);

std::vector<std::string> box_names(Variant v);
std::vector<std::string> basin_names(Variant v);
/// Freshwater flux names in NoiseSeq column order.
std::vector<std::string> flux_names(Variant v);
/// Fixed observed-channel layout.
std::vector<std::string> channel_names(Variant v);
/// Index of the overturning channel m_n for `basin` ("atlantic"/"pacific").
std::size_t overturning_channel(Variant v, std::string_view basin);

struct BoxParams {
  Variant variant = Variant::FourBox;
  std::vector<double> fw_base;      // m^3/s, flux_names() order
  double m_ek = 0.0;                // m^3/s
  double a_gm_coeff = 0.0;          // m^2/s, L_x/L_y folded in
  double k_v = 0.0;                 // m^2/s
  std::vector<double> c_hydraulic;  // per basin, m^4 s^-1 kg^-1
  std::vector<double> area_low;     // per basin, m^2
  std::vector<double> basin_frac;   // per basin, sums to 1
  double v_south = 0.0;             // m^3
  std::vector<double> v_north;      // per basin, m^3
  double v_total = 0.0;             // m^3
  std::vector<double> t_target;     // per surface box (all but deep), degC
  double tau_relax = 0.0;           // s
  double alpha = 0.0, beta = 0.0, rho0 = 0.0, s_ref = 0.0, t_ref = 0.0;
  std::vector<double> d_init;       // per basin, m
  std::vector<double> s_init;       // per box, psu
  std::vector<double> t_init;       // per box, degC
  double m_ib = 0.0;                // m^3/s, Pacific-low -> Atlantic-low (six-box)

  /// Throws InvalidParams on any violated invariant.
  void validate() const;
  bool operator==(const BoxParams&) const = default;
};

/// Names of every scalar covariate addressable through get/set_covariate,
/// covering all fields of BoxParams for the variant.
std::vector<std::string> covariate_names(Variant v);
double get_covariate(const BoxParams& p, std::string_view name);
void set_covariate(BoxParams& p, std::string_view name, double value);

struct BoxState {
  std::vector<double> q_salt;  // psu m^3
  std::vector<double> t_box;   // degC
  std::vector<double> d_pyc;   // m
  double time = 0.0;           // years
};

struct NoiseSeq {
  std::uint64_t seed = 0;
  double sigma = 0.0;
  Matrix values;  // [n_steps x n_fluxes]
};

/// Noise element (t, f) = sigma * N(0,1) drawn at Philox coordinate (t, f).
NoiseSeq make_noise(std::uint64_t seed, double sigma, std::size_t n_steps, std::size_t n_fluxes);

struct FluxSet {
  std::vector<double> m_n;        // per basin, signed
  std::vector<double> m_u;        // per basin
  std::vector<double> m_eddy_basin;
  double m_eddy = 0.0;            // total eddy return
  double m_s_residual = 0.0;      // m_ek - m_eddy
  double m_ib_effective = 0.0;
};

struct Tendency {
  std::vector<double> dq_salt;     // psu m^3 / s
  std::vector<double> dt_advect;   // degC / s
  std::vector<double> dt_restore;  // degC / s, (t_target - t) / tau
  std::vector<double> dd_pyc;      // m / s
};

double density(double t, double s, const BoxParams& p);

std::vector<double> box_volumes(const BoxState& state, const BoxParams& p);
std::vector<double> salinities(const BoxState& state, const BoxParams& p);

BoxState initial_state(const BoxParams& p);

FluxSet compute_fluxes(const BoxState& state, const BoxParams& p);

/// Flux-form tendencies with F_w = fw_base + noise_row.
Tendency tendencies(const BoxState& state, const BoxParams& p, std::span<const double> noise_row);

/// Forward Euler for salt content and pycnocline depth; temperatures use the
/// advective tendency explicitly and the linear restoring implicitly.
BoxState euler_step(const BoxState& state, const BoxParams& p, std::span<const double> noise_row,
                    double dt_seconds);

/// Observed channels for a state, in channel_names() order.
std::vector<double> observe(const BoxState& state, const BoxParams& p);

struct Trajectory {
  double dt_years = kDtYears;
  Variant variant = Variant::FourBox;
  Matrix channels;  // [n_steps x n_channels]
  NoiseSeq noise;
  BoxParams params;
  std::optional<double> collapse_time_atlantic;
  std::optional<double> collapse_time_pacific;

  std::size_t n_steps() const { return channels.rows; }
};

/// Records n_steps states (row k is the state at time k * dt); the step from
/// row k to row k + 1 is forced with noise row k.
Trajectory simulate(const BoxParams& p, const NoiseSeq& noise, std::size_t n_steps);

/// Final state after integrating n_steps from `state` (no recording).
BoxState integrate(BoxState state, const BoxParams& p, const NoiseSeq* noise, std::size_t n_steps);

/// Earliest time index * dt at which the series is strictly negative.
std::optional<double> first_negative_time(std::span<const double> series, double dt_years);

std::optional<double> detect_collapse(const Trajectory& traj, std::string_view basin);

/// Shared by trajectories and rollouts: collapse time from a channel matrix.
std::optional<double> detect_collapse(const Matrix& channels, Variant v, std::string_view basin,
                                      double dt_years);

}  // namespace tipcast::box
