#include "tipcast/boxmodel.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include "tipcast/error.hpp"
#include "tipcast/rng.hpp"

namespace tipcast::box {
namespace {

constexpr std::size_t kSouth = 0;

std::size_t low_box(std::size_t basin) { return 1 + 2 * basin; }
std::size_t north_box(std::size_t basin) { return 2 + 2 * basin; }

bool finite(double x) { return std::isfinite(x); }

void require_size(const std::vector<double>& v, std::size_t n, const char* name) {
  if (v.size() != n) {
    throw InvalidParams(std::string(name) + " has " + std::to_string(v.size()) +
                        " entries, expected " + std::to_string(n));
  }
}

void require_positive(double x, const std::string& name) {
  if (!(x > 0.0) || !finite(x)) throw InvalidParams(name + " must be positive and finite");
}

using Accessor = std::function<double&(BoxParams&)>;

std::vector<std::pair<std::string, Accessor>> covariate_table(Variant v) {
  std::vector<std::pair<std::string, Accessor>> t;
  const auto fluxes = flux_names(v);
  const auto basins = basin_names(v);
  const auto boxes = box_names(v);
  for (std::size_t i = 0; i < fluxes.size(); ++i) {
    t.emplace_back("fw_" + fluxes[i], [i](BoxParams& p) -> double& { return p.fw_base[i]; });
  }
  t.emplace_back("m_ek", [](BoxParams& p) -> double& { return p.m_ek; });
  t.emplace_back("a_gm_coeff", [](BoxParams& p) -> double& { return p.a_gm_coeff; });
  t.emplace_back("k_v", [](BoxParams& p) -> double& { return p.k_v; });
  for (std::size_t b = 0; b < basins.size(); ++b) {
    t.emplace_back("c_hydraulic_" + basins[b],
                   [b](BoxParams& p) -> double& { return p.c_hydraulic[b]; });
    t.emplace_back("area_low_" + basins[b], [b](BoxParams& p) -> double& { return p.area_low[b]; });
    t.emplace_back("v_north_" + basins[b], [b](BoxParams& p) -> double& { return p.v_north[b]; });
    t.emplace_back("d_init_" + basins[b], [b](BoxParams& p) -> double& { return p.d_init[b]; });
  }
  if (v == Variant::SixBox) {
    // The Pacific share is slaved to the Atlantic one (see set_covariate).
    t.emplace_back("basin_frac_atlantic", [](BoxParams& p) -> double& { return p.basin_frac[0]; });
    t.emplace_back("m_ib", [](BoxParams& p) -> double& { return p.m_ib; });
  }
  t.emplace_back("v_south", [](BoxParams& p) -> double& { return p.v_south; });
  t.emplace_back("v_total", [](BoxParams& p) -> double& { return p.v_total; });
  for (std::size_t i = 0; i + 1 < boxes.size(); ++i) {
    t.emplace_back("t_target_" + boxes[i], [i](BoxParams& p) -> double& { return p.t_target[i]; });
  }
  t.emplace_back("tau_relax", [](BoxParams& p) -> double& { return p.tau_relax; });
  t.emplace_back("alpha", [](BoxParams& p) -> double& { return p.alpha; });
  t.emplace_back("beta", [](BoxParams& p) -> double& { return p.beta; });
  t.emplace_back("rho0", [](BoxParams& p) -> double& { return p.rho0; });
  t.emplace_back("s_ref", [](BoxParams& p) -> double& { return p.s_ref; });
  t.emplace_back("t_ref", [](BoxParams& p) -> double& { return p.t_ref; });
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    t.emplace_back("s_init_" + boxes[i], [i](BoxParams& p) -> double& { return p.s_init[i]; });
    t.emplace_back("t_init_" + boxes[i], [i](BoxParams& p) -> double& { return p.t_init[i]; });
  }
  return t;
}

// Sizes every per-basin / per-box vector for the variant so accessors are safe.
void conform(BoxParams& p) {
  const Variant v = p.variant;
  p.fw_base.resize(n_fluxes(v), 0.0);
  p.c_hydraulic.resize(n_basins(v), 0.0);
  p.area_low.resize(n_basins(v), 0.0);
  p.basin_frac.resize(n_basins(v), v == Variant::FourBox ? 1.0 : 0.5);
  p.v_north.resize(n_basins(v), 0.0);
  p.d_init.resize(n_basins(v), 0.0);
  p.t_target.resize(n_boxes(v) - 1, 0.0);
  p.s_init.resize(n_boxes(v), 0.0);
  p.t_init.resize(n_boxes(v), 0.0);
}

const Accessor& find_accessor(const std::vector<std::pair<std::string, Accessor>>& table,
                              std::string_view name, Variant v) {
  for (const auto& [n, acc] : table) {
    if (n == name) return acc;
  }
  throw InvalidArgument("unknown covariate '" + std::string(name) + "' for " +
                        std::string(to_string(v)));
}

}  // namespace

std::string_view to_string(Variant v) { return v == Variant::FourBox ? "four-box" : "six-box"; }

Variant variant_from_string(std::string_view s) {
  if (s == "four-box") return Variant::FourBox;
  if (s == "six-box") return Variant::SixBox;
  throw InvalidArgument("unknown model variant '" + std::string(s) + "'");
}

std::size_t n_basins(Variant v) { return v == Variant::FourBox ? 1 : 2; }
std::size_t n_boxes(Variant v) { return 2 + 2 * n_basins(v); }
std::size_t n_fluxes(Variant v) { return v == Variant::FourBox ? 2 : 4; }
std::size_t n_channels(Variant v) { return v == Variant::FourBox ? 11 : 21; }

std::vector<std::string> box_names(Variant v) {
  if (v == Variant::FourBox) return {"south", "low", "north", "deep"};
  return {"south", "low_atlantic", "north_atlantic", "low_pacific", "north_pacific", "deep"};
}

std::vector<std::string> basin_names(Variant v) {
  if (v == Variant::FourBox) return {"atlantic"};
  return {"atlantic", "pacific"};
}

std::vector<std::string> flux_names(Variant v) {
  if (v == Variant::FourBox) return {"north", "south"};
  return {"south", "north_atlantic", "north_pacific", "interbasin"};
}

std::vector<std::string> channel_names(Variant v) {
  if (v == Variant::FourBox) {
    return {"m_n",    "m_u",   "m_eddy",  "m_s_residual", "d_pyc",  "s_south",
            "s_low",  "s_north", "s_deep", "t_north",      "t_deep"};
  }
  std::vector<std::string> names = {"m_n_atl", "m_n_pac",      "m_u_atl", "m_u_pac",  "m_eddy",
                                    "m_s_residual", "m_ib", "d_pyc_atl", "d_pyc_pac"};
  for (const auto& b : box_names(v)) names.push_back("t_" + b);
  for (const auto& b : box_names(v)) names.push_back("s_" + b);
  return names;
}

std::size_t overturning_channel(Variant v, std::string_view basin) {
  if (basin == "atlantic") return 0;
  if (basin == "pacific" && v == Variant::SixBox) return 1;
  throw UnknownBasin("basin '" + std::string(basin) + "' does not exist in the " +
                     std::string(to_string(v)) + " model");
}

std::vector<std::string> covariate_names(Variant v) {
  std::vector<std::string> names;
  for (auto& [n, acc] : covariate_table(v)) names.push_back(n);
  return names;
}

double get_covariate(const BoxParams& p, std::string_view name) {
  BoxParams copy = p;
  conform(copy);
  const auto table = covariate_table(p.variant);
  return find_accessor(table, name, p.variant)(copy);
}

void set_covariate(BoxParams& p, std::string_view name, double value) {
  conform(p);
  const auto table = covariate_table(p.variant);
  find_accessor(table, name, p.variant)(p) = value;
  if (name == "basin_frac_atlantic") p.basin_frac[1] = 1.0 - value;
}

void BoxParams::validate() const {
  const Variant v = variant;
  require_size(fw_base, n_fluxes(v), "fw_base");
  require_size(c_hydraulic, n_basins(v), "c_hydraulic");
  require_size(area_low, n_basins(v), "area_low");
  require_size(basin_frac, n_basins(v), "basin_frac");
  require_size(v_north, n_basins(v), "v_north");
  require_size(d_init, n_basins(v), "d_init");
  require_size(t_target, n_boxes(v) - 1, "t_target");
  require_size(s_init, n_boxes(v), "s_init");
  require_size(t_init, n_boxes(v), "t_init");
  for (std::size_t b = 0; b < n_basins(v); ++b) {
    require_positive(area_low[b], "area_low");
    require_positive(v_north[b], "v_north");
    require_positive(c_hydraulic[b], "c_hydraulic");
    if (!(d_init[b] > 0.0 && d_init[b] < 4000.0)) {
      throw InvalidParams("d_init must lie in (0, 4000) m");
    }
  }
  require_positive(k_v, "k_v");
  require_positive(v_south, "v_south");
  require_positive(v_total, "v_total");
  require_positive(tau_relax, "tau_relax");
  require_positive(rho0, "rho0");
  if (!(a_gm_coeff >= 0.0) || !(m_ek >= 0.0)) {
    throw InvalidParams("a_gm_coeff and m_ek must be non-negative");
  }
  if (v == Variant::FourBox) {
    if (basin_frac[0] != 1.0) throw InvalidParams("four-box basin_frac must be {1}");
  } else {
    double sum = 0.0;
    for (double f : basin_frac) {
      if (!(f > 0.0 && f < 1.0)) throw InvalidParams("basin_frac entries must lie in (0, 1)");
      sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw InvalidParams("basin_frac must sum to 1");
  }
  double fixed = v_south;
  for (std::size_t b = 0; b < n_basins(v); ++b) fixed += v_north[b] + area_low[b] * d_init[b];
  if (!(fixed < v_total)) throw InvalidParams("v_total leaves no volume for the deep box");
  for (std::size_t i = 0; i < n_boxes(v); ++i) {
    if (!(s_init[i] > 0.0 && s_init[i] < 60.0)) throw InvalidParams("s_init must lie in (0, 60)");
    if (!finite(t_init[i])) throw InvalidParams("t_init must be finite");
  }
}

NoiseSeq make_noise(std::uint64_t seed, double sigma, std::size_t n_steps, std::size_t n_fluxes) {
  NoiseSeq noise{seed, sigma, Matrix(n_steps, n_fluxes)};
  if (sigma == 0.0) return noise;
  for (std::size_t t = 0; t < n_steps; ++t) {
    for (std::size_t f = 0; f < n_fluxes; ++f) noise.values(t, f) = sigma * normal_at(seed, t, f);
  }
  return noise;
}

double density(double t, double s, const BoxParams& p) {
  return p.rho0 * (1.0 - p.alpha * (t - p.t_ref) + p.beta * (s - p.s_ref));
}

std::vector<double> box_volumes(const BoxState& state, const BoxParams& p) {
  const std::size_t nb = n_basins(p.variant);
  std::vector<double> vol(n_boxes(p.variant));
  vol[kSouth] = p.v_south;
  double deep = p.v_total - p.v_south;
  for (std::size_t b = 0; b < nb; ++b) {
    vol[low_box(b)] = p.area_low[b] * state.d_pyc[b];
    vol[north_box(b)] = p.v_north[b];
    deep -= vol[low_box(b)] + vol[north_box(b)];
  }
  vol.back() = deep;
  return vol;
}

std::vector<double> salinities(const BoxState& state, const BoxParams& p) {
  const auto vol = box_volumes(state, p);
  std::vector<double> s(vol.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = state.q_salt[i] / vol[i];
  return s;
}

BoxState initial_state(const BoxParams& p) {
  BoxState st;
  st.d_pyc = p.d_init;
  st.t_box = p.t_init;
  st.q_salt.assign(n_boxes(p.variant), 0.0);
  const auto vol = box_volumes(st, p);
  for (std::size_t i = 0; i < vol.size(); ++i) st.q_salt[i] = p.s_init[i] * vol[i];
  return st;
}

FluxSet compute_fluxes(const BoxState& state, const BoxParams& p) {
  const std::size_t nb = n_basins(p.variant);
  for (double d : state.d_pyc) {
    if (!(d > 0.0)) throw SimulationFault("pycnocline depth must be positive");
  }
  const auto sal = salinities(state, p);
  FluxSet f;
  f.m_n.resize(nb);
  f.m_u.resize(nb);
  f.m_eddy_basin.resize(nb);
  for (std::size_t b = 0; b < nb; ++b) {
    const double d = state.d_pyc[b];
    const double rho_north = density(state.t_box[north_box(b)], sal[north_box(b)], p);
    const double rho_low = density(state.t_box[low_box(b)], sal[low_box(b)], p);
    f.m_n[b] = p.c_hydraulic[b] * (rho_north - rho_low) * d * d;
    f.m_u[b] = p.k_v * p.area_low[b] / d;
    f.m_eddy_basin[b] = p.a_gm_coeff * p.basin_frac[b] * d;
    f.m_eddy += f.m_eddy_basin[b];
  }
  f.m_s_residual = p.m_ek - f.m_eddy;
  f.m_ib_effective = p.variant == Variant::SixBox ? p.m_ib : 0.0;
  return f;
}

Tendency tendencies(const BoxState& state, const BoxParams& p, std::span<const double> noise_row) {
  const Variant v = p.variant;
  const std::size_t nb = n_basins(v);
  const std::size_t nbox = n_boxes(v);
  const std::size_t deep = nbox - 1;
  if (noise_row.size() != n_fluxes(v)) {
    throw InvalidArgument("noise row has " + std::to_string(noise_row.size()) +
                          " entries, expected " + std::to_string(n_fluxes(v)));
  }
  const FluxSet f = compute_fluxes(state, p);
  const auto vol = box_volumes(state, p);
  std::vector<double> sal(nbox);
  for (std::size_t i = 0; i < nbox; ++i) sal[i] = state.q_salt[i] / vol[i];

  Tendency tend;
  tend.dq_salt.assign(nbox, 0.0);
  tend.dt_advect.assign(nbox, 0.0);
  tend.dt_restore.assign(nbox, 0.0);
  tend.dd_pyc.assign(nb, 0.0);

  // Upwind volume transport `flow` >= 0 from box `src` into box `dst`.
  auto transport = [&](std::size_t src, std::size_t dst, double flow) {
    if (flow <= 0.0) return;
    const double salt = flow * sal[src];
    tend.dq_salt[src] -= salt;
    tend.dq_salt[dst] += salt;
    tend.dt_advect[dst] += flow * (state.t_box[src] - state.t_box[dst]) / vol[dst];
  };

  transport(deep, kSouth, p.m_ek);
  for (std::size_t b = 0; b < nb; ++b) {
    transport(kSouth, low_box(b), p.m_ek * p.basin_frac[b]);
    transport(low_box(b), kSouth, f.m_eddy_basin[b]);
    transport(deep, low_box(b), f.m_u[b]);
    if (f.m_n[b] >= 0.0) {
      transport(low_box(b), north_box(b), f.m_n[b]);
      transport(north_box(b), deep, f.m_n[b]);
    } else {
      transport(deep, north_box(b), -f.m_n[b]);
      transport(north_box(b), low_box(b), -f.m_n[b]);
    }
  }
  transport(kSouth, deep, f.m_eddy);
  if (v == Variant::SixBox) {
    transport(low_box(1), low_box(0), f.m_ib_effective);
    transport(low_box(0), low_box(1), -f.m_ib_effective);
  }

  // Virtual salt fluxes F_w * s_ref, F_w = baseline + noise.
  auto freshwater = [&](std::size_t from, std::size_t to, double fw) {
    tend.dq_salt[from] -= fw * p.s_ref;
    tend.dq_salt[to] += fw * p.s_ref;
  };
  std::vector<double> fw(p.fw_base.size());
  for (std::size_t i = 0; i < fw.size(); ++i) fw[i] = p.fw_base[i] + noise_row[i];
  if (v == Variant::FourBox) {
    freshwater(north_box(0), low_box(0), fw[0]);
    freshwater(kSouth, low_box(0), fw[1]);
  } else {
    for (std::size_t b = 0; b < nb; ++b) freshwater(kSouth, low_box(b), fw[0] * p.basin_frac[b]);
    freshwater(north_box(0), low_box(0), fw[1]);
    freshwater(north_box(1), low_box(1), fw[2]);
    freshwater(low_box(1), low_box(0), fw[3]);
  }

  for (std::size_t b = 0; b < nb; ++b) {
    double net = p.m_ek * p.basin_frac[b] - f.m_eddy_basin[b] + f.m_u[b] - f.m_n[b];
    if (v == Variant::SixBox) net += b == 0 ? f.m_ib_effective : -f.m_ib_effective;
    tend.dd_pyc[b] = net / p.area_low[b];
  }
  for (std::size_t i = 0; i < deep; ++i) {
    tend.dt_restore[i] = (p.t_target[i] - state.t_box[i]) / p.tau_relax;
  }

  for (std::size_t i = 0; i < nbox; ++i) {
    if (!finite(tend.dq_salt[i]) || !finite(tend.dt_advect[i]) || !finite(tend.dt_restore[i])) {
      throw SimulationFault("non-finite tendency in box " + box_names(v)[i]);
    }
  }
  for (double d : tend.dd_pyc) {
    if (!finite(d)) throw SimulationFault("non-finite pycnocline tendency");
  }
  return tend;
}

BoxState euler_step(const BoxState& state, const BoxParams& p, std::span<const double> noise_row,
                    double dt_seconds) {
  if (!(dt_seconds >= 0.0)) throw InvalidArgument("dt must be non-negative");
  const Tendency tend = tendencies(state, p, noise_row);
  const std::size_t nbox = n_boxes(p.variant);
  const double relax = dt_seconds / p.tau_relax;

  BoxState next = state;
  for (std::size_t i = 0; i < nbox; ++i) next.q_salt[i] += dt_seconds * tend.dq_salt[i];
  for (std::size_t b = 0; b < next.d_pyc.size(); ++b) next.d_pyc[b] += dt_seconds * tend.dd_pyc[b];
  for (std::size_t i = 0; i < nbox; ++i) {
    if (i + 1 < nbox) {
      // Implicit in the restoring term: T' = (T + dt*adv + r*T*) / (1 + r).
      const double incr =
          (dt_seconds * tend.dt_advect[i] + relax * (p.t_target[i] - state.t_box[i])) / (1.0 + relax);
      next.t_box[i] += incr;
    } else {
      next.t_box[i] += dt_seconds * tend.dt_advect[i];
    }
  }
  next.time = state.time + dt_seconds / kSecondsPerYear;

  for (double d : next.d_pyc) {
    if (!(d > 0.0 && d < 4000.0)) {
      throw SimulationFault("pycnocline depth left (0, 4000) m: " + std::to_string(d));
    }
  }
  const auto vol = box_volumes(next, p);
  if (!(vol.back() > 0.0)) throw SimulationFault("deep box volume became non-positive");
  for (std::size_t i = 0; i < nbox; ++i) {
    const double s = next.q_salt[i] / vol[i];
    if (!(s > 0.0 && s < 60.0)) {
      throw SimulationFault("salinity of box " + box_names(p.variant)[i] +
                            " left (0, 60) psu: " + std::to_string(s));
    }
    if (!finite(next.t_box[i])) throw SimulationFault("non-finite temperature");
  }
  return next;
}

std::vector<double> observe(const BoxState& state, const BoxParams& p) {
  const FluxSet f = compute_fluxes(state, p);
  const auto sal = salinities(state, p);
  const auto& t = state.t_box;
  if (p.variant == Variant::FourBox) {
    return {f.m_n[0] / kSverdrup, f.m_u[0] / kSverdrup, f.m_eddy / kSverdrup,
            f.m_s_residual / kSverdrup, state.d_pyc[0], sal[0], sal[1], sal[2], sal[3], t[2], t[3]};
  }
  std::vector<double> out = {f.m_n[0] / kSverdrup,      f.m_n[1] / kSverdrup,
                             f.m_u[0] / kSverdrup,      f.m_u[1] / kSverdrup,
                             f.m_eddy / kSverdrup,      f.m_s_residual / kSverdrup,
                             f.m_ib_effective / kSverdrup, state.d_pyc[0], state.d_pyc[1]};
  out.insert(out.end(), t.begin(), t.end());
  out.insert(out.end(), sal.begin(), sal.end());
  return out;
}

BoxState integrate(BoxState state, const BoxParams& p, const NoiseSeq* noise, std::size_t n_steps) {
  const std::vector<double> zeros(n_fluxes(p.variant), 0.0);
  const double dt = kDtYears * kSecondsPerYear;
  for (std::size_t k = 0; k < n_steps; ++k) {
    const std::span<const double> row =
        noise != nullptr ? noise->values.row(k) : std::span<const double>(zeros);
    try {
      state = euler_step(state, p, row, dt);
    } catch (const SimulationFault& fault) {
      throw SimulationFault(fault.what(), static_cast<long>(k));
    }
  }
  return state;
}

Trajectory simulate(const BoxParams& p, const NoiseSeq& noise, std::size_t n_steps) {
  p.validate();
  if (noise.values.rows < n_steps) {
    throw InvalidArgument("noise has " + std::to_string(noise.values.rows) + " rows, need " +
                          std::to_string(n_steps));
  }
  if (noise.values.cols != n_fluxes(p.variant)) {
    throw InvalidArgument("noise has " + std::to_string(noise.values.cols) +
                          " columns, expected " + std::to_string(n_fluxes(p.variant)));
  }
  Trajectory traj;
  traj.variant = p.variant;
  traj.params = p;
  traj.noise = noise;
  traj.channels = Matrix(n_steps, n_channels(p.variant));
  const double dt = kDtYears * kSecondsPerYear;
  BoxState state = initial_state(p);
  for (std::size_t k = 0; k < n_steps; ++k) {
    try {
      const auto obs = observe(state, p);
      std::copy(obs.begin(), obs.end(), traj.channels.row(k).begin());
      if (k + 1 < n_steps) state = euler_step(state, p, noise.values.row(k), dt);
    } catch (const SimulationFault& fault) {
      throw SimulationFault(fault.what(), static_cast<long>(k));
    }
  }
  traj.collapse_time_atlantic = detect_collapse(traj, "atlantic");
  if (p.variant == Variant::SixBox) traj.collapse_time_pacific = detect_collapse(traj, "pacific");
  return traj;
}

std::optional<double> first_negative_time(std::span<const double> series, double dt_years) {
  for (std::size_t k = 0; k < series.size(); ++k) {
    if (series[k] < 0.0) return static_cast<double>(k) * dt_years;
  }
  return std::nullopt;
}

std::optional<double> detect_collapse(const Matrix& channels, Variant v, std::string_view basin,
                                      double dt_years) {
  const std::size_t c = overturning_channel(v, basin);
  return first_negative_time(channels.column(c), dt_years);
}

std::optional<double> detect_collapse(const Trajectory& traj, std::string_view basin) {
  return detect_collapse(traj.channels, traj.variant, basin, traj.dt_years);
}

}  // namespace tipcast::box
