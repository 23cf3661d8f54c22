// Acceptance suite. `tipcast_acceptance N` runs criterion N and prints one
// PASS/FAIL line; without arguments every criterion runs in order.
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "tipcast/autodiff.hpp"
#include "tipcast/boxmodel.hpp"
#include "tipcast/defaults.hpp"
#include "tipcast/ensemble.hpp"
#include "tipcast/error.hpp"
#include "tipcast/eval.hpp"
#include "tipcast/pipeline.hpp"
#include "tipcast/rollout.hpp"
#include "tipcast/sdtw.hpp"
#include "tipcast/tft.hpp"
#include "tipcast/train.hpp"

using namespace tipcast;
namespace fs = std::filesystem;
using ad::Tape;
using ad::Var;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string f(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

const Defaults& defaults() {
  static const Defaults d = load_defaults();
  return d;
}

Matrix uniform_matrix(Rng& rng, std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (double& v : m.data) v = rng.uniform(lo, hi);
  return m;
}

fs::path artifact_dir(const std::string& name) {
  const fs::path p = fs::current_path() / "acceptance_artifacts" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---- soft-DTW oracles, built on a path enumeration of their own ----

void all_paths(std::size_t i, std::size_t j, std::size_t n, std::size_t m, std::vector<std::pair<std::size_t, std::size_t>>& cur,
               std::vector<std::vector<std::pair<std::size_t, std::size_t>>>& out) {
  cur.emplace_back(i, j);
  if (i == n - 1 && j == m - 1) {
    out.push_back(cur);
  } else {
    if (i + 1 < n) all_paths(i + 1, j, n, m, cur, out);
    if (j + 1 < m) all_paths(i, j + 1, n, m, cur, out);
    if (i + 1 < n && j + 1 < m) all_paths(i + 1, j + 1, n, m, cur, out);
  }
  cur.pop_back();
}

std::vector<double> path_costs(const Matrix& x, const Matrix& y) {
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> paths;
  std::vector<std::pair<std::size_t, std::size_t>> cur;
  all_paths(0, 0, x.rows, y.rows, cur, paths);
  std::vector<double> costs;
  for (const auto& p : paths) {
    double c = 0.0;
    for (auto [i, j] : p) {
      for (std::size_t k = 0; k < x.cols; ++k) c += (x(i, k) - y(j, k)) * (x(i, k) - y(j, k));
    }
    costs.push_back(c);
  }
  return costs;
}

double lse_oracle(const Matrix& x, const Matrix& y, double gamma) {
  const auto costs = path_costs(x, y);
  const double lo = *std::min_element(costs.begin(), costs.end());
  double s = 0.0;
  for (double c : costs) s += std::exp(-(c - lo) / gamma);
  return lo - gamma * std::log(s);
}

double min_path_oracle(const Matrix& x, const Matrix& y) {
  const auto costs = path_costs(x, y);
  return *std::min_element(costs.begin(), costs.end());
}

// ---- criteria ----

Outcome c01_sdtw_exact() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(101);
  double worst = 0.0;
  std::size_t n_checked = 0;
  for (std::size_t n = 1; n <= 5; ++n) {
    for (std::size_t m = 1; m <= 5; ++m) {
      for (int rep = 0; rep < 100; ++rep) {
        const Matrix x = uniform_matrix(rng, n, 3), y = uniform_matrix(rng, m, 3);
        const double o = lse_oracle(x, y, 1.0);
        worst = std::max(worst, std::abs(sdtw::sdtw_forward(x, y, 1.0).loss - o) / std::abs(o));
        ++n_checked;
      }
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-9 && secs < 5.0,
          "max rel err " + f("%.3e", worst) + " over " + std::to_string(n_checked) + " instances (tol 1e-9), " +
              f("%.2f", secs) + " s (limit 5 s)"};
}

Outcome c02_sdtw_grad() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(202);
  const double eps = 1e-6;
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const Matrix x = uniform_matrix(rng, 8, 3), y = uniform_matrix(rng, 10, 3);
    const auto fw = sdtw::sdtw_forward(x, y, 1.0);
    const Matrix g = sdtw::sdtw_grad(x, y, fw, 1.0);
    for (std::size_t i = 0; i < x.data.size(); ++i) {
      Matrix xp = x, xm = x;
      xp.data[i] += eps;
      xm.data[i] -= eps;
      const double fd = (sdtw::sdtw_forward(xp, y, 1.0).loss - sdtw::sdtw_forward(xm, y, 1.0).loss) / (2.0 * eps);
      worst = std::max(worst, std::abs(fd - g.data[i]) / (std::abs(g.data[i]) + 1e-8));
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-5 && secs < 30.0,
          "max rel err " + f("%.3e", worst) + " on 50 pairs at gamma 1 (tol 1e-5), " + f("%.2f", secs) +
              " s (limit 30 s)"};
}

Outcome c03_gamma_limit() {
  Rng rng(303);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 2 + rng.below(5), m = 2 + rng.below(5);
    Matrix x(n, 2), y(m, 2);
    for (double& v : x.data) v = static_cast<double>(rng.below(9)) - 4.0;
    for (double& v : y.data) v = static_cast<double>(rng.below(9)) - 4.0;
    const double hard = min_path_oracle(x, y);
    worst = std::max(worst, std::abs(sdtw::sdtw_forward(x, y, 1e-3).loss - hard));
  }
  return {worst < 1e-2, "max |sdtw(1e-3) - dtw| " + f("%.3e", worst) + " on 50 integer pairs (tol 1e-2)"};
}

// Random-weighted contraction so every output entry carries gradient.
Var weighted(Tape& t, Var y, std::uint64_t seed) {
  Rng rng(seed, 77);
  return ad::sum(ad::hadamard(y, t.constant(uniform_matrix(rng, y.rows(), y.cols(), -1.5, 1.5))));
}

Outcome c04_autodiff() {
  using Unary = std::function<Var(Tape&, Var)>;
  Rng side(404);
  const Matrix o34 = uniform_matrix(side, 3, 4), o45 = uniform_matrix(side, 4, 5), row4 = uniform_matrix(side, 1, 4);
  const Matrix col3 = uniform_matrix(side, 3, 1), gain = uniform_matrix(side, 1, 4, 0.5, 1.5);
  const Matrix bias = uniform_matrix(side, 1, 4), b5(1, 5, 0.3);
  struct Case {
    const char* name;
    Unary op;
    std::size_t r, c;
    double lo = -1.5, hi = 1.5;
  };
  const std::vector<Case> cases = {
      {"matmul", [&](Tape& t, Var v) { return ad::matmul(v, t.constant(o45)); }, 3, 4},
      {"matmul_rhs", [&](Tape& t, Var v) { return ad::matmul(t.constant(o34), v); }, 4, 5},
      {"add", [&](Tape& t, Var v) { return ad::add(v, t.constant(o34)); }, 3, 4},
      {"sub", [&](Tape& t, Var v) { return ad::sub(t.constant(o34), v); }, 3, 4},
      {"hadamard", [&](Tape& t, Var v) { return ad::hadamard(v, t.constant(o34)); }, 3, 4},
      {"scale", [](Tape&, Var v) { return ad::scale(v, -2.5); }, 3, 4},
      {"add_row", [&](Tape& t, Var v) { return ad::add_row(v, t.constant(row4)); }, 3, 4},
      {"add_row_bias", [&](Tape& t, Var v) { return ad::add_row(t.constant(o34), v); }, 1, 4},
      {"affine_x", [&](Tape& t, Var v) { return ad::affine(v, t.constant(o45), t.constant(b5)); }, 3, 4},
      {"affine_w", [&](Tape& t, Var v) { return ad::affine(t.constant(o34), v, t.constant(b5)); }, 4, 5},
      {"affine_b", [&](Tape& t, Var v) { return ad::affine(t.constant(o34), t.constant(o45), v); }, 1, 5},
      {"concat_cols", [&](Tape& t, Var v) { return ad::concat_cols({t.constant(o34), v, v}); }, 3, 2},
      {"slice_cols", [](Tape&, Var v) { return ad::slice_cols(v, 1, 2); }, 3, 4},
      {"concat_rows", [&](Tape& t, Var v) { return ad::concat_rows({v, t.constant(o34), v}); }, 2, 4},
      {"slice_rows", [](Tape&, Var v) { return ad::slice_rows(v, 1, 2); }, 4, 3},
      {"tile_rows", [](Tape&, Var v) { return ad::tile_rows(v, 3); }, 2, 3},
      {"scale_rows", [&](Tape& t, Var v) { return ad::scale_rows(v, t.constant(col3)); }, 3, 4},
      {"scale_rows_w", [&](Tape& t, Var v) { return ad::scale_rows(t.constant(o34), v); }, 3, 1},
      {"sum", [](Tape&, Var v) { return ad::sum(v); }, 3, 4},
      {"mean", [](Tape&, Var v) { return ad::mean(v); }, 3, 4},
      {"sum_rows", [](Tape&, Var v) { return ad::sum_rows(v); }, 3, 4},
      {"sum_cols", [](Tape&, Var v) { return ad::sum_cols(v); }, 3, 4},
      {"sigmoid", [](Tape&, Var v) { return ad::sigmoid(v); }, 3, 4, -4.0, 4.0},
      {"tanh", [](Tape&, Var v) { return ad::tanh(v); }, 3, 4, -3.0, 3.0},
      {"elu", [](Tape&, Var v) { return ad::elu(v); }, 3, 4, -3.0, 3.0},
      {"abs", [](Tape&, Var v) { return ad::abs(v); }, 3, 4},
      {"square", [](Tape&, Var v) { return ad::square(v); }, 3, 4},
      {"add_scalar", [](Tape&, Var v) { return ad::add_scalar(v, 0.7); }, 3, 4},
      {"softmax_rows", [](Tape&, Var v) { return ad::softmax_rows(v); }, 3, 4, -3.0, 3.0},
      {"layer_norm", [&](Tape& t, Var v) { return ad::layer_norm_rows(v, t.constant(gain), t.constant(bias)); }, 3, 4},
      {"layer_norm_gain", [&](Tape& t, Var v) { return ad::layer_norm_rows(t.constant(o34), v, t.constant(bias)); }, 1, 4},
      {"layer_norm_shift", [&](Tape& t, Var v) { return ad::layer_norm_rows(t.constant(o34), t.constant(gain), v); }, 1, 4},
      {"glu", [&](Tape& t, Var v) { return ad::glu(v, t.constant(o34)); }, 3, 4},
      {"glu_gate", [&](Tape& t, Var v) { return ad::glu(t.constant(o34), v); }, 3, 4},
  };
  double prim = 0.0;
  std::string prim_name;
  std::uint64_t seed = 4000;
  for (const auto& c : cases) {
    Rng rng(seed);
    for (int k = 0; k < 20; ++k) {
      const Matrix x = uniform_matrix(rng, c.r, c.c, c.lo, c.hi);
      const double e = ad::grad_check([&](Tape& t, Var v) { return weighted(t, c.op(t, v), seed); }, x);
      if (e > prim) {
        prim = e;
        prim_name = c.name;
      }
    }
    ++seed;
  }

  // composite blocks
  Rng rng(405);
  ad::ParameterSet ps;
  tft::register_grn(ps, "grn", {4, 5, 6, 3}, rng);
  tft::register_vsn(ps, "vsn", 3, 4, true, rng);
  tft::register_lstm(ps, "lstm", 3, 5, rng);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    for (double& v : ps[k].value.data) v += 0.3 * rng.normal();
  }
  const Matrix a = uniform_matrix(rng, 7, 4), ctx = uniform_matrix(rng, 7, 3), vctx = uniform_matrix(rng, 6, 4);
  std::vector<Matrix> emb;
  for (int j = 0; j < 3; ++j) emb.push_back(uniform_matrix(rng, 6, 4));
  const Matrix x3 = uniform_matrix(rng, 2, 3), h0 = uniform_matrix(rng, 2, 5, -0.5, 0.5), c0 = uniform_matrix(rng, 2, 5, -0.5, 0.5);
  using Fx = std::function<Var(Tape&, Var)>;
  using Fp = std::function<Var(Tape&)>;
  Fx grn_f = [&](Tape& t, Var in) { return weighted(t, tft::grn(t, ps, "grn", in, t.constant(ctx), 0.0), 1); };
  Fx vsn_f = [&](Tape& t, Var first) {
    std::vector<Var> vars = {first, t.constant(emb[1]), t.constant(emb[2])};
    const tft::VsnOutput o = tft::vsn(t, ps, "vsn", vars, t.constant(vctx), 0.0);
    return ad::add(weighted(t, o.combined, 2), weighted(t, o.weights, 3));
  };
  Fx lstm_f = [&](Tape& t, Var in) {
    const tft::LstmState s = tft::lstm_cell(t, ps, "lstm", in, {t.constant(h0), t.constant(c0)});
    return ad::add(weighted(t, s.h, 4), weighted(t, s.c, 5));
  };
  const double blocks = std::max({ad::grad_check(grn_f, a), ad::grad_check(vsn_f, emb[0]), ad::grad_check(lstm_f, x3),
                                  ad::grad_check_params(Fp([&](Tape& t) { return grn_f(t, t.constant(a)); }), ps),
                                  ad::grad_check_params(Fp([&](Tape& t) { return vsn_f(t, t.constant(emb[0])); }), ps),
                                  ad::grad_check_params(Fp([&](Tape& t) { return lstm_f(t, t.constant(x3)); }), ps)});

  // end-to-end toy model
  std::string e2e_detail;
  double e2e = 0.0;
  for (tft::LossKind kind : {tft::LossKind::QuantileMedian, tft::LossKind::Sdtw}) {
    tft::TftConfig c;
    c.d_model = 8;
    c.n_lstm_layers = 2;
    c.dropout = 0.1;
    c.history = 6;
    c.horizon = 4;
    c.n_channels = 2;
    c.n_known = 2;
    c.n_statics = 3;
    c.n_targets = 2;
    c.loss = kind;
    c.gamma = 0.5;
    c.seed = 11;
    tft::TftModel model(c);
    Rng brng(31);
    tft::Batch b;
    b.size = 2;
    b.statics = Matrix(2, 3);
    b.past = Matrix(12, 4);
    b.future = Matrix(8, 2);
    b.target = Matrix(8, 2);
    for (Matrix* m : {&b.statics, &b.past, &b.future, &b.target}) {
      for (double& v : m->data) v = brng.normal();
    }
    // keep the median loss away from its kink at zero residual
    if (kind == tft::LossKind::QuantileMedian) {
      for (double& v : b.target.data) v += v >= 0.0 ? 3.0 : -3.0;
    }
    auto fn = [&](Tape& t) { return tft::loss(model.forward(t, b).prediction, b.target, b.size, c); };
    const double eps = kind == tft::LossKind::Sdtw ? 1e-4 : 3e-4;
    const double five = ad::grad_check_params(fn, model.params(), eps, ad::Stencil::Central4);
    const double two = ad::grad_check_params(fn, model.params(), 1e-6, ad::Stencil::Central2);
    e2e = std::max(e2e, five);
    e2e_detail += std::string(tft::to_string(kind)) + " " + f("%.2e", five) + " (two-point " + f("%.2e", two) + ") ";
  }
  return {prim < 1e-4 && blocks < 1e-4 && e2e < 1e-4,
          "primitives max " + f("%.2e", prim) + " [" + prim_name + "], GRN/VSN/LSTM max " + f("%.2e", blocks) +
              ", end-to-end " + e2e_detail + "(tol 1e-4)"};
}

Outcome c05_conservation() {
  double worst_salt = 0.0, worst_vol = 0.0;
  for (box::Variant v : {box::Variant::FourBox, box::Variant::SixBox}) {
    box::BoxParams p = defaults()[v].params;
    std::fill(p.fw_base.begin(), p.fw_base.end(), 0.0);
    const auto traj = box::simulate(p, box::make_noise(1, 0.0, 4000, box::n_fluxes(v)), 4000);
    // independent sums over the final state
    box::BoxState st = box::initial_state(p);
    const std::vector<double> zeros(box::n_fluxes(v), 0.0);
    auto salt = [](const box::BoxState& s) { return std::accumulate(s.q_salt.begin(), s.q_salt.end(), 0.0); };
    auto vol = [&](const box::BoxState& s) {
      const auto b = box::box_volumes(s, p);
      return std::accumulate(b.begin(), b.end(), 0.0);
    };
    const double s0 = salt(st), v0 = vol(st);
    for (int k = 0; k < 4000; ++k) {
      st = box::euler_step(st, p, zeros, box::kDtYears * box::kSecondsPerYear);
      worst_salt = std::max(worst_salt, std::abs(salt(st) - s0) / s0);
      worst_vol = std::max(worst_vol, std::abs(vol(st) - v0) / v0);
    }
    if (traj.channels.rows != 4000) return {false, "simulate returned the wrong length"};
  }
  return {worst_salt < 1e-9 && worst_vol < 1e-12,
          "salt drift " + f("%.3e", worst_salt) + " (tol 1e-9), volume drift " + f("%.3e", worst_vol) +
              " (tol 1e-12) over 4000 steps, both variants"};
}

Outcome c06_bistability() {
  const auto& d = defaults().four_box;
  std::vector<double> grid;
  for (std::size_t i = 0; i < d.sweep.points; ++i) {
    grid.push_back(d.sweep.low + (d.sweep.high - d.sweep.low) * static_cast<double>(i) / static_cast<double>(d.sweep.points - 1));
  }
  const auto h = ens::hysteresis_sweep(d.params, d.sweep.flux, grid, d.sweep.settle_years);
  std::optional<double> lo, hi;
  double gap = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double g = h.up.points[i].m_n_sv[0] - h.down.points[i].m_n_sv[0];
    gap = std::max(gap, g);
    if (g > 5.0) {
      lo = lo ? *lo : grid[i];
      hi = grid[i];
    }
  }
  const fs::path dir = artifact_dir("c06");
  std::ofstream csv(dir / "branches.csv");
  csv << "fw_north,m_n_up_sv,m_n_down_sv\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    csv << grid[i] << ',' << h.up.points[i].m_n_sv[0] << ',' << h.down.points[i].m_n_sv[0] << '\n';
  }
  return {lo.has_value(), "max branch gap " + f("%.2f", gap) + " Sv; gap > 5 Sv on " +
                              (lo ? "[" + f("%.3g", *lo) + ", " + f("%.3g", *hi) + "] m3/s" : std::string("no grid point"))};
}

Outcome c07_timing_spread() {
  box::BoxParams p = defaults().four_box.params;
  box::set_covariate(p, "fw_north", 4.15e5);
  ens::EnsembleOptions o;
  o.n_members = 200;
  o.sigma = 1e5;
  o.base_seed = 2024;
  o.n_steps = 4000;
  auto dump = [](const ens::EnsembleResult& r) {
    std::ostringstream s;
    s.precision(17);
    const auto& a = r.atlantic;
    s << a.n_members << ' ' << a.n_collapsed << ' ' << a.fraction_collapsed;
    for (const auto& v : {a.mean, a.std, a.p2_5, a.p50, a.p97_5}) s << ' ' << (v ? *v : -1.0);
    for (const auto& m : r.members) s << ' ' << m.seed << ':' << (m.trajectory && m.trajectory->collapse_time_atlantic ? *m.trajectory->collapse_time_atlantic : -1.0);
    return s.str();
  };
  o.workers = 1;
  const auto a = ens::run_ensemble(p, o);
  o.workers = 4;
  const auto b = ens::run_ensemble(p, o);
  const bool same = dump(a) == dump(b);
  const double sd = a.atlantic.std.value_or(0.0);
  return {same && sd > 0.0,
          "collapsed " + std::to_string(a.atlantic.n_collapsed) + "/200, mean " + f("%.2f", a.atlantic.mean.value_or(NAN)) +
              " yr, std " + f("%.2f", sd) + " yr (need > 0); repeat run " + (same ? "bitwise identical" : "DIFFERS")};
}

// Runs the desk pipeline end to end: generate, train, roll out, score.
Outcome c08_desk_quality() {
  const fs::path dir = artifact_dir("c08");
  pipeline::Context ctx;
  ctx.cfg = config::profile("desk", box::Variant::FourBox);
  ctx.cfg.seed = 8;
  ctx.log = [](const std::string& m) { std::fprintf(stderr, "  %s\n", m.c_str()); };
  const auto t0 = std::chrono::steady_clock::now();
  const auto gen = pipeline::gen_data(ctx, dir / "data");
  const auto trained = pipeline::train(ctx, dir / "data" / "dataset", dir / "model");
  const auto rows = pipeline::bench(ctx, dir / "data" / "dataset", {trained.model_file}, "test", dir / "bench");
  const double secs = seconds_since(t0);
  const eval::MetricReport& tft = rows.at(0);
  const eval::MetricReport& persist = rows.at(1);
  const bool a = tft.valid && tft.rmse_1 < persist.rmse_1;
  const bool b = tft.detection_rate_atl >= 0.8;
  const bool c = tft.r_collapse_atl && *tft.r_collapse_atl >= 0.5;
  return {a && b && c && gen.dataset.test_ids.size() == 40,
          "(a) RMSE(1) " + f("%.4f", tft.rmse_1) + " vs persistence " + f("%.4f", persist.rmse_1) + (a ? " ok" : " FAIL") +
              "; (b) detection " + f("%.3f", tft.detection_rate_atl) + " (need >= 0.80)" + (b ? " ok" : " FAIL") +
              "; (c) timing r " + (tft.r_collapse_atl ? f("%.3f", *tft.r_collapse_atl) : std::string("undefined")) +
              " (need >= 0.5)" + (c ? " ok" : " FAIL") + "; test set " + std::to_string(gen.dataset.test_ids.size()) +
              ", wall " + f("%.0f", secs) + " s"};
}

std::vector<data::WindowedExample> real_windows(std::size_t n, std::size_t history, std::size_t horizon) {
  const auto& d = defaults().four_box;
  std::vector<io::Archive> arch;
  for (std::size_t k = 0; k < n; ++k) {
    Rng rng(split_seed(909, k), 3);
    const box::BoxParams p = ens::sample_params(d.bounds, rng);
    arch.push_back(io::from_trajectory(box::simulate(p, box::make_noise(split_seed(909, k), 1e5, 400, 2), 400),
                                       "w" + std::to_string(k)));
  }
  std::vector<const io::Archive*> ptrs;
  for (const auto& a : arch) ptrs.push_back(&a);
  const auto s = data::fit_standardizer(ptrs, data::Mode::Stochastic, data::static_names_for(box::Variant::FourBox));
  std::vector<data::WindowedExample> out;
  for (std::size_t k = 0; k < n; ++k) {
    const auto w = data::window_split(arch[k], history, horizon, 1000, data::Mode::Stochastic,
                                      data::static_names_for(box::Variant::FourBox));
    out.push_back(data::standardize(w.at(0), s));
  }
  return out;
}

Outcome c09_overfit() {
  const auto examples = real_windows(8, 100, 50);
  std::vector<std::size_t> idx(examples.size());
  std::iota(idx.begin(), idx.end(), 0);
  const tft::Batch b = tft::make_batch(examples, idx);
  std::string detail;
  bool pass = true;
  for (tft::LossKind kind : {tft::LossKind::QuantileMedian, tft::LossKind::Sdtw}) {
    tft::TftConfig c = config::profile("desk").model;
    c.history = 100;
    c.horizon = 50;
    c.n_channels = examples[0].history.cols;
    c.n_known = examples[0].past_known.cols;
    c.n_statics = examples[0].statics.size();
    c.n_targets = c.n_channels;
    c.dropout = 0.0;
    c.lr = 3e-3;
    c.loss = kind;
    c.seed = 9;
    tft::TftModel model(c);
    train::Adam adam(model.params(), c.lr);
    Rng drop(1);
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 500; ++step) {
      const double l = train::train_step(model, b, adam, drop);
      if (step == 0) first = l;
      last = l;
    }
    // soft-DTW is not bounded below by zero; report the drop toward sdtw(y, y) too
    const double reduction = 1.0 - last / first;
    const bool ok = first > 0.0 && reduction >= 0.9;
    pass = pass && ok;
    detail += std::string(tft::to_string(kind)) + " " + f("%.4g", first) + " -> " + f("%.4g", last) + " (" +
              f("%.1f", 100.0 * reduction) + "%)";
    if (kind == tft::LossKind::Sdtw) {
      Tape t;
      const double floor = tft::loss(t.constant(b.target), b.target, b.size, c).value().data[0];
      detail += ", relative to sdtw(y,y) = " + f("%.4g", floor) + ": " +
                f("%.1f", 100.0 * (first - last) / (first - floor)) + "%";
    }
    detail += "; ";
  }
  return {pass, detail + "need >= 90%"};
}

Outcome c10_rollout_identity() {
  const auto& d = defaults().four_box;
  std::vector<io::Archive> arch;
  for (std::uint64_t k = 0; k < 3; ++k) {
    Rng rng(split_seed(1010, k), 5);
    box::BoxParams p = ens::sample_params(d.bounds, rng);
    box::set_covariate(p, "fw_north", k == 0 ? 1.0e6 : 2.0e5 * static_cast<double>(k));
    arch.push_back(io::from_trajectory(box::simulate(p, box::make_noise(split_seed(1010, k), 1e5, 1100, 2), 1100),
                                       "t" + std::to_string(k)));
  }
  std::vector<const io::Archive*> ptrs;
  for (const auto& a : arch) ptrs.push_back(&a);
  const auto s = data::fit_standardizer(ptrs, data::Mode::Stochastic, data::static_names_for(box::Variant::FourBox));
  const io::Archive& truth = arch[0];
  rollout::OracleForecaster oracle(100, 50, s, {{truth.id, truth.trajectory.channels}});
  const rollout::RolloutSetup setup{box::Variant::FourBox, data::Mode::Stochastic, &s, 20};
  const auto r = rollout::autoregressive_rollout(oracle, setup, rollout::input_from_archive(truth, s, 100));
  double worst = 0.0;
  for (std::size_t i = 0; i < r.channels.data.size(); ++i) {
    worst = std::max(worst, std::abs(r.channels.data[i] - truth.trajectory.channels.data[i]));
  }
  const auto ct = truth.trajectory.collapse_time_atlantic;
  const bool same_collapse = r.collapse_atlantic == ct && ct.has_value();
  return {worst < 1e-8 && same_collapse && r.channels.rows == truth.trajectory.channels.rows,
          "max abs err " + f("%.3e", worst) + " over 20 blocks (tol 1e-8); collapse " +
              (ct ? f("%.2f", *ct) : std::string("none")) + " yr vs " +
              (r.collapse_atlantic ? f("%.2f", *r.collapse_atlantic) : std::string("none")) + " yr"};
}

Outcome c11_speedup() {
  const fs::path dir = artifact_dir("c11");
  pipeline::Context ctx;
  ctx.cfg = config::profile("desk", box::Variant::SixBox);
  ctx.cfg.seed = 11;
  const eval::SpeedReport r = pipeline::speed(ctx, std::nullopt, dir);
  const double n = static_cast<double>(r.n_sims);
  const double ratio = r.ratio.value_or(0.0);
  return {ratio >= 10.0, "ratio " + f("%.4f", ratio) + "x (need >= 10x); simulator " +
                             f("%.2f", 1e3 * r.simulator_wall_s / n) + " ms/traj, surrogate " +
                             f("%.2f", 1e3 * r.surrogate_wall_s.value_or(NAN) / n) + " ms/traj over " +
                               std::to_string(r.n_sims) + " six-box trajectories; " + r.note + "; " + r.hardware};
}

Outcome c12_metric_path() {
  const fs::path dir = artifact_dir("c12");
  pipeline::Context ctx;
  ctx.cfg = config::profile("desk", box::Variant::FourBox);
  ctx.cfg.seed = 12;
  ctx.cfg.gen_data.n_trajectories = 60;
  ctx.cfg.dataset.n_train = 20;
  ctx.cfg.dataset.n_val = 6;
  ctx.cfg.dataset.n_test = 8;
  const auto gen = pipeline::gen_data(ctx, dir / "data");
  const fs::path ds = dir / "data" / "dataset";
  const data::DatasetInfo info = data::read_dataset_info(ds);
  const auto truth = data::load_split_archives(info, "test");

  // a small untrained surrogate produces the rollouts under test
  tft::TftConfig mc = ctx.cfg.model;
  mc.d_model = 8;
  mc.history = info.history;
  mc.horizon = info.horizon;
  mc.n_channels = info.n_channels();
  mc.n_known = info.n_known();
  mc.n_statics = info.n_statics();
  mc.n_targets = mc.n_channels;
  io::save_model(dir / "model.bin", {tft::TftModel(mc), info.variant, info.mode, info.standardizer});
  const fs::path pred_dir = pipeline::rollout_split(ctx, ds, dir / "model.bin", "test", dir / "rollouts", "tft");

  const eval::EvalSetup es{info.variant, &info.standardizer, info.history, info.horizon, 1.0};
  const io::ModelBundle bundle = io::load_model(dir / "model.bin");
  rollout::TftForecaster forecaster(bundle.model);
  const rollout::RolloutSetup rs{info.variant, info.mode, &info.standardizer, ctx.cfg.rollout.n_blocks};
  std::vector<rollout::RolloutInput> inputs;
  for (const auto& a : truth) inputs.push_back(rollout::input_from_archive(a, info.standardizer, info.history));
  std::vector<io::Archive> in_memory;
  const auto results = rollout::rollout_batch(forecaster, rs, inputs, true);
  for (std::size_t i = 0; i < results.size(); ++i) {
    in_memory.push_back(rollout::to_archive(results[i], info.variant, truth[i].trajectory.params));
  }
  const auto direct = eval::evaluate("TFT-lite", "sdtw", es, truth, in_memory);
  std::vector<std::string> ids;
  for (const auto& a : truth) ids.push_back(a.id);
  const auto ingested = eval::evaluate("TFT-lite", "sdtw", es, truth, eval::ingest_external_predictions(pred_dir, info.variant, ids));
  eval::write_report(dir / "direct", {direct});
  eval::write_report(dir / "ingested", {ingested});
  auto slurp = [](const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
  };
  const bool same = slurp(dir / "direct" / "report.csv") == slurp(dir / "ingested" / "report.csv") &&
                    slurp(dir / "direct" / "metrics.json") == slurp(dir / "ingested" / "metrics.json");

  // one NaN row in one exported archive
  const fs::path nan_dir = dir / "rollouts_nan";
  fs::copy(pred_dir, nan_dir, fs::copy_options::recursive);
  io::Archive broken = io::read_archive(nan_dir / ids[1]);
  for (std::size_t c = 0; c < broken.trajectory.channels.cols; ++c) broken.trajectory.channels(info.history + 10, c) = NAN;
  io::write_archive(nan_dir / ids[1], broken);
  const auto bad = eval::evaluate("Diverged", "sdtw", es, truth, eval::ingest_external_predictions(nan_dir, info.variant, ids));
  eval::write_report(dir / "nan", {bad});
  const std::string bad_csv = slurp(dir / "nan" / "report.csv");
  const bool flagged = !bad.valid && bad_csv.find("NaN") != std::string::npos;
  return {same && direct.valid && flagged,
          std::string("report.csv and metrics.json ") + (same ? "byte-identical" : "DIFFER") + " after re-ingestion of " +
              std::to_string(ids.size()) + " rollouts; NaN archive " + (flagged ? "flagged invalid" : "NOT flagged") +
              " (" + std::to_string(gen.generated) + " generated)"};
}

struct Criterion {
  const char* title;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> c = {
      {"soft-DTW exactness", c01_sdtw_exact},
      {"soft-DTW gradient", c02_sdtw_grad},
      {"gamma -> 0 limit", c03_gamma_limit},
      {"autodiff gradient checks", c04_autodiff},
      {"simulator conservation", c05_conservation},
      {"four-box bistability", c06_bistability},
      {"stochastic timing spread", c07_timing_spread},
      {"desk-scale surrogate quality", c08_desk_quality},
      {"single-batch overfit", c09_overfit},
      {"rollout identity", c10_rollout_identity},
      {"surrogate speedup", c11_speedup},
      {"metric-path fidelity", c12_metric_path},
  };
  return c;
}

bool run_one(std::size_t n) {
  const Criterion& c = criteria().at(n - 1);
  Outcome o;
  try {
    o = c.run();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  std::printf("criterion %2zu %-30s %s  %s\n", n, c.title, o.pass ? "PASS" : "FAIL", o.detail.c_str());
  std::fflush(stdout);
  return o.pass;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc > 1) {
    const long n = std::strtol(argv[1], nullptr, 10);
    if (n < 1 || n > static_cast<long>(criteria().size())) {
      std::fprintf(stderr, "usage: %s [1-%zu]\n", argv[0], criteria().size());
      return 2;
    }
    return run_one(static_cast<std::size_t>(n)) ? 0 : 1;
  }
  int failed = 0;
  for (std::size_t n = 1; n <= criteria().size(); ++n) failed += !run_one(n);
  return failed == 0 ? 0 : 1;
}
