#include "tipcast/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <thread>

#include "tipcast/error.hpp"
#include "tipcast/kernels.hpp"
#include "tipcast/parallel.hpp"
#include "tipcast/sdtw.hpp"

namespace tipcast::eval {

namespace fs = std::filesystem;

double rmse(const Matrix& pred, const Matrix& truth, std::optional<std::size_t> column) {
  if (pred.rows != truth.rows || pred.cols != truth.cols) {
    throw ShapeError("rmse: prediction [" + std::to_string(pred.rows) + " x " + std::to_string(pred.cols) +
                     "] vs truth [" + std::to_string(truth.rows) + " x " + std::to_string(truth.cols) + "]");
  }
  if (column && *column >= pred.cols) throw ShapeError("rmse: column out of range");
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t r = 0; r < pred.rows; ++r) {
    for (std::size_t c = 0; c < pred.cols; ++c) {
      if (column && c != *column) continue;
      const double d = pred(r, c) - truth(r, c);
      sum += d * d;
      ++n;
    }
  }
  if (n == 0) throw InvalidArgument("rmse of an empty window");
  return std::sqrt(sum / static_cast<double>(n));
}

namespace {

Matrix rows_of(const Matrix& m, std::size_t begin, std::size_t count) {
  if (begin + count > m.rows) throw ShapeError("window exceeds the available rows");
  Matrix out(count, m.cols);
  std::copy(m.data.begin() + static_cast<std::ptrdiff_t>(begin * m.cols),
            m.data.begin() + static_cast<std::ptrdiff_t>((begin + count) * m.cols), out.data.begin());
  return out;
}

bool finite(const Matrix& m) {
  return std::all_of(m.data.begin(), m.data.end(), [](double v) { return std::isfinite(v); });
}

std::optional<double> try_pearson(const std::vector<double>& x, const std::vector<double>& y, std::string* note) {
  try {
    return pearson_r(x, y);
  } catch (const Error& e) {
    if (note != nullptr) *note = e.what();
    return std::nullopt;
  }
}

}  // namespace

double rmse_single(const Matrix& pred, const Matrix& truth, std::size_t history, std::size_t horizon) {
  return rmse(rows_of(pred, history, horizon), rows_of(truth, history, horizon));
}

double rmse_ar(const Matrix& pred, const Matrix& truth, std::size_t history, std::optional<std::size_t> column) {
  if (pred.rows <= history) throw InvalidArgument("rollout holds no steps past the seed window");
  const std::size_t n = pred.rows - history;
  return rmse(rows_of(pred, history, n), rows_of(truth, history, n), column);
}

double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw ShapeError("pearson_r: sample counts differ");
  if (x.size() < 2) throw InvalidArgument("pearson_r needs at least two samples");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw ZeroVariance("pearson_r: a sample has zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

Matrix persistence_forecast(const Matrix& history, std::size_t horizon) {
  if (history.rows == 0) throw InvalidArgument("persistence needs a nonempty history");
  Matrix out(horizon, history.cols);
  const auto last = history.row(history.rows - 1);
  for (std::size_t t = 0; t < horizon; ++t) std::copy(last.begin(), last.end(), out.row(t).begin());
  return out;
}

CollapseMetrics collapse_metrics(const std::vector<std::string>& ids, const std::vector<std::optional<double>>& pred,
                                 const std::vector<std::optional<double>>& truth) {
  if (pred.size() != truth.size() || ids.size() != pred.size()) throw ShapeError("collapse_metrics: sample counts differ");
  if (pred.empty()) throw InvalidArgument("collapse_metrics: no matched samples");
  CollapseMetrics m;
  m.n_samples = pred.size();
  std::size_t agree = 0;
  std::vector<double> xs, ys;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    agree += pred[i].has_value() == truth[i].has_value();
    if (pred[i] && truth[i]) {
      xs.push_back(*truth[i]);
      ys.push_back(*pred[i]);
    }
    m.parity.push_back({ids[i], truth[i], pred[i]});
  }
  m.detection_rate = static_cast<double>(agree) / static_cast<double>(pred.size());
  m.n_joint = xs.size();
  m.timing_r = try_pearson(xs, ys, &m.timing_note);
  return m;
}

EnsembleParity ensemble_parity(const std::vector<ens::CollapseStats>& pred,
                               const std::vector<ens::CollapseStats>& truth) {
  if (pred.size() != truth.size()) throw ShapeError("ensemble_parity: sample counts differ");
  EnsembleParity p;
  std::vector<double> mt, mp, st, sp;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i].mean && truth[i].mean) {
      mt.push_back(*truth[i].mean);
      mp.push_back(*pred[i].mean);
    }
    if (pred[i].std && truth[i].std) {
      st.push_back(*truth[i].std);
      sp.push_back(*pred[i].std);
    }
  }
  p.n_samples = mt.size();
  p.mean_r = try_pearson(mt, mp, nullptr);
  p.std_r = try_pearson(st, sp, nullptr);
  return p;
}

namespace {

nlohmann::json opt_json(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json num_json(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json("NaN"); }

}  // namespace

nlohmann::json MetricReport::to_json() const {
  return {{"model", model},
          {"training_loss", training_loss},
          {"mode", mode},
          {"n_samples", n_samples},
          {"valid", valid},
          {"sdtw_1", num_json(sdtw_1)},
          {"rmse_1", num_json(rmse_1)},
          {"rmse_ar", num_json(rmse_ar)},
          {"rmse_ar_mnA", num_json(rmse_ar_mnA)},
          {"rmse_1_raw", num_json(rmse_1_raw)},
          {"rmse_ar_raw", num_json(rmse_ar_raw)},
          {"r_collapse_atl", opt_json(r_collapse_atl)},
          {"r_collapse_pac", opt_json(r_collapse_pac)},
          {"r_end_state_mnA", opt_json(r_end_state_mnA)},
          {"collapse_detection_rate_atl", num_json(detection_rate_atl)},
          {"collapse_detection_rate_pac", opt_json(detection_rate_pac)},
          {"notes", notes}};
}

MetricReport evaluate(const std::string& model, const std::string& training_loss, const EvalSetup& setup,
                      const std::vector<io::Archive>& truth, const std::vector<io::Archive>& pred,
                      CollapseMetrics* atlantic_detail) {
  if (setup.standardizer == nullptr) throw InvalidArgument("evaluate needs a standardizer");
  const data::Standardizer& s = *setup.standardizer;
  std::map<std::string, const io::Archive*> by_id;
  for (const auto& a : truth) by_id[a.id] = &a;
  if (pred.empty()) throw ManifestMismatch("no predictions to evaluate");

  const std::size_t h = setup.history, l = setup.horizon;
  const std::size_t mn_a = box::overturning_channel(setup.variant, "atlantic");
  const bool two_basins = box::n_basins(setup.variant) > 1;
  MetricReport r;
  r.model = model;
  r.training_loss = training_loss;
  r.n_samples = pred.size();

  std::vector<Matrix> p1, t1;
  double sq1 = 0.0, sq_ar = 0.0, sq_mn = 0.0, sq1_raw = 0.0, sq_ar_raw = 0.0;
  std::size_t n1 = 0, n_ar = 0, n_mn = 0;
  std::vector<std::string> ids;
  std::vector<std::optional<double>> ca_p, ca_t, cp_p, cp_t;
  std::vector<double> end_p, end_t;
  // reduce in id order so the result does not depend on how predictions were listed
  std::vector<const io::Archive*> ordered;
  for (const auto& pa : pred) ordered.push_back(&pa);
  std::sort(ordered.begin(), ordered.end(), [](const io::Archive* a, const io::Archive* b) { return a->id < b->id; });
  for (const io::Archive* pp : ordered) {
    const io::Archive& pa = *pp;
    const auto it = by_id.find(pa.id);
    if (it == by_id.end()) throw ManifestMismatch("prediction '" + pa.id + "' has no matching truth trajectory");
    const io::Archive& ta = *it->second;
    if (pa.channel_names != ta.channel_names) throw ManifestMismatch("prediction '" + pa.id + "' has a different channel layout");
    if (pa.trajectory.variant != setup.variant) throw ManifestMismatch("prediction '" + pa.id + "' is a different variant");
    const Matrix& praw = pa.trajectory.channels;
    if (praw.rows < h + l || praw.rows > ta.trajectory.channels.rows) {
      throw ManifestMismatch("prediction '" + pa.id + "' has " + std::to_string(praw.rows) +
                             " rows; expected between " + std::to_string(h + l) + " and " +
                             std::to_string(ta.trajectory.channels.rows));
    }
    const Matrix traw = rows_of(ta.trajectory.channels, 0, praw.rows);
    if (!finite(praw) || pa.extra.contains("error")) r.valid = false;
    const Matrix pz = s.transform_channels(praw), tz = s.transform_channels(traw);

    // accumulate squared errors so RMSEs pool over all samples
    auto acc = [](const Matrix& a, const Matrix& b, std::size_t begin, std::size_t count,
                  std::optional<std::size_t> col, double& sum, std::size_t& n) {
      for (std::size_t t = begin; t < begin + count; ++t) {
        for (std::size_t c = 0; c < a.cols; ++c) {
          if (col && c != *col) continue;
          const double d = a(t, c) - b(t, c);
          sum += d * d;
          ++n;
        }
      }
    };
    std::size_t dummy = 0;
    acc(pz, tz, h, l, std::nullopt, sq1, n1);
    acc(pz, tz, h, praw.rows - h, std::nullopt, sq_ar, n_ar);
    acc(pz, tz, h, praw.rows - h, mn_a, sq_mn, n_mn);
    acc(praw, traw, h, l, std::nullopt, sq1_raw, dummy);
    dummy = 0;
    acc(praw, traw, h, praw.rows - h, std::nullopt, sq_ar_raw, dummy);
    p1.push_back(rows_of(pz, h, l));
    t1.push_back(rows_of(tz, h, l));

    ids.push_back(pa.id);
    ca_p.push_back(box::detect_collapse(praw, setup.variant, "atlantic", box::kDtYears));
    ca_t.push_back(box::detect_collapse(traw, setup.variant, "atlantic", box::kDtYears));
    if (two_basins) {
      cp_p.push_back(box::detect_collapse(praw, setup.variant, "pacific", box::kDtYears));
      cp_t.push_back(box::detect_collapse(traw, setup.variant, "pacific", box::kDtYears));
    }
    end_p.push_back(praw(praw.rows - 1, mn_a));
    end_t.push_back(traw(praw.rows - 1, mn_a));
  }

  r.rmse_1 = std::sqrt(sq1 / static_cast<double>(n1));
  r.rmse_ar = std::sqrt(sq_ar / static_cast<double>(n_ar));
  r.rmse_ar_mnA = std::sqrt(sq_mn / static_cast<double>(n_mn));
  r.rmse_1_raw = std::sqrt(sq1_raw / static_cast<double>(n1));
  r.rmse_ar_raw = std::sqrt(sq_ar_raw / static_cast<double>(n_ar));
  const bool first_finite = std::all_of(p1.begin(), p1.end(), finite);
  r.sdtw_1 = first_finite ? sdtw::batch_loss(p1, t1, setup.gamma, nullptr) : std::nan("");

  if (!r.valid) {
    r.detection_rate_atl = std::nan("");
    r.notes.push_back("non-finite predictions: rollout metrics are invalid");
    return r;
  }
  const CollapseMetrics atl = collapse_metrics(ids, ca_p, ca_t);
  r.detection_rate_atl = atl.detection_rate;
  r.r_collapse_atl = atl.timing_r;
  if (!atl.timing_r) r.notes.push_back("r_collapse,A undefined over " + std::to_string(atl.n_joint) + " joint collapses: " + atl.timing_note);
  if (two_basins) {
    const CollapseMetrics pac = collapse_metrics(ids, cp_p, cp_t);
    r.detection_rate_pac = pac.detection_rate;
    r.r_collapse_pac = pac.timing_r;
  }
  std::string note;
  r.r_end_state_mnA = try_pearson(end_t, end_p, &note);
  if (!r.r_end_state_mnA) r.notes.push_back("r_end undefined: " + note);
  if (atlantic_detail != nullptr) *atlantic_detail = atl;
  return r;
}

namespace {

std::string fmt(double v) {
  if (!std::isfinite(v)) return "NaN";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fmt(const std::optional<double>& v, bool valid) {
  if (!valid) return "NaN";
  return v ? fmt(*v) : "n/a";
}

std::vector<std::string> cells(const MetricReport& r) {
  return {r.model,         r.training_loss, fmt(r.sdtw_1), fmt(r.rmse_1), r.valid ? fmt(r.rmse_ar) : "NaN",
          r.valid ? fmt(r.rmse_ar_mnA) : "NaN", fmt(r.r_collapse_atl, r.valid), fmt(r.r_end_state_mnA, r.valid)};
}

const std::vector<std::string> kHeader = {"Model", "Training Loss", "SDTW(1)", "RMSE(1)", "RMSE(AR)",
                                          "RMSE_{M_n^A}(AR)", "r_collapse,A", "r_{M_n^A,end}"};

}  // namespace

std::string report_csv(const std::vector<MetricReport>& rows) {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& c) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      const bool quote = c[i].find(',') != std::string::npos;
      out << (i ? "," : "") << (quote ? "\"" + c[i] + "\"" : c[i]);
    }
    out << '\n';
  };
  line(kHeader);
  for (const auto& r : rows) line(cells(r));
  return out.str();
}

std::string report_markdown(const std::vector<MetricReport>& rows) {
  std::ostringstream out;
  auto line = [&](const std::vector<std::string>& c) {
    out << '|';
    for (const auto& x : c) out << ' ' << x << " |";
    out << '\n';
  };
  line(kHeader);
  out << '|';
  for (std::size_t i = 0; i < kHeader.size(); ++i) out << (i < 2 ? " --- |" : " ---: |");
  out << '\n';
  for (const auto& r : rows) line(cells(r));
  for (const auto& r : rows) {
    out << "\n" << r.model << " (" << r.mode << ", n = " << r.n_samples << "): collapse detection rate "
        << fmt(r.detection_rate_atl);
    if (r.detection_rate_pac) out << " (Atlantic), " << fmt(*r.detection_rate_pac) << " (Pacific)";
    out << ".\n";
    for (const auto& n : r.notes) out << "- " << n << '\n';
  }
  return out.str();
}

void write_report(const fs::path& dir, const std::vector<MetricReport>& rows) {
  fs::create_directories(dir);
  auto put = [&](const fs::path& f, const std::string& text) {
    std::ofstream out(f, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + f.string());
    out << text;
  };
  put(dir / "report.csv", report_csv(rows));
  put(dir / "report.md", report_markdown(rows));
  nlohmann::json all = nlohmann::json::array();
  for (const auto& r : rows) all.push_back(r.to_json());
  put(dir / "metrics.json", all.dump(2) + "\n");
}

void write_parity_csv(const fs::path& file, const CollapseMetrics& m) {
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + file.string());
  out << "id,truth_collapse_years,pred_collapse_years\n";
  auto cell = [](const std::optional<double>& v) { return v ? fmt(*v) : std::string(); };
  for (const auto& row : m.parity) out << row.id << ',' << cell(row.truth) << ',' << cell(row.pred) << '\n';
}

void write_histogram_csv(const fs::path& file, const CollapseMetrics& m, double bin_years) {
  if (!(bin_years > 0.0)) throw InvalidArgument("histogram bin width must be positive");
  std::map<long, std::pair<std::size_t, std::size_t>> bins;
  for (const auto& row : m.parity) {
    if (row.truth) ++bins[static_cast<long>(std::floor(*row.truth / bin_years))].first;
    if (row.pred) ++bins[static_cast<long>(std::floor(*row.pred / bin_years))].second;
  }
  std::ofstream out(file, std::ios::trunc);
  if (!out) throw FormatError("cannot write " + file.string());
  out << "bin_start_years,bin_end_years,truth_count,pred_count\n";
  for (const auto& [b, c] : bins) {
    out << fmt(static_cast<double>(b) * bin_years) << ',' << fmt(static_cast<double>(b + 1) * bin_years) << ','
        << c.first << ',' << c.second << '\n';
  }
}

std::vector<io::Archive> ingest_external_predictions(const fs::path& dir, box::Variant v,
                                                     const std::vector<std::string>& truth_ids) {
  const auto dirs = io::list_archives(dir);
  if (dirs.empty()) throw ManifestMismatch("no prediction archives under " + dir.string());
  const auto names = box::channel_names(v);
  std::vector<io::Archive> out;
  for (const auto& d : dirs) {
    io::Archive a = io::read_archive(d);
    if (a.trajectory.variant != v) throw ManifestMismatch(d.string() + ": variant differs");
    if (a.channel_names != names) throw ManifestMismatch(d.string() + ": channel names differ from the variant layout");
    if (std::find(truth_ids.begin(), truth_ids.end(), a.id) == truth_ids.end()) {
      throw ManifestMismatch(d.string() + ": id '" + a.id + "' is not in the evaluation manifest");
    }
    out.push_back(std::move(a));
  }
  return out;
}

nlohmann::json SpeedReport::to_json() const {
  nlohmann::json j = {{"n_sims", n_sims},
                      {"n_steps", n_steps},
                      {"workers", workers},
                      {"simulator_wall_s", simulator_wall_s},
                      {"simulator_per_trajectory_s", simulator_wall_s / static_cast<double>(n_sims)},
                      {"surrogate_wall_s", opt_json(surrogate_wall_s)},
                      {"ratio", opt_json(ratio)},
                      {"hardware", hardware}};
  if (surrogate_wall_s) j["surrogate_per_trajectory_s"] = *surrogate_wall_s / static_cast<double>(n_sims);
  if (!note.empty()) j["note"] = note;
  return j;
}

std::string hardware_descriptor() {
  std::string cpu = "unknown cpu";
  std::ifstream info("/proc/cpuinfo");
  for (std::string line; std::getline(info, line);) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = line.substr(line.find_first_not_of(' ', colon + 1));
      break;
    }
  }
  return cpu + "; " + std::to_string(std::thread::hardware_concurrency()) + " hardware threads; simd " +
         std::string(kernels::to_string(kernels::active_level()));
}

SpeedReport speed_benchmark(const rollout::Forecaster* f, const rollout::RolloutSetup& setup,
                            const std::vector<box::BoxParams>& params, double sigma, std::uint64_t base_seed,
                            std::size_t workers) {
  if (params.empty()) throw InvalidArgument("speed benchmark needs at least one parameter set");
  SpeedReport rep;
  rep.n_sims = params.size();
  rep.workers = std::max<std::size_t>(1, workers);
  rep.hardware = hardware_descriptor();
  const std::size_t h = f ? f->history() : data::default_history(setup.variant);
  const std::size_t l = f ? f->horizon() : data::default_horizon(setup.variant);
  rep.n_steps = h + setup.n_blocks * l;
  const std::size_t n_flux = box::n_fluxes(setup.variant);

  std::vector<box::NoiseSeq> noise(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) noise[i] = box::make_noise(split_seed(base_seed, i), sigma, rep.n_steps, n_flux);
  std::vector<Matrix> seeds(params.size());
  const auto t0 = std::chrono::steady_clock::now();
  parallel_for(params.size(), rep.workers, [&](std::size_t i) {
    const auto traj = box::simulate(params[i], noise[i], rep.n_steps);
    seeds[i] = rows_of(traj.channels, 0, h);
  });
  rep.simulator_wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (f == nullptr) {
    rep.note = "simulator only: ratio undefined";
    return rep;
  }
  if (setup.standardizer == nullptr) throw InvalidArgument("speed benchmark needs a standardizer");
  std::vector<rollout::RolloutInput> inputs(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    inputs[i].id = "bench-" + std::to_string(i);
    inputs[i].seed_window = seeds[i];
    for (const auto& name : setup.standardizer->static_names) inputs[i].statics.push_back(box::get_covariate(params[i], name));
    inputs[i].noise = noise[i];
  }
  const std::size_t chunk = (params.size() + rep.workers - 1) / rep.workers;
  const auto t1 = std::chrono::steady_clock::now();
  parallel_for(rep.workers, rep.workers, [&](std::size_t w) {
    const std::size_t lo = w * chunk, hi = std::min(params.size(), lo + chunk);
    if (lo >= hi) return;
    rollout::rollout_batch(*f, setup,
                           std::vector<rollout::RolloutInput>(inputs.begin() + static_cast<std::ptrdiff_t>(lo),
                                                              inputs.begin() + static_cast<std::ptrdiff_t>(hi)),
                           true);
  });
  rep.surrogate_wall_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t1).count();
  rep.ratio = rep.simulator_wall_s / *rep.surrogate_wall_s;
  return rep;
}

}  // namespace tipcast::eval
