// Forecast metrics, collapse scoring, report tables, ingestion of external
// prediction archives and the simulator/surrogate speed benchmark.
//
// RMSE and soft-DTW metrics are computed on standardized channels; raw-unit
// RMSEs are reported alongside.
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "tipcast/archive.hpp"
#include "tipcast/dataset.hpp"
#include "tipcast/ensemble.hpp"
#include "tipcast/rollout.hpp"

namespace tipcast::eval {

/// Root mean squared error over all entries, or over one column.
double rmse(const Matrix& pred, const Matrix& truth, std::optional<std::size_t> column = std::nullopt);

/// RMSE over the first forecast window, rows [history, history + horizon).
double rmse_single(const Matrix& pred, const Matrix& truth, std::size_t history, std::size_t horizon);

/// RMSE over every row after the seed window.
double rmse_ar(const Matrix& pred, const Matrix& truth, std::size_t history,
               std::optional<std::size_t> column = std::nullopt);

/// Throws InvalidArgument below two samples and ZeroVariance on a constant input.
double pearson_r(const std::vector<double>& x, const std::vector<double>& y);

/// Last history row repeated `horizon` times.
Matrix persistence_forecast(const Matrix& history, std::size_t horizon);

struct ParityRow {
  std::string id;
  std::optional<double> truth, pred;
};

struct CollapseMetrics {
  std::size_t n_samples = 0;
  double detection_rate = 0.0;  // agreement on whether a collapse occurs
  std::size_t n_joint = 0;      // both collapse
  std::optional<double> timing_r;
  std::string timing_note;      // why timing_r is absent
  std::vector<ParityRow> parity;
};

CollapseMetrics collapse_metrics(const std::vector<std::string>& ids, const std::vector<std::optional<double>>& pred,
                                 const std::vector<std::optional<double>>& truth);

struct EnsembleParity {
  std::size_t n_samples = 0;
  std::optional<double> mean_r, std_r;
};

/// Correlates per-sample ensemble means and stds across the two sources.
EnsembleParity ensemble_parity(const std::vector<ens::CollapseStats>& pred,
                               const std::vector<ens::CollapseStats>& truth);

struct MetricReport {
  std::string model;
  std::string training_loss;
  std::string mode = "with_known_covariates";
  std::size_t n_samples = 0;
  bool valid = true;  // false when any prediction holds non-finite values
  double sdtw_1 = 0.0, rmse_1 = 0.0, rmse_ar = 0.0, rmse_ar_mnA = 0.0;
  double rmse_1_raw = 0.0, rmse_ar_raw = 0.0;
  std::optional<double> r_collapse_atl, r_collapse_pac, r_end_state_mnA;
  double detection_rate_atl = 0.0;
  std::optional<double> detection_rate_pac;
  std::vector<std::string> notes;

  nlohmann::json to_json() const;
};

struct EvalSetup {
  box::Variant variant = box::Variant::FourBox;
  const data::Standardizer* standardizer = nullptr;
  std::size_t history = 0, horizon = 0;
  double gamma = 1.0;
};

/// Scores predicted rollout archives against truth archives matched by id.
/// Throws ManifestMismatch on unmatched ids or channel layouts.
MetricReport evaluate(const std::string& model, const std::string& training_loss, const EvalSetup& setup,
                      const std::vector<io::Archive>& truth, const std::vector<io::Archive>& pred,
                      CollapseMetrics* atlantic_detail = nullptr);

/// Eight-column table: Model, Training Loss, SDTW(1), RMSE(1), RMSE(AR),
/// RMSE_{M_n^A}(AR), r_collapse,A, r_{M_n^A,end}.
std::string report_csv(const std::vector<MetricReport>& rows);
std::string report_markdown(const std::vector<MetricReport>& rows);

/// report.csv, report.md and metrics.json.
void write_report(const std::filesystem::path& dir, const std::vector<MetricReport>& rows);

void write_parity_csv(const std::filesystem::path& file, const CollapseMetrics& m);

/// Counts of collapse times per bin of `bin_years` for both sources.
void write_histogram_csv(const std::filesystem::path& file, const CollapseMetrics& m, double bin_years);

/// Reads every archive under `dir`; each must match the variant's channel
/// layout and carry the id of a truth archive.
std::vector<io::Archive> ingest_external_predictions(const std::filesystem::path& dir, box::Variant v,
                                                     const std::vector<std::string>& truth_ids);

struct SpeedReport {
  std::size_t n_sims = 0, n_steps = 0, workers = 1;
  double simulator_wall_s = 0.0;
  std::optional<double> surrogate_wall_s;
  std::optional<double> ratio;  // simulator time / surrogate time per trajectory
  std::string hardware;
  std::string note;

  nlohmann::json to_json() const;
};

std::string hardware_descriptor();

/// Times n_sims simulator runs and one batched surrogate rollout of the same
/// length (H + n_blocks L) for the same parameter sets. Without a forecaster
/// only the simulator is timed and the ratio is left undefined.
SpeedReport speed_benchmark(const rollout::Forecaster* f, const rollout::RolloutSetup& setup,
                            const std::vector<box::BoxParams>& params, double sigma, std::uint64_t base_seed,
                            std::size_t workers);

}  // namespace tipcast::eval
