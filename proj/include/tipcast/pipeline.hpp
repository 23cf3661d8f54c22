// End-to-end commands shared by the CLI and the acceptance suite. Each writes
// its artifacts under `out` together with a run-manifest.json.
#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "tipcast/config.hpp"
#include "tipcast/dataset.hpp"
#include "tipcast/ensemble.hpp"
#include "tipcast/eval.hpp"
#include "tipcast/model_io.hpp"
#include "tipcast/train.hpp"

namespace tipcast::pipeline {

namespace fs = std::filesystem;

inline constexpr const char* kVersion = "0.1.0";

using Logger = std::function<void(const std::string&)>;

struct Context {
  config::RunConfig cfg;
  std::vector<std::string> argv;
  Logger log = [](const std::string&) {};
};

void write_run_manifest(const fs::path& out, const std::string& command, const Context& ctx,
                        const nlohmann::json& inputs = nlohmann::json::object());

/// Parameters of the configured variant with covariate overrides applied.
box::BoxParams params_with(const Context& ctx, box::Variant v, const nlohmann::json& overrides);

/// One trajectory archive at out/<id>.
fs::path simulate(const Context& ctx, const fs::path& out);

/// sweep.csv and hysteresis.json.
ens::Hysteresis sweep(const Context& ctx, const fs::path& out);

struct GenDataSummary {
  std::size_t generated = 0, collapsed = 0, faulted = 0;
  data::DatasetInfo dataset;
};

/// Sampled archives under out/archives and the split dataset under out/dataset.
GenDataSummary gen_data(const Context& ctx, const fs::path& out);

struct TrainOutcome {
  train::TrainResult result;
  fs::path model_file;
};

/// model.bin, history.csv and selection_weights.csv.
TrainOutcome train(const Context& ctx, const fs::path& dataset_dir, const fs::path& out);

/// Mean variable-selection weight per input over a split.
void write_selection_weights(const fs::path& file, const tft::TftModel& model, const data::Standardizer& s,
                             const std::vector<data::WindowedExample>& examples);

/// Rollouts of a split (each seeded from its first H rows and driven by its
/// own noise) written as archives under out/<label>/<id>. With no model the
/// persistence baseline is rolled out.
fs::path rollout_split(const Context& ctx, const fs::path& dataset_dir, const std::optional<fs::path>& model_file,
                       const std::string& split, const fs::path& out, const std::string& label);

struct Prediction {
  std::string model;
  std::string training_loss;
  fs::path dir;
};

/// Ingests every prediction directory through the external-archive path and
/// writes report.csv, report.md, metrics.json plus parity and histogram CSVs
/// for the first entry.
std::vector<eval::MetricReport> evaluate(const Context& ctx, const fs::path& dataset_dir,
                                         const std::vector<Prediction>& preds, const std::string& split,
                                         const fs::path& out);

/// Rolls out each model and the persistence baseline on the split and scores
/// them in one table.
std::vector<eval::MetricReport> bench(const Context& ctx, const fs::path& dataset_dir,
                                      const std::vector<fs::path>& models, const std::string& split,
                                      const fs::path& out);

struct EnsembleOutcome {
  ens::EnsembleResult simulator;
  std::optional<rollout::EnsembleForecast> surrogate;
};

/// Simulator ensemble (stats.json, collapse_times.csv, optional member
/// archives) and, given a model, the matching surrogate ensemble seeded from
/// the first H rows of member 0.
EnsembleOutcome ensemble(const Context& ctx, const std::optional<fs::path>& model_file, const fs::path& out,
                         bool keep_members);

/// speed.json; an untrained network of the configured size stands in when no
/// model is given (timing does not depend on weights).
eval::SpeedReport speed(const Context& ctx, const std::optional<fs::path>& model_file, const fs::path& out,
                        bool simulator_only = false);

}  // namespace tipcast::pipeline
