// Autoregressive long-horizon forecasting: L-step blocks are predicted in
// standardized space, mapped back to raw units, appended, and the history
// window slides forward by L. Beyond the first block the history is made of
// predictions only.
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "tipcast/archive.hpp"
#include "tipcast/boxmodel.hpp"
#include "tipcast/dataset.hpp"
#include "tipcast/ensemble.hpp"
#include "tipcast/tft.hpp"

namespace tipcast::rollout {

/// Produces L standardized steps per query. Queries are standardized windows
/// whose `offset` is the absolute row of the first history step.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual std::size_t history() const = 0;
  virtual std::size_t horizon() const = 0;
  virtual std::vector<Matrix> predict(const std::vector<data::WindowedExample>& queries) const = 0;
};

class TftForecaster final : public Forecaster {
 public:
  explicit TftForecaster(const tft::TftModel& model) : model_(model) {}
  std::size_t history() const override { return model_.config().history; }
  std::size_t horizon() const override { return model_.config().horizon; }
  /// One batched forward pass over all queries.
  std::vector<Matrix> predict(const std::vector<data::WindowedExample>& queries) const override;

 private:
  const tft::TftModel& model_;
};

/// Returns the standardized ground truth for each query, looked up by
/// trajectory_id. A rollout through it reproduces the simulator.
class OracleForecaster final : public Forecaster {
 public:
  OracleForecaster(std::size_t history, std::size_t horizon, const data::Standardizer& s,
                   std::map<std::string, Matrix> raw_truth);
  std::size_t history() const override { return h_; }
  std::size_t horizon() const override { return l_; }
  std::vector<Matrix> predict(const std::vector<data::WindowedExample>& queries) const override;

 private:
  std::size_t h_, l_;
  const data::Standardizer& s_;
  std::map<std::string, Matrix> truth_;
};

/// Repeats the last history row.
class PersistenceForecaster final : public Forecaster {
 public:
  PersistenceForecaster(std::size_t history, std::size_t horizon) : h_(history), l_(horizon) {}
  std::size_t history() const override { return h_; }
  std::size_t horizon() const override { return l_; }
  std::vector<Matrix> predict(const std::vector<data::WindowedExample>& queries) const override;

 private:
  std::size_t h_, l_;
};

struct RolloutInput {
  std::string id;
  Matrix seed_window;           // [H x n_channels], raw units
  std::vector<double> statics;  // raw units, standardizer order
  box::NoiseSeq noise;          // >= H + n_blocks * L - 1 rows; unused in deterministic mode
};

struct RolloutResult {
  std::string id;
  Matrix channels;  // [H + n_blocks * L x n_channels], raw units
  std::vector<std::size_t> block_starts;
  std::optional<double> collapse_atlantic, collapse_pacific;
  box::NoiseSeq noise;
  std::string error;  // set when a member's forecast went non-finite
};

struct RolloutSetup {
  box::Variant variant = box::Variant::FourBox;
  data::Mode mode = data::Mode::Stochastic;
  const data::Standardizer* standardizer = nullptr;
  std::size_t n_blocks = 0;
};

/// Rolls all inputs forward together, one batched prediction per block.
/// With `isolate` a non-finite member is marked failed and dropped; without it
/// the first non-finite prediction throws NumericalError naming the block.
std::vector<RolloutResult> rollout_batch(const Forecaster& f, const RolloutSetup& setup,
                                         const std::vector<RolloutInput>& inputs, bool isolate = false);

RolloutResult autoregressive_rollout(const Forecaster& f, const RolloutSetup& setup, const RolloutInput& input);

/// Rollout input from the first H rows of an archive, driven by its own noise.
RolloutInput input_from_archive(const io::Archive& a, const data::Standardizer& s, std::size_t history);

struct EnsembleForecast {
  std::vector<RolloutResult> members;
  ens::CollapseStats atlantic;
  std::optional<ens::CollapseStats> pacific;
};

struct EnsembleForecastOptions {
  std::size_t n_members = 1;
  double sigma = 1.0e5;
  std::uint64_t base_seed = 0;
  std::size_t workers = 1;
  std::size_t max_batch = 256;  // members per batched forward pass
};

/// Member k is forced by make_noise(split_seed(base_seed, k), sigma); the
/// seed window and statics are shared.
EnsembleForecast ensemble_forecast(const Forecaster& f, const RolloutSetup& setup, const RolloutInput& base,
                                   const EnsembleForecastOptions& options);

/// Archive with source "surrogate" holding a rollout and the noise it used.
io::Archive to_archive(const RolloutResult& r, box::Variant v, const box::BoxParams& params);

}  // namespace tipcast::rollout
