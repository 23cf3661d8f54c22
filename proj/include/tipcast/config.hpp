// Run configuration for the command-line pipeline: a named profile (desk or
// paper) overlaid by a JSON file and flag overrides. Unknown keys are
// rejected at every level.
#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "json.hpp"
#include "tipcast/boxmodel.hpp"
#include "tipcast/dataset.hpp"
#include "tipcast/tft.hpp"

namespace tipcast::config {

struct SimulateConfig {
  std::size_t n_steps = 4000;
  double sigma = 1.0e5;
  nlohmann::json params = nlohmann::json::object();  // covariate overrides
};

struct SweepConfig {
  std::string flux;  // empty = defaults file
  double low = 0.0, high = 0.0;
  std::size_t points = 0;
  double settle_years = 0.0;
};

struct GenDataConfig {
  std::size_t n_trajectories = 0;
  std::size_t n_steps = 0;
  double sigma = 1.0e5;
};

struct DatasetConfig {
  std::optional<std::size_t> n_train, n_val, n_test;
  std::optional<double> f_train, f_val, f_test;
  std::string filter = "balanced";  // none | balanced | collapse_only
  std::size_t history = 0, horizon = 0, stride = 0;
};

struct RolloutConfig {
  std::size_t n_blocks = 20;
};

struct EnsembleConfig {
  std::size_t n_members = 200;
  std::size_t n_steps = 4000;
  double sigma = 1.0e5;
  nlohmann::json params = nlohmann::json::object();
};

struct SpeedConfig {
  box::Variant variant = box::Variant::SixBox;
  std::size_t n_sims = 100;
  std::size_t n_blocks = 38;
};

struct RunConfig {
  std::string profile = "desk";
  box::Variant variant = box::Variant::FourBox;
  data::Mode mode = data::Mode::Stochastic;
  std::uint64_t seed = 0;
  std::size_t workers = 0;  // 0 = available cores
  std::string defaults_file;
  SimulateConfig simulate;
  SweepConfig sweep;
  GenDataConfig gen_data;
  DatasetConfig dataset;
  tft::TftConfig model;  // data dimensions are filled in from the dataset
  RolloutConfig rollout;
  EnsembleConfig ensemble;
  SpeedConfig speed;

  std::size_t effective_workers() const;
  nlohmann::json to_json() const;
  /// Hash of the canonical JSON form.
  std::string hash() const;
};

/// Named presets: "desk" (single-machine scale) and "paper" (published scale).
RunConfig profile(const std::string& name, box::Variant variant = box::Variant::FourBox);

/// Overlays `overrides` onto `base`. Throws ConfigError on unknown keys or
/// ill-typed values.
RunConfig overlay(const RunConfig& base, const nlohmann::json& overrides);

RunConfig from_json(const nlohmann::json& j);

}  // namespace tipcast::config
