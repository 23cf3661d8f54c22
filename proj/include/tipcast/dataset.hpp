// Windowed, standardized supervised examples built from trajectory archives.
//
// Known covariates at step t describe the forcing that produced row t: the
// noise row t - 1 in stochastic mode (zeros at t = 0), or the period-4
// encoding (sin(2 pi t / 4), cos(2 pi t / 4)) in deterministic mode.
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tipcast/archive.hpp"
#include "tipcast/boxmodel.hpp"
#include "tipcast/matrix.hpp"

namespace tipcast::data {

enum class Mode { Deterministic, Stochastic };

std::string_view to_string(Mode m);
Mode mode_from_string(std::string_view s);

std::size_t n_known(Mode m, box::Variant v);
std::vector<std::string> known_names(Mode m, box::Variant v);

/// Known-covariate rows [begin, begin + count) given the full noise matrix
/// (ignored in deterministic mode).
Matrix known_rows(Mode m, const Matrix& noise, std::size_t begin, std::size_t count);

/// Window lengths used by each variant (four-box 100/50, six-box 200/100).
std::size_t default_history(box::Variant v);
std::size_t default_horizon(box::Variant v);

struct Standardizer {
  std::vector<std::string> channel_names, known_names, static_names;
  std::vector<double> channel_mean, channel_std;
  std::vector<double> known_mean, known_std;
  std::vector<double> static_mean, static_std;

  Matrix transform_channels(const Matrix& raw) const;
  Matrix inverse_channels(const Matrix& z) const;
  Matrix transform_known(const Matrix& raw) const;
  std::vector<double> transform_statics(std::span<const double> raw) const;

  nlohmann::json to_json() const;
  static Standardizer from_json(const nlohmann::json& j);
  bool operator==(const Standardizer&) const = default;
};

/// Mean and population std over every row of every training trajectory; known
/// channels are standardized in stochastic mode only. Statics are the
/// trajectories' values of `static_names`. Throws ConstantChannel on zero spread.
Standardizer fit_standardizer(const std::vector<const io::Archive*>& train, Mode mode,
                              const std::vector<std::string>& static_names);

struct WindowedExample {
  Matrix history;       // [H x n_channels]
  Matrix past_known;    // [H x n_known]
  Matrix future_known;  // [L x n_known]
  Matrix target;        // [L x n_channels]
  std::vector<double> statics;
  std::string trajectory_id;
  std::size_t offset = 0;
};

/// Raw-unit windows at offsets 0, stride, 2 * stride, ...
std::vector<WindowedExample> window_split(const io::Archive& traj, std::size_t history,
                                          std::size_t horizon, std::size_t stride, Mode mode,
                                          const std::vector<std::string>& static_names);

WindowedExample standardize(const WindowedExample& raw, const Standardizer& s);

struct SplitSpec {
  // Either explicit counts or fractions (which must sum to 1).
  std::optional<std::size_t> n_train, n_val, n_test;
  std::optional<double> f_train, f_val, f_test;
  enum class Filter { None, Balanced, CollapseOnly } filter = Filter::None;
  std::uint64_t seed = 0;
  std::size_t history = 0, horizon = 0, stride = 0;  // 0 = variant default / horizon
  Mode mode = Mode::Stochastic;
  std::vector<std::string> static_names;  // empty = static_names_for(variant)
};

struct DatasetInfo {
  box::Variant variant = box::Variant::FourBox;
  Mode mode = Mode::Stochastic;
  std::size_t history = 0, horizon = 0, stride = 0;
  std::filesystem::path archive_root;
  Standardizer standardizer;
  std::vector<std::string> train_ids, val_ids, test_ids;
  std::size_t n_train_examples = 0, n_val_examples = 0, n_test_examples = 0;

  std::size_t n_channels() const { return standardizer.channel_names.size(); }
  std::size_t n_known() const { return standardizer.known_names.size(); }
  std::size_t n_statics() const { return standardizer.static_names.size(); }
  std::size_t record_size() const;
  nlohmann::json to_json() const;
  static DatasetInfo from_json(const nlohmann::json& j);
};

/// Splits archives under `archive_root` by trajectory, fits the standardizer
/// on the training split and writes dataset.json plus
/// <split>/examples.bin for train, val and test.
DatasetInfo build_dataset(const std::filesystem::path& archive_root, const SplitSpec& spec,
                          const std::filesystem::path& out_dir);

DatasetInfo read_dataset_info(const std::filesystem::path& dir);

/// Standardized examples of one split ("train", "val" or "test").
std::vector<WindowedExample> load_split(const std::filesystem::path& dir, const DatasetInfo& info,
                                        std::string_view split);

/// Raw archives of one split, in manifest order.
std::vector<io::Archive> load_split_archives(const DatasetInfo& info, std::string_view split);

/// Covariate names exposed as statics for a variant (its varying bounds).
std::vector<std::string> static_names_for(box::Variant v);

}  // namespace tipcast::data
