// On-disk trajectory archives:
//   <dir>/manifest.json  dt, variant, channel names, params, seed, sigma,
//                        collapse times, source
//   <dir>/channels.bin   little-endian float64, row-major [n_steps x n_channels]
//   <dir>/noise.bin      little-endian float64, row-major [n_steps x n_noise]
// Rollout archives use the same layout with source = "surrogate" (or
// "external" for ingested third-party predictions).
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "tipcast/boxmodel.hpp"
#include "tipcast/matrix.hpp"

namespace tipcast::io {

inline constexpr int kArchiveVersion = 1;

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xCBF29CE484222325ull);

void write_f64(const std::filesystem::path& file, const std::vector<double>& values);
std::vector<double> read_f64(const std::filesystem::path& file, std::size_t expected_count);

void write_json(const std::filesystem::path& file, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& file);

struct Archive {
  std::string id;
  std::string source = "simulator";
  box::Trajectory trajectory;
  std::vector<std::string> channel_names;  // columns of trajectory.channels
  std::vector<std::string> noise_names;    // columns of trajectory.noise.values
  nlohmann::json extra = nlohmann::json::object();
};

/// Archive view of a simulator trajectory (full channel layout, flux noise).
Archive from_trajectory(const box::Trajectory& traj, std::string id);

void write_archive(const std::filesystem::path& dir, const Archive& a);

/// Throws FormatError on missing/truncated files or malformed manifests.
Archive read_archive(const std::filesystem::path& dir);

/// Sorted list of archive directories (those holding a manifest.json) under root.
std::vector<std::filesystem::path> list_archives(const std::filesystem::path& root);

}  // namespace tipcast::io
