// Versioned, checksummed model container:
//   "TIPCASTM" | u32 version | u64 header length | JSON header |
//   parameter values (little-endian float64, header order) | u64 FNV-1a of all preceding bytes
// The header holds the model config, variant, mode, channel order, the
// standardizer constants and every parameter's name and shape.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tipcast/dataset.hpp"
#include "tipcast/tft.hpp"

namespace tipcast::io {

inline constexpr std::uint32_t kModelVersion = 1;

struct ModelBundle {
  tft::TftModel model;
  box::Variant variant = box::Variant::FourBox;
  data::Mode mode = data::Mode::Stochastic;
  data::Standardizer standardizer;
};

std::string serialize_model(const ModelBundle& bundle);
ModelBundle deserialize_model(const std::string& bytes);

void save_model(const std::filesystem::path& file, const ModelBundle& bundle);

/// Throws VersionMismatch, ChecksumError or FormatError on a bad container and
/// ChannelOrderMismatch when `expected_channels` is given and differs.
ModelBundle load_model(const std::filesystem::path& file,
                       const std::vector<std::string>* expected_channels = nullptr);

}  // namespace tipcast::io
