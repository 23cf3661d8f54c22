#pragma once

#include <stdexcept>
#include <string>

namespace tipcast {

/// Base of every error the library raises. `kind()` is a stable identifier
/// used in structured CLI error records.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}
  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

#define TIPCAST_DEFINE_ERROR(Name, tag)                                       \
  class Name : public Error {                                                 \
   public:                                                                    \
    explicit Name(const std::string& what) : Error(tag, what) {}              \
  }

TIPCAST_DEFINE_ERROR(InvalidArgument, "invalid_argument");
TIPCAST_DEFINE_ERROR(InvalidParams, "invalid_params");
TIPCAST_DEFINE_ERROR(UnknownBasin, "unknown_basin");
TIPCAST_DEFINE_ERROR(ShapeError, "shape_mismatch");
TIPCAST_DEFINE_ERROR(ConstantChannel, "constant_channel");
TIPCAST_DEFINE_ERROR(TrajectoryTooShort, "trajectory_too_short");
TIPCAST_DEFINE_ERROR(SplitError, "split_error");
TIPCAST_DEFINE_ERROR(EmptySplit, "empty_split");
TIPCAST_DEFINE_ERROR(FormatError, "format_error");
TIPCAST_DEFINE_ERROR(ManifestMismatch, "manifest_mismatch");
TIPCAST_DEFINE_ERROR(VersionMismatch, "version_mismatch");
TIPCAST_DEFINE_ERROR(ChecksumError, "checksum_failure");
TIPCAST_DEFINE_ERROR(ChannelOrderMismatch, "channel_order_mismatch");
TIPCAST_DEFINE_ERROR(NumericalError, "non_finite");
TIPCAST_DEFINE_ERROR(ConfigError, "config_error");
TIPCAST_DEFINE_ERROR(ZeroVariance, "zero_variance");

#undef TIPCAST_DEFINE_ERROR

/// Simulator fault: invariant violation or non-finite tendency. Carries the
/// failing step index when raised from inside simulate().
class SimulationFault : public Error {
 public:
  SimulationFault(const std::string& what, long step = -1)
      : Error("simulation_fault", step >= 0 ? what + " (step " + std::to_string(step) + ")" : what),
        step_(step) {}
  long step() const noexcept { return step_; }

 private:
  long step_;
};

}  // namespace tipcast
