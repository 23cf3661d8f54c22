#pragma once

#include <string>

#include "tipcast/boxmodel.hpp"
#include "tipcast/ensemble.hpp"
#include "json.hpp"

namespace tipcast {

struct SweepDefaults {
  std::string flux;
  double low = 0.0;
  double high = 0.0;
  std::size_t points = 0;
  double settle_years = 0.0;
};

struct VariantDefaults {
  box::BoxParams params;
  ens::ParamBounds bounds;
  SweepDefaults sweep;
};

struct Defaults {
  int version = 0;
  VariantDefaults four_box;
  VariantDefaults six_box;

  const VariantDefaults& operator[](box::Variant v) const {
    return v == box::Variant::FourBox ? four_box : six_box;
  }
};

std::string default_defaults_path();
Defaults load_defaults(const std::string& path = default_defaults_path());

/// Every covariate of the variant, keyed by name, plus "variant".
nlohmann::json params_to_json(const box::BoxParams& p);
/// Inverse of params_to_json. All covariates of the variant must be present.
box::BoxParams params_from_json(const nlohmann::json& j);

}  // namespace tipcast
