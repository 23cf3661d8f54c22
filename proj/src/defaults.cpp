#include "tipcast/defaults.hpp"

#include <fstream>

#include "tipcast/error.hpp"

namespace tipcast {
namespace {

box::BoxParams params_from_object(box::Variant v, const nlohmann::json& obj) {
  box::BoxParams p;
  p.variant = v;
  for (const auto& name : box::covariate_names(v)) {
    if (!obj.contains(name)) throw FormatError("params missing covariate '" + name + "'");
    box::set_covariate(p, name, obj.at(name).get<double>());
  }
  for (const auto& [key, value] : obj.items()) {
    if (key == "variant") continue;
    const auto names = box::covariate_names(v);
    if (std::find(names.begin(), names.end(), key) == names.end()) {
      throw FormatError("params contain unknown key '" + key + "'");
    }
  }
  return p;
}

VariantDefaults variant_defaults(box::Variant v, const nlohmann::json& j) {
  VariantDefaults d;
  d.params = params_from_object(v, j.at("params"));
  d.params.validate();
  d.bounds.base = d.params;
  for (const auto& [name, range] : j.at("bounds").items()) {
    d.bounds.covariates.push_back({name, range.at(0).get<double>(), range.at(1).get<double>()});
  }
  d.bounds.validate();
  const auto& s = j.at("sweep");
  d.sweep = {s.at("flux").get<std::string>(), s.at("low").get<double>(), s.at("high").get<double>(),
             s.at("points").get<std::size_t>(), s.at("settle_years").get<double>()};
  return d;
}

}  // namespace

std::string default_defaults_path() { return std::string(TIPCAST_DATA_DIR) + "/defaults-v1.json"; }

Defaults load_defaults(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open defaults file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("defaults file " + path + ": " + e.what());
  }
  if (j.value("format", "") != "tipcast-defaults") throw FormatError(path + " is not a defaults file");
  Defaults d;
  d.version = j.at("version").get<int>();
  if (d.version != 1) throw VersionMismatch("unsupported defaults version " + std::to_string(d.version));
  d.four_box = variant_defaults(box::Variant::FourBox, j.at("four-box"));
  d.six_box = variant_defaults(box::Variant::SixBox, j.at("six-box"));
  return d;
}

nlohmann::json params_to_json(const box::BoxParams& p) {
  nlohmann::json j;
  j["variant"] = std::string(box::to_string(p.variant));
  for (const auto& name : box::covariate_names(p.variant)) j[name] = box::get_covariate(p, name);
  return j;
}

box::BoxParams params_from_json(const nlohmann::json& j) {
  const auto v = box::variant_from_string(j.at("variant").get<std::string>());
  return params_from_object(v, j);
}

}  // namespace tipcast
