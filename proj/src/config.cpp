#include "tipcast/config.hpp"

#include <cstdio>

#include "tipcast/archive.hpp"
#include "tipcast/error.hpp"
#include "tipcast/parallel.hpp"

namespace tipcast::config {

using nlohmann::json;

namespace {

json opt(const std::optional<std::size_t>& v) { return v ? json(*v) : json(nullptr); }
json opt(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

template <typename T>
std::optional<T> get_opt(const json& j, const char* key) {
  if (j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<T>();
}

void merge(json& target, const json& src, const std::string& path) {
  if (!src.is_object()) throw ConfigError("config section '" + path + "' must be an object");
  for (const auto& [key, value] : src.items()) {
    const std::string here = path.empty() ? key : path + "." + key;
    if (!target.contains(key)) throw ConfigError("unknown config key '" + here + "'");
    json& slot = target[key];
    // covariate override maps are free-form objects
    const bool free_form = key == "params";
    if (slot.is_object() && !free_form) {
      merge(slot, value, here);
    } else {
      slot = value;
    }
  }
}

}  // namespace

std::size_t RunConfig::effective_workers() const { return workers == 0 ? default_workers() : workers; }

json RunConfig::to_json() const {
  return {{"profile", profile},
          {"variant", box::to_string(variant)},
          {"mode", data::to_string(mode)},
          {"seed", seed},
          {"workers", workers},
          {"defaults_file", defaults_file},
          {"simulate", {{"n_steps", simulate.n_steps}, {"sigma", simulate.sigma}, {"params", simulate.params}}},
          {"sweep",
           {{"flux", sweep.flux},
            {"low", sweep.low},
            {"high", sweep.high},
            {"points", sweep.points},
            {"settle_years", sweep.settle_years}}},
          {"gen_data",
           {{"n_trajectories", gen_data.n_trajectories}, {"n_steps", gen_data.n_steps}, {"sigma", gen_data.sigma}}},
          {"dataset",
           {{"n_train", opt(dataset.n_train)},
            {"n_val", opt(dataset.n_val)},
            {"n_test", opt(dataset.n_test)},
            {"f_train", opt(dataset.f_train)},
            {"f_val", opt(dataset.f_val)},
            {"f_test", opt(dataset.f_test)},
            {"filter", dataset.filter},
            {"history", dataset.history},
            {"horizon", dataset.horizon},
            {"stride", dataset.stride}}},
          {"model", model.to_json()},
          {"rollout", {{"n_blocks", rollout.n_blocks}}},
          {"ensemble",
           {{"n_members", ensemble.n_members},
            {"n_steps", ensemble.n_steps},
            {"sigma", ensemble.sigma},
            {"params", ensemble.params}}},
          {"speed",
           {{"variant", box::to_string(speed.variant)}, {"n_sims", speed.n_sims}, {"n_blocks", speed.n_blocks}}}};
}

std::string RunConfig::hash() const {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(io::fnv1a64(to_json().dump())));
  return buf;
}

RunConfig from_json(const json& j) {
  try {
    RunConfig c;
    c.profile = j.at("profile").get<std::string>();
    c.variant = box::variant_from_string(j.at("variant").get<std::string>());
    c.mode = data::mode_from_string(j.at("mode").get<std::string>());
    c.seed = j.at("seed").get<std::uint64_t>();
    c.workers = j.at("workers").get<std::size_t>();
    c.defaults_file = j.at("defaults_file").get<std::string>();
    const json& s = j.at("simulate");
    c.simulate = {s.at("n_steps").get<std::size_t>(), s.at("sigma").get<double>(), s.at("params")};
    const json& w = j.at("sweep");
    c.sweep = {w.at("flux").get<std::string>(), w.at("low").get<double>(), w.at("high").get<double>(),
               w.at("points").get<std::size_t>(), w.at("settle_years").get<double>()};
    const json& g = j.at("gen_data");
    c.gen_data = {g.at("n_trajectories").get<std::size_t>(), g.at("n_steps").get<std::size_t>(),
                  g.at("sigma").get<double>()};
    const json& d = j.at("dataset");
    c.dataset.n_train = get_opt<std::size_t>(d, "n_train");
    c.dataset.n_val = get_opt<std::size_t>(d, "n_val");
    c.dataset.n_test = get_opt<std::size_t>(d, "n_test");
    c.dataset.f_train = get_opt<double>(d, "f_train");
    c.dataset.f_val = get_opt<double>(d, "f_val");
    c.dataset.f_test = get_opt<double>(d, "f_test");
    c.dataset.filter = d.at("filter").get<std::string>();
    if (c.dataset.filter != "none" && c.dataset.filter != "balanced" && c.dataset.filter != "collapse_only") {
      throw ConfigError("dataset.filter must be none, balanced or collapse_only");
    }
    c.dataset.history = d.at("history").get<std::size_t>();
    c.dataset.horizon = d.at("horizon").get<std::size_t>();
    c.dataset.stride = d.at("stride").get<std::size_t>();
    c.model = tft::TftConfig::from_json(j.at("model"));
    c.rollout.n_blocks = j.at("rollout").at("n_blocks").get<std::size_t>();
    const json& e = j.at("ensemble");
    c.ensemble = {e.at("n_members").get<std::size_t>(), e.at("n_steps").get<std::size_t>(), e.at("sigma").get<double>(),
                  e.at("params")};
    const json& sp = j.at("speed");
    c.speed = {box::variant_from_string(sp.at("variant").get<std::string>()), sp.at("n_sims").get<std::size_t>(),
               sp.at("n_blocks").get<std::size_t>()};
    if (!c.simulate.params.is_object() || !c.ensemble.params.is_object()) {
      throw ConfigError("params overrides must be objects");
    }
    return c;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

RunConfig overlay(const RunConfig& base, const json& overrides) {
  json merged = base.to_json();
  merge(merged, overrides, "");
  return from_json(merged);
}

RunConfig profile(const std::string& name, box::Variant variant) {
  RunConfig c;
  c.profile = name;
  c.variant = variant;
  const bool four = variant == box::Variant::FourBox;
  c.dataset.history = data::default_history(variant);
  c.dataset.horizon = data::default_horizon(variant);
  c.dataset.stride = c.dataset.horizon;
  c.speed.n_blocks = (4000 - data::default_history(box::Variant::SixBox)) / data::default_horizon(box::Variant::SixBox);
  c.ensemble.params = four ? json{{"fw_north", 4.15e5}} : json{{"fw_north_atlantic", 4.05e5}};
  if (name == "desk") {
    // Balanced 200/40/40 needs 140 collapsing runs; about 37% of sampled
    // four-box runs collapse within 1100 steps.
    c.gen_data = {four ? 480u : 20000u, four ? 1100u : 4000u, 1.0e5};
    c.dataset.n_train = 200;
    c.dataset.n_val = 40;
    c.dataset.n_test = 40;
    c.dataset.filter = "balanced";
    c.model.d_model = 16;
    c.model.n_lstm_layers = 1;
    c.model.dropout = 0.1;
    c.model.history = c.dataset.history;
    c.model.horizon = c.dataset.horizon;
    c.model.loss = tft::LossKind::Sdtw;
    c.model.gamma = 1.0;
    c.model.lr = 1e-3;
    c.model.batch_size = 32;
    c.model.max_epochs = 20;
    c.model.patience = 4;
    c.model.clip_norm = 1.0;
    c.rollout.n_blocks = four ? 20 : 38;
  } else if (name == "paper") {
    c.model = tft::TftConfig::paper_preset(variant);
    c.model.loss = tft::LossKind::Sdtw;
    c.model.gamma = 1.0;
    if (four) {
      c.gen_data = {19000, 4000, 1.0e5};
      c.dataset.n_train = 6000;
      c.dataset.n_val = 401;
      c.dataset.n_test = 401;
      c.dataset.filter = "balanced";
      c.rollout.n_blocks = 20;
    } else {
      c.gen_data = {1400000, 4000, 1.0e5};
      c.dataset.n_train = 24909;
      c.dataset.n_val = 655;
      c.dataset.n_test = 656;
      c.dataset.filter = "collapse_only";
      c.rollout.n_blocks = 38;
    }
    c.ensemble.n_members = 1000;
  } else {
    throw ConfigError("unknown profile '" + name + "' (desk|paper)");
  }
  return c;
}

}  // namespace tipcast::config
