// tipcast command-line driver.
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "tipcast/archive.hpp"
#include "tipcast/error.hpp"
#include "tipcast/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace tipcast;

namespace {

struct Common {
  std::string config_file;
  std::string profile;
  std::string variant;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string out = "out";
  bool quiet = false;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config_file, "JSON run configuration")->check(CLI::ExistingFile);
  sub->add_option("--profile", c.profile, "named preset")->check(CLI::IsMember({"desk", "paper"}));
  sub->add_option("--variant", c.variant, "box model variant")->check(CLI::IsMember({"four-box", "six-box"}));
  sub->add_option("--seed", c.seed, "global seed");
  sub->add_option("--workers", c.workers, "worker threads (0 = all cores)");
  sub->add_option("--out", c.out, "output directory");
  sub->add_flag("-q,--quiet", c.quiet, "suppress progress lines");
}

pipeline::Context make_context(const Common& c, const std::vector<std::string>& argv) {
  json file = json::object();
  if (!c.config_file.empty()) {
    file = io::read_json(c.config_file);
    if (!file.is_object()) throw ConfigError("config file must hold a JSON object");
  }
  std::string prof = c.profile;
  if (prof.empty()) prof = file.value("profile", std::string("desk"));
  std::string var = c.variant;
  if (var.empty()) var = file.value("variant", std::string("four-box"));
  config::RunConfig cfg = config::profile(prof, box::variant_from_string(var));
  file.erase("profile");
  file.erase("variant");
  cfg = config::overlay(cfg, file);
  if (c.seed) cfg.seed = *c.seed;
  if (c.workers) cfg.workers = *c.workers;

  pipeline::Context ctx;
  ctx.cfg = std::move(cfg);
  ctx.argv = argv;
  if (!c.quiet) {
    ctx.log = [](const std::string& msg) {
      const std::time_t now = std::time(nullptr);
      char stamp[16];
      std::strftime(stamp, sizeof stamp, "%H:%M:%S", std::localtime(&now));
      std::fprintf(stderr, "[%s] %s\n", stamp, msg.c_str());
    };
  }
  return ctx;
}

int report_error(const std::string& command, const std::string& kind, const std::string& message, const fs::path& out) {
  const json rec = {{"status", "error"}, {"command", command}, {"kind", kind}, {"message", message}};
  std::cerr << rec.dump() << "\n";
  std::error_code ec;
  fs::create_directories(out, ec);
  if (!ec) {
    std::ofstream f(out / "error.json", std::ios::trunc);
    if (f) f << rec.dump(2) << "\n";
  }
  return 2;
}

void print_json(const json& j) { std::cout << j.dump(2) << "\n"; }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tipcast: ocean box-model simulation and surrogate forecasting"};
  app.set_version_flag("--version", pipeline::kVersion);
  app.require_subcommand(1);
  std::vector<std::string> args(argv, argv + argc);

  Common c;
  std::string dataset, split = "test", model, label;
  std::vector<std::string> models, pred_dirs, pred_names;
  bool keep_members = false, simulator_only = false;

  auto* sim = app.add_subcommand("simulate", "run one trajectory and write its archive");
  auto* swp = app.add_subcommand("sweep", "quasi-static up/down sweep of a freshwater flux");
  auto* gen = app.add_subcommand("gen-data", "sample trajectories and build the split dataset");
  auto* trn = app.add_subcommand("train", "train the surrogate on a dataset");
  auto* rol = app.add_subcommand("rollout", "autoregressive rollouts over a dataset split");
  auto* ens = app.add_subcommand("ensemble", "stochastic ensemble with collapse-time statistics");
  auto* evl = app.add_subcommand("eval", "score prediction archives against a dataset split");
  auto* bch = app.add_subcommand("bench", "roll out models plus persistence and score them together");
  auto* spd = app.add_subcommand("speed", "surrogate versus simulator throughput");
  for (auto* s : {sim, swp, gen, trn, rol, ens, evl, bch, spd}) add_common(s, c);

  for (auto* s : {trn, rol, evl, bch}) s->add_option("--dataset", dataset, "dataset directory")->required();
  for (auto* s : {rol, evl, bch}) s->add_option("--split", split, "split name")->check(CLI::IsMember({"train", "val", "test"}));
  rol->add_option("--model", model, "model.bin (omit for persistence)")->check(CLI::ExistingFile);
  rol->add_option("--label", label, "subdirectory name for the rollouts");
  ens->add_option("--model", model, "also run the surrogate ensemble")->check(CLI::ExistingFile);
  ens->add_flag("--keep-members", keep_members, "write every member archive");
  spd->add_option("--model", model, "trained model (default: untrained network of the configured size)")
      ->check(CLI::ExistingFile);
  spd->add_flag("--simulator-only", simulator_only, "time the simulator alone");
  bch->add_option("--model", models, "model.bin (repeatable)")->check(CLI::ExistingFile);
  evl->add_option("--predictions", pred_dirs, "prediction archive directory (repeatable)")->required();
  evl->add_option("--name", pred_names, "model name per predictions directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  const std::string command = app.get_subcommands().front()->get_name();
  const fs::path out = c.out;
  try {
    const pipeline::Context ctx = make_context(c, args);
    const std::optional<fs::path> model_file = model.empty() ? std::nullopt : std::optional<fs::path>(model);
    if (command == "simulate") {
      print_json({{"archive", pipeline::simulate(ctx, out).string()}});
    } else if (command == "sweep") {
      pipeline::sweep(ctx, out);
      print_json(io::read_json(out / "hysteresis.json"));
    } else if (command == "gen-data") {
      const auto s = pipeline::gen_data(ctx, out);
      print_json(io::read_json(out / "gen_data.json"));
      (void)s;
    } else if (command == "train") {
      const auto o = pipeline::train(ctx, dataset, out);
      print_json({{"model", o.model_file.string()},
                  {"best_epoch", o.result.best_epoch},
                  {"best_val_loss", o.result.best_val_loss},
                  {"epochs", o.result.history.size()}});
    } else if (command == "rollout") {
      const std::string l = !label.empty() ? label : model_file ? "tft" : "persistence";
      print_json({{"rollouts", pipeline::rollout_split(ctx, dataset, model_file, split, out, l).string()}});
    } else if (command == "ensemble") {
      pipeline::ensemble(ctx, model_file, out, keep_members);
      print_json(io::read_json(out / "stats.json"));
    } else if (command == "eval") {
      if (!pred_names.empty() && pred_names.size() != pred_dirs.size()) {
        throw InvalidArgument("--name must be given once per --predictions");
      }
      std::vector<pipeline::Prediction> preds;
      for (std::size_t i = 0; i < pred_dirs.size(); ++i) {
        preds.push_back({pred_names.empty() ? fs::path(pred_dirs[i]).filename().string() : pred_names[i], "-",
                         pred_dirs[i]});
      }
      pipeline::evaluate(ctx, dataset, preds, split, out);
      std::ifstream md(out / "report.md");
      std::cout << md.rdbuf();
    } else if (command == "bench") {
      std::vector<fs::path> paths(models.begin(), models.end());
      pipeline::bench(ctx, dataset, paths, split, out);
      std::ifstream md(out / "report.md");
      std::cout << md.rdbuf();
    } else if (command == "speed") {
      print_json(pipeline::speed(ctx, model_file, out, simulator_only).to_json());
    }
  } catch (const Error& e) {
    return report_error(command, e.kind(), e.what(), out);
  } catch (const json::exception& e) {
    return report_error(command, "format_error", e.what(), out);
  } catch (const std::exception& e) {
    return report_error(command, "internal_error", e.what(), out);
  }
  return 0;
}
