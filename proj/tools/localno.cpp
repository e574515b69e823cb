// Command-line front end: gen, train, eval and verify.
//
// Every command takes an optional --config JSON file of flat key/value pairs.
// Flags given on the command line override file values, and the resolved
// configuration is written to <out>/config.json so that
//   localno <cmd> --config <out>/config.json --out <elsewhere>
// repeats the run.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "localno/data.hpp"
#include "localno/run.hpp"
#include "localno/verify.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace localno;

namespace {

// Failures of the run itself (bad metric, failed assertion, error) exit 1;
// malformed command lines exit 2.
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  require(static_cast<bool>(os), ErrorKind::Io, "cannot write " + path.string());
  os << text;
  require(static_cast<bool>(os), ErrorKind::Io, "write failed: " + path.string());
}

json read_json_file(const std::string& path) {
  std::ifstream is(path);
  require(static_cast<bool>(is), ErrorKind::Io, "cannot open config " + path);
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw UsageError(path + ": " + e.what());
  }
}

/// One subcommand: its defaults, the keys set by flags, and the config file.
struct Command {
  std::string name;
  CLI::App* app = nullptr;
  json defaults;
  json flags = json::object();
  std::string config_path;
  std::string out;

  template <class T>
  void option(const std::string& key, const std::string& help) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    app->add_option_function<T>(flag, [this, key](const T& v) { flags[key] = v; }, help);
  }

  void flag(const std::string& key, const std::string& help) {
    std::string flag = "--" + key;
    std::replace(flag.begin(), flag.end(), '_', '-');
    app->add_flag_function(flag, [this, key](std::int64_t n) { flags[key] = n > 0; }, help);
  }

  /// defaults <- config file <- flags. Keys outside `defaults` are usage errors.
  json resolve() const {
    json r = defaults;
    auto overlay = [&](const json& src, const std::string& origin) {
      if (!src.is_object()) throw UsageError(origin + " must be a JSON object");
      for (const auto& [k, v] : src.items()) {
        if (k == "command") {
          if (v != name) throw UsageError(origin + " was written for '" + v.dump() + "', not '" + name + "'");
          continue;
        }
        if (!r.contains(k)) throw UsageError(origin + ": unknown key '" + k + "' for " + name);
        r[k] = v;
      }
    };
    if (!config_path.empty()) overlay(read_json_file(config_path), config_path);
    overlay(flags, "command line");
    return r;
  }
};

void prepare_out(const std::string& out, const std::string& command, const json& resolved) {
  fs::create_directories(out);
  json j = resolved;
  j["command"] = command;
  write_text(fs::path(out) / "config.json", j.dump(2) + "\n");
}

std::string need_string(const json& cfg, const std::string& key) {
  const auto v = cfg.at(key).get<std::string>();
  if (v.empty()) throw UsageError("missing required setting '" + key + "'");
  return v;
}

// ---------------------------------------------------------------------------

int run_gen(const Command& cmd) {
  const auto cfg = cmd.resolve();
  const auto task = need_string(cfg, "task");
  const auto n = cfg.at("grid").get<std::size_t>();
  const auto count = cfg.at("count").get<std::size_t>();
  const auto seed = cfg.at("seed").get<std::uint64_t>();
  const auto split = cfg.at("split").get<std::string>();
  if (task != "darcy" && task != "parabola") throw UsageError("--task must be darcy or parabola");
  if (n < 2) throw UsageError("--grid must be >= 2");
  prepare_out(cmd.out, "gen", cfg);

  Dataset ds;
  if (task == "darcy") {
    ds = gen_darcy_dataset(make_unit_square(n), count, split_seed(seed, split), split);
  } else {
    // Parabola files carry the inputs only; the targets depend on a kernel
    // and are produced by the consumer from the stored coefficients.
    const auto spec = ParabolaSpec::uniform(cfg.at("channels").get<std::size_t>(), cfg.at("scale").get<double>(), seed);
    const auto g = make_unit_square(n);
    const auto t = gen_parabola(g, spec);
    ds.task = "parabola";
    ds.seed = seed;
    ds.split = split;
    ds.grid = g;
    for (std::size_t j = 0; j < spec.channels(); ++j) ds.input_channels.push_back("v" + std::to_string(j));
    ds.input = t.input;
    ds.target = Field(1, 0, g.size());
    ds.extra = {{"coefficients", spec.coefficients}, {"scale", spec.scale}};
  }
  const auto path = fs::path(cmd.out) / "dataset.bin";
  write_dataset(ds, path.string());
  std::printf("wrote %zu %s sample(s) on a %zux%zu grid to %s\n", ds.size(), task.c_str(), n, n, path.c_str());
  return 0;
}

int run_train(const Command& cmd) {
  auto cfg = cmd.resolve();
  const auto data = need_string(cfg, "data");
  const auto val_path = cfg.at("val").get<std::string>();
  json settings = cfg;
  settings.erase("data");
  settings.erase("val");
  settings = resolve_train_settings(settings);
  prepare_out(cmd.out, "train", cfg);

  const auto train = read_dataset(data);
  Dataset val;
  if (!val_path.empty()) val = read_dataset(val_path);

  const auto ckpt = (fs::path(cmd.out) / "checkpoint.bin").string();
  const auto metrics = fs::path(cmd.out) / "metrics.csv";
  std::vector<EpochRecord> seen;
  TrainHooks hooks;
  hooks.last_good_checkpoint = ckpt;
  hooks.on_epoch = [&](const EpochRecord& r, const LocalNOModel&) {
    seen.push_back(r);
    std::printf("epoch %zu lr %.3g train_loss %.6g val_rel_l2 %.6g\n", r.epoch, r.lr, r.train_loss, r.val_rel_l2);
    std::fflush(stdout);
  };
  TrainResult res;
  try {
    res = train_on_dataset(settings, train, val_path.empty() ? nullptr : &val, hooks);
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::Diverged) write_text(metrics, history_csv(seen));
    throw;
  }
  write_checkpoint(res.model, ckpt, {{"settings", settings}});
  write_text(metrics, history_csv(res.history));
  std::printf("final train loss %.6g; checkpoint %s\n", res.final_train_loss, ckpt.c_str());
  return 0;
}

int run_eval(const Command& cmd) {
  const auto cfg = cmd.resolve();
  const auto ckpt = need_string(cfg, "checkpoint");
  const auto data = need_string(cfg, "data");
  const auto resolution = cfg.at("resolution").get<std::size_t>();
  prepare_out(cmd.out, "eval", cfg);

  const auto model = read_checkpoint(ckpt);
  auto ds = read_dataset(data);
  if (resolution != 0 && !(ds.grid.dim() == 2 && ds.grid.shape()[0] == resolution && ds.grid.shape()[1] == resolution)) {
    // Fresh analytic samples with the file's seeds; the model is applied on
    // the new grid directly, never on a resampled input.
    ds = regenerate_darcy(ds, resolution);
  }
  const auto r = evaluate_on_dataset(model, ds);
  std::string csv = "sample,rel_l2\n";
  for (std::size_t k = 0; k < r.per_sample.size(); ++k) csv += std::to_string(k) + "," + fmt(r.per_sample[k]) + "\n";
  csv += "mean," + fmt(r.rel_l2) + "\n";
  write_text(fs::path(cmd.out) / "metrics.csv", csv);
  if (cfg.at("save_predictions").get<bool>()) {
    Dataset pred = ds;
    pred.task = ds.task + "-prediction";
    pred.target = r.prediction;
    write_dataset(pred, (fs::path(cmd.out) / "predictions.bin").string());
  }
  const auto shape = ds.grid.shape();
  std::printf("relative L2 %.6e over %zu sample(s) at %zux%zu\n", r.rel_l2, ds.size(), shape[0],
              shape.size() > 1 ? shape[1] : std::size_t{1});
  return 0;
}

int run_verify(const Command& cmd) {
  const auto cfg = cmd.resolve();
  const auto suite = cfg.at("suite").get<std::string>();
  VerifyOptions opt;
  opt.seed = cfg.at("seed").get<std::uint64_t>();
  opt.max_resolution = cfg.at("max_resolution").get<std::size_t>();
  const auto& names = verify_suite_names();
  std::vector<std::string> todo;
  if (suite == "all") {
    todo = names;
  } else if (std::find(names.begin(), names.end(), suite) != names.end()) {
    todo = {suite};
  } else {
    std::string list;
    for (const auto& n : names) list += " " + n;
    throw UsageError("unknown suite '" + suite + "'; choose all or one of:" + list);
  }
  prepare_out(cmd.out, "verify", cfg);

  std::vector<std::string> failures;
  for (const auto& name : todo) {
    const auto rep = run_verify_suite(name, opt);
    write_suite_csv(rep, cmd.out);
    std::fputs(check_lines(rep).c_str(), stdout);
    std::fflush(stdout);
    for (const auto& c : rep.checks)
      if (!c.passed) failures.push_back(name + "/" + c.name);
  }
  if (failures.empty()) return 0;
  std::fprintf(stderr, "%zu check(s) failed:\n", failures.size());
  for (const auto& f : failures) std::fprintf(stderr, "  %s\n", f.c_str());
  return kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"localno: local neural operators (generation, training, evaluation, verification)"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every command");

  std::map<std::string, Command> cmds;
  auto add = [&](const std::string& name, const std::string& desc, json defaults) -> Command& {
    auto& c = cmds[name];
    c.name = name;
    c.app = app.add_subcommand(name, desc);
    c.defaults = std::move(defaults);
    c.app->add_option("--config", c.config_path, "JSON file of flat key/value settings")->check(CLI::ExistingFile);
    c.app->add_option("--out", c.out, "Output directory")->required();
    return c;
  };

  auto& gen = add("gen", "Generate a dataset",
                  {{"task", ""}, {"grid", 64}, {"count", 8}, {"seed", 0}, {"split", "train"}, {"scale", 1.0}, {"channels", 10}});
  gen.option<std::string>("task", "darcy or parabola");
  gen.option<std::size_t>("grid", "Points per axis on the unit square");
  gen.option<std::size_t>("count", "Number of Darcy samples");
  gen.option<std::uint64_t>("seed", "Base seed");
  gen.option<std::string>("split", "train or test (test seeds are offset)");
  gen.option<double>("scale", "Parabola coefficient scale");
  gen.option<std::size_t>("channels", "Parabola channel count");

  json train_defaults = default_train_settings();
  train_defaults["data"] = "";
  train_defaults["val"] = "";
  auto& train = add("train", "Train a model", train_defaults);
  train.option<std::string>("data", "Training dataset");
  train.option<std::string>("val", "Validation dataset (optional)");
  const json settings_defaults = default_train_settings();
  for (const auto& [key, value] : settings_defaults.items()) {
    if (value.is_boolean()) {
      std::string flag = "--" + std::string(key);
      std::replace(flag.begin(), flag.end(), '_', '-');
      train.app->add_option_function<std::string>(
          flag, [&train, k = std::string(key)](const std::string& v) {
            if (v != "true" && v != "false") throw CLI::ValidationError("--" + k, "expected true or false");
            train.flags[k] = v == "true";
          },
          "true/false");
    } else if (value.is_number_float()) {
      train.option<double>(key, "Training setting");
    } else if (value.is_number_integer()) {
      train.option<std::uint64_t>(key, "Training setting");
    } else {
      train.option<std::string>(key, "Training setting");
    }
  }

  auto& eval = add("eval", "Evaluate a checkpoint",
                   {{"checkpoint", ""}, {"data", ""}, {"resolution", 0}, {"save_predictions", false}});
  eval.option<std::string>("checkpoint", "Checkpoint file");
  eval.option<std::string>("data", "Dataset file");
  eval.option<std::size_t>("resolution", "Regenerate the Darcy samples on an R x R grid");
  eval.flag("save_predictions", "Also write predictions.bin");

  auto& verify = add("verify", "Run verification suites",
                     {{"suite", "all"}, {"seed", 2024}, {"max_resolution", 4096}});
  verify.option<std::string>("suite", "Suite name or all");
  verify.option<std::uint64_t>("seed", "Seed for random kernels and inputs");
  verify.option<std::size_t>("max_resolution", "Finest grid of the convergence suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    for (auto& [name, c] : cmds) {
      if (!c.app->parsed()) continue;
      if (name == "gen") return run_gen(c);
      if (name == "train") return run_train(c);
      if (name == "eval") return run_eval(c);
      if (name == "verify") return run_verify(c);
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::fprintf(stderr, "usage error: bad setting value: %s\n", e.what());
    return kExitUsage;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
