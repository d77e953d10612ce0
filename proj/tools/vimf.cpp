#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "vimf/cli/commands.hpp"

using namespace vimf;
using namespace vimf::cli;

namespace {

struct Common {
  std::string config_path;
  std::vector<std::string> sets;
  std::map<std::string, std::string> flags;
};

// --config FILE, --set key=value, and one --<key> flag per config field.
void add_common(CLI::App* app, Common& c) {
  app->add_option("-c,--config", c.config_path, "INI config file (presets/*.ini)");
  app->add_option("--set", c.sets, "Override a config key (key=value), repeatable");
  for (const auto& f : config_fields()) {
    app->add_option_function<std::string>(
        "--" + f.key, [&c, key = f.key](const std::string& v) { c.flags[key] = v; }, "config key " + f.key);
  }
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig{} : load_config(c.config_path);
  for (const auto& [k, v] : c.flags) set_field(cfg, k, v);
  for (const auto& s : c.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    set_field(cfg, cli::detail::trim(std::string_view(s).substr(0, eq)), std::string_view(s).substr(eq + 1));
  }
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Full-batch activations are tens of MB; keep freed blocks on the heap for reuse.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
  CLI::App app{"Variational neural network matrix factorization and blockmodel experiments"};
  app.require_subcommand(1);

  Common split_opts;
  auto* split = app.add_subcommand("split", "Write train/test split files for a dataset");
  add_common(split, split_opts);

  Common train_opts;
  std::vector<std::size_t> train_splits;
  auto* train = app.add_subcommand("train", "Train a model on each split");
  add_common(train, train_opts);
  train->add_option("--split", train_splits, "Split indices (default: all)");

  Common eval_opts;
  EvaluateOptions eval_extra;
  auto* evaluate = app.add_subcommand("evaluate", "Score trained checkpoints");
  add_common(evaluate, eval_opts);
  evaluate->add_option("--split", eval_extra.splits, "Split indices (default: all)");
  evaluate->add_option("--checkpoint", eval_extra.checkpoint, "Explicit checkpoint (requires one --split)");
  evaluate->add_flag("--on-train", eval_extra.on_train, "Score the training records instead of the test records");

  Common emit_opts;
  auto* emit = app.add_subcommand("config", "Print the resolved config");
  add_common(emit, emit_opts);

  std::vector<std::string> table_inputs;
  std::string table_csv;
  auto* table = app.add_subcommand("table", "Format metrics reports as result tables");
  table->add_option("inputs", table_inputs, "metrics.json files or directories to search");
  table->add_option("--csv", table_csv, "Also write the tables as CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*split) return cmd_split(resolve(split_opts), std::cerr);
    if (*train) return cmd_train(resolve(train_opts), train_splits, std::cerr);
    if (*evaluate) {
      cmd_evaluate(resolve(eval_opts), eval_extra, std::cerr);
      return kOk;
    }
    if (*emit) {
      const RunConfig cfg = resolve(emit_opts);
      std::cout << emit_config(cfg);
      return kOk;
    }
    if (*table) return cmd_table(table_inputs, table_csv, std::cout);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const io::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumericalFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kOk;
}
