// sisc: prepare nodule datasets, train sequencers, evaluate them and explain
// their predictions with critical response maps.
//
// Exit codes: 0 success, 2 usage or data error, 3 numeric failure.

#include <CLI11.hpp>

#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <memory>

#include "commands.hpp"
#include "sisc/error.hpp"

namespace {

using sisc::cli::OptionSpec;
using sisc::cli::RunConfig;

constexpr int kUsageError = 2;
constexpr int kNumericError = 3;

struct Subcommand {
  CLI::App* app = nullptr;
  std::unique_ptr<RunConfig> config;
  std::map<std::string, std::string> flags;
  std::map<std::string, CLI::Option*> options;
  std::string config_file;
  std::function<void(const RunConfig&)> run;
};

std::string flag_name(const std::string& key) {
  std::string f = key;
  for (char& ch : f) ch = ch == '_' ? '-' : ch;
  return "--" + f;
}

void add_subcommand(CLI::App& app, Subcommand& sub, const std::string& name, const std::string& help,
                    std::vector<OptionSpec> specs, std::function<void(const RunConfig&)> run) {
  sub.app = app.add_subcommand(name, help);
  sub.config = std::make_unique<RunConfig>(name, specs);
  sub.run = std::move(run);
  sub.app->add_option("--config", sub.config_file, "key = value settings file");
  for (const auto& s : specs) {
    const std::string desc = s.fallback.empty() ? s.help : s.help + " [" + s.fallback + "]";
    if (s.fallback == "false") {
      sub.options[s.key] = sub.app->add_flag(flag_name(s.key), desc);
    } else {
      sub.options[s.key] = sub.app->add_option(flag_name(s.key), sub.flags[s.key], desc);
    }
  }
}

int run(int argc, char** argv) {
  CLI::App app{"Interpretable nodule classification: data preparation, training, evaluation, explanation"};
  app.require_subcommand(1);
  Subcommand synth, prepare, train, eval, explain;
  add_subcommand(app, synth, "synth", "generate a synthetic nodule dataset with masks",
                 sisc::cli::synth_options(), sisc::cli::run_synth);
  add_subcommand(app, prepare, "prepare", "label, split and augment a manifest",
                 sisc::cli::prepare_options(), sisc::cli::run_prepare);
  add_subcommand(app, train, "train", "train a sequencer on a prepared dataset",
                 sisc::cli::train_options(), sisc::cli::run_train);
  add_subcommand(app, eval, "eval", "score a checkpoint on a dataset", sisc::cli::eval_options(),
                 sisc::cli::run_eval);
  add_subcommand(app, explain, "explain", "write critical response maps for one image",
                 sisc::cli::explain_options(), sisc::cli::run_explain);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : kUsageError;
  }

  for (Subcommand* sub : {&synth, &prepare, &train, &eval, &explain}) {
    if (!sub->app->parsed()) continue;
    RunConfig& config = *sub->config;
    if (!sub->config_file.empty()) config.load_file(sub->config_file);
    for (const auto& [key, option] : sub->options) {
      if (option->count() == 0) continue;
      config.set(key, option->get_expected_min() == 0 ? "true" : sub->flags[key]);
    }
    sub->run(config);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const sisc::NumericError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kNumericError;
  } catch (const sisc::InternalError& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  } catch (const sisc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  }
}
