#pragma once

#include <vector>

#include "run_config.hpp"

namespace sisc::cli {

std::vector<OptionSpec> synth_options();
std::vector<OptionSpec> prepare_options();
std::vector<OptionSpec> train_options();
std::vector<OptionSpec> eval_options();
std::vector<OptionSpec> explain_options();

void run_synth(const RunConfig& config);
void run_prepare(const RunConfig& config);
void run_train(const RunConfig& config);
void run_eval(const RunConfig& config);
void run_explain(const RunConfig& config);

}  // namespace sisc::cli
