#pragma once

// Command-line front end. Commands: train, eval, gen-data, export-softlabels.
// Every flag `--name` may also be given as a `name=value` line in the file
// passed to `--config`; flags on the command line win.

#include <cstdint>
#include <iosfwd>
#include <string>

#include "ccl/trainer.hpp"

namespace ccl::cli {

struct RunConfig {
  std::string command;
  // Exactly one data source for train: a dataset file or a synthetic preset.
  std::string data_path;
  std::string synthetic;
  double synth_stddev = -1.0;  // < 0 keeps the preset value
  double val_ratio = 0.8;
  TrainConfig train;
  std::string params_path;
  std::string out_dir = "cclnet_out";
  std::uint64_t seed = 0;

  void validate() const;
};

// Parses argv into a RunConfig (including any --config file). Throws
// ConfigError on bad usage.
RunConfig parse_args(int argc, const char* const* argv);

// Writes train.log, params.txt, metrics.txt and, in ccl mode, softlabels.csv.
void cmd_train(const RunConfig& cfg, std::ostream& out);
void cmd_eval(const RunConfig& cfg, std::ostream& out);
void cmd_gen_data(const RunConfig& cfg, std::ostream& out);
void cmd_export_softlabels(const RunConfig& cfg, std::ostream& out);

// Full entry point: returns the process exit code. Failures print a single
// `error: <category>: <message>` line to `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

int exit_code_for(const std::string& category);

}  // namespace ccl::cli
