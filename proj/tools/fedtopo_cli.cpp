/*
 * Copyright 2026 The fedtopo Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *    http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// fedtopo ph|screen|partition|train|report
// Exit status: 0 success, 2 configuration or usage error, 1 runtime error.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fedtopo/experiment.hpp"

namespace fs = std::filesystem;
using namespace fedtopo;

namespace {

constexpr int kConfigError = 2;
constexpr int kRuntimeError = 1;

struct Options {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::string input;
  std::vector<std::string> runs;
};

cli::ExperimentConfig effective_config(const Options& o) {
  cli::ExperimentConfig c = cli::load_config(o.config);
  if (o.seed) c.seed = *o.seed;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated training with topological alignment, and its building blocks"};
  app.require_subcommand(1);
  Options o;

  auto* ph = app.add_subcommand("ph", "persistence diagram of a 2-D field (CSV rows or PGM)");
  ph->add_option("--input,input", o.input, "field file")->required();
  ph->add_option("--out", o.out, "directory for diagram.csv; stdout when omitted");

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "experiment JSON")->required();
    sub->add_option("--out", o.out, "output directory (overrides the config)");
    sub->add_option("--seed", o.seed, "seed (overrides the config)");
  };
  auto* screen = app.add_subcommand("screen", "rank candidate blocks by topological class separation");
  add_common(screen);
  auto* partition = app.add_subcommand("partition", "split the training set across clients");
  add_common(partition);
  auto* train = app.add_subcommand("train", "run federated training");
  add_common(train);
  auto* report = app.add_subcommand("report", "tabulate finished training runs");
  report->add_option("runs", o.runs, "run directories")->required();
  report->add_option("--out", o.out, "directory for summary.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }

  try {
    std::string text;
    if (*ph) {
      text = cli::cmd_ph(o.input, o.out.empty() ? std::nullopt : std::optional<fs::path>(o.out));
    } else if (*report) {
      text = cli::cmd_report(std::vector<fs::path>(o.runs.begin(), o.runs.end()), o.out);
    } else {
      const auto c = effective_config(o);
      if (*screen) text = cli::cmd_screen(c, o.out);
      if (*partition) text = cli::cmd_partition(c, o.out);
      if (*train) text = cli::cmd_train(c, o.out);
    }
    std::cout << text;
    return 0;
  } catch (const cli::ConfigError& e) {
    std::cerr << "fedtopo: config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "fedtopo: error: " << e.what() << "\n";
    return kRuntimeError;
  }
}
