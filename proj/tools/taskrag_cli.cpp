/*
 * Copyright 2026 The taskrag Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *   http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Command-line driver: one subcommand per pipeline stage plus `synth` and
// `run-all`. Exit status is 0 on success, 1 on a pipeline error, 2 on bad usage.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "taskrag/stages.hpp"
#include "taskrag/synthetic.hpp"

namespace {

struct CommonFlags {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string interactions;
  std::string out_dir;
  std::string run_name;
};

void add_common(CLI::App& cmd, CommonFlags& flags) {
  cmd.add_option("-c,--config", flags.config_path, "key = value config file")->check(CLI::ExistingFile);
  cmd.add_option("-s,--set", flags.overrides, "override a config key, e.g. --set top_m=2")->allow_extra_args(false);
  cmd.add_option("--interactions", flags.interactions, "interactions CSV (user_id,item_id,timestamp)");
  cmd.add_option("--out-dir", flags.out_dir, "output directory (TASKRAG_OUT_DIR takes precedence)");
  cmd.add_option("--run-name", flags.run_name, "subdirectory for per-variant artifacts");
}

taskrag::RunConfig resolve(const CommonFlags& flags) {
  taskrag::RunConfig config = flags.config_path.empty() ? taskrag::RunConfig{} : taskrag::RunConfig::load(flags.config_path);
  std::vector<std::string> assignments;
  if (!flags.interactions.empty()) assignments.push_back("interactions=" + flags.interactions);
  if (!flags.out_dir.empty()) assignments.push_back("out_dir=" + flags.out_dir);
  if (!flags.run_name.empty()) assignments.push_back("run_name=" + flags.run_name);
  assignments.insert(assignments.end(), flags.overrides.begin(), flags.overrides.end());
  config.apply_overrides(assignments);
  config.validate();
  return config;
}

void print(const taskrag::StageOutcome& outcome) {
  std::cout << "result stage=" << taskrag::to_string(outcome.stage) << " artifact=" << outcome.artifact.string()
            << " sha256=" << outcome.sha256 << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"taskrag: retrieval-augmented dynamic graph recommendation pipeline"};
  app.require_subcommand(1);

  taskrag::SyntheticSpec spec;
  std::string synth_out, blocks_out;
  auto* synth = app.add_subcommand("synth", "write a block-structured synthetic interaction file");
  synth->add_option("-o,--out", synth_out, "interactions CSV to write")->required();
  synth->add_option("--blocks-out", blocks_out, "planted block assignments CSV");
  synth->add_option("--users", spec.users);
  synth->add_option("--items", spec.items);
  synth->add_option("--blocks", spec.blocks);
  synth->add_option("--within-prob", spec.within_prob);
  synth->add_option("--interactions-per-user", spec.interactions_per_user);
  synth->add_option("--active-prob", spec.active_prob);
  synth->add_option("--snapshots", spec.snapshots);
  synth->add_option("--drift-start", spec.drift_start);
  synth->add_option("--drift-every", spec.drift_every);
  synth->add_option("--drift-step", spec.drift_step);
  synth->add_option("--granularity", spec.granularity);
  synth->add_option("--seed", spec.seed);

  CommonFlags flags;
  std::vector<std::pair<CLI::App*, taskrag::Stage>> stage_cmds;
  for (taskrag::Stage stage : taskrag::kAllStages) {
    auto* cmd = app.add_subcommand(std::string(taskrag::to_string(stage)), "run the " +
                                                                               std::string(taskrag::to_string(stage)) +
                                                                               " stage");
    add_common(*cmd, flags);
    stage_cmds.emplace_back(cmd, stage);
  }
  auto* run_all = app.add_subcommand("run-all", "run every stage in order");
  add_common(*run_all, flags);
  auto* show = app.add_subcommand("show-config", "print the resolved configuration");
  add_common(*show, flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (synth->parsed()) {
      const taskrag::SyntheticData data = taskrag::generate_synthetic(spec);
      taskrag::write_interactions(data.interactions, synth_out);
      if (!blocks_out.empty()) taskrag::write_blocks(data, blocks_out);
      std::cout << "result stage=synth interactions=" << data.interactions.size() << " artifact=" << synth_out << '\n';
      return 0;
    }
    const taskrag::RunConfig config = resolve(flags);
    if (show->parsed()) {
      std::cout << config.to_text();
      return 0;
    }
    if (run_all->parsed()) {
      for (const auto& outcome : taskrag::run_pipeline(config, &std::clog)) print(outcome);
      return 0;
    }
    for (const auto& [cmd, stage] : stage_cmds) {
      if (cmd->parsed()) print(taskrag::run_stage(stage, config, &std::clog));
    }
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
