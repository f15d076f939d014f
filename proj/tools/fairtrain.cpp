/*
 * Copyright 2026 The fairtrain Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// fairtrain command-line tool: synth, train, eval, compare.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "fairtrain/commands.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<double> tau_fnr;
  std::optional<double> tau_fpr;
  std::optional<std::string> out;

  void attach(CLI::App* cmd, bool with_taus) {
    cmd->add_option("--config", config, "Run configuration (JSON)")->required();
    cmd->add_option("--out", out, "Output directory (overrides output_dir and $FAIRTRAIN_OUT)");
    if (with_taus) {
      cmd->add_option("--tau-fnr", tau_fnr, "Override constraint.tau_fnr");
      cmd->add_option("--tau-fpr", tau_fpr, "Override constraint.tau_fpr");
    }
  }

  fairtrain::Overrides overrides() const { return {seed, tau_fnr, tau_fpr, out}; }
};

void print_report_line(const char* label, const fairtrain::BiasReport& r) {
  std::printf("%-12s f1=%.4f mcc=%.4f fned=%.4f fped=%.4f total_bias=%.4f\n", label,
              r.overall.f1, r.overall.mcc, r.fned, r.fped, r.total_bias);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace fairtrain;
  CLI::App app{"Fairness-constrained training and bias auditing for binary classifiers"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  CommonFlags flags;
  std::string checkpoint;
  std::string baseline;
  std::string constrained;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic biased dataset");
  flags.attach(synth, false);
  synth->add_option("--seed", flags.seed, "Override the generator seed");

  auto* train_cmd = app.add_subcommand("train", "Train a baseline or constrained model");
  flags.attach(train_cmd, true);
  train_cmd->add_option("--seed", flags.seed, "Override the training seed");

  auto* eval = app.add_subcommand("eval", "Audit one checkpoint on the test split");
  flags.attach(eval, true);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint to audit")->required();

  auto* compare = app.add_subcommand("compare", "Compare a baseline and a constrained checkpoint");
  flags.attach(compare, true);
  compare->add_option("--baseline", baseline, "Baseline checkpoint")->required();
  compare->add_option("--constrained", constrained, "Constrained checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  return run_guarded(
      [&] {
        const RunConfig rc = load_run_config(flags.config);
        const Overrides o = flags.overrides();
        if (*synth) {
          const auto path = cmd_synth(rc, o);
          std::printf("wrote %s\n", path.string().c_str());
        } else if (*train_cmd) {
          const auto result = cmd_train(rc, o);
          const auto& best = result.model.history.at(result.model.selected_epoch - 1);
          std::printf("mode=%s selected_epoch=%zu validation_f1=%.4f validation_mcc=%.4f\n",
                      rc.train.constrained() ? "constrained" : "baseline",
                      result.model.selected_epoch, best.validation_f1, best.validation_mcc);
          std::printf("wrote %s\n", result.out_dir.string().c_str());
        } else if (*eval) {
          const auto result = cmd_eval(rc, o, checkpoint);
          print_report_line("test", result.report);
          std::printf("wrote %s\n", result.out_dir.string().c_str());
        } else if (*compare) {
          const auto result = cmd_compare(rc, o, baseline, constrained);
          print_report_line("baseline", result.baseline);
          print_report_line("constrained", result.constrained);
          if (result.bias_decrease_pct) {
            std::printf("bias_decrease=%.2f%%\n", *result.bias_decrease_pct);
          } else {
            std::printf("bias_decrease=n/a\n");
          }
          std::printf("mcnemar statistic=%.4f p=%.3g\n", result.mcnemar.statistic,
                      result.mcnemar.p_value);
          std::printf("wrote %s\n", result.out_dir.string().c_str());
        }
      },
      std::cerr);
}
