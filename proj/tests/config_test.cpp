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


#include "fairtrain/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>

#include "fairtrain/commands.hpp"

namespace fairtrain {
namespace {

nlohmann::json full_config() {
  return nlohmann::json::parse(R"({
    "dataset": {"path": "data/skew.csv", "format": "csv"},
    "synth": {"preset": "jigsaw-skew", "seed": 2021},
    "split": {"seed": 7, "fractions": [0.7, 0.15, 0.15]},
    "train": {"epochs": 75, "batch_size": 128, "learning_rate": 0.0005,
              "multiplier_learning_rate": 0.01, "multiplier_cap": 10, "seed": 11},
    "constraint": {"tau_fnr": 0.02, "tau_fpr": 0.03, "groups": ["male", "female"],
                   "min_group_support": 8},
    "output_dir": "runs/constrained",
    "reports": ["json", "csv"]
  })");
}

TEST(RunConfig, ParsesEveryField) {
  const auto rc = parse_run_config(full_config());
  EXPECT_EQ(rc.dataset_path, "data/skew.csv");
  EXPECT_EQ(rc.dataset_format, DataFormat::csv);
  EXPECT_EQ(rc.synth().seed, 2021u);
  EXPECT_EQ(rc.split_seed, 7u);
  EXPECT_EQ(rc.train.epochs, 75u);
  EXPECT_EQ(rc.train.seed, 11u);
  ASSERT_TRUE(rc.train.constraint.has_value());
  EXPECT_EQ(rc.train.constraint->tau_fnr, 0.02);
  EXPECT_EQ(rc.train.constraint->group_names, (std::vector<std::string>{"male", "female"}));
  EXPECT_EQ(rc.train.constraint->min_group_support, 8u);
  EXPECT_EQ(rc.output_dir, "runs/constrained");
}

TEST(RunConfig, DefaultsMatchTheTrainingRecipe) {
  const auto rc = parse_run_config(nlohmann::json::object());
  EXPECT_EQ(rc.train.epochs, 75u);
  EXPECT_EQ(rc.train.batch_size, 128u);
  EXPECT_EQ(rc.train.learning_rate, 5e-4);
  EXPECT_EQ(rc.train.multiplier_learning_rate, 0.01);
  EXPECT_EQ(*rc.train.multiplier_cap, 10.0);
  EXPECT_FALSE(rc.train.constraint.has_value());
  EXPECT_EQ(rc.train.hidden1, 512u);
  EXPECT_EQ(rc.train.hidden2, 32u);
  EXPECT_EQ(rc.split_fractions.train, 0.70);
}

TEST(RunConfig, RoundTripsThroughJson) {
  const auto rc = parse_run_config(full_config());
  const auto again = parse_run_config(to_json(rc));
  EXPECT_EQ(to_json(again), to_json(rc));
  EXPECT_EQ(again.train.constraint, rc.train.constraint);
}

TEST(RunConfig, RejectsUnknownKeysAtEveryLevel) {
  for (const char* path : {"/typo", "/dataset/typo", "/synth/typo", "/split/typo", "/train/typo",
                           "/constraint/typo"}) {
    auto j = full_config();
    j[nlohmann::json::json_pointer(path)] = 1;
    EXPECT_THROW(parse_run_config(j), ConfigError) << path;
  }
}

TEST(RunConfig, RejectsBadValues) {
  auto j = full_config();
  j["constraint"].erase("groups");
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = full_config();
  j["constraint"]["tau_fnr"] = 1.5;
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = full_config();
  j["train"]["epochs"] = "many";
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = full_config();
  j["split"]["fractions"] = {0.5, 0.5};
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = full_config();
  j["reports"] = {"xml"};
  EXPECT_THROW(parse_run_config(j), ConfigError);
  j = full_config();
  j["dataset"]["format"] = "parquet";
  EXPECT_ANY_THROW(parse_run_config(j));
}

TEST(RunConfig, LoadReportsMissingAndMalformedFilesAsConfigErrors) {
  const auto dir = std::filesystem::temp_directory_path() / "fairtrain_cfg";
  std::filesystem::create_directories(dir);
  EXPECT_THROW(load_run_config(dir / "absent.json"), ConfigError);
  io::write_file_atomic(dir / "bad.json", "{ not json");
  EXPECT_THROW(load_run_config(dir / "bad.json"), ConfigError);
  io::write_file_atomic(dir / "good.json", full_config().dump());
  EXPECT_EQ(load_run_config(dir / "good.json").split_seed, 7u);
}

TEST(OutputDir, OverrideThenConfigThenEnvironment) {
  auto rc = parse_run_config(full_config());
  EXPECT_EQ(resolve_output_dir(rc, std::string("cli")), "cli");
  EXPECT_EQ(resolve_output_dir(rc, std::nullopt), "runs/constrained");
  rc.output_dir.clear();
  ::setenv(kOutputEnvVar, "/tmp/from_env", 1);
  EXPECT_EQ(resolve_output_dir(rc, std::nullopt), "/tmp/from_env");
  ::unsetenv(kOutputEnvVar);
  EXPECT_EQ(resolve_output_dir(rc, std::nullopt), "runs");
}

TEST(Overrides, TausNeedAConstraint) {
  auto rc = parse_run_config(full_config());
  detail::apply_tau_overrides(rc, {std::nullopt, 0.1, 0.2, std::nullopt});
  EXPECT_EQ(rc.train.constraint->tau_fnr, 0.1);
  EXPECT_EQ(rc.train.constraint->tau_fpr, 0.2);
  EXPECT_THROW(detail::apply_tau_overrides(rc, {std::nullopt, 2.0, std::nullopt, std::nullopt}),
               ConfigError);
  rc.train.constraint.reset();
  EXPECT_THROW(detail::apply_tau_overrides(rc, {std::nullopt, 0.1, std::nullopt, std::nullopt}),
               ConfigError);
}

}  // namespace
}  // namespace fairtrain
