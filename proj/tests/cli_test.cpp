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


// Drives the built fairtrain executable end to end on a tiny configuration.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include "fairtrain/io.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path kRoot = fs::temp_directory_path() / "fairtrain_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(FAIRTRAIN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config_file(const std::string& name, nlohmann::json j) {
  const auto path = kRoot / (name + ".json");
  fairtrain::io::write_file_atomic(path, j.dump(2));
  return path.string();
}

nlohmann::json tiny(bool constrained) {
  nlohmann::json j = {
      {"dataset", {{"path", (kRoot / "data" / "skew.csv").string()}, {"format", "csv"}}},
      {"synth", {{"preset", "jigsaw-skew"}, {"seed", 5}, {"n_records", 600}}},
      {"split", {{"seed", 7}}},
      {"train", {{"epochs", 3}, {"batch_size", 64}, {"hidden1", 16}, {"hidden2", 8}, {"seed", 11}}},
  };
  if (constrained) {
    j["constraint"] = {{"tau_fnr", 0.02}, {"tau_fpr", 0.03}, {"groups", {"male", "female"}}};
  }
  return j;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    fs::remove_all(kRoot);
    fs::create_directories(kRoot);
    ASSERT_EQ(run("synth --config " + config_file("synth", tiny(false))), 0);
  }
};

TEST_F(Cli, SynthWritesTheConfiguredDataset) {
  const auto text = fairtrain::io::read_file(kRoot / "data" / "skew.csv");
  EXPECT_EQ(text.substr(0, 3), "f0,");
  EXPECT_NE(text.find(",label,g_male,g_female\n"), std::string::npos);
}

TEST_F(Cli, TrainTwiceGivesIdenticalSummaryAndCheckpoint) {
  const auto cfg = config_file("cons", tiny(true));
  ASSERT_EQ(run("train --config " + cfg + " --out " + (kRoot / "a").string()), 0);
  ASSERT_EQ(run("train --config " + cfg + " --out " + (kRoot / "b").string()), 0);
  for (const char* f : {"summary.json", "checkpoint.ftck", "history.jsonl"}) {
    EXPECT_EQ(fairtrain::io::read_file(kRoot / "a" / f), fairtrain::io::read_file(kRoot / "b" / f))
        << f;
  }
  EXPECT_TRUE(fs::exists(kRoot / "a" / "run_meta.json"));
  const auto summary = nlohmann::json::parse(fairtrain::io::read_file(kRoot / "a" / "summary.json"));
  EXPECT_EQ(summary.at("mode"), "constrained");
  EXPECT_EQ(summary.at("tau_fnr"), 0.02);
}

TEST_F(Cli, EvalAndCompareWriteReports) {
  const auto base = config_file("base", tiny(false));
  const auto cons = config_file("cons2", tiny(true));
  ASSERT_EQ(run("train --config " + base + " --out " + (kRoot / "base").string()), 0);
  ASSERT_EQ(run("train --config " + cons + " --out " + (kRoot / "cons").string()), 0);
  ASSERT_EQ(run("eval --config " + cons + " --checkpoint " + (kRoot / "cons" / "checkpoint.ftck").string() +
                " --out " + (kRoot / "eval").string()),
            0);
  for (const char* f : {"bias_report.json", "table1.csv", "table2.csv", "group_rates.csv"}) {
    EXPECT_TRUE(fs::exists(kRoot / "eval" / f)) << f;
  }
  ASSERT_EQ(run("compare --config " + cons + " --baseline " +
                (kRoot / "base" / "checkpoint.ftck").string() + " --constrained " +
                (kRoot / "cons" / "checkpoint.ftck").string() + " --out " + (kRoot / "cmp").string()),
            0);
  const auto cmp = nlohmann::json::parse(fairtrain::io::read_file(kRoot / "cmp" / "comparison.json"));
  const auto& cells = cmp.at("mcnemar").at("contingency");
  const std::size_t total = cells.at("both_correct").get<std::size_t>() +
                            cells.at("only_baseline_correct").get<std::size_t>() +
                            cells.at("only_constrained_correct").get<std::size_t>() +
                            cells.at("both_wrong").get<std::size_t>();
  EXPECT_EQ(total, cmp.at("test_size").get<std::size_t>());
  EXPECT_TRUE(fs::exists(kRoot / "cmp" / "table3.csv"));
}

TEST_F(Cli, OutputDirectoryFallsBackToEnvironment) {
  const auto cfg = config_file("env", tiny(false));
  const auto target = kRoot / "from_env";
  ::setenv("FAIRTRAIN_OUT", target.c_str(), 1);
  const int code = run("train --config " + cfg);
  ::unsetenv("FAIRTRAIN_OUT");
  ASSERT_EQ(code, 0);
  EXPECT_TRUE(fs::exists(target / "summary.json"));
}

TEST_F(Cli, ConfigProblemsExitWithOne) {
  EXPECT_EQ(run("train"), 1);
  EXPECT_EQ(run("train --config " + (kRoot / "missing.json").string()), 1);
  auto j = tiny(true);
  j["train"]["epoch"] = 3;
  EXPECT_EQ(run("train --config " + config_file("typo", j)), 1);
  EXPECT_EQ(run("train --config " + config_file("base3", tiny(false)) + " --tau-fnr 0.1"), 1);
  EXPECT_EQ(run("frobnicate"), 1);
}

TEST_F(Cli, DataProblemsExitWithTwo) {
  auto j = tiny(false);
  j["dataset"]["path"] = (kRoot / "nowhere.csv").string();
  EXPECT_EQ(run("train --config " + config_file("nodata", j)), 2);

  j = tiny(true);
  j["constraint"]["groups"] = {"male", "martian"};
  EXPECT_EQ(run("train --config " + config_file("martian", j) + " --out " +
                (kRoot / "martian").string()),
            2);

  fairtrain::io::write_file_atomic(kRoot / "junk.ftck", "not a checkpoint");
  EXPECT_EQ(run("eval --config " + config_file("base4", tiny(false)) + " --checkpoint " +
                (kRoot / "junk.ftck").string() + " --out " + (kRoot / "junk").string()),
            2);
  EXPECT_FALSE(fs::exists(kRoot / "junk" / "bias_report.json"));
}

}  // namespace
