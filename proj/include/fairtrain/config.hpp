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

// RunConfig: the single JSON file that drives every CLI command. Unknown keys
// are rejected at every level so that typos fail loudly.

#pragma once

#include <cstdlib>
#include <filesystem>
#include <initializer_list>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairtrain/constraints.hpp"
#include "fairtrain/data_model.hpp"
#include "fairtrain/error.hpp"
#include "fairtrain/io.hpp"
#include "fairtrain/trainer.hpp"

namespace fairtrain {

/// Output root used when neither the config nor --out names one.
inline constexpr const char* kOutputEnvVar = "FAIRTRAIN_OUT";

struct RunConfig {
  std::filesystem::path dataset_path;
  DataFormat dataset_format = DataFormat::csv;
  std::string synth_preset = "jigsaw-skew";
  std::optional<std::uint64_t> synth_seed;
  std::optional<std::size_t> synth_n_records;
  std::uint64_t split_seed = 0;
  SplitFractions split_fractions;
  TrainConfig train;
  std::filesystem::path output_dir;
  std::vector<std::string> reports = {"json", "csv"};

  bool wants(std::string_view format) const {
    for (const auto& r : reports) {
      if (r == format) return true;
    }
    return false;
  }

  /// Preset plus overrides, as consumed by the synth command.
  SynthConfig synth() const {
    SynthConfig cfg = fairtrain::synth_preset(synth_preset);
    if (synth_seed) cfg.seed = *synth_seed;
    if (synth_n_records) cfg.n_records = *synth_n_records;
    return cfg;
  }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj, std::string_view where,
                                std::initializer_list<std::string_view> allowed) {
  if (!obj.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [key, value] : obj.items()) {
    bool known = false;
    for (auto a : allowed) known = known || key == a;
    if (!known) throw ConfigError(std::string(where) + ": unknown key '" + key + "'");
  }
}

template <typename T>
T get_field(const nlohmann::json& obj, const char* key, std::string_view where, T fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(where) + "." + key + ": wrong type");
  }
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  using detail::get_field;
  using detail::reject_unknown_keys;
  reject_unknown_keys(j, "config",
                      {"dataset", "synth", "split", "train", "constraint", "output_dir", "reports"});
  RunConfig rc;

  if (j.contains("dataset")) {
    const auto& d = j.at("dataset");
    reject_unknown_keys(d, "dataset", {"path", "format"});
    rc.dataset_path = get_field<std::string>(d, "path", "dataset", "");
    rc.dataset_format = parse_data_format(get_field<std::string>(d, "format", "dataset", "csv"));
  }
  if (j.contains("synth")) {
    const auto& s = j.at("synth");
    reject_unknown_keys(s, "synth", {"preset", "seed", "n_records"});
    rc.synth_preset = get_field<std::string>(s, "preset", "synth", rc.synth_preset);
    if (s.contains("seed")) rc.synth_seed = get_field<std::uint64_t>(s, "seed", "synth", 0);
    if (s.contains("n_records")) rc.synth_n_records = get_field<std::size_t>(s, "n_records", "synth", 0);
  }
  if (j.contains("split")) {
    const auto& s = j.at("split");
    reject_unknown_keys(s, "split", {"seed", "fractions"});
    rc.split_seed = get_field<std::uint64_t>(s, "seed", "split", 0);
    if (s.contains("fractions")) {
      const auto f = get_field<std::vector<double>>(s, "fractions", "split", {});
      if (f.size() != 3) throw ConfigError("split.fractions: expected three numbers");
      rc.split_fractions = {f[0], f[1], f[2]};
    }
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    reject_unknown_keys(t, "train",
                        {"epochs", "batch_size", "learning_rate", "multiplier_learning_rate",
                         "multiplier_cap", "seed", "use_last_partial_batch", "hidden1", "hidden2"});
    auto& tc = rc.train;
    tc.epochs = get_field(t, "epochs", "train", tc.epochs);
    tc.batch_size = get_field(t, "batch_size", "train", tc.batch_size);
    tc.learning_rate = get_field(t, "learning_rate", "train", tc.learning_rate);
    tc.multiplier_learning_rate =
        get_field(t, "multiplier_learning_rate", "train", tc.multiplier_learning_rate);
    if (t.contains("multiplier_cap")) {
      tc.multiplier_cap = t.at("multiplier_cap").is_null()
                              ? std::nullopt
                              : std::optional<double>(get_field<double>(t, "multiplier_cap", "train", 0));
    }
    tc.seed = get_field(t, "seed", "train", tc.seed);
    tc.use_last_partial_batch = get_field(t, "use_last_partial_batch", "train", tc.use_last_partial_batch);
    tc.hidden1 = get_field(t, "hidden1", "train", tc.hidden1);
    tc.hidden2 = get_field(t, "hidden2", "train", tc.hidden2);
  }
  if (j.contains("constraint") && !j.at("constraint").is_null()) {
    const auto& c = j.at("constraint");
    reject_unknown_keys(c, "constraint", {"tau_fnr", "tau_fpr", "groups", "min_group_support"});
    ConstraintConfig cc;
    if (!c.contains("tau_fnr") || !c.contains("tau_fpr") || !c.contains("groups")) {
      throw ConfigError("constraint: tau_fnr, tau_fpr and groups are required");
    }
    cc.tau_fnr = get_field<double>(c, "tau_fnr", "constraint", 0);
    cc.tau_fpr = get_field<double>(c, "tau_fpr", "constraint", 0);
    cc.group_names = get_field<std::vector<std::string>>(c, "groups", "constraint", {});
    cc.min_group_support = get_field(c, "min_group_support", "constraint", cc.min_group_support);
    rc.train.constraint = cc;
  }
  rc.output_dir = get_field<std::string>(j, "output_dir", "config", "");
  if (j.contains("reports")) {
    rc.reports = get_field<std::vector<std::string>>(j, "reports", "config", {});
    for (const auto& r : rc.reports) {
      if (r != "json" && r != "csv") throw ConfigError("reports: unknown format '" + r + "'");
    }
  }
  rc.train.validate();
  return rc;
}

inline nlohmann::json to_json(const RunConfig& rc) {
  const auto& tc = rc.train;
  nlohmann::json j = {
      {"dataset",
       {{"path", rc.dataset_path.generic_string()},
        {"format", rc.dataset_format == DataFormat::csv ? "csv" : "binary"}}},
      {"synth", {{"preset", rc.synth_preset}}},
      {"split",
       {{"seed", rc.split_seed},
        {"fractions",
         {rc.split_fractions.train, rc.split_fractions.validation, rc.split_fractions.test}}}},
      {"train",
       {{"epochs", tc.epochs},
        {"batch_size", tc.batch_size},
        {"learning_rate", tc.learning_rate},
        {"multiplier_learning_rate", tc.multiplier_learning_rate},
        {"multiplier_cap", tc.multiplier_cap ? nlohmann::json(*tc.multiplier_cap) : nlohmann::json(nullptr)},
        {"seed", tc.seed},
        {"use_last_partial_batch", tc.use_last_partial_batch},
        {"hidden1", tc.hidden1},
        {"hidden2", tc.hidden2}}},
      {"constraint", nullptr},
      {"output_dir", rc.output_dir.generic_string()},
      {"reports", rc.reports},
  };
  if (rc.synth_seed) j["synth"]["seed"] = *rc.synth_seed;
  if (rc.synth_n_records) j["synth"]["n_records"] = *rc.synth_n_records;
  if (tc.constraint) {
    j["constraint"] = {{"tau_fnr", tc.constraint->tau_fnr},
                       {"tau_fpr", tc.constraint->tau_fpr},
                       {"groups", tc.constraint->group_names},
                       {"min_group_support", tc.constraint->min_group_support}};
  }
  return j;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const DataError& e) {
    throw ConfigError(e.what());
  }
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  try {
    return parse_run_config(j);
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

/// Output directory resolution: explicit override, then config, then the
/// environment variable, then "runs".
inline std::filesystem::path resolve_output_dir(const RunConfig& rc,
                                                const std::optional<std::string>& override_dir) {
  if (override_dir && !override_dir->empty()) return *override_dir;
  if (!rc.output_dir.empty()) return rc.output_dir;
  if (const char* env = std::getenv(kOutputEnvVar); env && *env) return env;
  return "runs";
}

}  // namespace fairtrain
