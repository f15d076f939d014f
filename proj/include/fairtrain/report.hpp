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

// Serialization of audit results: JSON documents with fixed field names and
// CSV tables laid out like the published result tables. Undefined rates are
// JSON null and empty CSV cells.

#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairtrain/constraints.hpp"
#include "fairtrain/error.hpp"
#include "fairtrain/io.hpp"
#include "fairtrain/metrics.hpp"
#include "fairtrain/trainer.hpp"

namespace fairtrain {

using Json = nlohmann::json;

namespace detail {

inline Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

inline std::string csv_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string csv_number(const std::optional<double>& v) { return v ? csv_number(*v) : ""; }

inline bool is_rate(const Json& v) {
  return v.is_null() || (v.is_number() && v.get<double>() >= 0.0 && v.get<double>() <= 1.0);
}

}  // namespace detail

inline Json to_json(const ConfusionCounts& c) {
  return {{"tp", c.tp}, {"fp", c.fp}, {"tn", c.tn}, {"fn", c.fn}};
}

inline Json to_json(const BiasReport& r) {
  Json groups = Json::array();
  for (const auto& g : r.groups) {
    groups.push_back({{"name", g.name},
                      {"fnr", detail::optional_number(g.fnr)},
                      {"fpr", detail::optional_number(g.fpr)},
                      {"mcc", g.mcc},
                      {"positives", g.positives},
                      {"negatives", g.negatives}});
  }
  return {{"overall",
           {{"f1", r.overall.f1},
            {"mcc", r.overall.mcc},
            {"precision", r.overall.precision},
            {"recall", r.overall.recall},
            {"fnr", detail::optional_number(r.overall.fnr)},
            {"fpr", detail::optional_number(r.overall.fpr)},
            {"confusion", to_json(r.overall.counts)}}},
          {"groups", groups},
          {"fned", r.fned},
          {"fped", r.fped},
          {"total_bias", r.total_bias}};
}

inline Json to_json(const McNemarResult& m) {
  return {{"contingency",
           {{"both_correct", m.both_correct},
            {"only_baseline_correct", m.only_a_correct},
            {"only_constrained_correct", m.only_b_correct},
            {"both_wrong", m.both_wrong}}},
          {"statistic", m.statistic},
          {"p_value", m.p_value},
          {"variant", m.variant == McNemarVariant::chi2_corrected ? "chi2_continuity_corrected"
                                                                  : "exact_binomial"}};
}

inline Json to_json(const ViolationVector& v) {
  static constexpr const char* kNames[kNumConstraints] = {"max_fnr_excess", "min_fnr_shortfall",
                                                          "max_fpr_excess", "min_fpr_shortfall"};
  Json exact = Json::object();
  Json proxy = Json::object();
  for (std::size_t j = 0; j < kNumConstraints; ++j) {
    exact[kNames[j]] = detail::optional_number(v.exact[j]);
    proxy[kNames[j]] = detail::optional_number(v.proxy[j]);
  }
  return {{"exact", exact}, {"proxy", proxy}, {"tau_fnr", v.tau_fnr}, {"tau_fpr", v.tau_fpr}};
}

inline Json to_json(const EpochRecord& e) {
  return {{"epoch", e.epoch},
          {"train_loss", e.train_loss},
          {"validation_f1", e.validation_f1},
          {"validation_mcc", e.validation_mcc},
          {"validation_violations",
           e.validation_violations ? to_json(*e.validation_violations) : Json(nullptr)},
          {"multipliers", e.multipliers.lambda},
          {"checkpoint", e.checkpoint}};
}

/// One JSON object per line, one line per epoch.
inline std::string history_jsonl(std::span<const EpochRecord> history) {
  std::string out;
  for (const auto& e : history) {
    out += to_json(e).dump();
    out += '\n';
  }
  return out;
}

/// Structural checks run before any report reaches disk.
inline void validate_bias_report_json(const Json& j) {
  auto fail = [](const std::string& what) { throw NumericalError("invalid bias report: " + what); };
  for (const char* key : {"overall", "groups", "fned", "fped", "total_bias"}) {
    if (!j.contains(key)) fail(std::string("missing '") + key + "'");
  }
  const auto& o = j.at("overall");
  for (const char* key : {"f1", "precision", "recall"}) {
    if (!o.at(key).is_number() || !detail::is_rate(o.at(key))) fail(std::string(key) + " out of range");
  }
  const double m = o.at("mcc").get<double>();
  if (!(m >= -1.0 && m <= 1.0)) fail("mcc out of range");
  if (!detail::is_rate(o.at("fnr")) || !detail::is_rate(o.at("fpr"))) fail("overall rate out of range");
  for (const auto& g : j.at("groups")) {
    if (!g.at("name").is_string()) fail("group name");
    if (!detail::is_rate(g.at("fnr")) || !detail::is_rate(g.at("fpr"))) fail("group rate out of range");
  }
  const double fned = j.at("fned").get<double>();
  const double fped = j.at("fped").get<double>();
  const double total = j.at("total_bias").get<double>();
  if (!std::isfinite(total) || fned < 0.0 || fped < 0.0 || total != fned + fped) {
    fail("total_bias must equal fned + fped");
  }
}

inline std::string table1_header() {
  return "model,f1,mcc,precision,recall,fned,fped,total_bias,bias_decrease_pct\n";
}

inline std::string table1_row(const std::string& model, const BiasReport& r,
                              std::optional<double> bias_decrease_pct = std::nullopt) {
  using detail::csv_number;
  return model + "," + csv_number(r.overall.f1) + "," + csv_number(r.overall.mcc) + "," +
         csv_number(r.overall.precision) + "," + csv_number(r.overall.recall) + "," +
         csv_number(r.fned) + "," + csv_number(r.fped) + "," + csv_number(r.total_bias) + "," +
         csv_number(bias_decrease_pct) + "\n";
}

/// Group MCC table: one column per group, one row per model.
inline std::string table2_csv(const std::vector<std::pair<std::string, BiasReport>>& models) {
  if (models.empty()) return "model\n";
  std::string out = "model";
  for (const auto& g : models.front().second.groups) out += "," + g.name;
  out += "\n";
  for (const auto& [name, r] : models) {
    out += name;
    for (const auto& g : r.groups) out += "," + detail::csv_number(g.mcc);
    out += "\n";
  }
  return out;
}

/// Contingency table with constrained outcomes as rows and baseline outcomes as columns.
inline std::string table3_csv(const McNemarResult& m) {
  return "constrained\\baseline,baseline_correct,baseline_wrong\n"
         "constrained_correct," +
         std::to_string(m.both_correct) + "," + std::to_string(m.only_b_correct) +
         "\n"
         "constrained_wrong," +
         std::to_string(m.only_a_correct) + "," + std::to_string(m.both_wrong) + "\n";
}

/// Per-group FNR/FPR bar-chart data, one row per group.
inline std::string group_rates_csv(const BiasReport& r, double tau_fnr, double tau_fpr) {
  using detail::csv_number;
  std::string out = "group,fnr,fpr,overall_fnr,overall_fpr,tau_fnr,tau_fpr\n";
  for (const auto& g : r.groups) {
    out += g.name + "," + csv_number(g.fnr) + "," + csv_number(g.fpr) + "," +
           csv_number(r.overall.fnr) + "," + csv_number(r.overall.fpr) + "," + csv_number(tau_fnr) +
           "," + csv_number(tau_fpr) + "\n";
  }
  return out;
}

/// A set of files written together: everything is staged to temporaries
/// first and renamed only once every write succeeded.
class OutputBundle {
 public:
  void add(std::filesystem::path path, std::string contents) {
    files_.emplace_back(std::move(path), std::move(contents));
  }

  void commit() const {
    std::vector<std::filesystem::path> staged;
    try {
      for (const auto& [path, contents] : files_) {
        auto tmp = path;
        tmp += ".tmp";
        if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw DataError("cannot write " + tmp.string());
        staged.push_back(tmp);
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        if (!out) throw DataError("short write to " + tmp.string());
      }
    } catch (...) {
      std::error_code ignored;
      for (const auto& tmp : staged) std::filesystem::remove(tmp, ignored);
      throw;
    }
    for (std::size_t i = 0; i < files_.size(); ++i) std::filesystem::rename(staged[i], files_[i].first);
  }

  const std::vector<std::pair<std::filesystem::path, std::string>>& files() const { return files_; }

 private:
  std::vector<std::pair<std::filesystem::path, std::string>> files_;
};

}  // namespace fairtrain
