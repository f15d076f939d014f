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

// The four CLI verbs as library functions. Each one reads a RunConfig, does
// its work in memory, validates what it is about to write, and then commits
// all of its files together.

#pragma once

#include <chrono>
#include <ctime>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairtrain/checkpoint.hpp"
#include "fairtrain/config.hpp"
#include "fairtrain/data_model.hpp"
#include "fairtrain/error.hpp"
#include "fairtrain/metrics.hpp"
#include "fairtrain/report.hpp"
#include "fairtrain/trainer.hpp"

namespace fairtrain {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitConfig = 1, kExitData = 2, kExitNumerical = 3 };

/// Command-line overrides applied on top of the config file.
struct Overrides {
  std::optional<std::uint64_t> seed = std::nullopt;
  std::optional<double> tau_fnr = std::nullopt;
  std::optional<double> tau_fpr = std::nullopt;
  std::optional<std::string> out = std::nullopt;
};

namespace detail {

inline void apply_tau_overrides(RunConfig& rc, const Overrides& o) {
  if (!o.tau_fnr && !o.tau_fpr) return;
  if (!rc.train.constraint) {
    throw ConfigError("--tau-fnr/--tau-fpr need a constraint section in the config");
  }
  if (o.tau_fnr) rc.train.constraint->tau_fnr = *o.tau_fnr;
  if (o.tau_fpr) rc.train.constraint->tau_fpr = *o.tau_fpr;
  rc.train.validate();
}

inline std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline Dataset load_configured_dataset(const RunConfig& rc) {
  if (rc.dataset_path.empty()) throw ConfigError("dataset.path is not set");
  return load_dataset(rc.dataset_path, rc.dataset_format);
}

/// Groups audited by eval/compare: the constraint's groups when present, otherwise all.
inline std::vector<std::string> audit_groups(const RunConfig& rc, const Dataset& ds) {
  std::vector<std::string> names =
      rc.train.constraint ? rc.train.constraint->group_names : ds.group_names;
  for (const auto& n : names) ds.group_index(n);  // throws DataError for unknown groups
  return names;
}

struct TestSplitView {
  MatrixX<Scalar> features;
  std::vector<std::uint8_t> labels;
  std::vector<std::string> group_names;
  std::vector<std::vector<std::uint8_t>> masks;
};

inline TestSplitView test_split(const RunConfig& rc, const Dataset& ds) {
  const auto split = split_dataset(ds, rc.split_fractions, rc.split_seed);
  TestSplitView v;
  v.features = feature_matrix(ds, split.test);
  v.labels = labels_of(ds, split.test);
  v.group_names = audit_groups(rc, ds);
  v.masks = group_masks(ds, split.test, v.group_names);
  return v;
}

inline Checkpoint load_matching_checkpoint(const std::filesystem::path& path, const Dataset& ds) {
  Checkpoint ck = load_checkpoint(path);
  if (ck.params.shape().dim != ds.dim) {
    throw DataError(path.string() + ": checkpoint dim " + std::to_string(ck.params.shape().dim) +
                    " does not match dataset dim " + std::to_string(ds.dim));
  }
  return ck;
}

inline std::pair<double, double> report_taus(const RunConfig& rc) {
  if (!rc.train.constraint) return {0.0, 0.0};
  return {rc.train.constraint->tau_fnr, rc.train.constraint->tau_fpr};
}

inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

/// Generates the configured synthetic preset and writes it to dataset.path.
inline std::filesystem::path cmd_synth(RunConfig rc, const Overrides& o) {
  if (o.seed) rc.synth_seed = *o.seed;
  std::filesystem::path path = rc.dataset_path;
  if (path.empty()) {
    path = resolve_output_dir(rc, o.out) /
           (rc.dataset_format == DataFormat::csv ? "dataset.csv" : "dataset.bin");
  } else if (o.out) {
    path = std::filesystem::path(*o.out) / path.filename();
  }
  const Dataset ds = generate_synthetic(rc.synth());
  OutputBundle bundle;
  for (auto& [file, contents] : encode_dataset(ds, path, rc.dataset_format)) {
    bundle.add(file, std::move(contents));
  }
  bundle.commit();
  return path;
}

struct TrainOutcome {
  TrainedModel model;
  std::filesystem::path out_dir;
  nlohmann::json summary;
};

/// Deterministic part of a training run's record.
inline nlohmann::json train_summary(const RunConfig& rc, const Dataset& ds,
                                    const SplitIndices& split, const TrainedModel& m) {
  const auto& best = m.history.at(m.selected_epoch - 1);
  nlohmann::json s = {
      {"mode", rc.train.constrained() ? "constrained" : "baseline"},
      {"selected_epoch", m.selected_epoch},
      {"validation_f1", best.validation_f1},
      {"validation_mcc", best.validation_mcc},
      {"final_multipliers", m.multipliers.lambda},
      {"dataset", {{"n_records", ds.size()}, {"dim", ds.dim}, {"group_names", ds.group_names}}},
      {"split_sizes",
       {{"train", split.train.size()}, {"validation", split.validation.size()}, {"test", split.test.size()}}},
      {"checkpoint", "checkpoint.ftck"},
      {"history", "history.jsonl"},
      {"warnings", m.warnings},
      {"config", to_json(rc)},
  };
  if (rc.train.constraint) {
    s["tau_fnr"] = rc.train.constraint->tau_fnr;
    s["tau_fpr"] = rc.train.constraint->tau_fpr;
  }
  return s;
}

inline TrainOutcome cmd_train(RunConfig rc, const Overrides& o) {
  if (o.seed) rc.train.seed = *o.seed;
  detail::apply_tau_overrides(rc, o);
  const std::string started = detail::utc_now();
  const auto t0 = std::chrono::steady_clock::now();

  const Dataset ds = detail::load_configured_dataset(rc);
  const SplitIndices split = split_dataset(ds, rc.split_fractions, rc.split_seed);
  TrainOutcome out;
  out.model = train(ds, split, rc.train);
  out.out_dir = resolve_output_dir(rc, o.out);
  out.summary = train_summary(rc, ds, split, out.model);

  const auto& best = out.model.history.at(out.model.selected_epoch - 1);
  CheckpointMeta meta;
  meta.seed = rc.train.seed;
  meta.epoch = out.model.selected_epoch;
  meta.metrics = {{"validation_f1", best.validation_f1}, {"validation_mcc", best.validation_mcc}};

  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const nlohmann::json run_meta = {{"started_at", started},
                                   {"finished_at", detail::utc_now()},
                                   {"wall_seconds", seconds},
                                   {"fairtrain_version", kVersion}};

  OutputBundle bundle;
  bundle.add(out.out_dir / "checkpoint.ftck", encode_checkpoint(out.model.params, meta));
  bundle.add(out.out_dir / "history.jsonl", history_jsonl(out.model.history));
  bundle.add(out.out_dir / "summary.json", detail::dump(out.summary));
  bundle.add(out.out_dir / "run_meta.json", detail::dump(run_meta));
  bundle.commit();
  return out;
}

struct EvalOutcome {
  BiasReport report;
  std::filesystem::path out_dir;
};

/// Audits one checkpoint on the test split.
inline EvalOutcome cmd_eval(RunConfig rc, const Overrides& o,
                            const std::filesystem::path& checkpoint) {
  detail::apply_tau_overrides(rc, o);
  const Dataset ds = detail::load_configured_dataset(rc);
  const Checkpoint ck = detail::load_matching_checkpoint(checkpoint, ds);
  const auto test = detail::test_split(rc, ds);
  EvalOutcome out;
  out.report = bias_report(predict(ck.params, test.features).labels, test.labels,
                           test.group_names, test.masks);
  out.out_dir = resolve_output_dir(rc, o.out);

  const nlohmann::json j = to_json(out.report);
  validate_bias_report_json(j);
  const auto [tau_fnr, tau_fpr] = detail::report_taus(rc);
  OutputBundle bundle;
  if (rc.wants("json")) bundle.add(out.out_dir / "bias_report.json", detail::dump(j));
  if (rc.wants("csv")) {
    bundle.add(out.out_dir / "table1.csv", table1_header() + table1_row("model", out.report));
    bundle.add(out.out_dir / "table2.csv", table2_csv({{"model", out.report}}));
    bundle.add(out.out_dir / "group_rates.csv", group_rates_csv(out.report, tau_fnr, tau_fpr));
  }
  bundle.commit();
  return out;
}

struct CompareOutcome {
  BiasReport baseline;
  BiasReport constrained;
  std::optional<double> bias_decrease_pct;
  McNemarResult mcnemar;
  std::filesystem::path out_dir;
};

/// Audits two checkpoints on the same test split and tests their accuracy
/// difference. A is reported as the baseline, B as the constrained model.
inline CompareOutcome cmd_compare(RunConfig rc, const Overrides& o,
                                  const std::filesystem::path& checkpoint_a,
                                  const std::filesystem::path& checkpoint_b) {
  detail::apply_tau_overrides(rc, o);
  const Dataset ds = detail::load_configured_dataset(rc);
  const Checkpoint a = detail::load_matching_checkpoint(checkpoint_a, ds);
  const Checkpoint b = detail::load_matching_checkpoint(checkpoint_b, ds);
  const auto test = detail::test_split(rc, ds);
  const auto preds_a = predict(a.params, test.features).labels;
  const auto preds_b = predict(b.params, test.features).labels;

  CompareOutcome out;
  out.baseline = bias_report(preds_a, test.labels, test.group_names, test.masks);
  out.constrained = bias_report(preds_b, test.labels, test.group_names, test.masks);
  out.bias_decrease_pct = bias_decrease(out.baseline.total_bias, out.constrained.total_bias);
  out.mcnemar = mcnemar(preds_a, preds_b, test.labels);
  out.out_dir = resolve_output_dir(rc, o.out);

  const nlohmann::json ja = to_json(out.baseline);
  const nlohmann::json jb = to_json(out.constrained);
  validate_bias_report_json(ja);
  validate_bias_report_json(jb);
  if (out.mcnemar.total() != test.labels.size()) {
    throw NumericalError("contingency cells do not sum to the test size");
  }
  const nlohmann::json j = {
      {"baseline", ja},
      {"constrained", jb},
      {"bias_decrease_pct",
       out.bias_decrease_pct ? nlohmann::json(*out.bias_decrease_pct) : nlohmann::json(nullptr)},
      {"mcnemar", to_json(out.mcnemar)},
      {"test_size", test.labels.size()},
  };
  const auto [tau_fnr, tau_fpr] = detail::report_taus(rc);
  OutputBundle bundle;
  if (rc.wants("json")) bundle.add(out.out_dir / "comparison.json", detail::dump(j));
  if (rc.wants("csv")) {
    bundle.add(out.out_dir / "table1.csv",
               table1_header() + table1_row("baseline", out.baseline) +
                   table1_row("constrained", out.constrained, out.bias_decrease_pct));
    bundle.add(out.out_dir / "table2.csv",
               table2_csv({{"baseline", out.baseline}, {"constrained", out.constrained}}));
    bundle.add(out.out_dir / "table3.csv", table3_csv(out.mcnemar));
    bundle.add(out.out_dir / "group_rates_baseline.csv",
               group_rates_csv(out.baseline, tau_fnr, tau_fpr));
    bundle.add(out.out_dir / "group_rates_constrained.csv",
               group_rates_csv(out.constrained, tau_fnr, tau_fpr));
  }
  bundle.commit();
  return out;
}

/// Maps the library's error types onto process exit codes.
template <typename F>
int run_guarded(F&& body, std::ostream& err) {
  try {
    body();
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const NumericalError& e) {
    err << "numerical error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const nlohmann::json::exception& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace fairtrain
