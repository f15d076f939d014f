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

#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairtrain/error.hpp"
#include "fairtrain/io.hpp"

namespace fairtrain {

/// One observation. Group flags are independent, so a record may belong to
/// several groups or to none.
struct FeatureRecord {
  std::vector<float> features;
  std::uint8_t label = 0;
  std::vector<std::uint8_t> groups;

  bool operator==(const FeatureRecord&) const = default;
};

struct Dataset {
  std::size_t dim = 0;
  std::vector<std::string> group_names;
  std::vector<FeatureRecord> records;

  bool operator==(const Dataset&) const = default;

  std::size_t size() const { return records.size(); }
  std::size_t num_groups() const { return group_names.size(); }

  /// Index of `name` in group_names; throws DataError if absent.
  std::size_t group_index(std::string_view name) const {
    const auto it = std::find(group_names.begin(), group_names.end(), name);
    if (it == group_names.end()) throw DataError("unknown group '" + std::string(name) + "'");
    return static_cast<std::size_t>(it - group_names.begin());
  }

  void validate() const {
    if (dim == 0) throw DataError("dataset dimension must be positive");
    std::set<std::string> seen;
    for (const auto& name : group_names) {
      if (name.empty()) throw DataError("empty group name");
      if (!seen.insert(name).second) throw DataError("duplicate group name '" + name + "'");
    }
    for (std::size_t i = 0; i < records.size(); ++i) {
      const auto& r = records[i];
      if (r.features.size() != dim) {
        throw DataError("record " + std::to_string(i) + " has " +
                        std::to_string(r.features.size()) + " features, expected " +
                        std::to_string(dim));
      }
      if (r.groups.size() != group_names.size()) {
        throw DataError("record " + std::to_string(i) + " has wrong group flag count");
      }
      if (r.label > 1) throw DataError("record " + std::to_string(i) + " label not in {0,1}");
      for (auto g : r.groups) {
        if (g > 1) throw DataError("record " + std::to_string(i) + " group flag not in {0,1}");
      }
    }
  }
};

enum class DataFormat { csv, binary };

inline DataFormat parse_data_format(std::string_view text) {
  if (text == "csv") return DataFormat::csv;
  if (text == "binary") return DataFormat::binary;
  throw ConfigError("unknown dataset format '" + std::string(text) + "' (expected csv or binary)");
}

inline std::string to_string(DataFormat f) { return f == DataFormat::csv ? "csv" : "binary"; }

namespace detail {

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> cells;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      cells.push_back(line.substr(start));
      break;
    }
    cells.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
  return cells;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::uint8_t parse_flag(std::string_view cell, std::size_t line_no, const char* what) {
  cell = trim(cell);
  if (cell == "0") return 0;
  if (cell == "1") return 1;
  throw DataError("line " + std::to_string(line_no) + ": " + what + " '" + std::string(cell) +
                  "' not in {0,1}");
}

inline float parse_feature(std::string_view cell, std::size_t line_no) {
  cell = trim(cell);
  float value = 0.0f;
  const auto* first = cell.data();
  const auto* last = cell.data() + cell.size();
  if (!cell.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (cell.empty() || ec != std::errc{} || ptr != last || !std::isfinite(value)) {
    throw DataError("line " + std::to_string(line_no) + ": non-numeric feature '" +
                    std::string(cell) + "'");
  }
  return value;
}

inline Dataset parse_csv(std::string_view text) {
  Dataset ds;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  bool have_header = false;
  while (pos < text.size()) {
    auto end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const auto line = trim(text.substr(pos, end - pos));
    pos = end + 1;
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (!have_header) {
      std::size_t d = 0;
      while (d < cells.size() && trim(cells[d]) == "f" + std::to_string(d)) ++d;
      if (d == 0 || d >= cells.size() || trim(cells[d]) != "label") {
        throw DataError("line 1: header must be f0,...,f{d-1},label,g_<name>...");
      }
      ds.dim = d;
      for (std::size_t k = d + 1; k < cells.size(); ++k) {
        const auto cell = trim(cells[k]);
        if (cell.size() < 3 || cell.substr(0, 2) != "g_") {
          throw DataError("line 1: group column '" + std::string(cell) + "' must be g_<name>");
        }
        ds.group_names.emplace_back(cell.substr(2));
      }
      std::set<std::string> seen;
      for (const auto& n : ds.group_names) {
        if (!seen.insert(n).second) throw DataError("line 1: duplicate group name '" + n + "'");
      }
      have_header = true;
      continue;
    }
    const std::size_t expected = ds.dim + 1 + ds.group_names.size();
    if (cells.size() != expected) {
      throw DataError("line " + std::to_string(line_no) + ": expected " +
                      std::to_string(expected) + " columns, got " +
                      std::to_string(cells.size()));
    }
    FeatureRecord r;
    r.features.reserve(ds.dim);
    for (std::size_t k = 0; k < ds.dim; ++k) r.features.push_back(parse_feature(cells[k], line_no));
    r.label = parse_flag(cells[ds.dim], line_no, "label");
    r.groups.reserve(ds.group_names.size());
    for (std::size_t k = 0; k < ds.group_names.size(); ++k) {
      r.groups.push_back(parse_flag(cells[ds.dim + 1 + k], line_no, "group flag"));
    }
    ds.records.push_back(std::move(r));
  }
  if (!have_header) throw DataError("empty CSV file (missing header)");
  return ds;
}

inline std::string format_float(float v) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

}  // namespace detail

inline std::string to_csv(const Dataset& ds) {
  std::string out;
  for (std::size_t k = 0; k < ds.dim; ++k) out += "f" + std::to_string(k) + ",";
  out += "label";
  for (const auto& g : ds.group_names) out += ",g_" + g;
  out += '\n';
  for (const auto& r : ds.records) {
    for (float v : r.features) {
      out += detail::format_float(v);
      out += ',';
    }
    out += static_cast<char>('0' + r.label);
    for (auto g : r.groups) {
      out += ',';
      out += static_cast<char>('0' + g);
    }
    out += '\n';
  }
  return out;
}

inline std::filesystem::path sidecar_path(const std::filesystem::path& features_path) {
  auto p = features_path;
  p += ".json";
  return p;
}

/// Encodes the dataset into the files it occupies on disk. Binary format
/// produces `path` (float32 LE row-major matrix) plus `path.json` (dim,
/// n_records, group_names, bit-packed labels and groups).
inline std::vector<std::pair<std::filesystem::path, std::string>> encode_dataset(
    const Dataset& ds, const std::filesystem::path& path, DataFormat format) {
  ds.validate();
  if (format == DataFormat::csv) return {{path, to_csv(ds)}};
  std::string blob;
  blob.reserve(ds.size() * ds.dim * 4);
  std::vector<std::uint8_t> labels;
  labels.reserve(ds.size());
  for (const auto& r : ds.records) {
    for (float v : r.features) io::append_f32_le(blob, v);
    labels.push_back(r.label);
  }
  nlohmann::ordered_json side;
  side["dim"] = ds.dim;
  side["n_records"] = ds.size();
  side["group_names"] = ds.group_names;
  side["labels"] = io::base64_encode(io::pack_bits(labels));
  nlohmann::ordered_json groups = nlohmann::ordered_json::object();
  for (std::size_t g = 0; g < ds.num_groups(); ++g) {
    std::vector<std::uint8_t> flags;
    flags.reserve(ds.size());
    for (const auto& r : ds.records) flags.push_back(r.groups[g]);
    groups[ds.group_names[g]] = io::base64_encode(io::pack_bits(flags));
  }
  side["groups"] = std::move(groups);
  return {{path, std::move(blob)}, {sidecar_path(path), side.dump(2) + "\n"}};
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path, DataFormat format) {
  for (const auto& [file, contents] : encode_dataset(ds, path, format)) {
    io::write_file_atomic(file, contents);
  }
}

inline Dataset load_dataset(const std::filesystem::path& path, DataFormat format) {
  if (!std::filesystem::exists(path)) throw DataError("dataset file not found: " + path.string());
  if (format == DataFormat::csv) {
    auto ds = detail::parse_csv(io::read_file(path));
    ds.validate();
    return ds;
  }
  const auto side_text = io::read_file(sidecar_path(path));
  nlohmann::json side;
  try {
    side = nlohmann::json::parse(side_text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(sidecar_path(path).string() + ": " + e.what());
  }
  Dataset ds;
  std::size_t n = 0;
  nlohmann::json groups;
  std::string labels_b64;
  try {
    ds.dim = side.at("dim").get<std::size_t>();
    n = side.at("n_records").get<std::size_t>();
    ds.group_names = side.at("group_names").get<std::vector<std::string>>();
    labels_b64 = side.at("labels").get<std::string>();
    groups = side.at("groups");
  } catch (const nlohmann::json::exception& e) {
    throw DataError(sidecar_path(path).string() + ": " + e.what());
  }
  const auto blob = io::read_file(path);
  if (blob.size() != n * ds.dim * 4) {
    throw DataError(path.string() + ": feature blob has " + std::to_string(blob.size()) +
                    " bytes, expected " + std::to_string(n * ds.dim * 4));
  }
  const auto labels = io::unpack_bits(io::base64_decode(labels_b64), n);
  std::vector<std::vector<std::uint8_t>> flags;
  for (const auto& name : ds.group_names) {
    if (!groups.contains(name)) throw DataError("sidecar missing group flags for '" + name + "'");
    flags.push_back(io::unpack_bits(io::base64_decode(groups.at(name).get<std::string>()), n));
  }
  const auto* bytes = reinterpret_cast<const unsigned char*>(blob.data());
  ds.records.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto& r = ds.records[i];
    r.features.resize(ds.dim);
    for (std::size_t k = 0; k < ds.dim; ++k) {
      r.features[k] = io::read_f32_le(bytes + 4 * (i * ds.dim + k));
    }
    r.label = labels[i];
    r.groups.resize(ds.num_groups());
    for (std::size_t g = 0; g < ds.num_groups(); ++g) r.groups[g] = flags[g][i];
  }
  ds.validate();
  return ds;
}

struct SplitFractions {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
  std::uint64_t seed = 0;

  bool operator==(const SplitIndices&) const = default;
};

/// Uniform (unstratified) shuffle; train and validation sizes are floored,
/// the test split takes the remainder.
inline SplitIndices split_dataset(std::size_t n, SplitFractions f, std::uint64_t seed) {
  if (!(f.train > 0 && f.validation > 0 && f.test > 0) ||
      std::abs(f.train + f.validation + f.test - 1.0) > 1e-9) {
    throw ConfigError("split fractions must be positive and sum to 1");
  }
  if (n < 3) throw DataError("need at least 3 records to split, got " + std::to_string(n));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_train = static_cast<std::size_t>(std::floor(f.train * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(std::floor(f.validation * static_cast<double>(n)));
  SplitIndices s;
  s.seed = seed;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.validation.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
                      order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

inline SplitIndices split_dataset(const Dataset& ds, SplitFractions f, std::uint64_t seed) {
  return split_dataset(ds.size(), f, seed);
}

/// Parameters of the synthetic biased-dataset generator.
///
/// Every record has a scalar latent score: -/+ class_separation / 2 by label,
/// plus feature_shift[g] for each group g it belongs to, plus
/// noise_scale * N(0, 1). The first d - N coordinates spread that score over
/// equal unit weights and add nuisance_scale * N(0, 1) each, so the class
/// signal is low-dimensional. The last N coordinates are group markers:
/// noise_scale * N(0, 1), plus marker_scale for members. A positive shift
/// moves both classes of a group toward the positive side, so a model that
/// cannot fully recover membership from the noisy markers over-flags the
/// group's negatives and rarely misses its positives.
struct SynthConfig {
  std::size_t n_records = 5000;
  std::size_t dim = 16;
  std::vector<std::string> group_names;
  std::vector<double> prevalence;
  std::vector<double> positive_rate;
  double overall_positive_rate = 0.5;
  std::vector<double> feature_shift;
  double noise_scale = 1.0;
  double class_separation = 2.0;
  double marker_scale = 1.0;
  double nuisance_scale = 0.1;
  std::uint64_t seed = 0;
};

namespace detail {

/// Positive rate for records in no group that makes the mixture hit the
/// configured overall rate. Records in several groups use the mean of their
/// groups' rates.
inline double baseline_positive_rate(const SynthConfig& cfg) {
  const std::size_t n_groups = cfg.group_names.size();
  double p_none = 1.0;
  for (double p : cfg.prevalence) p_none *= 1.0 - p;
  double member_mass = 0.0;
  for (std::uint64_t pattern = 1; pattern < (std::uint64_t{1} << n_groups); ++pattern) {
    double prob = 1.0;
    double rate_sum = 0.0;
    int members = 0;
    for (std::size_t g = 0; g < n_groups; ++g) {
      if ((pattern >> g) & 1u) {
        prob *= cfg.prevalence[g];
        rate_sum += cfg.positive_rate[g];
        ++members;
      } else {
        prob *= 1.0 - cfg.prevalence[g];
      }
    }
    member_mass += prob * rate_sum / members;
  }
  const double residual = cfg.overall_positive_rate - member_mass;
  if (p_none <= 0.0) {
    if (std::abs(residual) > 1e-9) {
      throw ConfigError("infeasible synthetic rates: every record is in a group, so the overall "
                        "positive rate is fixed at " + std::to_string(member_mass));
    }
    return 0.0;
  }
  const double r0 = residual / p_none;
  if (r0 < -1e-12 || r0 > 1.0 + 1e-12) {
    throw ConfigError("infeasible synthetic rates: overall positive rate " +
                      std::to_string(cfg.overall_positive_rate) +
                      " would need a non-member positive rate of " + std::to_string(r0));
  }
  return std::clamp(r0, 0.0, 1.0);
}

}  // namespace detail

inline void validate(const SynthConfig& cfg) {
  const std::size_t n_groups = cfg.group_names.size();
  if (cfg.n_records == 0) throw ConfigError("synth: n_records must be positive");
  if (n_groups > 16) throw ConfigError("synth: at most 16 groups supported");
  if (cfg.dim < n_groups + 1) throw ConfigError("synth: dim must exceed the number of groups");
  if (cfg.prevalence.size() != n_groups || cfg.positive_rate.size() != n_groups ||
      cfg.feature_shift.size() != n_groups) {
    throw ConfigError("synth: per-group vectors must match the number of groups");
  }
  auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  for (std::size_t g = 0; g < n_groups; ++g) {
    if (!unit(cfg.prevalence[g]) || !unit(cfg.positive_rate[g])) {
      throw ConfigError("synth: prevalence and positive rates must lie in [0,1]");
    }
    if (!std::isfinite(cfg.feature_shift[g])) throw ConfigError("synth: non-finite feature shift");
  }
  if (!unit(cfg.overall_positive_rate)) throw ConfigError("synth: overall rate must lie in [0,1]");
  if (!(cfg.noise_scale > 0.0) || !std::isfinite(cfg.noise_scale)) {
    throw ConfigError("synth: noise_scale must be positive");
  }
  if (!std::isfinite(cfg.class_separation) || !std::isfinite(cfg.marker_scale)) {
    throw ConfigError("synth: non-finite class separation or marker scale");
  }
  if (!(cfg.nuisance_scale >= 0.0) || !std::isfinite(cfg.nuisance_scale)) {
    throw ConfigError("synth: nuisance_scale must be finite and non-negative");
  }
  std::set<std::string> seen;
  for (const auto& n : cfg.group_names) {
    if (n.empty() || !seen.insert(n).second) throw ConfigError("synth: group names must be unique");
  }
}

/// Group sizes and label counts are allocated exactly (rounded), not sampled:
/// each group gets round(prevalence * n) members picked by its own shuffle,
/// and each membership pattern gets round(rate * count) positives. Records in
/// no group absorb whatever is left of round(overall_rate * n).
inline Dataset generate_synthetic(const SynthConfig& cfg) {
  validate(cfg);
  detail::baseline_positive_rate(cfg);  // feasibility check
  const std::size_t n = cfg.n_records;
  const std::size_t n_groups = cfg.group_names.size();
  const std::size_t signal_dims = cfg.dim - n_groups;
  const double unit = 1.0 / std::sqrt(static_cast<double>(signal_dims));

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset ds;
  ds.dim = cfg.dim;
  ds.group_names = cfg.group_names;
  ds.records.resize(n);
  for (auto& r : ds.records) r.groups.assign(n_groups, 0);

  std::vector<std::size_t> order(n);
  for (std::size_t g = 0; g < n_groups; ++g) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    const auto members = static_cast<std::size_t>(std::llround(cfg.prevalence[g] * n));
    for (std::size_t i = 0; i < members; ++i) ds.records[order[i]].groups[g] = 1;
  }

  // Bucket records by membership pattern; pattern 0 is "no group".
  std::vector<std::vector<std::size_t>> cells(std::size_t{1} << n_groups);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t pattern = 0;
    for (std::size_t g = 0; g < n_groups; ++g) pattern |= std::size_t{ds.records[i].groups[g]} << g;
    cells[pattern].push_back(i);
  }
  auto label_cell = [&](std::vector<std::size_t>& cell, std::size_t positives) {
    std::shuffle(cell.begin(), cell.end(), rng);
    for (std::size_t k = 0; k < positives; ++k) ds.records[cell[k]].label = 1;
  };
  long long remaining = std::llround(cfg.overall_positive_rate * n);
  for (std::size_t pattern = 1; pattern < cells.size(); ++pattern) {
    double rate_sum = 0.0;
    int members = 0;
    for (std::size_t g = 0; g < n_groups; ++g) {
      if ((pattern >> g) & 1u) {
        rate_sum += cfg.positive_rate[g];
        ++members;
      }
    }
    const auto positives =
        static_cast<std::size_t>(std::llround(rate_sum / members * cells[pattern].size()));
    label_cell(cells[pattern], positives);
    remaining -= static_cast<long long>(positives);
  }
  if (remaining < 0 || static_cast<std::size_t>(remaining) > cells[0].size()) {
    throw ConfigError("synth: overall positive rate cannot be met by the records in no group");
  }
  label_cell(cells[0], static_cast<std::size_t>(remaining));

  for (auto& r : ds.records) {
    double along_signal = (r.label == 1 ? 0.5 : -0.5) * cfg.class_separation;
    for (std::size_t g = 0; g < n_groups; ++g) {
      if (r.groups[g]) along_signal += cfg.feature_shift[g];
    }
    r.features.resize(cfg.dim);
    const double signal = along_signal + cfg.noise_scale * normal(rng);
    for (std::size_t k = 0; k < cfg.dim; ++k) {
      double v = 0.0;
      if (k < signal_dims) {
        v = signal * unit + cfg.nuisance_scale * normal(rng);
      } else {
        v = cfg.noise_scale * normal(rng);
        if (r.groups[k - signal_dims]) v += cfg.marker_scale;
      }
      r.features[k] = static_cast<float>(v);
    }
  }
  return ds;
}

/// Named generator presets. "jigsaw-skew" mirrors the identity-group skew of
/// the Jigsaw toxicity corpus (male/female at 11.0%/13.2% prevalence, 15.0%/13.7%
/// positive rates, 11.4% overall) with both groups shifted toward the positive
/// class and only partially visible markers. "jigsaw-null" is the same
/// population with no shift and no markers.
inline SynthConfig synth_preset(std::string_view name) {
  SynthConfig cfg;
  if (name == "jigsaw-skew" || name == "jigsaw-null") {
    const bool skew = name == "jigsaw-skew";
    cfg.n_records = 5000;
    cfg.dim = 16;
    cfg.group_names = {"male", "female"};
    cfg.prevalence = {0.110, 0.132};
    cfg.positive_rate = {0.150, 0.137};
    cfg.overall_positive_rate = 0.114;
    cfg.feature_shift = skew ? std::vector<double>{3.0, 3.0} : std::vector<double>{0.0, 0.0};
    cfg.noise_scale = 1.0;
    cfg.class_separation = 4.0;
    cfg.marker_scale = skew ? 2.4 : 0.0;
    cfg.nuisance_scale = 0.02;
    cfg.seed = 2021;
    return cfg;
  }
  throw ConfigError("unknown synth preset '" + std::string(name) +
                    "' (known: jigsaw-skew, jigsaw-null)");
}

}  // namespace fairtrain
