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

// Checkpoint container: the magic line "FTCK1\n", a u32 little-endian header
// length, a JSON header, then every parameter as a little-endian float32 in
// block order (w1, b1, w2, b2, w3, b3; weights row-major).

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "fairtrain/error.hpp"
#include "fairtrain/io.hpp"
#include "fairtrain/network.hpp"

namespace fairtrain {

inline constexpr std::string_view kCheckpointMagic = "FTCK1\n";

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  nlohmann::json metrics = nlohmann::json::object();
};

struct Checkpoint {
  MlpParams<float> params;
  CheckpointMeta meta;
};

inline std::string encode_checkpoint(const MlpParams<float>& params, const CheckpointMeta& meta) {
  if (!params.all_finite()) throw NumericalError("refusing to write non-finite parameters");
  const MlpShape shape = params.shape();
  nlohmann::json header = {
      {"format", "fairtrain-checkpoint"},
      {"version", 1},
      {"dim", shape.dim},
      {"layer_sizes", {shape.hidden1, shape.hidden2, 1}},
      {"seed", meta.seed},
      {"epoch", meta.epoch},
      {"metrics", meta.metrics},
      {"parameter_count", shape.parameter_count()},
  };
  const std::string header_text = header.dump();
  std::string out(kCheckpointMagic);
  io::append_u32_le(out, static_cast<std::uint32_t>(header_text.size()));
  out += header_text;
  out.reserve(out.size() + 4 * shape.parameter_count());
  for (const auto& block : params.blocks()) {
    for (float v : block) io::append_f32_le(out, v);
  }
  return out;
}

inline Checkpoint decode_checkpoint(std::string_view bytes, std::string_view origin = "checkpoint") {
  const std::string where(origin);
  if (bytes.size() < kCheckpointMagic.size() + 4 ||
      bytes.substr(0, kCheckpointMagic.size()) != kCheckpointMagic) {
    throw DataError(where + ": not a fairtrain checkpoint (bad magic)");
  }
  const auto* base = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::size_t header_len = io::read_u32_le(base + kCheckpointMagic.size());
  const std::size_t header_at = kCheckpointMagic.size() + 4;
  if (bytes.size() < header_at + header_len) throw DataError(where + ": truncated header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(header_at, header_len));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + ": malformed header: " + e.what());
  }
  Checkpoint ck;
  MlpShape shape;
  try {
    shape.dim = header.at("dim").get<std::size_t>();
    const auto sizes = header.at("layer_sizes").get<std::vector<std::size_t>>();
    if (sizes.size() != 3 || sizes[2] != 1) throw DataError(where + ": unsupported layer_sizes");
    shape.hidden1 = sizes[0];
    shape.hidden2 = sizes[1];
    ck.meta.seed = header.at("seed").get<std::uint64_t>();
    ck.meta.epoch = header.at("epoch").get<std::size_t>();
    ck.meta.metrics = header.value("metrics", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(where + ": bad header field: " + e.what());
  }
  if (shape.dim == 0 || shape.hidden1 == 0 || shape.hidden2 == 0) {
    throw DataError(where + ": zero layer width");
  }

  const std::size_t blob_at = header_at + header_len;
  const std::size_t expected = 4 * shape.parameter_count();
  if (bytes.size() - blob_at != expected) {
    throw DataError(where + ": parameter blob has " + std::to_string(bytes.size() - blob_at) +
                    " bytes, expected " + std::to_string(expected));
  }
  ck.params = MlpParams<float>::zeros(shape);
  const unsigned char* p = base + blob_at;
  for (auto block : ck.params.blocks()) {
    for (float& v : block) {
      v = io::read_f32_le(p);
      p += 4;
    }
  }
  if (!ck.params.all_finite()) throw DataError(where + ": non-finite parameter");
  return ck;
}

inline void save_checkpoint(const std::filesystem::path& path, const MlpParams<float>& params,
                            const CheckpointMeta& meta) {
  io::write_file_atomic(path, encode_checkpoint(params, meta));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

}  // namespace fairtrain
