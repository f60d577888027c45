// Copyright 2026 The mmel Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Flat parameter views and the versioned binary checkpoint format:
//
//   "MMELCKPT" | u32 version | u64 header_len | header JSON | u64 count |
//   count x f64 (all little-endian)
//
// The header carries a "layout" array of {name, shape} in flat order plus
// any model-specific configuration.

#pragma once

#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "mmel/common.hpp"
#include "mmel/nn/layers.hpp"

namespace mmel::nn {

struct ParamSlot {
  std::string name;
  std::vector<size_t> shape;
  std::span<double> data;
};

using ParamLayout = std::vector<ParamSlot>;

inline void append_slots(ParamLayout& out, const std::string& prefix, DenseLayer& l) {
  out.push_back({prefix + ".W", {l.W.rows(), l.W.cols()}, l.W.span()});
  out.push_back({prefix + ".b", {l.b.size()}, l.b});
}

inline void append_slots(ParamLayout& out, const std::string& prefix, LayerNormParams& p) {
  out.push_back({prefix + ".gain", {p.gain.size()}, p.gain});
  out.push_back({prefix + ".bias", {p.bias.size()}, p.bias});
}

inline size_t flat_size(const ParamLayout& layout) {
  size_t n = 0;
  for (const auto& s : layout) n += s.data.size();
  return n;
}

inline Vector flatten(const ParamLayout& layout) {
  Vector out;
  out.reserve(flat_size(layout));
  for (const auto& s : layout) out.insert(out.end(), s.data.begin(), s.data.end());
  return out;
}

inline void unflatten(const ParamLayout& layout, std::span<const double> flat) {
  if (flat.size() != flat_size(layout)) {
    throw ShapeError("unflatten: expected " + std::to_string(flat_size(layout)) +
                     " values, got " + std::to_string(flat.size()));
  }
  size_t off = 0;
  for (const auto& s : layout) {
    std::copy(flat.begin() + off, flat.begin() + off + s.data.size(), s.data.begin());
    off += s.data.size();
  }
}

inline nlohmann::ordered_json layout_json(const ParamLayout& layout) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& s : layout) {
    nlohmann::ordered_json j;
    j["name"] = s.name;
    j["shape"] = s.shape;
    arr.push_back(std::move(j));
  }
  return arr;
}

inline constexpr char kCheckpointMagic[8] = {'M', 'M', 'E', 'L', 'C', 'K', 'P', 'T'};
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline uint64_t get_u64(std::string_view in, size_t& pos) {
  if (pos + 8 > in.size()) throw DataError("checkpoint truncated");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  }
  pos += 8;
  return v;
}

}  // namespace detail

struct Checkpoint {
  nlohmann::json header;
  Vector values;
};

/// `header` must not contain "layout"; it is filled from `layout`.
inline std::string encode_checkpoint(nlohmann::ordered_json header, const ParamLayout& layout) {
  header["layout"] = layout_json(layout);
  const std::string h = header.dump();
  std::string out(kCheckpointMagic, 8);
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((kCheckpointVersion >> (8 * i)) & 0xff));
  }
  detail::put_u64(out, h.size());
  out += h;
  const Vector flat = flatten(layout);
  detail::put_u64(out, flat.size());
  for (double v : flat) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    detail::put_u64(out, bits);
  }
  return out;
}

inline void write_checkpoint(const std::string& path, nlohmann::ordered_json header,
                             const ParamLayout& layout) {
  write_file(path, encode_checkpoint(std::move(header), layout));
}

inline Checkpoint decode_checkpoint(std::string_view bytes, const std::string& what) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0) {
    throw DataError(what + ": not an mmel checkpoint");
  }
  uint32_t version = 0;
  for (int i = 0; i < 4; ++i) {
    version |= static_cast<uint32_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
  }
  if (version != kCheckpointVersion) {
    throw DataError(what + ": unsupported checkpoint version " + std::to_string(version));
  }
  size_t pos = 12;
  const uint64_t hlen = detail::get_u64(bytes, pos);
  if (pos + hlen > bytes.size()) throw DataError(what + ": checkpoint truncated");
  Checkpoint ck;
  try {
    ck.header = nlohmann::json::parse(bytes.substr(pos, hlen));
  } catch (const nlohmann::json::exception& ex) {
    throw DataError(what + ": bad checkpoint header: " + ex.what());
  }
  pos += hlen;
  const uint64_t count = detail::get_u64(bytes, pos);
  if (pos + count * 8 != bytes.size()) throw DataError(what + ": checkpoint size mismatch");
  ck.values.resize(count);
  for (auto& v : ck.values) {
    const uint64_t bits = detail::get_u64(bytes, pos);
    std::memcpy(&v, &bits, sizeof v);
  }
  size_t expected = 0;
  for (const auto& s : ck.header.at("layout")) {
    size_t n = 1;
    for (auto d : s.at("shape")) n *= d.get<size_t>();
    expected += n;
  }
  if (expected != count) throw DataError(what + ": layout does not match value count");
  return ck;
}

inline Checkpoint read_checkpoint(const std::string& path) {
  return decode_checkpoint(read_file(path), path);
}

/// Copies checkpoint values into `layout`, checking names and shapes.
inline void restore(const Checkpoint& ck, const ParamLayout& layout) {
  const auto& jl = ck.header.at("layout");
  if (jl.size() != layout.size()) throw DataError("checkpoint layout has wrong slot count");
  for (size_t i = 0; i < layout.size(); ++i) {
    if (jl[i].at("name").get<std::string>() != layout[i].name ||
        jl[i].at("shape").get<std::vector<size_t>>() != layout[i].shape) {
      throw DataError("checkpoint slot " + std::to_string(i) + " does not match " +
                      layout[i].name);
    }
  }
  unflatten(layout, ck.values);
}

}  // namespace mmel::nn
