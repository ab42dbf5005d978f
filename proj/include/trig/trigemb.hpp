// Copyright 2026 The trig Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

// TRIGEMB v1 embedding files (little-endian):
//
//   bytes 0..3   "TRIG"
//   u32          version = 1
//   u32          rows
//   u32          cols
//   u32          l_text
//   u32          dim
//   f32[rows*cols*dim]   image embeddings, grid row-major, dim innermost
//   f32[l_text*dim]      text embeddings
//
// One file per sample, named <sample_id>.trigemb.

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "trig/engine.hpp"
#include "trig/error.hpp"

namespace trig {

enum class TrigembErrorKind { Io, BadMagic, BadVersion, Truncated, TrailingData, Invalid };

class TrigembError : public EngineError {
 public:
  TrigembError(TrigembErrorKind kind, const std::string& what) : EngineError(what), kind_(kind) {}
  TrigembErrorKind kind() const noexcept { return kind_; }

 private:
  TrigembErrorKind kind_;
};

inline constexpr std::array<std::uint8_t, 4> kTrigembMagic{'T', 'R', 'I', 'G'};
inline constexpr std::uint32_t kTrigembVersion = 1;
inline constexpr std::size_t kTrigembHeaderSize = 4 + 5 * 4;

namespace detail {

inline std::uint32_t load_u32le(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void store_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

inline void read_floats(const std::uint8_t* p, std::size_t n, std::vector<double>& out) {
  out.resize(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<double>(std::bit_cast<float>(load_u32le(p + 4 * i)));
}

}  // namespace detail

inline EmbeddingSet parse_trigemb(std::span<const std::uint8_t> bytes) {
  using K = TrigembErrorKind;
  if (bytes.size() < 4) throw TrigembError(K::Truncated, "truncated header");
  if (!std::equal(kTrigembMagic.begin(), kTrigembMagic.end(), bytes.begin()))
    throw TrigembError(K::BadMagic, "bad magic (expected TRIG)");
  if (bytes.size() < kTrigembHeaderSize) throw TrigembError(K::Truncated, "truncated header");
  const auto* p = bytes.data();
  const auto version = detail::load_u32le(p + 4);
  if (version != kTrigembVersion) throw TrigembError(K::BadVersion, "unsupported version " + std::to_string(version));
  const std::uint64_t rows = detail::load_u32le(p + 8);
  const std::uint64_t cols = detail::load_u32le(p + 12);
  const std::uint64_t l_text = detail::load_u32le(p + 16);
  const std::uint64_t dim = detail::load_u32le(p + 20);
  if (rows == 0 || cols == 0 || l_text == 0 || dim == 0) throw TrigembError(K::Invalid, "zero-sized dimension");

  // u32 * u32 products fit in 64 bits; the full size is checked in steps.
  const std::uint64_t n_image = rows * cols;
  const std::uint64_t payload = bytes.size() - kTrigembHeaderSize;
  if (n_image > payload / 4 / dim || l_text > payload / 4 / dim) throw TrigembError(K::Truncated, "truncated payload");
  const std::uint64_t image_floats = n_image * dim;
  const std::uint64_t text_floats = l_text * dim;
  const std::uint64_t need = 4 * (image_floats + text_floats);
  if (payload < need) throw TrigembError(K::Truncated, "truncated payload");
  if (payload > need) throw TrigembError(K::TrailingData, "trailing bytes after payload");

  EmbeddingSet e;
  e.rows = static_cast<std::int64_t>(rows);
  e.cols = static_cast<std::int64_t>(cols);
  std::vector<double> data;
  detail::read_floats(p + kTrigembHeaderSize, image_floats, data);
  e.image = Matrix(n_image, dim, std::move(data));
  detail::read_floats(p + kTrigembHeaderSize + 4 * image_floats, text_floats, data);
  e.text = Matrix(l_text, dim, std::move(data));
  try {
    e.validate();
  } catch (const EngineError& err) {
    throw TrigembError(K::Invalid, err.what());
  }
  return e;
}

inline EmbeddingSet read_trigemb(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TrigembError(TrigembErrorKind::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_trigemb(bytes);
}

/// Serializes with entries narrowed to 32-bit floats.
inline std::vector<std::uint8_t> encode_trigemb(const EmbeddingSet& e) {
  e.validate();
  std::vector<std::uint8_t> out(kTrigembMagic.begin(), kTrigembMagic.end());
  detail::store_u32le(out, kTrigembVersion);
  detail::store_u32le(out, static_cast<std::uint32_t>(e.rows));
  detail::store_u32le(out, static_cast<std::uint32_t>(e.cols));
  detail::store_u32le(out, static_cast<std::uint32_t>(e.num_tokens()));
  detail::store_u32le(out, static_cast<std::uint32_t>(e.dim()));
  for (const auto* m : {&e.image, &e.text})
    for (double v : m->data()) detail::store_u32le(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

inline void write_trigemb(const EmbeddingSet& e, const std::filesystem::path& path) {
  const auto bytes = encode_trigemb(e);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TrigembError(TrigembErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace trig
