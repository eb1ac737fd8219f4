// Copyright 2026 The Phosphene Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "phosphene/common.hpp"

namespace phosphene {

// Stimulus CSV: header `electrode,freq_hz,amp_xth,pdur_ms`, one row per
// electrode in row-major electrode order. Malformed input raises ParseError
// naming the offending line.
void write_stimulus_csv(const Stimulus& s, std::ostream& os);
void write_stimulus_csv(const Stimulus& s, const std::filesystem::path& path);
Stimulus read_stimulus_csv(std::istream& is);
Stimulus read_stimulus_csv(const std::filesystem::path& path);

// 8-bit grayscale PGM (P5). Values are clipped to [0, ceiling] and mapped
// linearly onto [0, 255].
void write_percept_pgm(const Percept& p, const std::filesystem::path& path, double ceiling = 2.0);

// Raw float container: char[4] "PF32", u32 version (1), u32 H, u32 W,
// f32 data[H*W] row-major, little-endian.
void write_percept_raw(const Percept& p, const std::filesystem::path& path);
Percept read_percept_raw(const std::filesystem::path& path);

// Decoded 8-bit image with 1 (gray) or 3 (RGB) interleaved channels.
struct RawImage {
  int height = 0;
  int width = 0;
  int channels = 1;
  std::vector<std::uint8_t> pixels;

  std::uint8_t at(int r, int c, int ch = 0) const {
    return pixels[(static_cast<std::size_t>(r) * width + c) * channels + ch];
  }
};

// Netpbm reader: P2/P5 (gray) and P3/P6 (RGB), maxval <= 255.
RawImage read_netpbm(const std::filesystem::path& path);
void write_pgm(const RawImage& img, const std::filesystem::path& path);

}  // namespace phosphene
