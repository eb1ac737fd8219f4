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

#include "phosphene/io.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>

#include "binary_io.hpp"

namespace phosphene {
namespace {

constexpr const char* kStimulusHeader = "electrode,freq_hz,amp_xth,pdur_ms";

std::string trim(std::string s) {
  const auto ws = " \t\r\n";
  s.erase(0, s.find_first_not_of(ws));
  const auto end = s.find_last_not_of(ws);
  s.erase(end == std::string::npos ? 0 : end + 1);
  return s;
}

double parse_double(const std::string& field, int line) {
  const std::string f = trim(field);
  double v = 0.0;
  const auto* first = f.data();
  const auto* last = f.data() + f.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || f.empty()) {
    throw ParseError("line " + std::to_string(line) + ": invalid number '" + f + "'");
  }
  return v;
}

// Skips whitespace and '#' comments between Netpbm header tokens.
int read_header_int(std::istream& is) {
  int c = is.peek();
  while (c != EOF) {
    if (std::isspace(c)) {
      is.get();
    } else if (c == '#') {
      std::string dummy;
      std::getline(is, dummy);
    } else {
      break;
    }
    c = is.peek();
  }
  int v = 0;
  if (!(is >> v)) throw IoError("malformed netpbm header");
  return v;
}

}  // namespace

void write_stimulus_csv(const Stimulus& s, std::ostream& os) {
  os << kStimulusHeader << '\n';
  os << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (Eigen::Index e = 0; e < s.rows(); ++e) {
    os << e << ',' << s(e, kFreq) << ',' << s(e, kAmp) << ',' << s(e, kPdur) << '\n';
  }
}

void write_stimulus_csv(const Stimulus& s, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  write_stimulus_csv(s, os);
}

Stimulus read_stimulus_csv(std::istream& is) {
  std::string line;
  int line_no = 0;
  bool header_seen = false;
  std::vector<std::array<double, 3>> rows;
  while (std::getline(is, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    if (!header_seen) {
      if (line != kStimulusHeader) {
        throw ParseError("line " + std::to_string(line_no) + ": expected header '" +
                         kStimulusHeader + "'");
      }
      header_seen = true;
      continue;
    }
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 4) {
      throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                       std::to_string(fields.size()));
    }
    const double idx = parse_double(fields[0], line_no);
    if (idx != static_cast<double>(rows.size())) {
      throw ParseError("line " + std::to_string(line_no) + ": electrode index out of order");
    }
    std::array<double, 3> r{};
    for (int k = 0; k < 3; ++k) {
      r[k] = parse_double(fields[k + 1], line_no);
      if (!std::isfinite(r[k]) || r[k] < 0) {
        throw ParseError("line " + std::to_string(line_no) + ": stimulus values must be finite and >= 0");
      }
    }
    rows.push_back(r);
  }
  if (!header_seen) throw ParseError("line 1: empty stimulus file");
  Stimulus s(static_cast<Eigen::Index>(rows.size()), 3);
  for (std::size_t e = 0; e < rows.size(); ++e) {
    for (int k = 0; k < 3; ++k) s(static_cast<Eigen::Index>(e), k) = rows[e][k];
  }
  return s;
}

Stimulus read_stimulus_csv(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  return read_stimulus_csv(is);
}

void write_percept_pgm(const Percept& p, const std::filesystem::path& path, double ceiling) {
  if (!(ceiling > 0)) throw InvalidParameter("display ceiling must be positive");
  RawImage img{static_cast<int>(p.rows()), static_cast<int>(p.cols()), 1, {}};
  img.pixels.resize(p.size());
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double v = std::clamp(p.data()[i], 0.0, ceiling) / ceiling;
    img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  write_pgm(img, path);
}

void write_percept_raw(const Percept& p, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os.write("PF32", 4);
  detail::write_u32(os, 1);
  detail::write_u32(os, static_cast<std::uint32_t>(p.rows()));
  detail::write_u32(os, static_cast<std::uint32_t>(p.cols()));
  for (Eigen::Index i = 0; i < p.size(); ++i) detail::write_f32(os, static_cast<float>(p.data()[i]));
  if (!os) throw IoError("failed writing " + path.string());
}

Percept read_percept_raw(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw LoadError("cannot open " + path.string());
  detail::expect_magic(is, "PF32", "percept");
  if (detail::read_u32(is, "percept header") != 1) throw LoadError("unsupported percept version");
  const auto h = detail::read_u32(is, "percept header");
  const auto w = detail::read_u32(is, "percept header");
  Percept p(h, w);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = detail::read_f32(is, "percept data");
  return p;
}

RawImage read_netpbm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open image " + path.string());
  std::string magic(2, '\0');
  if (!is.read(magic.data(), 2)) throw IoError("unreadable image " + path.string());
  int channels = 0;
  bool ascii = false;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else if (magic == "P2") channels = 1, ascii = true;
  else if (magic == "P3") channels = 3, ascii = true;
  else throw IoError("unsupported image format in " + path.string());

  RawImage img;
  img.channels = channels;
  img.width = read_header_int(is);
  img.height = read_header_int(is);
  const int maxval = read_header_int(is);
  if (img.width < 1 || img.height < 1 || maxval < 1 || maxval > 255) {
    throw IoError("unsupported image header in " + path.string());
  }
  const std::size_t n = static_cast<std::size_t>(img.width) * img.height * channels;
  img.pixels.resize(n);
  if (ascii) {
    for (std::size_t i = 0; i < n; ++i) {
      int v = 0;
      if (!(is >> v)) throw IoError("truncated image " + path.string());
      img.pixels[i] = static_cast<std::uint8_t>(std::clamp(v * 255 / maxval, 0, 255));
    }
  } else {
    is.get();  // single whitespace after maxval
    if (!is.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(n))) {
      throw IoError("truncated image " + path.string());
    }
    if (maxval != 255) {
      for (auto& v : img.pixels) v = static_cast<std::uint8_t>(std::min(255, v * 255 / maxval));
    }
  }
  return img;
}

void write_pgm(const RawImage& img, const std::filesystem::path& path) {
  if (img.channels != 1) throw InvalidParameter("PGM output needs a single channel image");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write " + path.string());
  os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  os.write(reinterpret_cast<const char*>(img.pixels.data()),
           static_cast<std::streamsize>(img.pixels.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

}  // namespace phosphene
